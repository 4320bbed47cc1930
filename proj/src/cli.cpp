#include "usda/cli.hpp"

#include "usda/analysis.hpp"
#include "usda/bm25.hpp"
#include "usda/checkpoint.hpp"
#include "usda/config.hpp"
#include "usda/error.hpp"
#include "usda/pretrain.hpp"
#include "usda/synthetic.hpp"
#include "usda/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace usda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = USDA_VERSION;

// Relative data paths that do not exist locally are looked up under $USDA_DATA_DIR.
fs::path resolve_data(const std::string& given) {
  fs::path p(given);
  if (p.is_absolute() || fs::exists(p)) return p;
  if (const char* dir = std::getenv("USDA_DATA_DIR"); dir && *dir) {
    const fs::path alt = fs::path(dir) / p;
    if (fs::exists(alt)) return alt;
  }
  return p;
}

fs::path sidecar(const fs::path& artifact, const std::string& suffix) {
  return fs::path(artifact.string() + suffix);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_json(const fs::path& path, const json& j) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Writes <artifact>.manifest.json and returns its file name.
std::string write_manifest(const fs::path& artifact, const std::string& command,
                           const std::string& config_hash, std::uint64_t seed, json data,
                           json lineage = json::array()) {
  const fs::path path = sidecar(artifact, ".manifest.json");
  json m{{"command", command},
         {"config_hash", config_hash},
         {"seed", seed},
         {"data", std::move(data)},
         {"lineage", std::move(lineage)},
         {"tool_version", kVersion},
         {"artifact", artifact.filename().string()}};
  write_json(path, m);
  return path.filename().string();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- options

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config;
  std::vector<std::string> settings;
};

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--threads", c.threads, "evaluation worker threads")->check(CLI::PositiveNumber);
  if (with_config) {
    app->add_option("--config", c.config, "key = value configuration file");
    app->add_option("--set", c.settings, "override one configuration key (key=value)");
  }
}

RunConfig make_config(const Common& c, const CLI::App* app) {
  RunConfig config;
  if (!c.config.empty()) config = load_config(resolve_data(c.config));
  for (const auto& s : c.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    apply_setting(config, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (app->count("--seed")) {
    config.train.seed = c.seed;
    config.pretrain.seed = c.seed;
  }
  config.train.threads = c.threads;
  return config;
}

// ---------------------------------------------------------------- gen-synthetic

struct SynthOpts {
  Common common;
  std::string out;
  std::size_t train = 500, valid = 100, test = 100;
  std::string rule = "repeat-da-dissatisfied";
  double confusion = 0.25;
  int min_turns = 3, max_turns = 7;
  bool final_system = false;
};

int cmd_gen_synthetic(const SynthOpts& o, std::ostream& out) {
  synthetic::SyntheticOptions so;
  so.dialogues = o.train + o.valid + o.test;
  so.seed = o.common.seed;
  so.rule = synthetic::rule_from_name(o.rule);
  so.confusion = o.confusion;
  so.min_turns = o.min_turns;
  so.max_turns = o.max_turns;
  so.final_system = o.final_system;
  if (so.dialogues == 0) throw Error("synthetic corpus size must be positive");
  const auto dialogues = synthetic::generate(so);

  const fs::path path(o.out);
  std::ostringstream settings;
  settings << "rule=" << o.rule << ";confusion=" << o.confusion << ";turns=" << o.min_turns << "-"
           << o.max_turns << ";final_system=" << o.final_system;
  const std::string hash = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(settings.str())));
    return std::string(buf);
  }();
  const std::string manifest =
      write_manifest(path, "gen-synthetic", hash, o.common.seed,
                     json{{"size", so.dialogues}, {"settings", settings.str()}});
  ensure_parent(path);
  {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << json{{"da_vocab", synthetic::da_inventory()}, {"manifest", manifest}}.dump() << '\n';
    write_dialogues(f, dialogues, std::nullopt);
  }
  CorpusSplit split;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    auto& part = i < o.train ? split.train : (i < o.train + o.valid ? split.valid : split.test);
    part.push_back(dialogues[i]);
  }
  write_split_manifest(sidecar(path, ".split.json"), split);

  std::array<int, 3> counts{};
  for (const auto& d : dialogues) ++counts[static_cast<std::size_t>(d.satisfaction)];
  out << "wrote " << dialogues.size() << " dialogues to " << path.string() << " (train "
      << o.train << ", valid " << o.valid << ", test " << o.test << ")\n";
  for (int c = 0; c < 3; ++c) {
    out << "  " << satisfaction_name(static_cast<Satisfaction>(c)) << ": " << counts[static_cast<std::size_t>(c)]
        << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- data loading

struct DataOpts {
  std::string data;
  std::string split_manifest;
  SplitOptions split;
};

CorpusSplit load_data(const DataOpts& d, std::uint64_t seed, std::string* manifest_used) {
  const fs::path data = resolve_data(d.data);
  std::optional<fs::path> manifest;
  if (!d.split_manifest.empty()) {
    manifest = resolve_data(d.split_manifest);
  } else if (fs::exists(sidecar(data, ".split.json"))) {
    manifest = sidecar(data, ".split.json");
  }
  SplitOptions options = d.split;
  options.seed = seed;
  if (manifest_used) *manifest_used = manifest ? manifest->string() : std::string();
  return load_corpus(data, CorpusFormat::kJsonLines, options, manifest);
}

const std::vector<Dialogue>& pick_split(const CorpusSplit& s, const std::string& name,
                                        std::vector<Dialogue>& all) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  if (name == "all") {
    all = s.train;
    all.insert(all.end(), s.valid.begin(), s.valid.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    return all;
  }
  throw Error("unknown split: " + name);
}

// ---------------------------------------------------------------- gen-pretrain

struct GenPretrainOpts {
  Common common;
  DataOpts data;
  std::string out;
  std::string tasks = "srs,did";
  double neg_ratio = 1.0;
  double sim_min = 0.0;
  double threshold = 0.7;
  bool above = false;
  std::string split = "train";
};

int cmd_gen_pretrain(const GenPretrainOpts& o, std::ostream& out) {
  std::string manifest_used;
  const CorpusSplit split = load_data(o.data, o.common.seed, &manifest_used);
  std::vector<Dialogue> all;
  const auto& dialogues = pick_split(split, o.split, all);
  pretrain::GenerateOptions go;
  go.srs = go.did = false;
  for (const auto& t : split_list(o.tasks)) {
    if (t == "srs") {
      go.srs = true;
    } else if (t == "did") {
      go.did = true;
    } else {
      throw Error("unknown pre-training task: " + t);
    }
  }
  if (!go.srs && !go.did) throw Error("no pre-training task selected");
  go.neg_ratio = o.neg_ratio;
  go.srs_options.sim_min = o.sim_min;
  go.srs_options.threshold = o.threshold;
  go.srs_options.above_threshold = o.above;

  const auto index = pretrain::Bm25Index::build(dialogues);
  nn::Rng rng(o.common.seed);
  const auto generated = pretrain::generate_samples(dialogues, index, rng, go);

  const fs::path path(o.out);
  std::ostringstream settings;
  settings << "tasks=" << o.tasks << ";neg_ratio=" << o.neg_ratio << ";sim_min=" << o.sim_min
           << ";threshold=" << o.threshold << ";above=" << o.above << ";split=" << o.split;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(settings.str())));
  const std::string manifest =
      write_manifest(path, "gen-pretrain", hash, o.common.seed,
                     json{{"corpus", o.data.data}, {"split_manifest", manifest_used},
                          {"split", o.split}, {"settings", settings.str()}});
  ensure_parent(path);
  {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << json{{"manifest", manifest}}.dump() << '\n';
    for (const auto& s : generated.samples) f << pretrain::sample_to_json(s).dump() << '\n';
  }
  std::size_t srs = 0, did = 0;
  for (const auto& s : generated.samples) {
    if (s.perturbation == pretrain::Perturbation::kReplace) ++srs;
    if (s.perturbation == pretrain::Perturbation::kDelete ||
        s.perturbation == pretrain::Perturbation::kShuffle) {
      ++did;
    }
  }
  out << "wrote " << generated.samples.size() << " samples to " << path.string() << ": "
      << generated.positives << " positive, " << srs << " srs negative, " << did
      << " did negative, " << generated.skipped << " skipped\n";
  return 0;
}

// ---------------------------------------------------------------- pretrain

struct PretrainOpts {
  Common common;
  std::string samples;
  std::string valid_samples;
  double valid_fraction = 0.1;
  std::string out;
  std::string summary;
  int epochs = -1;
};

json pretrain_metrics_json(const pretrain::PretrainMetrics& m) {
  return {{"srs_macro_f1", m.srs_macro_f1},
          {"srs_accuracy", m.srs_accuracy},
          {"did_macro_f1", m.did_macro_f1},
          {"did_accuracy", m.did_accuracy}};
}

int cmd_pretrain(const PretrainOpts& o, const CLI::App* app, std::ostream& out) {
  RunConfig config = make_config(o.common, app);
  if (o.epochs >= 0) config.pretrain.epochs = o.epochs;
  std::vector<pretrain::PretrainSample> train = pretrain::read_samples(resolve_data(o.samples));
  if (train.empty()) throw Error("no pre-training samples in " + o.samples);
  std::vector<pretrain::PretrainSample> valid;
  if (!o.valid_samples.empty()) {
    valid = pretrain::read_samples(resolve_data(o.valid_samples));
  } else if (o.valid_fraction > 0.0) {
    if (o.valid_fraction >= 1.0) throw Error("--valid-fraction must be below 1");
    nn::Rng rng(config.pretrain.seed);
    std::shuffle(train.begin(), train.end(), rng);
    const auto n = static_cast<std::size_t>(std::floor(o.valid_fraction * static_cast<double>(train.size())));
    valid.assign(train.end() - static_cast<std::ptrdiff_t>(n), train.end());
    train.resize(train.size() - n);
  }
  std::vector<Dialogue> dialogues;
  for (const auto& s : train) dialogues.push_back(s.dialogue);
  Vocabulary vocab = Vocabulary::build(dialogues, config.train.vocab_min_freq);
  config.model.mode = Mode::kStlUse;
  config.model.num_da_labels = 0;
  UsdaModel model(config.model, std::move(vocab), config.pretrain.seed);
  const auto history = pretrain::run_pretraining(model, train, valid, config.pretrain);

  const fs::path path(o.out);
  const std::string hash = config_hash(config);
  const std::string manifest = write_manifest(
      path, "pretrain", hash, config.pretrain.seed,
      json{{"samples", o.samples}, {"valid_samples", o.valid_samples},
           {"valid_fraction", o.valid_fraction}});
  save_checkpoint(path, model, config, std::nullopt,
                  json{{"manifest", manifest}, {"command", "pretrain"}, {"config_hash", hash}});

  json epochs = json::array();
  for (const auto& e : history) {
    json j{{"epoch", e.epoch}, {"srs_loss", e.train.srs}, {"did_loss", e.train.did}};
    if (e.valid) j["valid"] = pretrain_metrics_json(*e.valid);
    epochs.push_back(std::move(j));
    out << "epoch " << e.epoch << "  srs " << fixed(e.train.srs) << "  did " << fixed(e.train.did);
    if (e.valid) {
      out << "  valid srs-F1 " << fixed(e.valid->srs_macro_f1) << "  did-F1 "
          << fixed(e.valid->did_macro_f1);
    }
    out << '\n';
  }
  json summary{{"command", "pretrain"},  {"config_hash", hash},
               {"seed", config.pretrain.seed}, {"train_samples", train.size()},
               {"valid_samples", valid.size()}, {"history", std::move(epochs)},
               {"checkpoint", path.filename().string()}, {"manifest", manifest}};
  if (!history.empty() && history.back().valid) {
    summary["final_valid"] = pretrain_metrics_json(*history.back().valid);
  }
  write_json(o.summary.empty() ? sidecar(path, ".summary.json") : fs::path(o.summary), summary);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  Common common;
  DataOpts data;
  std::string mode = "mtl";
  std::string out;
  std::string init_from;
  std::string summary;
  int epochs = -1;
  double lr = -1.0;
  double lambda = -1.0;
  int batch_size = -1;
  bool content_only = false;
  bool hide_labels = false;
};

void strip_labels(std::vector<Dialogue>& ds) {
  for (auto& d : ds) d.da_labels.reset();
}

void print_report(std::ostream& out, const std::string& title, const EvalReport& r) {
  if (r.use) {
    out << title << " USE  acc " << fixed(r.use->accuracy) << "  P " << fixed(r.use->macro_precision)
        << "  R " << fixed(r.use->macro_recall) << "  F1 " << fixed(r.use->macro_f1) << '\n';
  }
  if (r.dar) {
    out << title << " DAR  acc " << fixed(r.dar->accuracy) << "  P " << fixed(r.dar->macro_precision)
        << "  R " << fixed(r.dar->macro_recall) << "  F1 " << fixed(r.dar->macro_f1) << '\n';
  }
}

int cmd_train(const TrainOpts& o, const CLI::App* app, std::ostream& out) {
  RunConfig config = make_config(o.common, app);
  if (app->count("--mode") || o.common.config.empty()) config.model.mode = mode_from_name(o.mode);
  if (o.epochs >= 0) config.train.max_epochs = o.epochs;
  if (o.lr > 0.0) config.train.learning_rate = o.lr;
  if (o.lambda >= 0.0) config.train.lambda = o.lambda;
  if (o.batch_size > 0) config.train.batch_size = o.batch_size;
  if (o.content_only) config.model.satisfaction.content_only = true;

  std::string manifest_used;
  CorpusSplit split = load_data(o.data, config.train.seed, &manifest_used);
  const bool labels = !o.hide_labels && config.model.mode != Mode::kClu;
  if (!labels) {
    strip_labels(split.train);
    strip_labels(split.valid);
    strip_labels(split.test);
  }
  config.model.num_da_labels = labels ? num_da_classes(split) : 0;

  std::unique_ptr<UsdaModel> model;
  json lineage = json::array();
  if (!o.init_from.empty()) {
    const fs::path init = resolve_data(o.init_from);
    LoadedCheckpoint pre = load_checkpoint(init);
    config.model.encoder = pre.model->config().encoder;
    model = std::make_unique<UsdaModel>(config.model, pre.model->vocab(), config.train.seed);
    const std::size_t copied = init_encoder_from(*model, *pre.model);
    lineage.push_back(json{{"checkpoint", o.init_from}, {"manifest", pre.manifest}});
    out << "initialized " << copied << " encoder tensors from " << o.init_from << '\n';
  } else {
    Vocabulary vocab = Vocabulary::build(split.train, config.train.vocab_min_freq);
    model = std::make_unique<UsdaModel>(config.model, std::move(vocab), config.train.seed);
  }

  const TrainResult result = train(*model, split.train, split.valid, config.train,
                                   [&](const EpochRecord& e) {
                                     out << "epoch " << e.epoch << "  loss " << fixed(e.train_loss)
                                         << "  valid " << fixed(e.valid_score) << '\n';
                                   });

  const fs::path path(o.out);
  const std::string hash = config_hash(config);
  const fs::path split_path = sidecar(path, ".split.json");
  ensure_parent(split_path);
  write_split_manifest(split_path, split);
  const std::string manifest =
      write_manifest(path, "train", hash, config.train.seed,
                     json{{"corpus", o.data.data},
                          {"split_manifest", split_path.filename().string()},
                          {"labels_exposed", labels}},
                     lineage);
  save_checkpoint(path, *model, config, split.da_vocab,
                  json{{"manifest", manifest},
                       {"command", "train"},
                       {"config_hash", hash},
                       {"corpus", o.data.data},
                       {"split_manifest", split_path.filename().string()},
                       {"labels_exposed", labels}});

  json history = json::array();
  for (const auto& e : result.history) {
    json j{{"epoch", e.epoch},
           {"train_loss", e.train_loss},
           {"train_use", e.train_use},
           {"train_dar", e.train_dar},
           {"valid_score", e.valid_score}};
    if (e.valid_dar_f1) j["valid_dar_f1"] = *e.valid_dar_f1;
    history.push_back(std::move(j));
  }
  json summary{{"command", "train"},
               {"mode", mode_name(config.model.mode)},
               {"content_only", config.model.satisfaction.content_only},
               {"config_hash", hash},
               {"seed", config.train.seed},
               {"best_epoch", result.best_epoch},
               {"best_valid_score", result.best_valid_score},
               {"history", std::move(history)},
               {"checkpoint", path.filename().string()},
               {"manifest", manifest}};
  if (!split.valid.empty()) {
    const auto r = evaluate(*model, split.valid, config.train.threads);
    summary["valid"] = r.to_json(split.da_vocab);
    print_report(out, "valid", r);
  }
  if (!split.test.empty()) {
    const auto r = evaluate(*model, split.test, config.train.threads);
    summary["test"] = r.to_json(split.da_vocab);
    print_report(out, "test ", r);
  }
  write_json(o.summary.empty() ? sidecar(path, ".summary.json") : fs::path(o.summary), summary);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  Common common;
  std::string checkpoint;
  DataOpts data;
  std::string split = "test";
  std::string out;
  std::string traces;
  std::string tag;
};

// Corpus and split manifest recorded by `train`, relative to the checkpoint.
DataOpts data_for_checkpoint(const DataOpts& given, const LoadedCheckpoint& ckpt,
                             const fs::path& ckpt_path) {
  DataOpts d = given;
  if (d.data.empty()) {
    if (!ckpt.manifest.contains("corpus")) throw Error("checkpoint records no corpus; pass --data");
    d.data = ckpt.manifest.at("corpus").get<std::string>();
  }
  if (d.split_manifest.empty() && ckpt.manifest.contains("split_manifest")) {
    d.split_manifest = (ckpt_path.parent_path() / ckpt.manifest.at("split_manifest").get<std::string>()).string();
  }
  return d;
}

std::vector<Dialogue> checkpoint_dialogues(const DataOpts& given, const std::string& split_name,
                                           const LoadedCheckpoint& ckpt, const fs::path& path,
                                           std::optional<DaVocab>* da_vocab = nullptr) {
  const DataOpts d = data_for_checkpoint(given, ckpt, path);
  CorpusSplit split = load_data(d, ckpt.config.train.seed, nullptr);
  std::vector<Dialogue> all;
  std::vector<Dialogue> chosen = pick_split(split, split_name, all);
  if (ckpt.model->config().num_da_labels == 0) strip_labels(chosen);
  if (da_vocab) *da_vocab = split.da_vocab;
  return chosen;
}

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  const fs::path path = resolve_data(o.checkpoint);
  const LoadedCheckpoint ckpt = load_checkpoint(path);
  std::optional<DaVocab> da_vocab;
  const auto dialogues = checkpoint_dialogues(o.data, o.split, ckpt, path, &da_vocab);
  const EvalReport report = evaluate(*ckpt.model, dialogues, o.common.threads);
  print_report(out, o.split, report);

  const fs::path summary_path =
      o.out.empty() ? sidecar(path, "." + o.split + ".eval.json") : fs::path(o.out);
  const std::string hash = config_hash(ckpt.config);
  const std::string manifest = write_manifest(
      summary_path, "eval", hash, ckpt.config.train.seed,
      json{{"checkpoint", o.checkpoint}, {"split", o.split}},
      json::array({json{{"checkpoint", o.checkpoint}, {"manifest", ckpt.manifest}}}));
  json summary{{"command", "eval"},
               {"split", o.split},
               {"n", dialogues.size()},
               {"mode", mode_name(ckpt.model->config().mode)},
               {"config_hash", hash},
               {"report", report.to_json(da_vocab)},
               {"manifest", manifest}};
  write_json(summary_path, summary);
  if (!o.traces.empty()) {
    const std::string tag = o.tag.empty() ? mode_name(ckpt.model->config().mode) : o.tag;
    auto traces = analysis::make_traces(dialogues, report.predictions, tag);
    const fs::path tpath(o.traces);
    ensure_parent(tpath);
    const std::string tmanifest =
        write_manifest(tpath, "eval", hash, ckpt.config.train.seed,
                       json{{"checkpoint", o.checkpoint}, {"split", o.split}});
    std::ofstream f(tpath);
    if (!f) throw Error("cannot write " + tpath.string());
    f << json{{"manifest", tmanifest}}.dump() << '\n';
    for (const auto& t : traces) f << analysis::trace_to_json(t).dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOpts {
  Common common;
  std::string traces;
  std::string out;
  // impact
  int klass = 0;
  std::string q;
  int max_len = 3;
  std::size_t top = 5;
  std::size_t min_support = 5;
  std::string gate_convention = "one-minus-g";
  // gates
  int bins = 10;
  bool one_minus = false;
  // turns / clusters
  std::string checkpoint;
  DataOpts data;
  std::string split = "test";
  int max_turns = 10;
  int top_words = 10;
  std::string stop_words;
};

std::ofstream open_table(const std::string& path) {
  const fs::path p(path);
  ensure_parent(p);
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + path);
  f << std::setprecision(10);
  return f;
}

std::string join_ints(const std::vector<int>& v, char sep = ' ') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

analysis::GateConvention convention_from(const std::string& s) {
  if (s == "one-minus-g") return analysis::GateConvention::kOneMinusG;
  if (s == "g") return analysis::GateConvention::kG;
  throw Error("unknown gate convention: " + s);
}

int cmd_impact(const AnalyzeOpts& o, std::ostream& out) {
  const auto traces = analysis::read_traces(resolve_data(o.traces));
  const auto convention = convention_from(o.gate_convention);
  if (o.klass < 0 || o.klass >= kNumSatisfactionClasses) throw Error("--class must be 0, 1 or 2");
  auto f = open_table(o.out);
  f << "q\timpact\tsupport\n";
  if (!o.q.empty()) {
    std::vector<int> q;
    for (const auto& s : split_list(o.q)) q.push_back(std::stoi(s));
    const auto imp = analysis::impact_score(traces, q, o.klass, convention);
    f << join_ints(q) << '\t' << (imp ? std::to_string(*imp) : "absent") << "\t-\n";
    out << "impact(" << join_ints(q) << ", " << o.klass << ") = " << (imp ? fixed(*imp, 6) : "absent")
        << '\n';
    return 0;
  }
  const auto top = analysis::top_subsequences(traces, o.klass, o.max_len, o.top, o.min_support, convention);
  for (const auto& e : top) {
    f << join_ints(e.q) << '\t' << e.impact << '\t' << e.support << '\n';
    out << join_ints(e.q) << "  " << fixed(e.impact, 6) << "  (" << e.support << ")\n";
  }
  return 0;
}

int cmd_gates(const AnalyzeOpts& o, std::ostream& out) {
  const auto traces = analysis::read_traces(resolve_data(o.traces));
  const auto groups = analysis::gate_distribution(traces, o.bins, o.one_minus);
  auto f = open_table(o.out);
  f << "group\tn\tmean\tmedian\tq1\tq3\tmin\tmax\n";
  for (const auto& g : groups) {
    f << g.group << '\t' << g.n << '\t' << g.mean << '\t' << g.median << '\t' << g.q1 << '\t' << g.q3
      << '\t' << g.min << '\t' << g.max << '\n';
    out << g.group << ": n " << g.n << "  mean " << fixed(g.mean) << "  median " << fixed(g.median)
        << '\n';
  }
  f << "\ngroup\tbin_low\tbin_high\tcount\n";
  for (const auto& g : groups) {
    for (std::size_t b = 0; b < g.bins.size(); ++b) {
      f << g.group << '\t' << static_cast<double>(b) / o.bins << '\t'
        << static_cast<double>(b + 1) / o.bins << '\t' << g.bins[b] << '\n';
    }
  }
  return 0;
}

int cmd_per_class(const AnalyzeOpts& o, std::ostream& out) {
  const auto traces = analysis::read_traces(resolve_data(o.traces));
  const auto r = analysis::per_class_report(traces);
  auto f = open_table(o.out);
  f << "class\tprecision\trecall\tf1\tsupport\n";
  for (int c = 0; c < r.num_classes; ++c) {
    const auto& m = r.per_class[static_cast<std::size_t>(c)];
    const char* name = satisfaction_name(static_cast<Satisfaction>(c));
    f << name << '\t' << m.precision << '\t' << m.recall << '\t' << m.f1 << '\t' << m.support << '\n';
    out << name << "  P " << fixed(m.precision) << "  R " << fixed(m.recall) << "  F1 " << fixed(m.f1)
        << "  n " << m.support << '\n';
  }
  f << "macro\t" << r.macro_precision << '\t' << r.macro_recall << '\t' << r.macro_f1 << '\t'
    << r.total << '\n';
  return 0;
}

int cmd_turns(const AnalyzeOpts& o, std::ostream& out) {
  const fs::path path = resolve_data(o.checkpoint);
  const LoadedCheckpoint ckpt = load_checkpoint(path);
  const auto dialogues = checkpoint_dialogues(o.data, o.split, ckpt, path);
  const auto points = analysis::turn_sensitivity(*ckpt.model, dialogues, o.max_turns, o.common.threads);
  auto f = open_table(o.out);
  f << "turns\tmacro_f1\taccuracy\n";
  for (const auto& p : points) {
    f << p.turns << '\t' << p.macro_f1 << '\t' << p.accuracy << '\n';
    out << "n=" << p.turns << "  F1 " << fixed(p.macro_f1) << "  acc " << fixed(p.accuracy) << '\n';
  }
  return 0;
}

int cmd_clusters(const AnalyzeOpts& o, std::ostream& out) {
  const fs::path path = resolve_data(o.checkpoint);
  const LoadedCheckpoint ckpt = load_checkpoint(path);
  const auto dialogues = checkpoint_dialogues(o.data, o.split, ckpt, path);
  std::set<std::string> stop;
  if (!o.stop_words.empty()) {
    std::ifstream in(resolve_data(o.stop_words));
    if (!in) throw Error("cannot open " + o.stop_words);
    std::string w;
    while (in >> w) stop.insert(w);
  }
  const auto ranked = cluster_top_words(*ckpt.model, dialogues, o.top_words, stop);
  auto f = open_table(o.out);
  f << "cluster\tword\tcount\n";
  for (std::size_t c = 0; c < ranked.size(); ++c) {
    if (ranked[c].empty()) continue;
    out << "cluster " << c << ':';
    for (const auto& [word, count] : ranked[c]) {
      f << c << '\t' << word << '\t' << count << '\n';
      out << ' ' << word << '(' << count << ')';
    }
    out << '\n';
  }
  return 0;
}

void add_data(CLI::App* app, DataOpts& d, bool required) {
  auto* opt = app->add_option("--data", d.data, "corpus (JSON lines)");
  if (required) opt->required();
  app->add_option("--split-manifest", d.split_manifest, "train/valid/test id lists (JSON)");
  app->add_flag("--stratified", d.split.stratified, "stratify a fresh split by satisfaction class");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint user satisfaction estimation and dialogue act recognition", "usda"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthOpts synth;
  auto* gs = app.add_subcommand("gen-synthetic", "generate a synthetic corpus and split");
  add_common(gs, synth.common, false);
  gs->add_option("--out", synth.out, "corpus output path")->required();
  gs->add_option("--train", synth.train, "training dialogues");
  gs->add_option("--valid", synth.valid, "validation dialogues");
  gs->add_option("--test", synth.test, "test dialogues");
  gs->add_option("--rule", synth.rule, "repeat-da-dissatisfied | random");
  gs->add_option("--confusion", synth.confusion, "user word confusion probability");
  gs->add_option("--min-turns", synth.min_turns, "shortest dialogue");
  gs->add_option("--max-turns", synth.max_turns, "longest dialogue");
  gs->add_flag("--final-system", synth.final_system, "give the final exchange a system reply");

  GenPretrainOpts gp;
  auto* gpc = app.add_subcommand("gen-pretrain", "build SRS/DID pre-training samples");
  add_common(gpc, gp.common, false);
  add_data(gpc, gp.data, true);
  gpc->add_option("--out", gp.out, "sample output path")->required();
  gpc->add_option("--tasks", gp.tasks, "comma list of srs, did");
  gpc->add_option("--neg-ratio", gp.neg_ratio, "negatives per positive per task");
  gpc->add_option("--sim-min", gp.sim_min, "lowest normalized BM25 score for a confounder");
  gpc->add_option("--threshold", gp.threshold, "normalized BM25 threshold");
  gpc->add_flag("--above-threshold", gp.above, "draw confounders at or above the threshold");
  gpc->add_option("--split", gp.split, "train | valid | test | all");

  PretrainOpts pt;
  auto* ptc = app.add_subcommand("pretrain", "pre-train the encoder on SRS and DID");
  add_common(ptc, pt.common);
  ptc->add_option("--samples", pt.samples, "pre-training samples")->required();
  ptc->add_option("--valid-samples", pt.valid_samples, "held-out samples");
  ptc->add_option("--valid-fraction", pt.valid_fraction, "held-out share when no valid file is given");
  ptc->add_option("--out", pt.out, "checkpoint path")->required();
  ptc->add_option("--summary", pt.summary, "metric summary path");
  ptc->add_option("--epochs", pt.epochs, "pre-training epochs");

  TrainOpts tr;
  auto* trc = app.add_subcommand("train", "train USDA");
  add_common(trc, tr.common);
  add_data(trc, tr.data, true);
  trc->add_option("--mode", tr.mode, "stl-use | stl-dar | mtl | clu");
  trc->add_option("--out", tr.out, "checkpoint path")->required();
  trc->add_option("--init-from", tr.init_from, "pre-trained checkpoint (encoder only)");
  trc->add_option("--summary", tr.summary, "metric summary path");
  trc->add_option("--epochs", tr.epochs, "maximum epochs");
  trc->add_option("--lr", tr.lr, "learning rate");
  trc->add_option("--lambda", tr.lambda, "DAR loss weight");
  trc->add_option("--batch-size", tr.batch_size, "dialogues per batch");
  trc->add_flag("--content-only", tr.content_only, "drop the dialogue-act stream");
  trc->add_flag("--hide-labels", tr.hide_labels, "ignore DA labels in the corpus");

  EvalOpts ev;
  auto* evc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(evc, ev.common, false);
  evc->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  add_data(evc, ev.data, false);
  evc->add_option("--split", ev.split, "train | valid | test | all");
  evc->add_option("--out", ev.out, "metric summary path");
  evc->add_option("--traces", ev.traces, "write fusion traces here");
  evc->add_option("--tag", ev.tag, "trace group tag (default: mode)");

  AnalyzeOpts an;
  auto* anc = app.add_subcommand("analyze", "post-hoc analyses");
  anc->require_subcommand(1);
  auto* an_impact = anc->add_subcommand("impact", "DA sub-sequence impact scores");
  auto* an_gates = anc->add_subcommand("gates", "gate weight distribution");
  auto* an_class = anc->add_subcommand("per-class", "per-class USE metrics");
  auto* an_turns = anc->add_subcommand("turns", "USE F1 against dialogue length");
  auto* an_clusters = anc->add_subcommand("clusters", "top words per cluster");
  for (auto* s : {an_impact, an_gates, an_class}) {
    add_common(s, an.common, false);
    s->add_option("--traces", an.traces, "traces from eval --traces")->required();
    s->add_option("--out", an.out, "output table")->required();
  }
  an_impact->add_option("--class", an.klass, "satisfaction class 0, 1 or 2");
  an_impact->add_option("--q", an.q, "one DA sub-sequence, comma separated");
  an_impact->add_option("--max-len", an.max_len, "longest sub-sequence");
  an_impact->add_option("--top", an.top, "entries to report");
  an_impact->add_option("--min-support", an.min_support, "fewest dialogues containing a sub-sequence");
  an_impact->add_option("--gate-convention", an.gate_convention, "one-minus-g | g");
  an_gates->add_option("--bins", an.bins, "histogram bins over [0,1]");
  an_gates->add_flag("--one-minus", an.one_minus, "summarize 1 - g");
  for (auto* s : {an_turns, an_clusters}) {
    add_common(s, an.common, false);
    s->add_option("--checkpoint", an.checkpoint, "trained checkpoint")->required();
    add_data(s, an.data, false);
    s->add_option("--split", an.split, "train | valid | test | all");
    s->add_option("--out", an.out, "output table")->required();
  }
  an_turns->add_option("--max-turns", an.max_turns, "longest truncation");
  an_clusters->add_option("--top", an.top_words, "words per cluster");
  an_clusters->add_option("--stop-words", an.stop_words, "whitespace separated stop word file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage error: " << e.what() << '\n';
    const CLI::App* shown = &app;
    for (const CLI::App* s = &app;;) {
      const auto subs = s->get_subcommands();
      if (subs.empty()) break;
      s = subs.front();
      shown = s;
    }
    err << shown->help();
    return 2;
  }

  try {
    if (gs->parsed()) return cmd_gen_synthetic(synth, out);
    if (gpc->parsed()) return cmd_gen_pretrain(gp, out);
    if (ptc->parsed()) return cmd_pretrain(pt, ptc, out);
    if (trc->parsed()) return cmd_train(tr, trc, out);
    if (evc->parsed()) return cmd_eval(ev, out);
    if (an_impact->parsed()) return cmd_impact(an, out);
    if (an_gates->parsed()) return cmd_gates(an, out);
    if (an_class->parsed()) return cmd_per_class(an, out);
    if (an_turns->parsed()) return cmd_turns(an, out);
    if (an_clusters->parsed()) return cmd_clusters(an, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace usda::cli
