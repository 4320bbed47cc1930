// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 5 8      run a subset

#include "usda/analysis.hpp"
#include "usda/bm25.hpp"
#include "usda/checkpoint.hpp"
#include "usda/cli.hpp"
#include "usda/cluster.hpp"
#include "usda/config.hpp"
#include "usda/crf.hpp"
#include "usda/pretrain.hpp"
#include "usda/satisfaction.hpp"
#include "usda/synthetic.hpp"
#include "usda/trainer.hpp"
#include "usda/vocabulary.hpp"

#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace usda;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kCrfTolerance = 1e-6;
constexpr double kGradTolerance = 1e-4;
constexpr double kSumTolerance = 1e-6;
constexpr double kMtlMargin = 0.05;
constexpr double kMtlFloor = 0.90;
constexpr double kCluMargin = 0.03;
constexpr double kSrsFloor = 0.85;
constexpr double kConfounderThreshold = 0.7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Matrix = ad::Matrix;
using testing::gradcheck;
using testing::random_matrix;

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt(x, 3);
  return "[" + s + "]";
}

// ---------------------------------------------------------------- criterion 1

// Score written out directly: start -> y0, emissions, transitions, yT -> end.
double path_score(const Matrix& A, const Matrix& G, const std::vector<int>& y) {
  const int k = static_cast<int>(A.cols());
  double s = G(k, y[0]);
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += A(static_cast<Eigen::Index>(t), y[t]);
    if (t > 0) s += G(y[t - 1], y[t]);
  }
  return s + G(y.back(), k + 1);
}

Outcome crf_oracle() {
  std::mt19937_64 rng(20240501);
  double worst_ll = 0.0;
  int viterbi_mismatch = 0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const int turns = 1 + static_cast<int>(rng() % 6);
    const int k = 1 + static_cast<int>(rng() % 4);
    const Matrix A = random_matrix(turns, k, rng, 2.0);
    Matrix G = random_matrix(k + 2, k + 2, rng);
    G.col(k).setConstant(crf::kMaskedTransition);
    G.row(k + 1).setConstant(crf::kMaskedTransition);

    std::vector<std::vector<int>> paths;
    std::vector<int> y(static_cast<std::size_t>(turns), 0);
    for (;;) {
      paths.push_back(y);
      int p = turns - 1;
      while (p >= 0 && y[static_cast<std::size_t>(p)] == k - 1) y[static_cast<std::size_t>(p--)] = 0;
      if (p < 0) break;
      ++y[static_cast<std::size_t>(p)];
    }
    std::vector<double> scores;
    for (const auto& path : paths) scores.push_back(path_score(A, G, path));
    const double top = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - top);
    const double log_z = top + std::log(z);
    // first maximum in lexicographic order
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());

    const std::vector<int>& gold = paths[rng() % paths.size()];
    const double ll = crf::log_likelihood(A, G, gold);
    const double expect = path_score(A, G, gold) - log_z;
    worst_ll = std::max(worst_ll, std::abs(ll - expect));
    const auto decoded = crf::viterbi_decode(A, G);
    if (decoded != paths[best] || std::abs(path_score(A, G, decoded) - scores[best]) > kCrfTolerance) {
      ++viterbi_mismatch;
    }
  }
  return {worst_ll < kCrfTolerance && viterbi_mismatch == 0,
          std::to_string(instances) + " instances, max |ll error| " + sci(worst_ll) +
              ", viterbi mismatches " + std::to_string(viterbi_mismatch)};
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_suite() {
  double worst_crf = 0.0, worst_cluster = 0.0, worst_use = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(1000 + seed));
    nn::Rng init(static_cast<std::uint64_t>(seed));
    {
      const int turns = 2 + seed % 5, k = 2 + seed % 3;
      auto A = ad::parameter(random_matrix(turns, k, rng));
      auto G = ad::parameter(random_matrix(k + 2, k + 2, rng, 0.5));
      std::vector<int> y;
      for (int t = 0; t < turns; ++t) y.push_back(static_cast<int>(rng() % static_cast<unsigned>(k)));
      worst_crf = std::max(worst_crf, gradcheck([&] { return crf::negative_log_likelihood(A, G, y); }, {A, G}));
    }
    {
      nn::ParameterStore store;
      cluster::ClusterConfig cfg;
      cfg.clusters = 2 + seed % 4;
      cfg.latent_dim = 3 + seed % 4;
      const int d = 4 + seed % 9;  // up to 12
      cluster::ClusterNetwork net(store, d, cfg, init);
      auto c = ad::parameter(random_matrix(1 + seed % 5, d, rng));
      std::vector<ad::Var> params{c};
      for (auto& p : store.parameters()) params.push_back(p.var);
      worst_cluster = std::max(worst_cluster, gradcheck([&] { return net.loss(c, net.forward(c)); }, params));
    }
    {
      nn::ParameterStore store;
      satisfaction::SatisfactionConfig cfg;
      cfg.scalar_gate = seed % 2 == 1;
      const int d = 4 + seed % 5, act = 2 + seed % 4;
      satisfaction::SatisfactionHead head(store, d, act, cfg, init);
      const int turns = 1 + seed % 6;
      auto c = ad::parameter(random_matrix(turns, d, rng));
      auto a = ad::parameter(random_matrix(turns, act, rng));
      std::vector<ad::Var> params{c, a};
      for (auto& p : store.parameters()) params.push_back(p.var);
      const int label = seed % 3;
      worst_use = std::max(
          worst_use, gradcheck([&] { return satisfaction::use_loss(head.forward(c, a).logits, label); }, params));
    }
  }
  return {worst_crf < kGradTolerance && worst_cluster < kGradTolerance && worst_use < kGradTolerance,
          "50 seeds, worst relative error: crf " + sci(worst_crf) + ", cluster " + sci(worst_cluster) +
              ", use path " + sci(worst_use)};
}

// ---------------------------------------------------------------- criterion 3

ModelConfig small_model(Mode mode, int labels) {
  ModelConfig c;
  c.encoder.token_dim = 8;
  c.encoder.hidden_dim = 8;
  c.encoder.ffn_dim = 16;
  c.encoder.heads = 2;
  c.encoder.exchange_layers = 1;
  c.encoder.dialogue_layers = 2;
  c.cluster.clusters = 5;
  c.cluster.latent_dim = 6;
  c.mode = mode;
  c.num_da_labels = labels;
  return c;
}

Outcome invariants_fuzz() {
  synthetic::SyntheticOptions so;
  so.dialogues = 200;
  so.seed = 77;
  so.min_turns = 2;
  so.max_turns = 8;
  auto pool = synthetic::generate(so);
  const Vocabulary vocab = Vocabulary::build(pool);
  vocab.tokenize(pool);
  std::mt19937_64 rng(5);
  std::size_t violations = 0, passes = 0;
  double worst = 0.0;
  auto check_sum = [&](double s) {
    worst = std::max(worst, std::abs(s - 1.0));
    if (std::abs(s - 1.0) > kSumTolerance) ++violations;
  };
  std::unique_ptr<UsdaModel> model;
  for (int i = 0; i < 10000; ++i) {
    if (i % 250 == 0) {
      const Mode mode = (i / 250) % 2 == 0 ? Mode::kClu : Mode::kMtl;
      auto cfg = small_model(mode, mode == Mode::kMtl ? 6 : 0);
      cfg.satisfaction.scalar_gate = (i / 500) % 2 == 1;
      cfg.cluster.feature = (i / 1000) % 2 == 1 ? cluster::DaFeature::kSoftmax : cluster::DaFeature::kLogits;
      model = std::make_unique<UsdaModel>(cfg, vocab, static_cast<std::uint64_t>(i));
      // spread the weights so saturated regions are visited too
      std::normal_distribution<double> jitter(0.0, 0.5 + (i / 250) % 4);
      for (auto& p : model->parameters().parameters()) {
        if (p.name.rfind("use.", 0) == 0 || p.name.rfind("cluster.", 0) == 0) {
          for (Eigen::Index k = 0; k < p.var.value().size(); ++k) p.var.mutable_value().data()[k] += jitter(rng);
        }
      }
    }
    Dialogue d = pool[rng() % pool.size()];
    const bool training = i % 3 == 0;
    nn::Rng drop(static_cast<std::uint64_t>(i));
    const nn::Context ctx{training, &drop};
    ad::NoGradGuard no_grad;
    const auto f = model->forward(d, ctx);
    std::vector<Matrix> attention;
    model->encoder().encode_dialogue(f.reps.h, {false, nullptr}, &attention);
    for (const auto& att : attention) {
      for (Eigen::Index r = 0; r < att.rows(); ++r) check_sum(att.row(r).sum());
    }
    const auto& tr = f.use->trace;
    check_sum(std::accumulate(tr.alpha_c.begin(), tr.alpha_c.end(), 0.0));
    check_sum(std::accumulate(tr.alpha_a.begin(), tr.alpha_a.end(), 0.0));
    check_sum(std::accumulate(tr.p_use.begin(), tr.p_use.end(), 0.0));
    for (double g : tr.g) {
      if (!(g > 0.0 && g < 1.0)) ++violations;
    }
    if (f.cluster) {
      const Matrix p = f.cluster->probabilities();
      for (Eigen::Index r = 0; r < p.rows(); ++r) check_sum(p.row(r).sum());
    }
    ++passes;
  }
  return {violations == 0, std::to_string(passes) + " forward passes, violations " + std::to_string(violations) +
                               ", worst |sum - 1| " + sci(worst)};
}

// ---------------------------------------------------------------- criterion 4

Outcome generator_correctness() {
  std::size_t total = 0, violations = 0, replaced_turns = 0;
  std::map<pretrain::Perturbation, std::size_t> kinds;
  std::string first_problem;
  auto flag = [&](const std::string& what) {
    ++violations;
    if (first_problem.empty()) first_problem = what;
  };
  for (std::uint64_t round = 0; total < 10000; ++round) {
    synthetic::SyntheticOptions so;
    so.dialogues = 300;
    so.seed = 900 + round;
    so.min_turns = 2;
    so.max_turns = 8;
    so.final_system = round % 2 == 1;
    const auto corpus = synthetic::generate(so);
    const auto index = pretrain::Bm25Index::build(corpus);
    std::map<std::string, const Dialogue*> by_id;
    for (const auto& d : corpus) by_id[d.id] = &d;
    nn::Rng rng(round);
    pretrain::GenerateOptions opt;
    opt.neg_ratio = 2.0;
    const auto gen = pretrain::generate_samples(corpus, index, rng, opt);
    for (const auto& s : gen.samples) {
      if (total == 10000) break;
      ++total;
      ++kinds[s.perturbation];
      if (auto bad = pretrain::check_label_consistency(s)) flag(*bad);
      const bool all_ones = std::all_of(s.srs_labels.begin(), s.srs_labels.end(), [](int l) { return l == 1; });
      if (s.perturbation != pretrain::Perturbation::kReplace && !all_ones) flag("srs labels not all 1");
      if (s.perturbation != pretrain::Perturbation::kNone && s.did_label != 0) flag("negative with did 1");
      if (s.dialogue.exchanges.size() < 2) flag("fewer than 2 exchanges");
      const std::string base = s.dialogue.id.substr(0, s.dialogue.id.find('#'));
      const Dialogue& orig = *by_id.at(base);
      if (s.perturbation == pretrain::Perturbation::kReplace) {
        for (int t : s.positions) {
          ++replaced_turns;
          const auto& before = orig.exchanges[static_cast<std::size_t>(t)].system->text;
          const auto& after = s.dialogue.exchanges[static_cast<std::size_t>(t)].system->text;
          const auto words = Vocabulary::split_words(before);
          if (Vocabulary::split_words(after) == words) flag("confounder identical to the original");
          // the confounder's own score against the original
          const auto scores = index.normalized_scores(words);
          bool below = false;
          for (std::size_t doc : index.system_documents()) {
            if (index.text(doc) == after && index.ref(doc).dialogue_id != orig.id &&
                scores[doc] < kConfounderThreshold) {
              below = true;
            }
          }
          if (!below) flag("confounder at or above the similarity threshold");
        }
      }
      if (s.perturbation == pretrain::Perturbation::kDelete &&
          s.dialogue.exchanges.size() + s.positions.size() != orig.exchanges.size()) {
        flag("deleted count disagrees with positions");
      }
    }
  }
  std::string detail = std::to_string(total) + " samples (none " + std::to_string(kinds[pretrain::Perturbation::kNone]) +
                       ", replace " + std::to_string(kinds[pretrain::Perturbation::kReplace]) + ", delete " +
                       std::to_string(kinds[pretrain::Perturbation::kDelete]) + ", shuffle " +
                       std::to_string(kinds[pretrain::Perturbation::kShuffle]) + "), " +
                       std::to_string(replaced_turns) + " confounders, violations " + std::to_string(violations);
  if (!first_problem.empty()) detail += " (first: " + first_problem + ")";
  return {violations == 0, detail};
}

// ------------------------------------------------------- criteria 5, 6 and 7

// Desk-scale setup shared by the behavioral criteria.
// No cross-DA word swaps: with them the last, user-only exchange has an
// ambiguous act and satisfaction stops being a function of the text.
constexpr double kDeskConfusion = 0.0;
constexpr int kDeskEpochs = 40;
constexpr double kDeskMtlLambda = 1.0;

RunConfig desk_config() {
  RunConfig c;
  c.model.encoder.token_dim = 32;
  c.model.encoder.hidden_dim = 32;
  c.model.encoder.ffn_dim = 64;
  c.model.encoder.heads = 4;
  c.model.encoder.exchange_layers = 1;
  c.model.encoder.dialogue_layers = 1;
  c.train.max_epochs = kDeskEpochs;
  return c;
}

struct DeskCorpus {
  std::vector<Dialogue> train, valid, test;
};

DeskCorpus desk_corpus(int seed) {
  synthetic::SyntheticOptions so;
  so.dialogues = 700;
  so.seed = static_cast<std::uint64_t>(100 + seed);
  so.confusion = kDeskConfusion;
  const auto all = synthetic::generate(so);
  DeskCorpus c;
  c.train.assign(all.begin(), all.begin() + 500);
  c.valid.assign(all.begin() + 500, all.begin() + 600);
  c.test.assign(all.begin() + 600, all.end());
  return c;
}

void strip_labels(DeskCorpus& c) {
  for (auto* part : {&c.train, &c.valid, &c.test}) {
    for (auto& d : *part) d.da_labels.reset();
  }
}

// Validation-selected test USE macro-F1.
double run_desk(RunConfig cfg, DeskCorpus corpus, int seed, const UsdaModel* init = nullptr) {
  cfg.train.seed = static_cast<std::uint64_t>(seed);
  const bool supervised = cfg.model.mode == Mode::kMtl || cfg.model.mode == Mode::kStlDar;
  cfg.model.num_da_labels = supervised ? 6 : 0;
  if (!supervised) strip_labels(corpus);
  const Vocabulary vocab = init ? init->vocab() : Vocabulary::build(corpus.train);
  UsdaModel model(cfg.model, vocab, static_cast<std::uint64_t>(seed));
  if (init) init_encoder_from(model, *init);
  train(model, corpus.train, corpus.valid, cfg.train);
  return evaluate(model, corpus.test).use->macro_f1;
}

RunConfig content_only_config() {
  RunConfig c = desk_config();
  c.model.mode = Mode::kStlUse;
  c.model.satisfaction.content_only = true;
  return c;
}

Outcome mtl_benefit() {
  std::vector<double> mtl, ablation;
  for (int seed = 1; seed <= 3; ++seed) {
    RunConfig m = desk_config();
    m.model.mode = Mode::kMtl;
    m.train.lambda = kDeskMtlLambda;
    mtl.push_back(run_desk(m, desk_corpus(seed), seed));
    ablation.push_back(run_desk(content_only_config(), desk_corpus(seed), seed));
  }
  const double gap = mean(mtl) - mean(ablation);
  return {gap >= kMtlMargin && mean(mtl) >= kMtlFloor,
          "MTL " + list(mtl) + " mean " + fmt(mean(mtl)) + " vs content-only " + list(ablation) + " mean " +
              fmt(mean(ablation)) + ", gap " + fmt(gap)};
}

// CLU desk settings.
constexpr double kDeskCluLambda = 1.0;

RunConfig clu_config() {
  RunConfig c = desk_config();
  c.model.mode = Mode::kClu;
  c.train.lambda = kDeskCluLambda;
  c.model.cluster.latent_dim = 20;
  // joint gradients into the encoder collapse it at this scale
  c.model.cluster.stop_gradient = true;
  return c;
}

Outcome clu_benefit() {
  std::vector<double> clu, ablation;
  for (int seed = 1; seed <= 3; ++seed) {
    clu.push_back(run_desk(clu_config(), desk_corpus(seed), seed));
    ablation.push_back(run_desk(content_only_config(), desk_corpus(seed), seed));
  }
  const double gap = mean(clu) - mean(ablation);
  return {gap >= kCluMargin, "CLU " + list(clu) + " mean " + fmt(mean(clu)) + " vs content-only " + list(ablation) +
                                 " mean " + fmt(mean(ablation)) + ", gap " + fmt(gap)};
}

// Pre-training desk settings.
constexpr int kPretrainEpochs = 40;
constexpr double kPretrainLr = 1e-3;
constexpr int kPretrainWarmup = 300;
constexpr double kPretrainNegRatio = 3.0;
constexpr std::size_t kPretrainExtraDialogues = 1000;

struct PretrainRun {
  std::unique_ptr<UsdaModel> model;
  double srs_f1 = 0.0;
  double did_f1 = 0.0;
};

// Self-supervised samples come from the training split plus unlabeled extra
// dialogues; held-out samples from the validation split.
PretrainRun pretrain_desk(const DeskCorpus& corpus, int seed) {
  RunConfig cfg = desk_config();
  cfg.model.mode = Mode::kStlUse;
  cfg.model.num_da_labels = 0;
  PretrainRun run;
  run.model = std::make_unique<UsdaModel>(cfg.model, Vocabulary::build(corpus.train),
                                          static_cast<std::uint64_t>(5000 + seed));
  synthetic::SyntheticOptions so;
  so.dialogues = kPretrainExtraDialogues;
  so.seed = static_cast<std::uint64_t>(7000 + seed);
  so.confusion = kDeskConfusion;
  std::vector<Dialogue> source = corpus.train;
  for (auto& d : synthetic::generate(so)) {
    d.id = "extra-" + d.id;
    d.da_labels.reset();
    source.push_back(std::move(d));
  }
  pretrain::GenerateOptions opt;
  opt.neg_ratio = kPretrainNegRatio;
  nn::Rng r1(static_cast<std::uint64_t>(seed)), r2(static_cast<std::uint64_t>(seed + 1));
  const auto train_samples = pretrain::generate_samples(source, pretrain::Bm25Index::build(source), r1, opt);
  const auto valid_samples =
      pretrain::generate_samples(corpus.valid, pretrain::Bm25Index::build(corpus.valid), r2, opt);
  pretrain::PretrainConfig pc;
  pc.epochs = kPretrainEpochs;
  pc.learning_rate = kPretrainLr;
  pc.warmup_steps = kPretrainWarmup;
  pc.seed = static_cast<std::uint64_t>(seed);
  pretrain::run_pretraining(*run.model, train_samples.samples, {}, pc);
  const auto m = pretrain::evaluate_pretrain(*run.model, valid_samples.samples);
  run.srs_f1 = m.srs_macro_f1;
  run.did_f1 = m.did_macro_f1;
  return run;
}

Outcome pretrain_benefit() {
  std::vector<double> with, without, srs;
  int wins = 0;
  for (int seed = 1; seed <= 3; ++seed) {
    const DeskCorpus corpus = desk_corpus(seed);
    const PretrainRun pre = pretrain_desk(corpus, seed);
    srs.push_back(pre.srs_f1);
    RunConfig m = desk_config();
    m.model.mode = Mode::kMtl;
    m.train.lambda = kDeskMtlLambda;
    with.push_back(run_desk(m, corpus, seed, pre.model.get()));
    without.push_back(run_desk(m, corpus, seed));
    wins += with.back() >= without.back();
  }
  const double min_srs = *std::min_element(srs.begin(), srs.end());
  return {wins >= 2 && min_srs >= kSrsFloor,
          "pre-trained " + list(with) + " vs from scratch " + list(without) + ", " + std::to_string(wins) +
              "/3 seeds not worse; held-out SRS macro-F1 " + list(srs)};
}

// ---------------------------------------------------------------- criterion 8

analysis::TraceRecord trace(const std::string& id, int pred, double g, std::vector<int> das,
                            std::vector<double> alpha) {
  analysis::TraceRecord r;
  r.id = id;
  r.tag = "hand";
  r.gold = pred;
  r.predicted = pred;
  r.trace.g = {g};
  r.trace.alpha_a = std::move(alpha);
  r.trace.p_use = {0.0, 0.0, 0.0};
  r.trace.p_use[static_cast<std::size_t>(pred)] = 1.0;
  r.predicted_da = std::move(das);
  return r;
}

// Dyadic weights keep every sum and product exact in binary floating point.
std::vector<analysis::TraceRecord> hand_traces() {
  return {
      trace("h01", 0, 0.25, {1, 1, 2}, {0.5, 0.25, 0.25}),
      trace("h02", 0, 0.5, {3, 1, 1, 4}, {0.125, 0.375, 0.25, 0.25}),
      trace("h03", 1, 0.75, {1, 2, 3}, {0.25, 0.25, 0.5}),
      trace("h04", 2, 0.125, {5, 0}, {0.75, 0.25}),
      trace("h05", 0, 0.375, {1, 1, 1, 1}, {0.125, 0.125, 0.5, 0.25}),
      trace("h06", 1, 0.5, {2, 2}, {0.5, 0.5}),
      trace("h07", 2, 0.25, {1, 2, 5}, {0.25, 0.25, 0.5}),
      trace("h08", 0, 0.625, {4, 4, 1}, {0.375, 0.375, 0.25}),
      trace("h09", 1, 0.0, {0, 1, 2, 3}, {0.25, 0.25, 0.25, 0.25}),
      trace("h10", 2, 1.0, {3, 5}, {0.5, 0.5}),
      trace("h11", 0, 0.5, {2, 2, 2}, {0.25, 0.5, 0.25}),
      trace("h12", 1, 0.25, {1, 1}, {0.75, 0.25}),
      trace("h13", 2, 0.75, {0, 5}, {0.125, 0.875}),
      trace("h14", 0, 0.125, {1, 2, 1, 2}, {0.125, 0.375, 0.25, 0.25}),
      trace("h15", 1, 0.875, {4, 1, 1}, {0.5, 0.25, 0.25}),
      trace("h16", 2, 0.5, {3, 1, 5}, {0.25, 0.25, 0.5}),
      trace("h17", 0, 0.25, {3, 3}, {0.5, 0.5}),
      trace("h18", 1, 0.5, {2, 1}, {0.625, 0.375}),
      trace("h19", 2, 0.375, {1, 5}, {0.25, 0.75}),
      trace("h20", 0, 0.75, {1, 1, 3}, {0.25, 0.25, 0.5}),
  };
}

// Spreadsheet-style recomputation: one row per dialogue, one column per step.
std::optional<double> spreadsheet_impact(const std::vector<analysis::TraceRecord>& rows,
                                         const std::vector<int>& q, int c, bool use_g) {
  struct Row {
    bool contains = false;
    double best_mean = 0.0;
    bool in_class = false;
    double weight = 0.0;
    double contribution = 0.0;
  };
  std::vector<Row> sheet;
  for (const auto& r : rows) {
    Row row;
    const auto& das = r.predicted_da;
    for (std::size_t start = 0; start + q.size() <= das.size(); ++start) {
      if (!std::equal(q.begin(), q.end(), das.begin() + static_cast<std::ptrdiff_t>(start))) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) total += r.trace.alpha_a[start + j];
      const double m = total / static_cast<double>(q.size());
      if (!row.contains || m > row.best_mean) row.best_mean = m;
      row.contains = true;
    }
    row.in_class = r.predicted == c;
    row.weight = use_g ? r.trace.g[0] : 1.0 - r.trace.g[0];
    row.contribution = (row.contains && row.in_class) ? row.weight * row.best_mean : 0.0;
    sheet.push_back(row);
  }
  double numerator = 0.0;
  int denominator = 0;
  for (const auto& row : sheet) {
    numerator += row.contribution;
    denominator += row.contains ? 1 : 0;
  }
  if (denominator == 0) return std::nullopt;
  return numerator / denominator;
}

Outcome impact_oracle() {
  const auto rows = hand_traces();
  std::set<std::vector<int>> queries;
  for (const auto& r : rows) {
    for (std::size_t s = 0; s < r.predicted_da.size(); ++s) {
      for (std::size_t len = 1; len <= 3 && s + len <= r.predicted_da.size(); ++len) {
        queries.insert(std::vector<int>(r.predicted_da.begin() + static_cast<std::ptrdiff_t>(s),
                                        r.predicted_da.begin() + static_cast<std::ptrdiff_t>(s + len)));
      }
    }
  }
  queries.insert({6});     // absent label
  queries.insert({5, 1});  // absent pair
  int compared = 0, mismatches = 0;
  for (const auto& q : queries) {
    for (int c = 0; c < 3; ++c) {
      for (bool use_g : {false, true}) {
        const auto got = analysis::impact_score(
            rows, q, c, use_g ? analysis::GateConvention::kG : analysis::GateConvention::kOneMinusG);
        const auto want = spreadsheet_impact(rows, q, c, use_g);
        ++compared;
        if (got.has_value() != want.has_value() || (got && *got != *want)) ++mismatches;
      }
    }
  }
  // fuzz the range
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int fuzz = 0, out_of_range = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<analysis::TraceRecord> t;
    for (int i = 0; i < 12; ++i) {
      const int n = 1 + static_cast<int>(rng() % 7);
      std::vector<int> das;
      std::vector<double> alpha;
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        das.push_back(static_cast<int>(rng() % 3));
        alpha.push_back(std::pow(u(rng), 3.0) + 1e-12);
        s += alpha.back();
      }
      for (auto& a : alpha) a /= s;
      t.push_back(trace(std::to_string(i), static_cast<int>(rng() % 3), u(rng), das, alpha));
    }
    const std::vector<int> q{static_cast<int>(rng() % 3)};
    const std::vector<int> q2{static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    for (const auto& query : {q, q2}) {
      if (auto v = analysis::impact_score(t, query, static_cast<int>(rng() % 3))) {
        ++fuzz;
        if (!(*v >= 0.0 && *v <= 1.0)) ++out_of_range;
      }
    }
  }
  // the worked example
  const auto single = analysis::impact_score({trace("x", 1, 0.4, {2, 3}, {0.3, 0.5})}, {2, 3}, 1);
  const bool example = single && std::abs(*single - 0.24) < 1e-12;
  return {mismatches == 0 && out_of_range == 0 && example,
          std::to_string(compared) + " hand queries, exact mismatches " + std::to_string(mismatches) + "; " +
              std::to_string(fuzz) + " fuzz scores, outside [0,1] " + std::to_string(out_of_range) +
              "; worked example " + (example ? "0.24" : "wrong")};
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "usda_acceptance_determinism";
  const auto p = [&](const std::string& f) { return (dir / f).string(); };
  const std::vector<std::string> tiny{"--set", "encoder.token_dim=16", "--set", "encoder.hidden_dim=16",
                                      "--set", "encoder.ffn_dim=32",   "--set", "encoder.heads=2"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), tiny.begin(), tiny.end());
    return a;
  };
  const std::vector<std::vector<std::string>> pipeline{
      {"gen-synthetic", "--out", p("corpus.jsonl"), "--train", "80", "--valid", "20", "--test", "20", "--seed", "4"},
      {"gen-pretrain", "--data", p("corpus.jsonl"), "--out", p("samples.jsonl"), "--seed", "5"},
      with({"pretrain", "--samples", p("samples.jsonl"), "--out", p("pre.ckpt"), "--epochs", "2", "--summary",
            p("pre.summary.json"), "--seed", "6"}),
      with({"train", "--data", p("corpus.jsonl"), "--mode", "mtl", "--init-from", p("pre.ckpt"), "--out",
            p("mtl.ckpt"), "--epochs", "3", "--summary", p("mtl.summary.json"), "--seed", "7", "--threads", "2"}),
      with({"train", "--data", p("corpus.jsonl"), "--mode", "clu", "--out", p("clu.ckpt"), "--epochs", "2",
            "--summary", p("clu.summary.json"), "--seed", "8"}),
      {"eval", "--checkpoint", p("mtl.ckpt"), "--out", p("eval.json"), "--traces", p("traces.jsonl"), "--threads", "3"},
      {"analyze", "impact", "--traces", p("traces.jsonl"), "--out", p("impact.tsv"), "--min-support", "1"},
      {"analyze", "gates", "--traces", p("traces.jsonl"), "--out", p("gates.tsv")},
      {"analyze", "turns", "--checkpoint", p("mtl.ckpt"), "--out", p("turns.tsv")},
  };
  const std::vector<std::string> outputs{"pre.summary.json", "mtl.summary.json", "clu.summary.json", "eval.json",
                                         "traces.jsonl",     "impact.tsv",       "gates.tsv",        "turns.tsv"};
  std::vector<std::vector<std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& args : pipeline) {
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) return {false, args[0] + " failed: " + err.str()};
    }
    std::vector<std::string> contents;
    for (const auto& f : outputs) contents.push_back(slurp(dir / f));
    runs.push_back(std::move(contents));
  }
  fs::remove_all(dir);
  int differing = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) differing += runs[0][i] != runs[1][i] || runs[0][i].empty();
  return {differing == 0, std::to_string(outputs.size()) + " summary files compared, differing or empty " +
                              std::to_string(differing)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "CRF oracle equivalence", crf_oracle},
      {2, "gradient suite", gradient_suite},
      {3, "structural invariants fuzz", invariants_fuzz},
      {4, "pre-training generator correctness", generator_correctness},
      {5, "joint learning benefit (MTL vs content-only)", mtl_benefit},
      {6, "CLU vs content-only", clu_benefit},
      {7, "pre-training benefit", pretrain_benefit},
      {8, "impact score oracle", impact_oracle},
      {9, "CLI determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s | %s | %.1fs\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
