#include "usda/config.hpp"

#include "usda/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace usda {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("bad boolean for " + key + ": '" + value + "'");
}

struct Entry {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define USDA_INT(field)                                                             \
  Entry {                                                                           \
    [](const RunConfig& c) { return std::to_string(c.field); },                     \
        [](RunConfig& c, const std::string& k, const std::string& v) {              \
          c.field = parse_number<std::remove_reference_t<decltype(c.field)>>(k, v); \
        }                                                                           \
  }
#define USDA_REAL(field)                                               \
  Entry {                                                              \
    [](const RunConfig& c) { return fmt(c.field); },                   \
        [](RunConfig& c, const std::string& k, const std::string& v) { \
          c.field = parse_number<double>(k, v);                        \
        }                                                              \
  }
#define USDA_BOOL(field)                                               \
  Entry {                                                              \
    [](const RunConfig& c) { return fmt(c.field); },                   \
        [](RunConfig& c, const std::string& k, const std::string& v) { \
          c.field = parse_bool(k, v);                                  \
        }                                                              \
  }

const std::map<std::string, Entry>& table() {
  static const std::map<std::string, Entry> entries = {
      {"encoder.token_dim", USDA_INT(model.encoder.token_dim)},
      {"encoder.exchange_layers", USDA_INT(model.encoder.exchange_layers)},
      {"encoder.dialogue_layers", USDA_INT(model.encoder.dialogue_layers)},
      {"encoder.hidden_dim", USDA_INT(model.encoder.hidden_dim)},
      {"encoder.ffn_dim", USDA_INT(model.encoder.ffn_dim)},
      {"encoder.heads", USDA_INT(model.encoder.heads)},
      {"encoder.dropout", USDA_REAL(model.encoder.dropout)},
      {"encoder.max_exchange_tokens", USDA_INT(model.encoder.max_exchange_tokens)},
      {"encoder.max_turns", USDA_INT(model.encoder.max_turns)},
      {"encoder.norm_attention", USDA_BOOL(model.encoder.norm_attention)},
      {"encoder.positional",
       Entry{[](const RunConfig& c) {
               return std::string(c.model.encoder.positional == PositionalEncoding::kLearned
                                      ? "learned"
                                      : "sinusoidal");
             },
             [](RunConfig& c, const std::string& k, const std::string& v) {
               if (v == "learned") {
                 c.model.encoder.positional = PositionalEncoding::kLearned;
               } else if (v == "sinusoidal") {
                 c.model.encoder.positional = PositionalEncoding::kSinusoidal;
               } else {
                 throw Error("bad value for " + k + ": '" + v + "'");
               }
             }}},
      {"cluster.clusters", USDA_INT(model.cluster.clusters)},
      {"cluster.latent_dim", USDA_INT(model.cluster.latent_dim)},
      {"cluster.lambda1", USDA_REAL(model.cluster.lambda1)},
      {"cluster.lambda2", USDA_REAL(model.cluster.lambda2)},
      {"cluster.stop_gradient", USDA_BOOL(model.cluster.stop_gradient)},
      {"cluster.feature",
       Entry{[](const RunConfig& c) {
               return std::string(c.model.cluster.feature == cluster::DaFeature::kSoftmax
                                      ? "softmax"
                                      : "logits");
             },
             [](RunConfig& c, const std::string& k, const std::string& v) {
               if (v == "softmax") {
                 c.model.cluster.feature = cluster::DaFeature::kSoftmax;
               } else if (v == "logits") {
                 c.model.cluster.feature = cluster::DaFeature::kLogits;
               } else {
                 throw Error("bad value for " + k + ": '" + v + "'");
               }
             }}},
      {"use.recurrent_dim", USDA_INT(model.satisfaction.recurrent_dim)},
      {"use.scalar_gate", USDA_BOOL(model.satisfaction.scalar_gate)},
      {"use.content_only", USDA_BOOL(model.satisfaction.content_only)},
      {"model.num_da_labels", USDA_INT(model.num_da_labels)},
      {"model.viterbi", USDA_BOOL(model.viterbi)},
      {"model.mode",
       Entry{[](const RunConfig& c) { return std::string(mode_name(c.model.mode)); },
             [](RunConfig& c, const std::string&, const std::string& v) {
               c.model.mode = mode_from_name(v);
             }}},
      {"train.lambda", USDA_REAL(train.lambda)},
      {"train.learning_rate", USDA_REAL(train.learning_rate)},
      {"train.warmup_steps", USDA_INT(train.warmup_steps)},
      {"train.batch_size", USDA_INT(train.batch_size)},
      {"train.max_epochs", USDA_INT(train.max_epochs)},
      {"train.seed", USDA_INT(train.seed)},
      {"train.clip_norm", USDA_REAL(train.clip_norm)},
      {"train.vocab_min_freq", USDA_INT(train.vocab_min_freq)},
      {"train.optimizer",
       Entry{[](const RunConfig& c) {
               return std::string(c.train.optimizer == OptimizerKind::kSgd ? "sgd" : "adam");
             },
             [](RunConfig& c, const std::string& k, const std::string& v) {
               if (v == "sgd") {
                 c.train.optimizer = OptimizerKind::kSgd;
               } else if (v == "adam") {
                 c.train.optimizer = OptimizerKind::kAdam;
               } else {
                 throw Error("bad value for " + k + ": '" + v + "'");
               }
             }}},
      {"pretrain.epochs", USDA_INT(pretrain.epochs)},
      {"pretrain.batch_size", USDA_INT(pretrain.batch_size)},
      {"pretrain.learning_rate", USDA_REAL(pretrain.learning_rate)},
      {"pretrain.clip_norm", USDA_REAL(pretrain.clip_norm)},
      {"pretrain.warmup_steps", USDA_INT(pretrain.warmup_steps)},
      {"pretrain.seed", USDA_INT(pretrain.seed)},
  };
  return entries;
}

#undef USDA_INT
#undef USDA_REAL
#undef USDA_BOOL

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw Error(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(where + "empty key");
    if (seen.count(key)) throw Error(where + "duplicate key " + key);
    seen[key] = line_no;
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& t = table();
  const auto it = t.find(key);
  if (it == t.end()) throw Error("unknown config key: " + key);
  it->second.set(config, key, value);
}

void apply_settings(RunConfig& config, const KeyValues& settings) {
  for (const auto& [k, v] : settings) apply_setting(config, k, v);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  RunConfig config;
  apply_settings(config, parse_key_values(in, path.string()));
  return config;
}

std::string canonical_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, entry] : table()) out << key << " = " << entry.get(config) << '\n';
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, entry] : table()) keys.push_back(key);
  return keys;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_config(config))));
  return buf;
}

}  // namespace usda
