#include "usda/checkpoint.hpp"

#include "usda/error.hpp"

#include <fstream>
#include <sstream>

namespace usda {

namespace {

constexpr const char* kMagic = "USDA-CHECKPOINT 1";

nlohmann::json matrix_to_json(const ad::Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

ad::Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("tensor size mismatch");
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UsdaModel& model,
                     const RunConfig& config, const std::optional<DaVocab>& da_vocab,
                     const nlohmann::json& manifest) {
  RunConfig stored = config;
  stored.model = model.config();
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.parameters().parameters()) params[p.name] = matrix_to_json(p.var.value());
  nlohmann::json doc{{"config", canonical_config(stored)},
                     {"vocab", model.vocab().words()},
                     {"parameters", std::move(params)},
                     {"manifest", manifest}};
  if (da_vocab) doc["da_vocab"] = *da_vocab;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << kMagic << '\n' << doc.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw Error(path.string() + ": not a checkpoint");
  LoadedCheckpoint out;
  try {
    const auto doc = nlohmann::json::parse(in);
    std::istringstream cfg(doc.at("config").get<std::string>());
    apply_settings(out.config, parse_key_values(cfg, path.string()));
    if (doc.contains("da_vocab")) out.da_vocab = doc.at("da_vocab").get<DaVocab>();
    out.manifest = doc.value("manifest", nlohmann::json::object());
    Vocabulary vocab(doc.at("vocab").get<std::vector<std::string>>());
    out.model = std::make_unique<UsdaModel>(out.config.model, std::move(vocab), 0);
    const auto& params = doc.at("parameters");
    for (auto& p : out.model->parameters().parameters()) {
      if (!params.contains(p.name)) throw Error("missing parameter " + p.name);
      ad::Matrix value = matrix_from_json(params.at(p.name));
      auto& node = *p.var.node();
      if (value.rows() != node.value.rows() || value.cols() != node.value.cols()) {
        throw Error("shape mismatch for parameter " + p.name);
      }
      node.value = std::move(value);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed checkpoint: " + e.what());
  }
  return out;
}

std::size_t init_encoder_from(UsdaModel& target, const UsdaModel& source) {
  std::size_t copied = 0;
  for (auto& p : target.parameters().parameters()) {
    if (p.name.rfind("encoder.", 0) != 0) continue;
    const auto* src = source.parameters().find(p.name);
    if (!src) throw Error("pre-trained checkpoint lacks " + p.name);
    const auto& v = src->var.value();
    auto& node = *p.var.node();
    if (v.rows() != node.value.rows() || v.cols() != node.value.cols()) {
      throw Error("shape mismatch for " + p.name + " between checkpoints");
    }
    node.value = v;
    ++copied;
  }
  return copied;
}

}  // namespace usda
