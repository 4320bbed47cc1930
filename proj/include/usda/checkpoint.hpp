// Model checkpoints: a "USDA-CHECKPOINT 1" line followed by one JSON document
// holding the configuration, word list, DA inventory, parameters and the run
// manifest.

#pragma once

#include "usda/config.hpp"
#include "usda/model.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace usda {

struct LoadedCheckpoint {
  RunConfig config;
  std::optional<DaVocab> da_vocab;
  nlohmann::json manifest;
  std::unique_ptr<UsdaModel> model;
};

void save_checkpoint(const std::filesystem::path& path, const UsdaModel& model,
                     const RunConfig& config, const std::optional<DaVocab>& da_vocab,
                     const nlohmann::json& manifest);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every "encoder.*" parameter of `source` into `target` (names and
/// shapes must agree). Returns the number of tensors copied.
std::size_t init_encoder_from(UsdaModel& target, const UsdaModel& source);

}  // namespace usda
