// Run configuration as "key = value" text.  '#' starts a comment.
//
//   encoder.hidden_dim = 32
//   model.mode = mtl
//   train.learning_rate = 0.001

#pragma once

#include "usda/model.hpp"
#include "usda/pretrain.hpp"
#include "usda/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace usda {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  pretrain::PretrainConfig pretrain;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>");

/// Throws on an unknown key or a malformed value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
void apply_settings(RunConfig& config, const KeyValues& settings);

RunConfig load_config(const std::filesystem::path& path);

/// Every known key, sorted, one "key = value" per line.
std::string canonical_config(const RunConfig& config);
std::vector<std::string> config_keys();

std::uint64_t fnv1a(std::string_view data);
/// 16 hex digits of fnv1a(canonical_config(config)).
std::string config_hash(const RunConfig& config);

}  // namespace usda
