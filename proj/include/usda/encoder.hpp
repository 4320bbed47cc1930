// Hierarchical Transformer encoder: a shared exchange encoder maps each
// "[CLS] user [SEP] system [SEP]" sequence to h_t (its [CLS] output), then a
// dialogue-level Transformer contextualizes h_1..h_T into c_1..c_T.

#pragma once

#include "usda/corpus.hpp"
#include "usda/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace usda {

enum class PositionalEncoding { kSinusoidal, kLearned };

struct EncoderConfig {
  int vocab_size = 0;
  int token_dim = 64;
  int exchange_layers = 1;
  int dialogue_layers = 2;
  int hidden_dim = 64;
  int ffn_dim = 128;
  int heads = 4;
  double dropout = 0.1;
  int max_exchange_tokens = 48;
  PositionalEncoding positional = PositionalEncoding::kSinusoidal;
  int max_turns = 64;            // table size for learned dialogue positions
  bool norm_attention = true;    // post-norm on the attention sub-layer too

  void validate() const;
};

struct ExchangeRepresentations {
  ad::Var h;  // [T x d] exchange level
  ad::Var c;  // [T x d] dialogue level
};

/// Replacement for the built-in exchange encoder; must return a [1 x d] row.
using ExchangeAdapter = std::function<ad::Var(const Exchange&, const nn::Context&)>;

class HierarchicalEncoder {
 public:
  HierarchicalEncoder() = default;
  HierarchicalEncoder(nn::ParameterStore& store, const EncoderConfig& config, nn::Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// Token ids of the concatenated exchange, truncated to max_exchange_tokens.
  /// segments (optional) receives 0 for the user part and 1 for the system part.
  std::vector<int> exchange_tokens(const Exchange& exchange,
                                   std::vector<int>* segments = nullptr) const;

  ad::Var encode_exchange(const Exchange& exchange, const nn::Context& ctx) const;
  ad::Var encode_dialogue(const ad::Var& h, const nn::Context& ctx,
                          std::vector<ad::Matrix>* attention = nullptr) const;
  ExchangeRepresentations encode(const Dialogue& dialogue, const nn::Context& ctx) const;

  void set_exchange_adapter(ExchangeAdapter adapter) { adapter_ = std::move(adapter); }

 private:
  EncoderConfig config_;
  ad::Var token_embedding_;    // [V x token_dim]
  ad::Var segment_embedding_;  // [2 x token_dim]
  ad::Var turn_embedding_;     // [max_turns x d], learned positions only
  nn::Linear token_projection_;
  nn::LayerNorm embedding_norm_;
  std::vector<nn::TransformerLayer> exchange_layers_;
  std::vector<nn::TransformerLayer> dialogue_layers_;
  ad::Matrix token_positions_;
  ExchangeAdapter adapter_;
};

}  // namespace usda
