#include "usda/encoder.hpp"

#include "usda/error.hpp"
#include "usda/vocabulary.hpp"

#include <cmath>

namespace usda {

void EncoderConfig::validate() const {
  if (vocab_size <= 0 || token_dim <= 0 || hidden_dim <= 0 || ffn_dim <= 0 || heads <= 0 ||
      max_exchange_tokens <= 1 || max_turns <= 0) {
    throw Error("encoder dimensions must be positive");
  }
  if (exchange_layers < 0 || dialogue_layers < 0) throw Error("layer counts must be >= 0");
  if (hidden_dim % heads != 0) throw Error("hidden_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0,1)");
}

HierarchicalEncoder::HierarchicalEncoder(nn::ParameterStore& store, const EncoderConfig& config,
                                         nn::Rng& rng)
    : config_(config) {
  config_.validate();
  const int d = config_.hidden_dim;
  // unit-variance embeddings so token identity is not swamped by the positions
  const double unit = std::sqrt(3.0);
  token_embedding_ = store.add("encoder.token_embedding",
                               nn::uniform(config_.vocab_size, config_.token_dim, unit, rng));
  segment_embedding_ =
      store.add("encoder.segment_embedding", nn::uniform(2, config_.token_dim, unit, rng));
  if (config_.token_dim != d) {
    token_projection_ = nn::Linear(store, "encoder.token_projection", config_.token_dim, d, rng);
  }
  embedding_norm_ = nn::LayerNorm(store, "encoder.embedding_norm", d);
  for (int l = 0; l < config_.exchange_layers; ++l) {
    exchange_layers_.emplace_back(store, "encoder.exchange." + std::to_string(l), d,
                                  config_.ffn_dim, config_.heads, config_.dropout,
                                  config_.norm_attention, rng);
  }
  if (config_.positional == PositionalEncoding::kLearned) {
    turn_embedding_ =
        store.add("encoder.turn_embedding", nn::uniform(config_.max_turns, d, 0.1, rng));
  }
  for (int l = 0; l < config_.dialogue_layers; ++l) {
    dialogue_layers_.emplace_back(store, "encoder.dialogue." + std::to_string(l), d,
                                  config_.ffn_dim, config_.heads, config_.dropout,
                                  config_.norm_attention, rng);
  }
  token_positions_ = nn::sinusoidal_positions(config_.max_exchange_tokens, d);
}

std::vector<int> HierarchicalEncoder::exchange_tokens(const Exchange& exchange,
                                                      std::vector<int>* segments) const {
  std::vector<int> ids{Vocabulary::kCls};
  std::vector<int> seg{0};
  for (int t : exchange.user.tokens) {
    ids.push_back(t);
    seg.push_back(0);
  }
  ids.push_back(Vocabulary::kSep);
  seg.push_back(0);
  if (exchange.system) {
    for (int t : exchange.system->tokens) {
      ids.push_back(t);
      seg.push_back(1);
    }
    ids.push_back(Vocabulary::kSep);
    seg.push_back(1);
  }
  const auto limit = static_cast<std::size_t>(config_.max_exchange_tokens);
  if (ids.size() > limit) {
    ids.resize(limit);
    seg.resize(limit);
  }
  if (segments != nullptr) *segments = std::move(seg);
  return ids;
}

ad::Var HierarchicalEncoder::encode_exchange(const Exchange& exchange,
                                             const nn::Context& ctx) const {
  if (adapter_) return adapter_(exchange, ctx);
  if (exchange.user.tokens.empty() && (!exchange.system || exchange.system->tokens.empty())) {
    throw Error("encode_exchange: empty token sequence (was the dialogue tokenized?)");
  }
  std::vector<int> segments;
  const std::vector<int> ids = exchange_tokens(exchange, &segments);
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw Error("encode_exchange: token id out of range");
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  ad::Var x = ad::add(ad::gather_rows(token_embedding_, ids),
                      ad::gather_rows(segment_embedding_, segments));
  if (token_projection_.weight.defined()) x = token_projection_(x);
  x = ad::add(x, ad::constant(token_positions_.topRows(n)));
  x = ad::dropout(embedding_norm_(x), config_.dropout, ctx.training, ctx.rng);
  for (const auto& layer : exchange_layers_) x = layer(x, ctx);
  return ad::slice_rows(x, 0, 1);
}

ad::Var HierarchicalEncoder::encode_dialogue(const ad::Var& h, const nn::Context& ctx,
                                             std::vector<ad::Matrix>* attention) const {
  const Eigen::Index turns = h.rows();
  if (turns < 1) throw Error("encode_dialogue: need at least one exchange");
  if (!h.value().allFinite()) throw Error("encode_dialogue: non-finite input");
  ad::Var x;
  if (config_.positional == PositionalEncoding::kLearned) {
    if (turns > config_.max_turns) throw Error("encode_dialogue: dialogue longer than max_turns");
    x = ad::add(h, ad::slice_rows(turn_embedding_, 0, turns));
  } else {
    x = ad::add(h, ad::constant(nn::sinusoidal_positions(turns, h.cols())));
  }
  for (const auto& layer : dialogue_layers_) x = layer(x, ctx, attention);
  return x;
}

ExchangeRepresentations HierarchicalEncoder::encode(const Dialogue& dialogue,
                                                    const nn::Context& ctx) const {
  std::vector<ad::Var> rows;
  rows.reserve(dialogue.exchanges.size());
  for (const auto& ex : dialogue.exchanges) rows.push_back(encode_exchange(ex, ctx));
  ExchangeRepresentations out;
  out.h = ad::vstack(rows);
  out.c = encode_dialogue(out.h, ctx);
  return out;
}

}  // namespace usda
