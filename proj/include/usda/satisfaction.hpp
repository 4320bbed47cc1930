// Satisfaction head: two recurrent streams (content c_t, dialogue-act a_t),
// additive attention per stream, a sigmoid gate mixing the two summaries and a
// 3-way classifier.

#pragma once

#include "usda/nn.hpp"

#include <span>
#include <vector>

namespace usda::satisfaction {

using ad::Matrix;
using ad::Var;

struct SatisfactionConfig {
  int recurrent_dim = 0;        // 0 means the encoder hidden size
  bool scalar_gate = false;     // W_g of shape [1 x 2d_r] instead of [d_r x 2d_r]
  bool content_only = false;    // ablation: drop the dialogue-act stream and the gate
};

struct StreamStates {
  Var content;  // V_c [T x d_r]
  Var act;      // V_a [T x d_r]
};

struct Attended {
  Var alpha;  // [1 x T]
  Var o;      // [1 x d_r]
};

struct Fused {
  Var g;  // [1 x d_r] or [1 x 1]
  Var o;  // [1 x d_r]
};

/// Everything the analysis tools need from one forward pass.
struct FusionTrace {
  std::vector<double> alpha_c, alpha_a;
  std::vector<double> o_c, o_a;
  std::vector<double> g;
  std::vector<double> o;
  std::vector<double> p_use;

  /// Mean of the gate components (the gate itself when it is scalar).
  double gate() const;
  int predicted() const;
};

/// alpha = softmax(w^T tanh(V W^T)), o = V^T alpha.  W: [a x d_r], w: [a x 1].
Attended attend(const Var& V, const Var& W, const Var& w);

/// g = sigmoid(W_g [o_c; o_a]), o = g * o_a + (1 - g) * o_c.  W_g: [m x 2d_r].
Fused fuse(const Var& o_c, const Var& o_a, const Var& W_g);

/// -log softmax(logits)[label]; logits is [1 x 3].
Var use_loss(const Var& logits, int label);
double use_loss(std::span<const double> logits, int label);

std::vector<double> softmax(std::span<const double> logits);

class SatisfactionHead {
 public:
  SatisfactionHead() = default;
  SatisfactionHead(nn::ParameterStore& store, int content_dim, int act_dim,
                   const SatisfactionConfig& config, nn::Rng& rng);

  StreamStates run_streams(const Var& c, const Var& a) const;

  struct Output {
    Var logits;  // [1 x 3]
    FusionTrace trace;
  };
  /// `a` is ignored in content-only mode and may be undefined.
  Output forward(const Var& c, const Var& a) const;

  /// p_use = softmax(MLP_USE(o)) as logits.
  Var classify(const Var& o) const { return classifier_(o); }

  const SatisfactionConfig& config() const { return config_; }
  int recurrent_dim() const { return recurrent_dim_; }

  nn::Gru gru_content, gru_act;
  Var attention_content_W, attention_content_w;
  Var attention_act_W, attention_act_w;
  Var gate_W;

 private:
  SatisfactionConfig config_;
  int recurrent_dim_ = 0;
  nn::Mlp classifier_;
};

}  // namespace usda::satisfaction
