// Neural building blocks on top of usda::ad.

#pragma once

#include "usda/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace usda::nn {

using ad::Matrix;
using ad::Var;
using Rng = std::mt19937_64;

struct NamedParameter {
  std::string name;
  Var var;
};

/// Owns every trainable leaf of a model, in registration order.
class ParameterStore {
 public:
  Var add(std::string name, Matrix init);

  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const NamedParameter* find(std::string_view name) const;
  NamedParameter* find(std::string_view name);

  void zero_grad();
  std::size_t num_scalars() const;
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<NamedParameter> params_;
};

/// Per-pass execution state: dropout is active only when training.
struct Context {
  bool training = false;
  Rng* rng = nullptr;
};

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

/// Sinusoidal position table: row p, column 2i = sin(p / 10000^(2i/d)), 2i+1 = cos.
Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
         bool bias = true);

  /// x: [n x in] -> [n x out]
  Var operator()(const Var& x) const;

  Var weight;  // [in x out]
  Var bias;    // [1 x out], undefined when constructed without bias
};

/// One hidden ReLU layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
  Var operator()(const Var& x) const;

  Linear hidden;
  Linear output;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  Var operator()(const Var& x) const;

  Var gain;
  Var bias;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng);

  /// Self-attention over the rows of x. When `weights` is non-null the
  /// per-head [n x n] attention matrices are appended to it.
  Var operator()(const Var& x, std::vector<Matrix>* weights = nullptr) const;

  int heads = 1;
  Linear query, key, value, output;
};

/// One post-norm encoder layer.
///   norm_attention = true:  Y = LN(MHA(X) + X);  X' = LN(FFN(Y) + Y)
///   norm_attention = false: Y = MHA(X);          X' = LN(FFN(Y) + X)
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, int dim, int ffn_dim,
                   int heads, double dropout, bool norm_attention, Rng& rng);

  Var operator()(const Var& x, const Context& ctx, std::vector<Matrix>* weights = nullptr) const;

  MultiHeadAttention attention;
  LayerNorm attention_norm;
  Linear ffn_in, ffn_out;
  LayerNorm output_norm;
  double dropout = 0.0;
  bool norm_attention = true;
};

/// Gated recurrent unit with update/reset gates, zero initial state.
///   r = sig(x Wr + h Ur + b), z = sig(x Wz + h Uz + b), n = tanh(x Wn + r * (h Un + bn) + b)
///   h' = (1 - z) * n + z * h
class Gru {
 public:
  Gru() = default;
  Gru(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);

  /// x: [T x in] -> [T x hidden], rows in chronological order.
  Var operator()(const Var& x) const;
  int hidden_size() const { return hidden_; }

  Var input_weight;      // [in x 3h], gate order r | z | n
  Var recurrent_weight;  // [h x 3h]
  Var input_bias;        // [1 x 3h]
  Var recurrent_bias;    // [1 x 3h]

 private:
  int hidden_ = 0;
};

}  // namespace usda::nn
