#include "usda/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace usda::nn {

Var ParameterStore::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter name: " + name);
  Var v = ad::parameter(std::move(init));
  params_.push_back({std::move(name), v});
  return v;
}

const NamedParameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

NamedParameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.mutable_grad().setZero(p.var.rows(), p.var.cols());
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var.value());
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].var.mutable_value() = values[i];
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) / rate;
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
               bool with_bias) {
  weight = store.add(name + ".weight", xavier_uniform(in, out, rng));
  if (with_bias) bias = store.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  Var y = ad::matmul(x, weight);
  return bias.defined() ? ad::add(y, bias) : y;
}

Mlp::Mlp(ParameterStore& store, const std::string& name, int in, int hidden_dim, int out,
         Rng& rng)
    : hidden(store, name + ".hidden", in, hidden_dim, rng),
      output(store, name + ".output", hidden_dim, out, rng) {}

Var Mlp::operator()(const Var& x) const { return output(ad::relu(hidden(x))); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
  gain = store.add(name + ".gain", Matrix::Ones(1, dim));
  bias = store.add(name + ".bias", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(const Var& x) const { return ad::layer_norm_rows(x, gain, bias); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int dim,
                                       int num_heads, Rng& rng)
    : heads(num_heads),
      query(store, name + ".query", dim, dim, rng),
      key(store, name + ".key", dim, dim, rng),
      value(store, name + ".value", dim, dim, rng),
      output(store, name + ".output", dim, dim, rng) {
  if (num_heads <= 0 || dim % num_heads != 0) {
    throw std::invalid_argument("attention dim must be divisible by heads");
  }
}

Var MultiHeadAttention::operator()(const Var& x, std::vector<Matrix>* weights) const {
  const Var q = query(x);
  const Var k = key(x);
  const Var v = value(x);
  const Eigen::Index head_dim = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index start = h * head_dim;
    const Var qh = heads == 1 ? q : ad::slice_cols(q, start, head_dim);
    const Var kh = heads == 1 ? k : ad::slice_cols(k, start, head_dim);
    const Var vh = heads == 1 ? v : ad::slice_cols(v, start, head_dim);
    const Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    if (weights != nullptr) weights->push_back(attn.value());
    outputs.push_back(ad::matmul(attn, vh));
  }
  const Var joined = heads == 1 ? outputs.front() : ad::hstack(outputs);
  return output(joined);
}

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& name, int dim,
                                   int ffn_dim, int heads, double dropout_rate,
                                   bool norm_attention_sublayer, Rng& rng)
    : attention(store, name + ".attention", dim, heads, rng),
      attention_norm(store, name + ".attention_norm", dim),
      ffn_in(store, name + ".ffn_in", dim, ffn_dim, rng),
      ffn_out(store, name + ".ffn_out", ffn_dim, dim, rng),
      output_norm(store, name + ".output_norm", dim),
      dropout(dropout_rate),
      norm_attention(norm_attention_sublayer) {}

Var TransformerLayer::operator()(const Var& x, const Context& ctx,
                                 std::vector<Matrix>* weights) const {
  Var attended = ad::dropout(attention(x, weights), dropout, ctx.training, ctx.rng);
  Var residual = x;
  if (norm_attention) {
    attended = attention_norm(ad::add(attended, x));
    residual = attended;
  }
  Var ffn = ffn_out(ad::relu(ffn_in(attended)));
  ffn = ad::dropout(ffn, dropout, ctx.training, ctx.rng);
  return output_norm(ad::add(ffn, residual));
}

Gru::Gru(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng)
    : hidden_(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  input_weight = store.add(name + ".input_weight", uniform(in, 3 * hidden, bound, rng));
  recurrent_weight = store.add(name + ".recurrent_weight", uniform(hidden, 3 * hidden, bound, rng));
  input_bias = store.add(name + ".input_bias", Matrix::Zero(1, 3 * hidden));
  recurrent_bias = store.add(name + ".recurrent_bias", Matrix::Zero(1, 3 * hidden));
}

Var Gru::operator()(const Var& x) const {
  const Eigen::Index steps = x.rows();
  const Eigen::Index h = hidden_;
  const Var projected = ad::add(ad::matmul(x, input_weight), input_bias);  // [T x 3h]
  Var state = ad::constant(Matrix::Zero(1, h));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    const Var xt = ad::slice_rows(projected, t, 1);
    const Var ht = ad::add(ad::matmul(state, recurrent_weight), recurrent_bias);
    const Var gates = ad::sigmoid(ad::add(ad::slice_cols(xt, 0, 2 * h), ad::slice_cols(ht, 0, 2 * h)));
    const Var reset = ad::slice_cols(gates, 0, h);
    const Var update = ad::slice_cols(gates, h, h);
    const Var candidate =
        ad::tanh(ad::add(ad::slice_cols(xt, 2 * h, h), ad::mul(reset, ad::slice_cols(ht, 2 * h, h))));
    // h' = n + z * (h - n)
    state = ad::add(candidate, ad::mul(update, ad::sub(state, candidate)));
    outputs.push_back(state);
  }
  return ad::vstack(outputs);
}

}  // namespace usda::nn
