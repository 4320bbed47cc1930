#include "usda/satisfaction.hpp"

#include "usda/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace usda::satisfaction {

namespace {
std::vector<double> to_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
}  // namespace

double FusionTrace::gate() const {
  if (g.empty()) return 0.0;
  return std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
}

int FusionTrace::predicted() const {
  return static_cast<int>(std::max_element(p_use.begin(), p_use.end()) - p_use.begin());
}

Attended attend(const Var& V, const Var& W, const Var& w) {
  const Var scores = ad::transpose(ad::matmul(ad::tanh(ad::matmul_nt(V, W)), w));  // [1 x T]
  Attended out;
  out.alpha = ad::softmax_rows(scores);
  out.o = ad::matmul(out.alpha, V);
  return out;
}

Fused fuse(const Var& o_c, const Var& o_a, const Var& W_g) {
  const std::vector<Var> parts{o_c, o_a};
  Fused out;
  out.g = ad::sigmoid(ad::matmul_nt(ad::hstack(parts), W_g));
  out.o = ad::add(o_c, ad::mul(out.g, ad::sub(o_a, o_c)));
  return out;
}

Var use_loss(const Var& logits, int label) {
  if (label < 0 || label >= logits.cols()) throw Error("use_loss: label out of range");
  return ad::scale(ad::element(ad::log_softmax_rows(logits), 0, label), -1.0);
}

double use_loss(std::span<const double> logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw Error("use_loss: label out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return -(logits[static_cast<std::size_t>(label)] - m - std::log(s));
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= s;
  return p;
}

SatisfactionHead::SatisfactionHead(nn::ParameterStore& store, int content_dim, int act_dim,
                                   const SatisfactionConfig& config, nn::Rng& rng)
    : config_(config) {
  const int r = config_.recurrent_dim > 0 ? config_.recurrent_dim : content_dim;
  recurrent_dim_ = r;
  gru_content = nn::Gru(store, "use.gru_content", content_dim, r, rng);
  attention_content_W = store.add("use.attention_content.W", nn::xavier_uniform(r, r, rng));
  attention_content_w = store.add("use.attention_content.w", nn::xavier_uniform(r, 1, rng));
  if (!config_.content_only) {
    gru_act = nn::Gru(store, "use.gru_act", act_dim, r, rng);
    attention_act_W = store.add("use.attention_act.W", nn::xavier_uniform(r, r, rng));
    attention_act_w = store.add("use.attention_act.w", nn::xavier_uniform(r, 1, rng));
    const int gate_rows = config_.scalar_gate ? 1 : r;
    gate_W = store.add("use.gate.W", nn::xavier_uniform(gate_rows, 2 * r, rng));
  }
  classifier_ = nn::Mlp(store, "use.classifier", r, r, 3, rng);
}

StreamStates SatisfactionHead::run_streams(const Var& c, const Var& a) const {
  StreamStates s;
  s.content = gru_content(c);
  if (!config_.content_only) {
    if (a.rows() != c.rows()) throw Error("run_streams: content and act streams differ in length");
    s.act = gru_act(a);
  }
  return s;
}

SatisfactionHead::Output SatisfactionHead::forward(const Var& c, const Var& a) const {
  const StreamStates streams = run_streams(c, a);
  const Attended content = attend(streams.content, attention_content_W, attention_content_w);
  Output out;
  Var o = content.o;
  out.trace.alpha_c = to_vector(content.alpha.value());
  out.trace.o_c = to_vector(content.o.value());
  if (!config_.content_only) {
    const Attended act = attend(streams.act, attention_act_W, attention_act_w);
    const Fused fused = fuse(content.o, act.o, gate_W);
    o = fused.o;
    out.trace.alpha_a = to_vector(act.alpha.value());
    out.trace.o_a = to_vector(act.o.value());
    out.trace.g = to_vector(fused.g.value());
  }
  out.trace.o = to_vector(o.value());
  out.logits = classify(o);
  out.trace.p_use = softmax(to_vector(out.logits.value()));
  return out;
}

}  // namespace usda::satisfaction
