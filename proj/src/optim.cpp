#include "usda/optim.hpp"

#include <cmath>

namespace usda::optim {

double warmup_rate(double base, long step, int warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base;
  return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

Sgd::Sgd(nn::ParameterStore& store, double learning_rate) : store_(store), lr_(learning_rate) {}

void Sgd::step() {
  for (auto& p : store_.parameters()) {
    if (p.var.grad().size() == 0) continue;
    p.var.mutable_value() -= lr_ * p.var.grad();
  }
}

Adam::Adam(nn::ParameterStore& store, double learning_rate, double beta1, double beta2, double eps)
    : store_(store), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store_.parameters()) {
    m_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Adam::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  auto& params = store_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = params[i].var.grad();
    if (g.size() == 0) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    params[i].var.mutable_value().array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

double clip_grad_norm(nn::ParameterStore& store, double max_norm) {
  double total = 0.0;
  for (const auto& p : store.parameters()) {
    if (p.var.grad().size() != 0) total += p.var.grad().squaredNorm();
  }
  total = std::sqrt(total);
  if (max_norm > 0.0 && total > max_norm) scale_grads(store, max_norm / total);
  return total;
}

void scale_grads(nn::ParameterStore& store, double factor) {
  for (auto& p : store.parameters()) {
    if (p.var.grad().size() != 0) p.var.mutable_grad() *= factor;
  }
}

}  // namespace usda::optim
