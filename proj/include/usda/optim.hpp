#pragma once

#include "usda/nn.hpp"

#include <vector>

namespace usda::optim {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  virtual void set_learning_rate(double lr) = 0;
};

/// Linear warmup from base / warmup_steps to base over the first steps.
double warmup_rate(double base, long step, int warmup_steps);

class Sgd : public Optimizer {
 public:
  Sgd(nn::ParameterStore& store, double learning_rate);
  void step() override;
  void set_learning_rate(double lr) override { lr_ = lr; }

 private:
  nn::ParameterStore& store_;
  double lr_;
};

/// Adaptive-moment descent with bias correction.
class Adam : public Optimizer {
 public:
  Adam(nn::ParameterStore& store, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step() override;
  void set_learning_rate(double lr) override { lr_ = lr; }

 private:
  nn::ParameterStore& store_;
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<ad::Matrix> m_, v_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(nn::ParameterStore& store, double max_norm);

/// Multiplies every accumulated gradient by `factor`.
void scale_grads(nn::ParameterStore& store, double factor);

}  // namespace usda::optim
