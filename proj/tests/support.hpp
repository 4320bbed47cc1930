#pragma once

#include "usda/autodiff.hpp"
#include "usda/corpus.hpp"
#include "usda/model.hpp"
#include "usda/nn.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing {

using usda::ad::Matrix;
using usda::ad::Var;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// ||analytic - numeric|| / (||analytic|| + ||numeric||) over every entry of `params`.
inline double gradcheck(const std::function<Var()>& loss, std::vector<Var> params, double h = 1e-6) {
  for (auto& p : params) p.mutable_grad() = Matrix::Zero(p.rows(), p.cols());
  usda::ad::backward(loss());
  double diff = 0.0, an = 0.0, nu = 0.0;
  for (auto& p : params) {
    const Matrix analytic = p.grad();
    for (Eigen::Index i = 0; i < p.value().size(); ++i) {
      double& x = p.mutable_value().data()[i];
      const double keep = x;
      double up, down;
      {
        usda::ad::NoGradGuard guard;
        x = keep + h;
        up = loss().scalar();
        x = keep - h;
        down = loss().scalar();
      }
      x = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      diff += (a - numeric) * (a - numeric);
      an += a * a;
      nu += numeric * numeric;
    }
  }
  const double denom = std::sqrt(an) + std::sqrt(nu);
  return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

inline usda::Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& users,
                                    const std::vector<std::string>& systems,
                                    usda::Satisfaction s = usda::Satisfaction::kNeutral) {
  usda::Dialogue d;
  d.id = id;
  for (std::size_t t = 0; t < users.size(); ++t) {
    usda::Exchange e;
    e.user = {usda::Speaker::kUser, users[t], {}};
    if (t < systems.size()) e.system = usda::Utterance{usda::Speaker::kSystem, systems[t], {}};
    d.exchanges.push_back(e);
  }
  d.satisfaction = s;
  return d;
}

inline usda::ModelConfig tiny_model_config(usda::Mode mode, int labels) {
  usda::ModelConfig c;
  c.encoder.token_dim = 8;
  c.encoder.hidden_dim = 8;
  c.encoder.ffn_dim = 16;
  c.encoder.heads = 2;
  c.encoder.exchange_layers = 1;
  c.encoder.dialogue_layers = 1;
  c.encoder.dropout = 0.0;
  c.cluster.clusters = 4;
  c.mode = mode;
  c.num_da_labels = labels;
  return c;
}

}  // namespace testing
