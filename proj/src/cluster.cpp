#include "usda/cluster.hpp"

#include "usda/error.hpp"

#include <algorithm>
#include <map>

namespace usda::cluster {

void ClusterConfig::validate() const {
  if (clusters < 2) throw Error("cluster count K must be at least 2");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw Error("lambda1 and lambda2 must be non-negative");
  if (latent_dim < 0) throw Error("latent_dim must be non-negative");
}

int ClusterConfig::resolved_latent_dim(int input_dim) const {
  return latent_dim > 0 ? latent_dim : std::max(1, input_dim / 2);
}

Matrix ClusterOutput::probabilities() const {
  Matrix p = A.value();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i) = (p.row(i).array() - p.row(i).maxCoeff()).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

SelfRepresentation self_represent(const Var& X, const Var& M) {
  SelfRepresentation out;
  out.A = ad::matmul_nt(X, M);
  out.X_star = ad::matmul(ad::softmax_rows(out.A), M);
  return out;
}

ClusterNetwork::ClusterNetwork(nn::ParameterStore& store, int input_dim,
                               const ClusterConfig& config, nn::Rng& rng)
    : config_(config) {
  config_.validate();
  const int latent = config_.resolved_latent_dim(input_dim);
  encoder_ = nn::Mlp(store, "cluster.encoder", input_dim, input_dim, latent, rng);
  decoder_ = nn::Mlp(store, "cluster.decoder", latent, input_dim, input_dim, rng);
  Matrix m = nn::uniform(config_.clusters, latent, 0.1, rng);
  for (Eigen::Index k = 0; k < m.rows(); ++k) m.row(k).normalize();
  memory_ = store.add("cluster.memory", std::move(m));
}

ClusterOutput ClusterNetwork::forward(const Var& c) const {
  ClusterOutput out;
  out.X = encoder_(c);
  auto rep = self_represent(out.X, memory_);
  out.A = rep.A;
  out.X_star = rep.X_star;
  out.C_star = decoder_(out.X_star);
  return out;
}

Var ClusterNetwork::loss(const Var& c, const ClusterOutput& out) const {
  const auto k = memory_.rows();
  const Var gram = ad::matmul_nt(memory_, memory_);
  const Var reg = ad::norm(ad::sub(gram, ad::constant(Matrix::Identity(k, k))));
  Var total = ad::squared_norm(ad::sub(out.C_star, c));
  total = ad::add(total, ad::scale(ad::squared_norm(ad::sub(out.X_star, out.X)), config_.lambda1));
  return ad::add(total, ad::scale(reg, config_.lambda2));
}

ClusterLossTerms ClusterNetwork::loss_terms(const Matrix& c, const ClusterOutput& out) const {
  const Matrix& m = memory_.value();
  ClusterLossTerms t;
  t.reconstruction = (out.C_star.value() - c).squaredNorm();
  t.self_representation = config_.lambda1 * (out.X_star.value() - out.X.value()).squaredNorm();
  t.regularization =
      config_.lambda2 * (m * m.transpose() - Matrix::Identity(m.rows(), m.rows())).norm();
  t.total = t.reconstruction + t.self_representation + t.regularization;
  return t;
}

Var ClusterNetwork::features(const ClusterOutput& out) const {
  return config_.feature == DaFeature::kSoftmax ? ad::softmax_rows(out.A) : out.A;
}

std::vector<int> assign_clusters(const Matrix& A) {
  std::vector<int> out(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index t = 0; t < A.rows(); ++t) {
    Eigen::Index arg = 0;
    A.row(t).maxCoeff(&arg);
    out[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return out;
}

std::vector<WordCounts> top_words(const std::vector<std::vector<std::string>>& turn_words,
                                  std::span<const int> assignments, int clusters, int n,
                                  const std::set<std::string>& stop_words) {
  if (turn_words.size() != assignments.size()) {
    throw Error("top_words: one assignment per turn required");
  }
  std::vector<std::map<std::string, long>> counts(static_cast<std::size_t>(clusters));
  for (std::size_t i = 0; i < turn_words.size(); ++i) {
    const int k = assignments[i];
    if (k < 0 || k >= clusters) throw Error("top_words: cluster index out of range");
    for (const auto& w : turn_words[i]) {
      if (!stop_words.count(w)) ++counts[static_cast<std::size_t>(k)][w];
    }
  }
  std::vector<WordCounts> out(static_cast<std::size_t>(clusters));
  for (std::size_t k = 0; k < counts.size(); ++k) {
    WordCounts ranked(counts[k].begin(), counts[k].end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<int>(ranked.size()) > n) ranked.resize(static_cast<std::size_t>(std::max(n, 0)));
    out[k] = std::move(ranked);
  }
  return out;
}

}  // namespace usda::cluster
