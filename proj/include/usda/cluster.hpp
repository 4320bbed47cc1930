// Unsupervised dialogue-act features through latent subspace clustering.
//
//   X  = MLP_enc(C)            latent codes          [T x latent]
//   A  = X M^T                 similarity logits     [T x K]
//   X* = softmax(A) M          self-representation   [T x latent]
//   C* = MLP_dec(X*)           reconstruction        [T x d]
//   L  = |C* - C|_F^2 + l1 |X* - X|_F^2 + l2 |M M^T - I|_F

#pragma once

#include "usda/nn.hpp"

#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace usda::cluster {

using ad::Matrix;
using ad::Var;

enum class DaFeature { kLogits, kSoftmax };

struct ClusterConfig {
  int clusters = 20;
  int latent_dim = 0;  // 0 means hidden_dim / 2
  double lambda1 = 1.0;
  double lambda2 = 10.0;
  DaFeature feature = DaFeature::kLogits;
  bool stop_gradient = false;  // keep the clustering loss out of the shared encoder

  void validate() const;
  int resolved_latent_dim(int input_dim) const;
};

struct ClusterOutput {
  Var X;
  Var A;
  Var X_star;
  Var C_star;
  Matrix probabilities() const;  // softmax(A)
};

struct SelfRepresentation {
  Var A;
  Var X_star;
};
SelfRepresentation self_represent(const Var& X, const Var& M);

struct ClusterLossTerms {
  double reconstruction = 0.0;
  double self_representation = 0.0;
  double regularization = 0.0;
  double total = 0.0;
};

class ClusterNetwork {
 public:
  ClusterNetwork() = default;
  ClusterNetwork(nn::ParameterStore& store, int input_dim, const ClusterConfig& config,
                 nn::Rng& rng);

  ClusterOutput forward(const Var& c) const;
  Var loss(const Var& c, const ClusterOutput& out) const;
  ClusterLossTerms loss_terms(const Matrix& c, const ClusterOutput& out) const;

  /// DA features handed to the satisfaction head: logits A or softmax(A).
  Var features(const ClusterOutput& out) const;

  const ClusterConfig& config() const { return config_; }
  const Var& memory() const { return memory_; }

 private:
  ClusterConfig config_;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  Var memory_;  // [K x latent]
};

/// Per-turn argmax of softmax(A) (equivalently of A); ties to the smallest index.
std::vector<int> assign_clusters(const Matrix& A);

using WordCounts = std::vector<std::pair<std::string, long>>;

/// Word frequencies per cluster over turns assigned to it, stop words removed,
/// top `n` by count (ties alphabetical). Empty clusters yield empty lists.
std::vector<WordCounts> top_words(const std::vector<std::vector<std::string>>& turn_words,
                                  std::span<const int> assignments, int clusters, int n,
                                  const std::set<std::string>& stop_words);

}  // namespace usda::cluster
