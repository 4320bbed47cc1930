// Supervised dialogue-act head: per-turn scores A = MLP(c) and a linear-chain
// CRF over K labels. The transition matrix G is (K+2)x(K+2); index K is the
// start label and K+1 the end label, neither of which emits.

#pragma once

#include "usda/nn.hpp"

#include <span>
#include <vector>

namespace usda::crf {

using ad::Matrix;

/// Score of transitions into start / out of end.
inline constexpr double kMaskedTransition = -1e4;

inline int start_index(int num_labels) { return num_labels; }
inline int end_index(int num_labels) { return num_labels + 1; }

/// Sum of A[t, y_t] plus G[start, y_1], G[y_t, y_{t+1}] and G[y_T, end].
double sequence_score(const Matrix& A, const Matrix& G, std::span<const int> labels);

/// log sum over all K^T label sequences of exp(sequence_score), forward recursion.
double log_partition(const Matrix& A, const Matrix& G);

/// Same quantity computed by the backward recursion over the reversed chain.
double log_partition_backward(const Matrix& A, const Matrix& G);

double log_likelihood(const Matrix& A, const Matrix& G, std::span<const int> labels);

/// Highest-scoring sequence; among equal scores the lexicographically smallest.
std::vector<int> viterbi_decode(const Matrix& A, const Matrix& G);

/// Per-turn argmax of A, ties to the smallest index.
std::vector<int> argmax_decode(const Matrix& A);

struct Marginals {
  Matrix unary;        // [T x K]
  Matrix transitions;  // [(K+2) x (K+2)] expected transition counts
  double log_z = 0.0;
};
Marginals marginals(const Matrix& A, const Matrix& G);

/// -log p(labels | A) as a graph node, differentiable in A and G.
ad::Var negative_log_likelihood(const ad::Var& A, const ad::Var& G, std::span<const int> labels);

/// Transition matrix with the start column and end row masked.
Matrix initial_transitions(int num_labels, nn::Rng& rng);

class DarCrfHead {
 public:
  DarCrfHead() = default;
  DarCrfHead(nn::ParameterStore& store, int input_dim, int num_labels, nn::Rng& rng);

  /// A = MLP_DAR(c), [T x K].
  ad::Var scores(const ad::Var& c) const;
  ad::Var loss(const ad::Var& scores, std::span<const int> labels) const;
  std::vector<int> decode(const Matrix& scores, bool use_viterbi = true) const;

  int num_labels() const { return num_labels_; }
  const ad::Var& transitions() const { return transitions_; }
  nn::Mlp& mlp() { return mlp_; }

 private:
  int num_labels_ = 0;
  nn::Mlp mlp_;
  ad::Var transitions_;
};

}  // namespace usda::crf
