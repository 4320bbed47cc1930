#include "doctest.h"
#include "support.hpp"

#include "usda/autodiff.hpp"
#include "usda/nn.hpp"
#include "usda/optim.hpp"

using namespace usda;
using testing::gradcheck;
using testing::random_matrix;

TEST_CASE("elementwise and broadcast ops match finite differences") {
  std::mt19937_64 rng(1);
  auto a = ad::parameter(random_matrix(3, 4, rng));
  auto row = ad::parameter(random_matrix(1, 4, rng));
  auto s = ad::parameter(random_matrix(1, 1, rng));
  auto f = [&] {
    auto x = ad::mul(ad::add(a, row), ad::tanh(a));
    x = ad::sub(x, ad::mul(a, s));
    return ad::sum(ad::mul(ad::sigmoid(x), x));
  };
  CHECK(gradcheck(f, {a, row, s}) < 1e-6);
}

TEST_CASE("matrix products, softmax and layer norm gradients") {
  std::mt19937_64 rng(2);
  auto a = ad::parameter(random_matrix(3, 5, rng));
  auto b = ad::parameter(random_matrix(5, 2, rng));
  auto c = ad::parameter(random_matrix(4, 5, rng));
  auto gain = ad::parameter(random_matrix(1, 2, rng));
  auto bias = ad::parameter(random_matrix(1, 2, rng));
  auto w = ad::constant(random_matrix(3, 2, rng));
  auto f = [&] {
    auto x = ad::matmul(a, b);
    auto y = ad::layer_norm_rows(x, gain, bias);
    auto z = ad::softmax_rows(ad::matmul_nt(a, c));
    auto l = ad::log_softmax_rows(y);
    return ad::add(ad::sum(ad::mul(l, w)), ad::squared_norm(z));
  };
  CHECK(gradcheck(f, {a, b, c, gain, bias}) < 1e-6);
}

TEST_CASE("shape ops and reductions") {
  std::mt19937_64 rng(3);
  auto a = ad::parameter(random_matrix(4, 3, rng));
  auto table = ad::parameter(random_matrix(5, 3, rng));
  const std::vector<int> ids{4, 0, 4};
  auto f = [&] {
    const std::vector<ad::Var> rows{ad::slice_rows(a, 1, 2), ad::gather_rows(table, ids)};
    auto v = ad::vstack(rows);
    const std::vector<ad::Var> cols{ad::slice_cols(v, 0, 1), ad::transpose(ad::transpose(v))};
    auto h = ad::hstack(cols);
    return ad::add(ad::norm(h), ad::add(ad::mean(ad::relu(h)), ad::sum(ad::mean_rows(h))));
  };
  CHECK(gradcheck(f, {a, table}) < 1e-6);
}

TEST_CASE("affine, scale, element and detach") {
  std::mt19937_64 rng(4);
  auto a = ad::parameter(random_matrix(2, 2, rng));
  auto f = [&] {
    auto x = ad::affine(a, 2.0, 1.0);
    return ad::add(ad::scale(ad::element(x, 1, 0), 3.0), ad::sum(ad::mul(a, a)));
  };
  CHECK(gradcheck(f, {a}) < 1e-6);
  // detach blocks gradient: d/da sum(detach(a) * a) = a, not 2a
  a.mutable_grad() = ad::Matrix::Zero(2, 2);
  ad::backward(ad::sum(ad::mul(ad::detach(a), a)));
  CHECK((a.grad() - a.value()).norm() < 1e-12);
}

TEST_CASE("norm has a zero gradient at the origin") {
  auto a = ad::parameter(ad::Matrix::Zero(2, 2));
  ad::backward(ad::norm(a));
  CHECK(a.grad().norm() == 0.0);
}

TEST_CASE("no-grad guard builds no graph") {
  auto a = ad::parameter(ad::Matrix::Ones(2, 2));
  ad::NoGradGuard guard;
  auto y = ad::scale(a, 2.0);
  CHECK(y.node()->parents.empty());
  CHECK(!ad::grad_enabled());
}

TEST_CASE("incompatible shapes throw") {
  auto a = ad::constant(ad::Matrix::Ones(2, 3));
  auto b = ad::constant(ad::Matrix::Ones(3, 2));
  CHECK_THROWS(ad::add(a, b));
}

TEST_CASE("dropout is identity in eval mode and scales kept units in training") {
  std::mt19937_64 rng(5);
  auto a = ad::constant(ad::Matrix::Ones(50, 50));
  CHECK((ad::dropout(a, 0.5, false, &rng).value() - a.value()).norm() == 0.0);
  const auto d = ad::dropout(a, 0.5, true, &rng).value();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK((d.data()[i] == 0.0 || d.data()[i] == doctest::Approx(2.0)));
  }
}

TEST_CASE("gru, attention and transformer layer gradients") {
  nn::Rng rng(6);
  nn::ParameterStore store;
  nn::Gru gru(store, "gru", 3, 4, rng);
  nn::TransformerLayer layer(store, "layer", 4, 8, 2, 0.0, true, rng);
  nn::TransformerLayer literal(store, "literal", 4, 8, 2, 0.0, false, rng);
  auto x = ad::parameter(testing::random_matrix(5, 3, rng));
  const nn::Context ctx;
  auto f = [&] {
    auto h = gru(x);
    return ad::sum(ad::tanh(literal(layer(h, ctx), ctx)));
  };
  std::vector<ad::Var> params{x};
  for (auto& p : store.parameters()) params.push_back(p.var);
  CHECK(gradcheck(f, params) < 1e-5);
}

TEST_CASE("multi-head attention rows sum to one") {
  nn::Rng rng(7);
  nn::ParameterStore store;
  nn::MultiHeadAttention mha(store, "mha", 6, 3, rng);
  std::vector<ad::Matrix> weights;
  mha(ad::constant(testing::random_matrix(4, 6, rng)), &weights);
  REQUIRE(weights.size() == 3);
  for (const auto& w : weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("parameter store rejects duplicate names and restores snapshots") {
  nn::ParameterStore store;
  auto p = store.add("w", ad::Matrix::Ones(2, 2));
  CHECK_THROWS(store.add("w", ad::Matrix::Ones(1, 1)));
  const auto snap = store.snapshot();
  p.mutable_value().setZero();
  store.restore(snap);
  CHECK(p.value().sum() == 4.0);
  CHECK(store.num_scalars() == 4);
}

TEST_CASE("optimizers step downhill and clipping bounds the norm") {
  nn::ParameterStore store;
  auto w = store.add("w", ad::Matrix::Constant(1, 3, 2.0));
  optim::Adam adam(store, 0.1);
  double before = ad::squared_norm(w).scalar();
  for (int i = 0; i < 20; ++i) {
    store.zero_grad();
    ad::backward(ad::squared_norm(w));
    adam.step();
  }
  CHECK(ad::squared_norm(w).scalar() < before);

  store.zero_grad();
  ad::backward(ad::scale(ad::sum(w), 100.0));
  const double pre = optim::clip_grad_norm(store, 1.0);
  CHECK(pre == doctest::Approx(100.0 * std::sqrt(3.0)));
  CHECK(w.grad().norm() == doctest::Approx(1.0));

  optim::Sgd sgd(store, 0.5);
  const auto value = w.value();
  sgd.step();
  CHECK((w.value() - (value - 0.5 * w.grad())).norm() < 1e-12);
}
