#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flsim/model.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numeric>

using namespace flsim;

namespace {

ModelSpec softmax_spec(int f = 6, int c = 4) {
  return ModelSpec{ModelKind::softmax_regression, f, c, 0, 0.1};
}

ModelSpec mlp_spec(int f = 6, int c = 4, int h = 5) {
  return ModelSpec{ModelKind::mlp_one_hidden, f, c, h, 0.1};
}

ClientDataset make_dataset(int n, int f, int c, std::uint64_t seed) {
  RngStream rng(seed, RngPurpose::misc, 1, 0);
  ClientDataset ds;
  ds.features.resize(n, f);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(rng.uniform_int(c));
    for (int j = 0; j < f; ++j) ds.features(i, j) = rng.normal();
  }
  return ds;
}

double max_rel_err(const std::vector<double>& fd, const ParamVector& g,
                   const std::vector<int>& coords) {
  double worst = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double a = g(coords[i]);
    const double denom = std::max({std::abs(a), std::abs(fd[i]), 1e-10});
    worst = std::max(worst, std::abs(fd[i] - a) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("softmax at w=0 gives ln C loss") {
  for (int c : {2, 4, 10}) {
    const auto spec = softmax_spec(5, c);
    const auto data = make_dataset(30, 5, c, 11);
    const ParamVector w = ParamVector::Zero(spec.param_dim());
    auto [loss, grad] = loss_and_grad(spec, w, data);
    CHECK(loss == doctest::Approx(std::log(c)).epsilon(1e-12));
    (void)grad;
  }
}

TEST_CASE("gradient matches central finite differences on both models") {
  // 20 random (w, batch) pairs per model kind, 10 coordinates each
  for (const bool mlp : {false, true}) {
    const ModelSpec spec = mlp ? mlp_spec() : softmax_spec();
    for (int trial = 0; trial < 20; ++trial) {
      RngStream rng(100 + trial, RngPurpose::misc, mlp ? 1 : 0, trial);
      const auto data = make_dataset(25, spec.n_features, spec.n_classes,
                                    200 + trial);
      ParamVector w(spec.param_dim());
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.5 * rng.normal();
      std::vector<int> batch(8);
      for (auto& b : batch)
        b = static_cast<int>(rng.uniform_int(data.n_samples()));
      std::vector<int> coords(10);
      for (auto& c : coords)
        c = static_cast<int>(rng.uniform_int(w.size()));

      const auto [loss, grad] = loss_and_grad(spec, w, data, batch);
      (void)loss;
      const auto fd = testutil::fd_gradient(spec, w, data, batch, coords);
      CHECK(max_rel_err(fd, grad, coords) <= 1e-5);
    }
  }
}

TEST_CASE("duplicating every sample leaves loss and gradient unchanged") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(12, 6, 4, 31);
  RngStream rng(5, RngPurpose::misc, 0, 0);
  ParamVector w(spec.param_dim());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();

  std::vector<int> batch(data.n_samples());
  std::iota(batch.begin(), batch.end(), 0);
  std::vector<int> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());

  const auto [l1, g1] = loss_and_grad(spec, w, data, batch);
  const auto [l2, g2] = loss_and_grad(spec, w, data, doubled);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
  CHECK((g1 - g2).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("local_update: single full-batch step equals -eta * grad") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(40, 6, 4, 17);
  RngStream rng(2, RngPurpose::misc, 0, 0);
  ParamVector w(spec.param_dim());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();

  LocalTrainConfig cfg{0.3, 1, data.n_samples()};
  const ParamVector delta =
      local_update(spec, w, data, cfg, RngStream(7, RngPurpose::local_sgd, 0, 0));
  const auto [loss, g] = loss_and_grad(spec, w, data);
  (void)loss;
  CHECK((delta + 0.3 * g).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("local_update: zero learning rate gives zero update") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(20, 6, 4, 23);
  LocalTrainConfig cfg{0.0, 5, 8};
  const ParamVector delta =
      local_update(spec, ParamVector::Zero(spec.param_dim()), data, cfg,
                   RngStream(7, RngPurpose::local_sgd, 0, 0));
  CHECK(delta.isZero(0.0));
}

TEST_CASE("local_update: two full-batch steps match a hand-rolled recursion") {
  const auto spec = mlp_spec();
  const auto data = make_dataset(30, 6, 4, 29);
  RngStream rng(4, RngPurpose::misc, 0, 0);
  ParamVector w0(spec.param_dim());
  for (Eigen::Index i = 0; i < w0.size(); ++i) w0(i) = 0.3 * rng.normal();

  const double eta = 0.2;
  LocalTrainConfig cfg{eta, 2, data.n_samples()};
  const ParamVector delta =
      local_update(spec, w0, data, cfg, RngStream(7, RngPurpose::local_sgd, 0, 0));

  // independent two-step oracle
  ParamVector w = w0;
  ParamVector g_sum = ParamVector::Zero(spec.param_dim());
  for (int step = 0; step < 2; ++step) {
    const auto [loss, g] = loss_and_grad(spec, w, data);
    (void)loss;
    g_sum += g;
    w -= eta * g;
  }
  CHECK((delta - (w - w0)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((delta + eta * g_sum).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("accumulation identity holds for stochastic batches") {
  // replays the same stream to accumulate gradients alongside the recursion
  const auto spec = softmax_spec();
  const auto data = make_dataset(50, 6, 4, 37);
  const LocalTrainConfig cfg{0.05, 7, 16};
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    ParamVector w0(spec.param_dim());
    RngStream wr(seed, RngPurpose::misc, 9, 0);
    for (Eigen::Index i = 0; i < w0.size(); ++i) w0(i) = wr.normal();

    const ParamVector delta = local_update(
        spec, w0, data, cfg, RngStream(seed, RngPurpose::local_sgd, 0, 0));

    RngStream rng(seed, RngPurpose::local_sgd, 0, 0);
    ParamVector w = w0;
    ParamVector g_sum = ParamVector::Zero(spec.param_dim());
    for (int step = 0; step < cfg.epochs; ++step) {
      std::vector<int> batch(cfg.batch_size);
      for (auto& b : batch)
        b = static_cast<int>(rng.uniform_int(data.n_samples()));
      const auto [loss, g] = loss_and_grad(spec, w, data, batch);
      (void)loss;
      g_sum += g;
      w = axpy(-cfg.eta_local, g, w);
    }
    CHECK((delta - (w - w0)).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((delta + cfg.eta_local * g_sum).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("local_update is pure: repeated calls bit-identical") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(30, 6, 4, 41);
  const LocalTrainConfig cfg{0.05, 5, 8};
  const ParamVector w = ParamVector::Ones(spec.param_dim()) * 0.1;
  const ParamVector d1 =
      local_update(spec, w, data, cfg, RngStream(9, RngPurpose::local_sgd, 2, 5));
  const ParamVector d2 =
      local_update(spec, w, data, cfg, RngStream(9, RngPurpose::local_sgd, 2, 5));
  CHECK(d1 == d2);
}

TEST_CASE("evaluate: zero weights pick class 0 on a balanced set") {
  const auto spec = softmax_spec(4, 5);
  ClientDataset test = make_dataset(250, 4, 5, 51);
  for (int i = 0; i < test.n_samples(); ++i) test.labels[i] = i % 5;
  const auto [acc, loss] =
      evaluate(spec, ParamVector::Zero(spec.param_dim()), test);
  CHECK(acc == doctest::Approx(0.2).epsilon(1e-12));  // tie-break: class 0
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("evaluate: fitted model separates a separable toy set") {
  const auto toy = testutil::toy_blobs(40, 4, 0.2, 61);
  const ModelSpec spec{ModelKind::softmax_regression, 2, 4, 0, 0.1};
  ParamVector w = ParamVector::Zero(spec.param_dim());
  LocalTrainConfig cfg{0.5, 200, toy.n_samples()};
  w += local_update(spec, w, toy, cfg, RngStream(1, RngPurpose::local_sgd, 0, 0));
  const auto [acc, loss] = evaluate(spec, w, toy);
  (void)loss;
  CHECK(acc == 1.0);
}

TEST_CASE("evaluate: accuracy invariant to sample order") {
  const auto spec = softmax_spec();
  auto test = make_dataset(60, 6, 4, 71);
  RngStream rng(3, RngPurpose::misc, 0, 0);
  ParamVector w(spec.param_dim());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
  const auto [acc1, loss1] = evaluate(spec, w, test);

  ClientDataset reversed;
  reversed.features.resize(test.n_samples(), test.n_features());
  reversed.labels.resize(test.n_samples());
  for (int i = 0; i < test.n_samples(); ++i) {
    reversed.features.row(i) = test.features.row(test.n_samples() - 1 - i);
    reversed.labels[i] = test.labels[test.n_samples() - 1 - i];
  }
  const auto [acc2, loss2] = evaluate(spec, w, reversed);
  CHECK(acc1 == acc2);
  CHECK(loss1 == doctest::Approx(loss2).epsilon(1e-12));
}

TEST_CASE("empty batch and dimension mismatches are rejected") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(10, 6, 4, 81);
  CHECK_THROWS_AS(
      loss_and_grad(spec, ParamVector::Zero(spec.param_dim()), data, {}),
      std::invalid_argument);
  CHECK_THROWS_AS(loss_and_grad(spec, ParamVector::Zero(3), data),
                  std::invalid_argument);
  ClientDataset empty;
  CHECK_THROWS_AS(evaluate(spec, ParamVector::Zero(spec.param_dim()), empty),
                  std::invalid_argument);
}

TEST_CASE("divergence raises NonFiniteError") {
  const auto spec = softmax_spec();
  const auto data = make_dataset(10, 6, 4, 91);
  ParamVector w = ParamVector::Constant(spec.param_dim(), 1e308);
  CHECK_THROWS_AS(loss_and_grad(spec, w, data), NonFiniteError);
}
