#include "flsim/model.hpp"

#include <cmath>
#include <numeric>

namespace flsim {

namespace {

// Gathers the batch rows into contiguous matrices. Desk-scale batches make
// the copy negligible next to the matrix products below.
struct Batch {
  Eigen::MatrixXd x;       // n x F
  std::vector<int> y;
};

Batch gather(const ClientDataset& data, std::span<const int> idx) {
  Batch b;
  b.x.resize(idx.size(), data.features.cols());
  b.y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.x.row(i) = data.features.row(idx[i]);
    b.y[i] = data.labels[idx[i]];
  }
  return b;
}

// Column-stable softmax of logits (C x n), in place. Uses scalar std::exp:
// Eigen's vectorized exp clamps large negative inputs to a subnormal floor,
// which would hide the -log(0) divergence signal.
void softmax_inplace(Eigen::MatrixXd& z) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    Eigen::VectorXd col = z.col(j);
    const double m = col.maxCoeff();
    col = col.unaryExpr([m](double v) { return std::exp(v - m); });
    z.col(j) = col / col.sum();
  }
}

double nll_of(const Eigen::MatrixXd& probs, const std::vector<int>& y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    loss -= std::log(probs(y[i], static_cast<Eigen::Index>(i)));
  return loss / static_cast<double>(y.size());
}

void subtract_onehot_scaled(Eigen::MatrixXd& dz, const std::vector<int>& y) {
  const double inv_n = 1.0 / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    dz(y[i], static_cast<Eigen::Index>(i)) -= 1.0;
  dz *= inv_n;
}

}  // namespace

Eigen::Index ModelSpec::param_dim() const {
  const Eigen::Index F = n_features, C = n_classes, H = hidden_units;
  switch (kind) {
    case ModelKind::softmax_regression:
      return C * F + C;
    case ModelKind::mlp_one_hidden:
      return H * F + H + C * H + C;
  }
  throw std::invalid_argument("unknown model kind");
}

ParamVector init_params(const ModelSpec& spec, RngStream rng) {
  ParamVector w(spec.param_dim());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w(i) = spec.init_scale * rng.normal();
  return w;
}

std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                             const ParamVector& w,
                                             const ClientDataset& data,
                                             std::span<const int> idx) {
  if (w.size() != spec.param_dim())
    throw std::invalid_argument("loss_and_grad: parameter dimension mismatch");
  if (idx.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const Batch b = gather(data, idx);
  const Eigen::Index n = b.x.rows();
  const Eigen::Index F = spec.n_features, C = spec.n_classes;

  double loss = 0.0;
  ParamVector grad = ParamVector::Zero(w.size());

  if (spec.kind == ModelKind::softmax_regression) {
    Eigen::Map<const Eigen::MatrixXd> W(w.data(), C, F);
    Eigen::Map<const Eigen::VectorXd> bias(w.data() + C * F, C);

    Eigen::MatrixXd z = W * b.x.transpose();  // C x n
    z.colwise() += bias;
    softmax_inplace(z);
    loss = nll_of(z, b.y);
    subtract_onehot_scaled(z, b.y);  // z is now dL/dlogits

    Eigen::Map<Eigen::MatrixXd> gW(grad.data(), C, F);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + C * F, C);
    gW = z * b.x;
    gb = z.rowwise().sum();
  } else {
    const Eigen::Index H = spec.hidden_units;
    const double* p = w.data();
    Eigen::Map<const Eigen::MatrixXd> W1(p, H, F);
    Eigen::Map<const Eigen::VectorXd> b1(p + H * F, H);
    Eigen::Map<const Eigen::MatrixXd> W2(p + H * F + H, C, H);
    Eigen::Map<const Eigen::VectorXd> b2(p + H * F + H + C * H, C);

    Eigen::MatrixXd a = W1 * b.x.transpose();  // H x n
    a.colwise() += b1;
    a = a.array().tanh();
    Eigen::MatrixXd z = W2 * a;  // C x n
    z.colwise() += b2;
    softmax_inplace(z);
    loss = nll_of(z, b.y);
    subtract_onehot_scaled(z, b.y);

    double* g = grad.data();
    Eigen::Map<Eigen::MatrixXd> gW1(g, H, F);
    Eigen::Map<Eigen::VectorXd> gb1(g + H * F, H);
    Eigen::Map<Eigen::MatrixXd> gW2(g + H * F + H, C, H);
    Eigen::Map<Eigen::VectorXd> gb2(g + H * F + H + C * H, C);

    gW2 = z * a.transpose();
    gb2 = z.rowwise().sum();
    Eigen::MatrixXd dh =
        (W2.transpose() * z).array() * (1.0 - a.array().square());
    gW1 = dh * b.x;
    gb1 = dh.rowwise().sum();
  }

  if (!std::isfinite(loss))
    throw NonFiniteError("loss_and_grad: non-finite loss (divergence)");
  detail::require_finite(grad, "loss_and_grad");
  (void)n;
  return {loss, std::move(grad)};
}

std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                             const ParamVector& w,
                                             const ClientDataset& data) {
  std::vector<int> all(data.n_samples());
  std::iota(all.begin(), all.end(), 0);
  return loss_and_grad(spec, w, data, all);
}

ParamVector local_update(const ModelSpec& spec, const ParamVector& w_start,
                         const ClientDataset& data,
                         const LocalTrainConfig& cfg, RngStream rng) {
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("local_update: epochs and batch_size must be >= 1");
  if (!(std::isfinite(cfg.eta_local)))
    throw std::invalid_argument("local_update: eta_local must be finite");
  const int n = data.n_samples();
  if (n < 1) throw std::invalid_argument("local_update: empty dataset");

  const bool full_batch = cfg.batch_size >= n;
  std::vector<int> idx(full_batch ? n : cfg.batch_size);
  if (full_batch) std::iota(idx.begin(), idx.end(), 0);

  ParamVector w = w_start;
  for (int step = 0; step < cfg.epochs; ++step) {
    if (!full_batch)
      for (auto& i : idx) i = static_cast<int>(rng.uniform_int(n));
    auto [loss, g] = loss_and_grad(spec, w, data, idx);
    (void)loss;
    w = axpy(-cfg.eta_local, g, w);
  }
  return w - w_start;
}

std::pair<double, double> evaluate(const ModelSpec& spec, const ParamVector& w,
                                   const ClientDataset& test) {
  if (test.n_samples() == 0)
    throw std::invalid_argument("evaluate: empty test set");
  std::vector<int> all(test.n_samples());
  std::iota(all.begin(), all.end(), 0);

  const Eigen::Index C = spec.n_classes;
  // Reuse the forward pass through loss_and_grad would waste the backward
  // work; redo the forward here.
  Eigen::MatrixXd z;
  if (spec.kind == ModelKind::softmax_regression) {
    Eigen::Map<const Eigen::MatrixXd> W(w.data(), C, spec.n_features);
    Eigen::Map<const Eigen::VectorXd> bias(w.data() + C * spec.n_features, C);
    z = W * test.features.transpose();
    z.colwise() += bias;
  } else {
    const Eigen::Index F = spec.n_features, H = spec.hidden_units;
    const double* p = w.data();
    Eigen::Map<const Eigen::MatrixXd> W1(p, H, F);
    Eigen::Map<const Eigen::VectorXd> b1(p + H * F, H);
    Eigen::Map<const Eigen::MatrixXd> W2(p + H * F + H, C, H);
    Eigen::Map<const Eigen::VectorXd> b2(p + H * F + H + C * H, C);
    Eigen::MatrixXd a = W1 * test.features.transpose();
    a.colwise() += b1;
    a = a.array().tanh();
    z = W2 * a;
    z.colwise() += b2;
  }

  int correct = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    int best = 0;
    for (Eigen::Index c = 1; c < C; ++c)
      if (z(c, j) > z(best, j)) best = static_cast<int>(c);
    if (best == test.labels[j]) ++correct;
  }
  softmax_inplace(z);
  const double loss = nll_of(z, test.labels);
  if (!std::isfinite(loss))
    throw NonFiniteError("evaluate: non-finite loss");
  return {static_cast<double>(correct) / test.n_samples(), loss};
}

}  // namespace flsim
