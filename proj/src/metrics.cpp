#include "flsim/metrics.hpp"

namespace flsim {

double full_gradient_norm(const ModelSpec& spec, const ParamVector& w,
                          const std::vector<ClientDataset>& clients) {
  if (clients.empty())
    throw std::invalid_argument("full_gradient_norm: no clients");
  ParamVector acc = ParamVector::Zero(spec.param_dim());
  for (const auto& ds : clients) {
    auto [loss, g] = loss_and_grad(spec, w, ds);
    (void)loss;
    acc += g;
  }
  acc /= static_cast<double>(clients.size());
  return sq_norm(acc);
}

HeterogeneityEstimate estimate_heterogeneity(
    const ModelSpec& spec, const std::vector<ParamVector>& probe_points,
    const std::vector<ClientDataset>& datasets, const LocalTrainConfig& cfg,
    int n_repeats, std::uint64_t seed,
    const std::optional<std::vector<std::vector<int>>>& friends) {
  if (probe_points.empty())
    throw std::invalid_argument("estimate_heterogeneity: no probe points");
  if (n_repeats < 1)
    throw std::invalid_argument("estimate_heterogeneity: n_repeats must be >= 1");

  const int K = static_cast<int>(datasets.size());
  const int P = static_cast<int>(probe_points.size());

  HeterogeneityEstimate est;
  est.sigma2_pair = Eigen::MatrixXd::Zero(K, K);

  for (int p = 0; p < P; ++p) {
    for (int rep = 0; rep < n_repeats; ++rep) {
      std::vector<ParamVector> deltas(K);
      for (int k = 0; k < K; ++k) {
        RngStream rng(seed, RngPurpose::heterogeneity, k,
                      static_cast<std::int64_t>(p) * n_repeats + rep);
        deltas[k] = local_update(spec, probe_points[p], datasets[k], cfg, rng);
      }
      for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) {
          const double d2 = sq_norm(deltas[i] - deltas[j]);
          est.sigma2_pair(i, j) += d2;
          est.sigma2_pair(j, i) += d2;
        }
    }
  }
  est.sigma2_pair /= static_cast<double>(P) * n_repeats;

  est.sigma2_p_hat = est.sigma2_pair.maxCoeff();
  if (friends) {
    double f_max = 0.0;
    for (int i = 0; i < K; ++i)
      for (int j : (*friends)[i])
        f_max = std::max(f_max, est.sigma2_pair(i, j));
    est.sigma2_f_hat = f_max;
  }
  return est;
}

double cumulative_substitution(const std::vector<RoundRecord>& records) {
  double sum = 0.0;
  for (const auto& r : records) sum += r.e_sq;
  return sum;
}

}  // namespace flsim
