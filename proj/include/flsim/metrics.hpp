#pragma once

#include "flsim/aggregate.hpp"
#include "flsim/core.hpp"
#include "flsim/data.hpp"
#include "flsim/model.hpp"

#include <optional>
#include <vector>

namespace flsim {

/// One row of the per-round metrics log. grad_sq is evaluated at the
/// round's starting model w_t; accuracy/loss at the post-round model.
struct RoundRecord {
  int t = 0;
  Strategy strategy = Strategy::full;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double e_sq = 0.0;
  double grad_sq = 0.0;
  long long comp_count_delta = 0;
  int n_dropped = 0;
  int fallback_count = 0;
};

/// Empirical pairwise update-difference averages; the maxima bound the
/// population heterogeneity constants (overall and among friends).
struct HeterogeneityEstimate {
  Eigen::MatrixXd sigma2_pair;  // K x K, symmetric, zero diagonal
  double sigma2_p_hat = 0.0;    // max over all pairs
  std::optional<double> sigma2_f_hat;  // max over friend pairs, if known
};

/// Squared norm of the mean of per-client full-batch gradients at w.
double full_gradient_norm(const ModelSpec& spec, const ParamVector& w,
                          const std::vector<ClientDataset>& clients);

/// Averages ||Delta^i(w) - Delta^j(w)||^2 over probe points and repeats,
/// with fresh mini-batch streams per (client, probe, repeat).
HeterogeneityEstimate estimate_heterogeneity(
    const ModelSpec& spec, const std::vector<ParamVector>& probe_points,
    const std::vector<ClientDataset>& datasets, const LocalTrainConfig& cfg,
    int n_repeats, std::uint64_t seed,
    const std::optional<std::vector<std::vector<int>>>& friends);

/// Sum of per-round squared substitution errors over the run.
double cumulative_substitution(const std::vector<RoundRecord>& records);

}  // namespace flsim
