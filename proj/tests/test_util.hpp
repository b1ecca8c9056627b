// Test-only oracles, independent of the library implementation paths they
// cross-check.
#pragma once

#include "flsim/core.hpp"
#include "flsim/data.hpp"
#include "flsim/model.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace testutil {

// Regularized lower incomplete gamma P(a, x), series/continued-fraction
// split as in the usual numerical treatments. Drives the chi-squared CDF.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad args");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q(a, x)
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  const double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

inline double chi2_cdf(double stat, double dof) {
  return gamma_p(dof / 2.0, stat / 2.0);
}

// Chi-squared goodness-of-fit of observed counts against expected
// proportions; classes with tiny expectation are pooled. Returns the CDF of
// the statistic (1 - p-value).
inline double chi2_gof_cdf(const std::vector<int>& observed,
                           const std::vector<double>& expected_prop) {
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  double stat = 0.0;
  int bins = 0;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t c = 0; c < observed.size(); ++c) {
    const double e = n * expected_prop[c];
    if (e < 5.0) {
      pooled_obs += observed[c];
      pooled_exp += e;
      continue;
    }
    stat += (observed[c] - e) * (observed[c] - e) / e;
    ++bins;
  }
  if (pooled_exp > 0.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++bins;
  }
  if (bins < 2) return 0.0;  // nothing to test
  return chi2_cdf(stat, bins - 1);
}

// Central finite differences of the batch loss on selected coordinates.
inline std::vector<double> fd_gradient(const flsim::ModelSpec& spec,
                                       const flsim::ParamVector& w,
                                       const flsim::ClientDataset& data,
                                       const std::vector<int>& batch,
                                       const std::vector<int>& coords,
                                       double h = 1e-6) {
  std::vector<double> out;
  for (int c : coords) {
    flsim::ParamVector wp = w, wm = w;
    wp(c) += h;
    wm(c) -= h;
    const double lp = flsim::loss_and_grad(spec, wp, data, batch).first;
    const double lm = flsim::loss_and_grad(spec, wm, data, batch).first;
    out.push_back((lp - lm) / (2.0 * h));
  }
  return out;
}

// Longest per-client absence streak, by exhaustive scan.
inline int max_absence_streak(const std::vector<std::vector<int>>& rounds,
                              int n_clients) {
  int best = 0;
  for (int k = 0; k < n_clients; ++k) {
    int streak = 0;
    for (const auto& s_t : rounds) {
      const bool present =
          std::find(s_t.begin(), s_t.end(), k) != s_t.end();
      streak = present ? 0 : streak + 1;
      best = std::max(best, streak);
    }
  }
  return best;
}

// A small fixture model: separable two-feature, C-class blobs.
inline flsim::ClientDataset toy_blobs(int n_per_class, int n_classes,
                                      double spread, std::uint64_t seed) {
  flsim::RngStream rng(seed, flsim::RngPurpose::misc, 0, 0);
  flsim::ClientDataset ds;
  const int n = n_per_class * n_classes;
  ds.features.resize(n, 2);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int y = i % n_classes;
    const double angle = 2.0 * M_PI * y / n_classes;
    ds.labels[i] = y;
    ds.features(i, 0) = 3.0 * std::cos(angle) + spread * rng.normal();
    ds.features(i, 1) = 3.0 * std::sin(angle) + spread * rng.normal();
  }
  return ds;
}

}  // namespace testutil
