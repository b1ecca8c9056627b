#include "flsim/core.hpp"

#include <cmath>
#include <string>

namespace flsim {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, RngPurpose purpose,
                     std::int64_t client, std::int64_t round) {
  std::uint64_t s = mix64(seed + kGamma);
  s = mix64(s ^ (static_cast<std::uint64_t>(purpose) * kGamma));
  s = mix64(s ^ (static_cast<std::uint64_t>(client) + kGamma));
  s = mix64(s ^ (static_cast<std::uint64_t>(round) + 2 * kGamma));
  state_ = s;
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::int64_t RngStream::uniform_int(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % un);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    // boost: Gamma(a) = Gamma(a + 1) * U^(1/a)
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

namespace detail {

void require_finite(const ParamVector& v, const char* what) {
  if (!v.allFinite())
    throw NonFiniteError(std::string(what) + ": non-finite entries");
}

}  // namespace detail

ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("axpy: dimension mismatch (" +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()) + ")");
  ParamVector r = alpha * x + y;
  detail::require_finite(r, "axpy");
  return r;
}

ParamVector mean(const std::vector<ParamVector>& vectors) {
  if (vectors.empty()) throw std::invalid_argument("mean: empty list");
  const Eigen::Index d = vectors.front().size();
  ParamVector acc = ParamVector::Zero(d);
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("mean: dimension mismatch");
    acc += v;
  }
  acc /= static_cast<double>(vectors.size());
  detail::require_finite(acc, "mean");
  return acc;
}

double sq_norm(const ParamVector& x) {
  detail::require_finite(x, "sq_norm");
  return x.squaredNorm();
}

}  // namespace flsim
