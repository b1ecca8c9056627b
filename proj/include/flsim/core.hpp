#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace flsim {

/// Flat parameter-space vector. Model weights, gradients and local updates
/// all live in the same fixed-dimension space for the lifetime of a run.
using ParamVector = Eigen::VectorXd;

/// Thrown when an operation produces (or receives) NaN/Inf. The harness
/// treats this as a divergence abort, never as a value to clip.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Purpose tag of an RNG stream. Streams are keyed by (seed, purpose,
/// client, round) so that the randomness a client consumes does not depend
/// on which strategy is running or on the draw order of other clients.
enum class RngPurpose : std::uint32_t {
  data_gen = 1,
  model_init = 2,
  dropout = 3,
  local_sgd = 4,
  heterogeneity = 5,
  misc = 6,
};

/// Hash-seeded splitmix64 stream. Identical (seed, purpose, client, round)
/// gives identical draws; distinct keys give statistically independent
/// streams with no draw-order coupling.
class RngStream {
 public:
  RngStream(std::uint64_t seed, RngPurpose purpose, std::int64_t client,
            std::int64_t round);

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). Rejection-sampled, no modulo bias.
  std::int64_t uniform_int(std::int64_t n);
  /// Standard normal via the Marsaglia polar method.
  double normal();
  /// Gamma(shape, 1), Marsaglia-Tsang. Used by the Dirichlet partitioner.
  double gamma(double shape);

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// alpha * x + y. Dimensions must match; result must be finite.
ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y);

/// Elementwise mean. Summation follows list order; call sites pass vectors
/// in ascending client id so reductions are bit-reproducible.
ParamVector mean(const std::vector<ParamVector>& vectors);

/// Squared Euclidean norm.
double sq_norm(const ParamVector& x);

namespace detail {
void require_finite(const ParamVector& v, const char* what);
}

}  // namespace flsim
