#pragma once

#include "flsim/core.hpp"

#include <string>
#include <vector>

namespace flsim {

enum class DropoutKind { iid_random, periodic, adversarial_rotating, from_file };

/// Per-round participation sets. Every round satisfies the dropout-ratio cap
/// (K - |S_t|) / K <= alpha and is nonempty; both are enforced at
/// construction, so downstream code never sees an empty round.
struct DropoutSchedule {
  std::vector<std::vector<int>> participation;  // S_t, each sorted ascending
  int n_clients = 0;
  double alpha = 0.0;
  DropoutKind kind = DropoutKind::iid_random;

  int rounds() const { return static_cast<int>(participation.size()); }
};

/// Build a schedule of T rounds over K clients.
///   iid_random           - drops a uniformly chosen subset of exactly
///                          floor(alpha*K) clients each round
///   periodic             - client k drops when (t mod K) falls in its
///                          length-floor(alpha*K) window
///   adversarial_rotating - deterministic rotation of the dropped block,
///                          phase-shifted each cycle so absence streaks
///                          span the wrap
DropoutSchedule generate_schedule(DropoutKind kind, int K, int T, double alpha,
                                  RngStream rng);

/// Diagnostics for the pairwise co-presence lower bound N_t >= beta*t.
struct CommonRoundsReport {
  /// Largest beta with N_t^{i,j} >= beta*t for all pairs and all
  /// t >= warmup. A min statistic: one late-starting pair drives it to ~0.
  double beta_hat = 1.0;
  /// Mean over pairs of N_T / T, the realized co-presence rate.
  double mean_rate = 1.0;
  /// Pairs still at N_t = 0 beyond warmup: (t, i, j), first round per pair.
  std::vector<std::tuple<int, int, int>> violations;
};

/// warmup defaults to 10 rounds; rounds are 1-indexed for the ratio N_t/t.
CommonRoundsReport check_common_rounds(const DropoutSchedule& s,
                                       int warmup = 10);

/// Rounds where a dropped client has no friend present: (t, k) pairs.
/// Clients with an empty friend set violate whenever they drop.
std::vector<std::pair<int, int>> check_friend_presence(
    const DropoutSchedule& s, const std::vector<std::vector<int>>& friends);

/// JSON array of per-round participating-client arrays, validated against
/// K and the alpha cap.
DropoutSchedule load_schedule_json(const std::string& path, int K,
                                   double alpha);
void save_schedule_json(const DropoutSchedule& s, const std::string& path);

}  // namespace flsim
