#pragma once

#include "flsim/core.hpp"
#include "flsim/similarity.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flsim {

enum class Strategy { full, naive_dropout, stale, fdms };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct StrategyKind {
  Strategy kind = Strategy::full;
  double eta_global = 1.0;
};

/// Last uploaded update per client, with the round it arrived. Entries are
/// written exactly in rounds where the client participates.
class StaleCache {
 public:
  explicit StaleCache(int n_clients) : entries_(n_clients) {}
  void store(int client, const ParamVector& delta, int round);
  bool has(int client) const { return entries_[client].has_value(); }
  const ParamVector& delta(int client) const { return entries_[client]->delta; }
  int round(int client) const { return entries_[client]->round; }

 private:
  struct Entry {
    ParamVector delta;
    int round;
  };
  std::vector<std::optional<Entry>> entries_;
};

/// Where a dropped client's substitute came from, for the per-round audit log.
struct SubstituteSource {
  enum class Kind { naive_mean, stale_self, friend_client } kind;
  int client = -1;  // friend id (friend_client) or self (stale_self)
  int round = -1;   // upload round of the cached update (stale_self)

  std::string describe() const;
};

using UpdateMap = std::map<int, ParamVector>;  // ascending client id

struct AggregateResult {
  ParamVector w_next;
  ParamVector delta;  // the aggregate update actually applied
  std::map<int, SubstituteSource> substitutes;  // dropped client -> source
  int fallback_count = 0;  // fdms substitutions that fell back to the mean
};

/// One global update step, Strategy-dependent:
///   full          - mean over all K true updates (the only reader of
///                   updates_oracle besides substitution_error)
///   naive_dropout - mean over S_t; equivalently each dropped client
///                   substituted by that mean
///   stale         - dropped clients substituted by their cached update
///                   (zero before first upload), mean over all K
///   fdms          - dropped clients substituted by their best-scoring
///                   present candidate, mean over all K
/// Always returns w_next = w_t + eta_global * delta.
/// `sim` is required for fdms, `stale_cache` for stale (it is updated with
/// this round's uploads).
AggregateResult aggregate_round(const StrategyKind& strat,
                                const ParamVector& w_t,
                                const UpdateMap& updates_visible,
                                const UpdateMap& updates_oracle,
                                const SimilarityState* sim,
                                StaleCache* stale_cache,
                                const std::vector<int>& s_t, int t);

struct SubstitutionError {
  ParamVector e;   // delta - mean of all true updates
  double sq = 0.0; // squared norm of e
};

/// e_t = Delta_t - (1/K) sum_k Delta_t^k over the oracle updates.
SubstitutionError substitution_error(const ParamVector& delta,
                                     const UpdateMap& updates_oracle);

}  // namespace flsim
