#pragma once

#include "flsim/core.hpp"

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace flsim {

/// select_substitute returns this when a dropped client has no scored
/// candidate among the present clients; the aggregator then falls back to
/// the naive mean substitute.
inline constexpr int kNaiveFallback = -1;

/// Candidate-elimination settings. theta(t) needs the horizon T, the number
/// of clients and the population constants (beta, delta_f, B_max); those are
/// config inputs, not estimated online.
struct EliminationConfig {
  bool enabled = false;
  int n_clients = 0;
  double p = 0.05;        // failure probability of the race
  double beta = 1.0;      // co-presence rate lower bound, in (0, 1]
  double delta_f = 0.0;   // max expected-score gap among friends
  int b_max = 1;          // max friend-set size
  int horizon = 1;        // T
  double theta_scale = 1.0;  // practical thresholds can be < theoretical
};

/// Friend-discovery state: running-mean similarity scores R, co-presence
/// counts N (counting scored rounds), shrinking candidate sets, and the
/// cumulative number of pairwise score computations.
class SimilarityState {
 public:
  SimilarityState() = default;
  /// Candidate sets start at the full client set (minus self) when
  /// elimination is enabled; they are unused otherwise.
  SimilarityState(int n_clients, bool elimination_enabled);

  int n_clients() const { return n_clients_; }
  bool elimination_enabled() const { return elimination_; }

  /// Running mean score for a pair; only meaningful when count(i,j) > 0.
  double score(int i, int j) const { return scores_(i, j); }
  int count(int i, int j) const { return counts_(i, j); }
  long long comp_count() const { return comp_count_; }
  const std::set<int>& candidates(int k) const { return candidates_[k]; }
  bool is_candidate(int k, int i) const;

  const Eigen::MatrixXd& score_matrix() const { return scores_; }
  const Eigen::MatrixXi& count_matrix() const { return counts_; }

  friend SimilarityState update_scores(
      SimilarityState state, const std::map<int, ParamVector>& round_updates,
      const std::vector<int>& s_t,
      const std::function<double(const ParamVector&, const ParamVector&)>&
          score_fn);
  friend SimilarityState eliminate(SimilarityState state,
                                   const EliminationConfig& cfg, int t);

 private:
  int n_clients_ = 0;
  bool elimination_ = false;
  Eigen::MatrixXd scores_;
  Eigen::MatrixXi counts_;
  std::vector<std::set<int>> candidates_;
  long long comp_count_ = 0;
};

/// Normalized cosine similarity in [0, 1]: (cos(a, b) + 1) / 2.
/// Undefined for zero vectors (callers skip those pairs).
double cosine_score(const ParamVector& a, const ParamVector& b);

/// Alternative score: -||a - b||. Accepted as a config option; the
/// theoretical guarantees are stated for the cosine form only.
double neg_distance_score(const ParamVector& a, const ParamVector& b);

using ScoreFn = std::function<double(const ParamVector&, const ParamVector&)>;
ScoreFn score_fn_from_string(const std::string& name);

/// Folds this round's pairwise scores into the running means. A pair {i, j}
/// in S_t is scored when elimination is disabled or either side still holds
/// the other as a candidate; zero-vector updates skip the pair (the cosine
/// is undefined there). Pairs are visited in lexicographic order. The
/// default score function is the normalized cosine.
SimilarityState update_scores(SimilarityState state,
                              const std::map<int, ParamVector>& round_updates,
                              const std::vector<int>& s_t,
                              const ScoreFn& score_fn = {});

/// Best-scoring present candidate for the dropped client k, ties broken
/// toward the lowest id; kNaiveFallback when nothing is scored.
int select_substitute(const SimilarityState& state, int k,
                      const std::vector<int>& s_t);

/// Elimination threshold after t rounds (t >= 1), strictly decreasing:
///   theta_scale * (sqrt((2 ln(2 K^2 T B_max) - 2 ln p) / (beta t)) + delta_f)
double theta(const EliminationConfig& cfg, int t);

/// One elimination sweep: per client, drop every candidate whose score gap
/// to the client's best scored candidate reaches theta(cfg, t). Clients with
/// no scored candidate are skipped; the per-client argmax always survives.
SimilarityState eliminate(SimilarityState state, const EliminationConfig& cfg,
                          int t);

/// Snapshot rows (i, j, R, N) for i < j, CSV-appended with the round tag.
void append_similarity_snapshot(const SimilarityState& state, int t,
                                const std::string& path);

}  // namespace flsim
