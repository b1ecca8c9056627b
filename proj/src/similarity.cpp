#include "flsim/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace flsim {

SimilarityState::SimilarityState(int n_clients, bool elimination_enabled)
    : n_clients_(n_clients),
      elimination_(elimination_enabled),
      scores_(Eigen::MatrixXd::Zero(n_clients, n_clients)),
      counts_(Eigen::MatrixXi::Zero(n_clients, n_clients)),
      candidates_(n_clients) {
  if (elimination_)
    for (int k = 0; k < n_clients_; ++k)
      for (int i = 0; i < n_clients_; ++i)
        if (i != k) candidates_[k].insert(i);
}

bool SimilarityState::is_candidate(int k, int i) const {
  return candidates_[k].count(i) > 0;
}

double cosine_score(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_score: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_score: zero vector");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(0.5 * (c + 1.0), 0.0, 1.0);
}

double neg_distance_score(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("neg_distance_score: dimension mismatch");
  return -(a - b).norm();
}

ScoreFn score_fn_from_string(const std::string& name) {
  if (name == "cosine") return cosine_score;
  if (name == "neg_distance") return neg_distance_score;
  throw std::invalid_argument("unknown similarity score '" + name + "'");
}

SimilarityState update_scores(SimilarityState state,
                              const std::map<int, ParamVector>& round_updates,
                              const std::vector<int>& s_t,
                              const ScoreFn& score_fn) {
  const ScoreFn score = score_fn ? score_fn : ScoreFn(cosine_score);
  if (round_updates.size() != s_t.size())
    throw std::invalid_argument("update_scores: updates must cover exactly S_t");
  for (int k : s_t)
    if (!round_updates.count(k))
      throw std::invalid_argument("update_scores: missing update for client " +
                                  std::to_string(k));

  for (std::size_t a = 0; a < s_t.size(); ++a) {
    for (std::size_t b = a + 1; b < s_t.size(); ++b) {
      const int i = std::min(s_t[a], s_t[b]);
      const int j = std::max(s_t[a], s_t[b]);
      if (state.elimination_ && !state.is_candidate(i, j) &&
          !state.is_candidate(j, i))
        continue;
      const ParamVector& di = round_updates.at(i);
      const ParamVector& dj = round_updates.at(j);
      // Eq.-undefined case: a zero update carries no direction, skip the pair
      if (di.isZero(0.0) || dj.isZero(0.0)) continue;
      const double r = score(di, dj);
      const double n = state.counts_(i, j);
      const double updated =
          (n / (n + 1.0)) * state.scores_(i, j) + r / (n + 1.0);
      state.scores_(i, j) = state.scores_(j, i) = updated;
      state.counts_(i, j) = state.counts_(j, i) = state.counts_(i, j) + 1;
      state.comp_count_ += 1;
    }
  }
  return state;
}

int select_substitute(const SimilarityState& state, int k,
                      const std::vector<int>& s_t) {
  if (s_t.empty()) throw std::invalid_argument("select_substitute: empty S_t");
  int best = kNaiveFallback;
  double best_score = -1.0;
  for (int i : s_t) {  // s_t ascending: ties keep the lowest id
    if (i == k) continue;
    if (state.elimination_enabled() && !state.is_candidate(k, i)) continue;
    if (state.count(k, i) == 0) continue;  // unscored ranks below any scored
    if (state.score(k, i) > best_score) {
      best_score = state.score(k, i);
      best = i;
    }
  }
  return best;
}

double theta(const EliminationConfig& cfg, int t) {
  if (t < 1) throw std::invalid_argument("theta: t must be >= 1");
  if (cfg.n_clients < 1 || cfg.horizon < 1 || cfg.b_max < 1)
    throw std::invalid_argument("theta: n_clients, horizon, b_max must be >= 1");
  if (!(cfg.p > 0.0 && cfg.p < 1.0))
    throw std::invalid_argument("theta: p must be in (0, 1)");
  if (!(cfg.beta > 0.0 && cfg.beta <= 1.0))
    throw std::invalid_argument("theta: beta must be in (0, 1]");
  const double k = static_cast<double>(cfg.n_clients);
  const double num = 2.0 * std::log(2.0 * k * k * cfg.horizon * cfg.b_max) -
                     2.0 * std::log(cfg.p);
  return cfg.theta_scale * (std::sqrt(num / (cfg.beta * t)) + cfg.delta_f);
}

SimilarityState eliminate(SimilarityState state, const EliminationConfig& cfg,
                          int t) {
  if (!cfg.enabled)
    throw std::invalid_argument("eliminate: elimination disabled");
  const double threshold = theta(cfg, t);

  for (int k = 0; k < state.n_clients_; ++k) {
    auto& cand = state.candidates_[k];
    int top = kNaiveFallback;
    double top_score = -1.0;
    for (int i : cand) {  // std::set iterates ascending: lowest id wins ties
      if (state.counts_(k, i) == 0) continue;
      if (state.scores_(k, i) > top_score) {
        top_score = state.scores_(k, i);
        top = i;
      }
    }
    if (top == kNaiveFallback) continue;  // nothing scored yet
    for (auto it = cand.begin(); it != cand.end();) {
      const int i = *it;
      if (i != top && state.counts_(k, i) > 0 &&
          top_score - state.scores_(k, i) >= threshold)
        it = cand.erase(it);
      else
        ++it;
    }
  }
  return state;
}

void append_similarity_snapshot(const SimilarityState& state, int t,
                                const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (out.tellp() == 0) out << "t,i,j,R,N\n";
  char buf[64];
  for (int i = 0; i < state.n_clients(); ++i)
    for (int j = i + 1; j < state.n_clients(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g",
                    state.count(i, j) > 0 ? state.score(i, j)
                                          : std::nan(""));
      out << t << ',' << i << ',' << j << ',' << buf << ','
          << state.count(i, j) << '\n';
    }
}

}  // namespace flsim
