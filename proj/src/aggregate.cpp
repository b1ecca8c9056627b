#include "flsim/aggregate.hpp"

#include <algorithm>

namespace flsim {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::full: return "full";
    case Strategy::naive_dropout: return "naive_dropout";
    case Strategy::stale: return "stale";
    case Strategy::fdms: return "fdms";
  }
  throw std::invalid_argument("unknown strategy");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "full") return Strategy::full;
  if (s == "naive_dropout") return Strategy::naive_dropout;
  if (s == "stale") return Strategy::stale;
  if (s == "fdms") return Strategy::fdms;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

void StaleCache::store(int client, const ParamVector& delta, int round) {
  entries_[client] = Entry{delta, round};
}

std::string SubstituteSource::describe() const {
  switch (kind) {
    case Kind::naive_mean: return "mean";
    case Kind::stale_self: return "stale@" + std::to_string(round);
    case Kind::friend_client: return "friend:" + std::to_string(client);
  }
  return "?";
}

namespace {

ParamVector mean_over(const UpdateMap& updates) {
  std::vector<ParamVector> vs;
  vs.reserve(updates.size());
  for (const auto& [k, v] : updates) vs.push_back(v);  // map: ascending ids
  return mean(vs);
}

std::vector<int> dropped_clients(int n_clients, const std::vector<int>& s_t) {
  std::vector<char> present(n_clients, 0);
  for (int k : s_t) present[k] = 1;
  std::vector<int> dropped;
  for (int k = 0; k < n_clients; ++k)
    if (!present[k]) dropped.push_back(k);
  return dropped;
}

}  // namespace

AggregateResult aggregate_round(const StrategyKind& strat,
                                const ParamVector& w_t,
                                const UpdateMap& updates_visible,
                                const UpdateMap& updates_oracle,
                                const SimilarityState* sim,
                                StaleCache* stale_cache,
                                const std::vector<int>& s_t, int t) {
  if (s_t.empty())
    throw std::invalid_argument("aggregate_round: empty S_t is forbidden");
  if (updates_visible.size() != s_t.size())
    throw std::invalid_argument(
        "aggregate_round: visible updates must cover exactly S_t");
  for (int k : s_t)
    if (!updates_visible.count(k))
      throw std::invalid_argument("aggregate_round: missing update for client " +
                                  std::to_string(k));
  if (!(std::isfinite(strat.eta_global)))
    throw std::invalid_argument("aggregate_round: eta_global must be finite");

  const int n_clients = static_cast<int>(updates_oracle.size());
  AggregateResult res;

  switch (strat.kind) {
    case Strategy::full: {
      // ideal no-dropout reference; the one strategy allowed to read the
      // oracle updates
      res.delta = mean_over(updates_oracle);
      break;
    }
    case Strategy::naive_dropout: {
      res.delta = mean_over(updates_visible);
      for (int k : dropped_clients(n_clients, s_t))
        res.substitutes[k] =
            SubstituteSource{SubstituteSource::Kind::naive_mean, -1, -1};
      break;
    }
    case Strategy::stale: {
      if (!stale_cache)
        throw std::invalid_argument("aggregate_round: stale needs a cache");
      const Eigen::Index d = updates_visible.begin()->second.size();
      ParamVector acc = ParamVector::Zero(d);
      for (const auto& [k, v] : updates_visible) acc += v;
      for (int k : dropped_clients(n_clients, s_t)) {
        if (stale_cache->has(k)) {
          acc += stale_cache->delta(k);
          res.substitutes[k] = SubstituteSource{
              SubstituteSource::Kind::stale_self, k, stale_cache->round(k)};
        } else {
          // cold start: contributes the zero vector until first upload
          res.substitutes[k] =
              SubstituteSource{SubstituteSource::Kind::stale_self, k, -1};
        }
      }
      res.delta = acc / static_cast<double>(n_clients);
      for (const auto& [k, v] : updates_visible) stale_cache->store(k, v, t);
      break;
    }
    case Strategy::fdms: {
      if (!sim)
        throw std::invalid_argument("aggregate_round: fdms needs similarity state");
      const Eigen::Index d = updates_visible.begin()->second.size();
      ParamVector acc = ParamVector::Zero(d);
      for (const auto& [k, v] : updates_visible) acc += v;
      ParamVector naive;  // computed lazily, only if a fallback happens
      for (int k : dropped_clients(n_clients, s_t)) {
        const int phi = select_substitute(*sim, k, s_t);
        if (phi == kNaiveFallback) {
          if (naive.size() == 0) naive = mean_over(updates_visible);
          acc += naive;
          res.substitutes[k] =
              SubstituteSource{SubstituteSource::Kind::naive_mean, -1, -1};
          res.fallback_count += 1;
        } else {
          acc += updates_visible.at(phi);
          res.substitutes[k] =
              SubstituteSource{SubstituteSource::Kind::friend_client, phi, t};
        }
      }
      res.delta = acc / static_cast<double>(n_clients);
      break;
    }
  }

  detail::require_finite(res.delta, "aggregate_round");
  res.w_next = axpy(strat.eta_global, res.delta, w_t);
  return res;
}

SubstitutionError substitution_error(const ParamVector& delta,
                                     const UpdateMap& updates_oracle) {
  if (updates_oracle.empty())
    throw std::invalid_argument("substitution_error: empty oracle map");
  const ParamVector mean_true = mean_over(updates_oracle);
  SubstitutionError err;
  err.e = delta - mean_true;
  err.sq = sq_norm(err.e);
  return err;
}

}  // namespace flsim
