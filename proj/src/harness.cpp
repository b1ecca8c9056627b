#include "flsim/harness.hpp"

#include "flsim/svg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

namespace flsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
  if (n_threads <= 0)
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < n_threads; ++w)
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

DropoutKind dropout_kind_from_string(const std::string& s) {
  if (s == "iid_random") return DropoutKind::iid_random;
  if (s == "periodic") return DropoutKind::periodic;
  if (s == "adversarial_rotating") return DropoutKind::adversarial_rotating;
  if (s == "from_file") return DropoutKind::from_file;
  throw ConfigError("dropout.kind: unknown kind '" + s + "'");
}

std::string dropout_kind_to_string(DropoutKind k) {
  switch (k) {
    case DropoutKind::iid_random: return "iid_random";
    case DropoutKind::periodic: return "periodic";
    case DropoutKind::adversarial_rotating: return "adversarial_rotating";
    case DropoutKind::from_file: return "from_file";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "softmax_regression") return ModelKind::softmax_regression;
  if (s == "mlp_one_hidden") return ModelKind::mlp_one_hidden;
  throw ConfigError("model.kind: unknown kind '" + s + "'");
}

template <typename T>
void read_field(const json& j, const char* name, const char* section, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + name + ": " + e.what());
  }
}

struct RunTask {
  int run_index;
  std::uint64_t seed;
  Strategy strategy;
};

struct RunResult {
  std::vector<RoundRecord> records;
  RunSummary summary;
  std::optional<Eigen::MatrixXd> final_scores;
  std::vector<ParamVector> probe_ws;  // w_t at {0, T/4, T/2, 3T/4}
};

Eigen::MatrixXd scores_with_nan(const SimilarityState& sim) {
  const int K = sim.n_clients();
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(K, K, std::nan(""));
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (i != j && sim.count(i, j) > 0) m(i, j) = sim.score(i, j);
  return m;
}

// One (seed, strategy) trajectory. Writes its per-round CSVs incrementally
// so partial output survives a divergence abort.
RunResult run_one(const ExperimentConfig& cfg, const FederationData& fed,
                  const DropoutSchedule& schedule, const ParamVector& w0,
                  const RunTask& task, const fs::path& run_dir) {
  const int K = fed.n_clients();
  const int T = schedule.rounds();
  const auto t_start = std::chrono::steady_clock::now();

  EliminationConfig elim = cfg.similarity.elimination;
  elim.n_clients = K;
  elim.horizon = T;

  StrategyKind strat{task.strategy, cfg.eta_global};
  SimilarityState sim(K, elim.enabled);
  StaleCache stale(K);
  const ScoreFn score_fn = score_fn_from_string(cfg.similarity.score);

  const std::string name = to_string(task.strategy);
  std::ofstream rounds_csv(run_dir / ("rounds_" + name + ".csv"));
  rounds_csv << kRoundCsvHeader << '\n';
  std::ofstream subs_csv(run_dir / ("substitutes_" + name + ".csv"));
  subs_csv << "t,client,source\n";
  const std::string sim_path = (run_dir / ("similarity_" + name + ".csv")).string();

  std::vector<int> probe_rounds = {0, T / 4, T / 2, 3 * T / 4};
  probe_rounds.erase(std::unique(probe_rounds.begin(), probe_rounds.end()),
                     probe_rounds.end());

  RunResult out;
  out.summary.run_index = task.run_index;
  out.summary.seed = task.seed;
  out.summary.strategy = task.strategy;

  ParamVector w = w0;
  long long prev_comp = 0;
  double best_acc = 0.0, last_acc = std::nan(""), last_loss = std::nan("");

  try {
    for (int t = 0; t < T; ++t) {
      const auto& s_t = schedule.participation[t];
      if (std::find(probe_rounds.begin(), probe_rounds.end(), t) !=
          probe_rounds.end())
        out.probe_ws.push_back(w);

      // Every client trains from the shared stream (local_sgd, k, t): the
      // oracle update of a dropped client is exactly what it would have
      // uploaded, and identical across strategies for equal w.
      UpdateMap oracle;
      for (int k = 0; k < K; ++k)
        oracle.emplace(k, local_update(cfg.model, w, fed.clients[k], cfg.train,
                                       RngStream(task.seed,
                                                 RngPurpose::local_sgd, k, t)));
      if (cfg.debug_pairing_check) {
        const int k = t % K;
        const ParamVector again =
            local_update(cfg.model, w, fed.clients[k], cfg.train,
                         RngStream(task.seed, RngPurpose::local_sgd, k, t));
        const ParamVector& ref = oracle.at(k);
        if (again.size() != ref.size() ||
            !std::equal(again.data(), again.data() + again.size(), ref.data()))
          throw std::logic_error("pairing check: local_update not pure");
      }

      UpdateMap visible;
      for (int k : s_t) visible.emplace(k, oracle.at(k));

      if (task.strategy == Strategy::fdms)
        sim = update_scores(std::move(sim), visible, s_t, score_fn);

      AggregateResult agg =
          aggregate_round(strat, w, visible, oracle, &sim, &stale, s_t, t);

      if (task.strategy == Strategy::fdms && elim.enabled)
        sim = eliminate(std::move(sim), elim, t + 1);

      const SubstitutionError err = substitution_error(agg.delta, oracle);

      RoundRecord rec;
      rec.t = t;
      rec.strategy = task.strategy;
      rec.e_sq = err.sq;
      rec.grad_sq = (t % cfg.grad_every == 0 || t == T - 1)
                        ? full_gradient_norm(cfg.model, w, fed.clients)
                        : std::nan("");
      rec.comp_count_delta = sim.comp_count() - prev_comp;
      prev_comp = sim.comp_count();
      rec.n_dropped = task.strategy == Strategy::full
                          ? 0
                          : K - static_cast<int>(s_t.size());
      rec.fallback_count = task.strategy == Strategy::naive_dropout
                               ? K - static_cast<int>(s_t.size())
                               : agg.fallback_count;

      w = agg.w_next;
      if (t % cfg.eval_every == 0 || t == T - 1) {
        auto [acc, loss] = evaluate(cfg.model, w, fed.test_set);
        rec.test_accuracy = acc;
        rec.test_loss = loss;
        best_acc = std::max(best_acc, acc);
        last_acc = acc;
        last_loss = loss;
      } else {
        rec.test_accuracy = std::nan("");
        rec.test_loss = std::nan("");
      }

      out.records.push_back(rec);
      rounds_csv << round_csv_row(rec) << '\n';
      rounds_csv.flush();
      for (const auto& [k, src] : agg.substitutes)
        subs_csv << t << ',' << k << ',' << src.describe() << '\n';
      subs_csv.flush();

      if (task.strategy == Strategy::fdms && cfg.similarity.snapshot_every > 0 &&
          (t + 1) % cfg.similarity.snapshot_every == 0)
        append_similarity_snapshot(sim, t, sim_path);
    }
  } catch (const NonFiniteError& e) {
    out.summary.diverged = true;
    out.summary.divergence_message = e.what();
  }

  if (task.strategy == Strategy::fdms) {
    append_similarity_snapshot(sim, T - 1, sim_path);
    out.final_scores = scores_with_nan(sim);
  }

  out.summary.final_accuracy = last_acc;
  out.summary.best_accuracy = best_acc;
  out.summary.cumulative_e_sq = cumulative_substitution(out.records);
  out.summary.total_comp_count = sim.comp_count();
  out.summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  (void)last_loss;
  return out;
}

}  // namespace

FederationData build_federation(const DataConfig& data, std::uint64_t seed) {
  if (data.kind == "clustered") return generate_clustered(data.clustered, seed);
  if (data.kind == "general") return generate_general(data.general, seed);
  if (data.kind == "file") return load_federation_json(data.federation_path);
  if (data.kind == "idx_clustered" || data.kind == "idx_general") {
    const ClientDataset pool =
        load_idx(data.idx_train_images, data.idx_train_labels);
    const ClientDataset test =
        load_idx(data.idx_test_images, data.idx_test_labels);
    if (data.kind == "idx_clustered")
      return partition_clustered(pool, test, data.idx_n_clients,
                                 data.idx_n_clusters, data.idx_n_classes, seed);
    return partition_general(pool, test, data.idx_n_clients, data.idx_n_classes,
                             data.idx_dirichlet_alpha, seed);
  }
  throw ConfigError("data.kind: unknown kind '" + data.kind + "'");
}

void ExperimentConfig::validate() const {
  if (strategies.empty())
    throw ConfigError("strategies: at least one strategy is required");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (dropout.rounds < 1) throw ConfigError("dropout.rounds: must be >= 1");
  if (!(dropout.alpha >= 0.0 && dropout.alpha < 1.0))
    throw ConfigError("dropout.alpha: must be in [0, 1)");
  if (dropout.kind == DropoutKind::from_file && dropout.schedule_path.empty())
    throw ConfigError("dropout.schedule_path: required for kind=from_file");
  if (!(train.eta_local > 0.0) || !std::isfinite(train.eta_local))
    throw ConfigError("train.eta_local: must be finite and > 0");
  if (train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (!(eta_global > 0.0) || !std::isfinite(eta_global))
    throw ConfigError("eta_global: must be finite and > 0");
  if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
  if (grad_every < 1) throw ConfigError("grad_every: must be >= 1");
  if (model.n_features < 1) throw ConfigError("model.n_features: must be >= 1");
  if (model.n_classes < 2) throw ConfigError("model.n_classes: must be >= 2");
  if (model.kind == ModelKind::mlp_one_hidden && model.hidden_units < 1)
    throw ConfigError("model.hidden_units: must be >= 1 for the mlp");
  if (output_dir.empty()) throw ConfigError("output_dir: must be nonempty");
  if (similarity.score != "cosine" && similarity.score != "neg_distance")
    throw ConfigError("similarity.score: must be cosine or neg_distance");
  const auto& e = similarity.elimination;
  if (e.enabled) {
    if (!(e.p > 0.0 && e.p < 1.0))
      throw ConfigError("similarity.elimination.p: must be in (0, 1)");
    if (!(e.beta > 0.0 && e.beta <= 1.0))
      throw ConfigError("similarity.elimination.beta: must be in (0, 1]");
    if (e.delta_f < 0.0)
      throw ConfigError("similarity.elimination.delta_f: must be >= 0");
    if (e.b_max < 1)
      throw ConfigError("similarity.elimination.b_max: must be >= 1");
    if (!(e.theta_scale > 0.0))
      throw ConfigError("similarity.elimination.theta_scale: must be > 0");
  }
  if (data.kind == "clustered") {
    const auto& c = data.clustered;
    if (c.n_clients < 1 || c.n_clusters < 1 || c.n_clients % c.n_clusters != 0)
      throw ConfigError("data.n_clusters: must divide data.n_clients");
    if (c.labels_per_cluster * c.n_clusters > c.n_classes)
      throw ConfigError(
          "data.labels_per_cluster: labels_per_cluster * n_clusters must fit "
          "in n_classes");
    if (c.samples_per_client < train.batch_size)
      throw ConfigError(
          "data.samples_per_client: must be >= train.batch_size");
  } else if (data.kind == "general") {
    if (!(data.general.dirichlet_alpha > 0.0))
      throw ConfigError("data.dirichlet_alpha: must be > 0");
    if (data.general.samples_per_client < train.batch_size)
      throw ConfigError(
          "data.samples_per_client: must be >= train.batch_size");
  } else if (data.kind == "file") {
    if (data.federation_path.empty())
      throw ConfigError("data.federation_path: required for kind=file");
  } else if (data.kind == "idx_clustered" || data.kind == "idx_general") {
    if (data.idx_train_images.empty() || data.idx_train_labels.empty() ||
        data.idx_test_images.empty() || data.idx_test_labels.empty())
      throw ConfigError("data: idx kinds need all four idx paths");
  } else {
    throw ConfigError("data.kind: unknown kind '" + data.kind + "'");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = 1;
  json d;
  d["kind"] = data.kind;
  if (data.kind == "clustered") {
    const auto& c = data.clustered;
    d["n_clients"] = c.n_clients;
    d["n_clusters"] = c.n_clusters;
    d["labels_per_cluster"] = c.labels_per_cluster;
    d["n_classes"] = c.n_classes;
    d["samples_per_client"] = c.samples_per_client;
    d["noise_scale"] = c.noise_scale;
    d["n_features"] = c.n_features;
    d["mean_scale"] = c.mean_scale;
    d["test_size"] = c.test_size;
    d["within_cluster_skew"] = c.within_cluster_skew;
    d["interleave_clusters"] = c.interleave_clusters;
  } else if (data.kind == "general") {
    const auto& g = data.general;
    d["n_clients"] = g.n_clients;
    d["n_classes"] = g.n_classes;
    d["samples_per_client"] = g.samples_per_client;
    d["dirichlet_alpha"] = g.dirichlet_alpha;
    d["noise_scale"] = g.noise_scale;
    d["n_features"] = g.n_features;
    d["mean_scale"] = g.mean_scale;
    d["test_size"] = g.test_size;
  } else if (data.kind == "file") {
    d["federation_path"] = data.federation_path;
  } else {
    d["train_images"] = data.idx_train_images;
    d["train_labels"] = data.idx_train_labels;
    d["test_images"] = data.idx_test_images;
    d["test_labels"] = data.idx_test_labels;
    d["n_clients"] = data.idx_n_clients;
    d["n_clusters"] = data.idx_n_clusters;
    d["n_classes"] = data.idx_n_classes;
    d["dirichlet_alpha"] = data.idx_dirichlet_alpha;
  }
  j["data"] = d;
  j["model"] = {{"kind", model.kind == ModelKind::softmax_regression
                             ? "softmax_regression"
                             : "mlp_one_hidden"},
                {"n_features", model.n_features},
                {"n_classes", model.n_classes},
                {"hidden_units", model.hidden_units},
                {"init_scale", model.init_scale}};
  j["train"] = {{"eta_local", train.eta_local},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size}};
  j["dropout"] = {{"kind", dropout_kind_to_string(dropout.kind)},
                  {"alpha", dropout.alpha},
                  {"rounds", dropout.rounds},
                  {"schedule_path", dropout.schedule_path}};
  json strats = json::array();
  for (Strategy s : strategies) strats.push_back(to_string(s));
  j["strategies"] = strats;
  j["similarity"] = {
      {"score", similarity.score},
      {"snapshot_every", similarity.snapshot_every},
      {"elimination",
       {{"enabled", similarity.elimination.enabled},
        {"p", similarity.elimination.p},
        {"beta", similarity.elimination.beta},
        {"delta_f", similarity.elimination.delta_f},
        {"b_max", similarity.elimination.b_max},
        {"theta_scale", similarity.elimination.theta_scale}}}};
  j["heterogeneity"] = {{"enabled", heterogeneity.enabled},
                        {"n_repeats", heterogeneity.n_repeats}};
  j["eta_global"] = eta_global;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["eval_every"] = eval_every;
  j["grad_every"] = grad_every;
  j["n_threads"] = n_threads;
  j["debug_pairing_check"] = debug_pairing_check;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (j.value("schema_version", 0) != 1)
    throw ConfigError("schema_version: expected 1");
  ExperimentConfig cfg;

  if (j.contains("data")) {
    const json& d = j["data"];
    read_field(d, "kind", "data", cfg.data.kind);
    if (cfg.data.kind == "clustered") {
      auto& c = cfg.data.clustered;
      read_field(d, "n_clients", "data", c.n_clients);
      read_field(d, "n_clusters", "data", c.n_clusters);
      read_field(d, "labels_per_cluster", "data", c.labels_per_cluster);
      read_field(d, "n_classes", "data", c.n_classes);
      read_field(d, "samples_per_client", "data", c.samples_per_client);
      read_field(d, "noise_scale", "data", c.noise_scale);
      read_field(d, "n_features", "data", c.n_features);
      read_field(d, "mean_scale", "data", c.mean_scale);
      read_field(d, "test_size", "data", c.test_size);
      read_field(d, "within_cluster_skew", "data", c.within_cluster_skew);
      read_field(d, "interleave_clusters", "data", c.interleave_clusters);
      cfg.model.n_features = c.n_features;
      cfg.model.n_classes = c.n_classes;
    } else if (cfg.data.kind == "general") {
      auto& g = cfg.data.general;
      read_field(d, "n_clients", "data", g.n_clients);
      read_field(d, "n_classes", "data", g.n_classes);
      read_field(d, "samples_per_client", "data", g.samples_per_client);
      read_field(d, "dirichlet_alpha", "data", g.dirichlet_alpha);
      read_field(d, "noise_scale", "data", g.noise_scale);
      read_field(d, "n_features", "data", g.n_features);
      read_field(d, "mean_scale", "data", g.mean_scale);
      read_field(d, "test_size", "data", g.test_size);
      cfg.model.n_features = g.n_features;
      cfg.model.n_classes = g.n_classes;
    } else if (cfg.data.kind == "file") {
      read_field(d, "federation_path", "data", cfg.data.federation_path);
    } else if (cfg.data.kind == "idx_clustered" ||
               cfg.data.kind == "idx_general") {
      read_field(d, "train_images", "data", cfg.data.idx_train_images);
      read_field(d, "train_labels", "data", cfg.data.idx_train_labels);
      read_field(d, "test_images", "data", cfg.data.idx_test_images);
      read_field(d, "test_labels", "data", cfg.data.idx_test_labels);
      read_field(d, "n_clients", "data", cfg.data.idx_n_clients);
      read_field(d, "n_clusters", "data", cfg.data.idx_n_clusters);
      read_field(d, "n_classes", "data", cfg.data.idx_n_classes);
      read_field(d, "dirichlet_alpha", "data", cfg.data.idx_dirichlet_alpha);
    }
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    std::string kind = "softmax_regression";
    read_field(m, "kind", "model", kind);
    cfg.model.kind = model_kind_from_string(kind);
    read_field(m, "n_features", "model", cfg.model.n_features);
    read_field(m, "n_classes", "model", cfg.model.n_classes);
    read_field(m, "hidden_units", "model", cfg.model.hidden_units);
    read_field(m, "init_scale", "model", cfg.model.init_scale);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    read_field(t, "eta_local", "train", cfg.train.eta_local);
    read_field(t, "epochs", "train", cfg.train.epochs);
    read_field(t, "batch_size", "train", cfg.train.batch_size);
  }
  if (j.contains("dropout")) {
    const json& d = j["dropout"];
    std::string kind = "iid_random";
    read_field(d, "kind", "dropout", kind);
    cfg.dropout.kind = dropout_kind_from_string(kind);
    read_field(d, "alpha", "dropout", cfg.dropout.alpha);
    read_field(d, "rounds", "dropout", cfg.dropout.rounds);
    read_field(d, "schedule_path", "dropout", cfg.dropout.schedule_path);
  }
  if (j.contains("strategies")) {
    cfg.strategies.clear();
    for (const auto& s : j["strategies"])
      cfg.strategies.push_back(strategy_from_string(s.get<std::string>()));
  }
  if (j.contains("similarity")) {
    const json& s = j["similarity"];
    read_field(s, "score", "similarity", cfg.similarity.score);
    read_field(s, "snapshot_every", "similarity",
               cfg.similarity.snapshot_every);
    if (s.contains("elimination")) {
      const json& e = s["elimination"];
      auto& ec = cfg.similarity.elimination;
      read_field(e, "enabled", "similarity.elimination", ec.enabled);
      read_field(e, "p", "similarity.elimination", ec.p);
      read_field(e, "beta", "similarity.elimination", ec.beta);
      read_field(e, "delta_f", "similarity.elimination", ec.delta_f);
      read_field(e, "b_max", "similarity.elimination", ec.b_max);
      read_field(e, "theta_scale", "similarity.elimination", ec.theta_scale);
    }
  }
  if (j.contains("heterogeneity")) {
    const json& h = j["heterogeneity"];
    read_field(h, "enabled", "heterogeneity", cfg.heterogeneity.enabled);
    read_field(h, "n_repeats", "heterogeneity", cfg.heterogeneity.n_repeats);
  }
  read_field(j, "eta_global", "", cfg.eta_global);
  read_field(j, "seeds", "", cfg.seeds);
  read_field(j, "output_dir", "", cfg.output_dir);
  read_field(j, "eval_every", "", cfg.eval_every);
  read_field(j, "grad_every", "", cfg.grad_every);
  read_field(j, "n_threads", "", cfg.n_threads);
  read_field(j, "debug_pairing_check", "", cfg.debug_pairing_check);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

std::pair<double, double> intra_inter_similarity(
    const Eigen::MatrixXd& scores,
    const std::vector<std::vector<int>>& friends) {
  const int K = static_cast<int>(scores.rows());
  std::vector<std::vector<char>> is_friend(K, std::vector<char>(K, 0));
  for (int i = 0; i < K; ++i)
    for (int j : friends[i]) is_friend[i][j] = 1;
  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      if (!std::isfinite(scores(i, j))) continue;
      if (is_friend[i][j]) {
        intra += scores(i, j);
        ++n_intra;
      } else {
        inter += scores(i, j);
        ++n_inter;
      }
    }
  return {n_intra ? intra / n_intra : std::nan(""),
          n_inter ? inter / n_inter : std::nan("")};
}

namespace {

// Seed-averaged per-round mean of a field over all runs sharing a label.
std::vector<Series> averaged_series(
    const std::map<std::string, std::vector<std::vector<RoundRecord>>>& groups,
    double (*field)(const RoundRecord&), bool cumulative) {
  std::vector<Series> out;
  for (const auto& [label, runs] : groups) {
    std::size_t T = 0;
    for (const auto& r : runs) T = std::max(T, r.size());
    Series s;
    s.label = label;
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0.0;
      int n = 0;
      for (const auto& run : runs) {
        if (t >= run.size()) continue;
        double v = field(run[t]);
        if (cumulative) {
          v = 0.0;
          for (std::size_t u = 0; u <= t; ++u) v += field(run[u]);
        }
        if (std::isfinite(v)) {
          sum += v;
          ++n;
        }
      }
      if (n > 0) {
        s.xs.push_back(static_cast<double>(t));
        s.ys.push_back(sum / n);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void emit_charts(const std::string& dir,
                 const std::map<std::string, std::vector<RoundRecord>>& curves,
                 const std::optional<Eigen::MatrixXd>& similarity) {
  if (curves.empty()) return;
  fs::create_directories(dir);

  std::map<std::string, std::vector<std::vector<RoundRecord>>> groups;
  for (const auto& [label, recs] : curves) groups[label].push_back(recs);

  const auto acc = averaged_series(
      groups, [](const RoundRecord& r) { return r.test_accuracy; }, false);
  write_line_chart(dir + "/accuracy.svg", "Test accuracy per round", "round",
                   "accuracy", acc);
  const auto esq = averaged_series(
      groups, [](const RoundRecord& r) { return r.e_sq; }, false);
  write_line_chart(dir + "/substitution_error.svg",
                   "Squared substitution error per round", "round", "||e_t||^2",
                   esq);
  const auto comp = averaged_series(
      groups,
      [](const RoundRecord& r) {
        return static_cast<double>(r.comp_count_delta);
      },
      true);
  write_line_chart(dir + "/comp_count.svg",
                   "Cumulative similarity computations", "round",
                   "pair scores computed", comp);

  if (similarity) {
    write_heatmap(dir + "/similarity_heatmap.svg",
                  "Pairwise similarity scores (final round)", *similarity);
  } else {
    std::cerr << "[flsim] no similarity data; heat map skipped\n";
  }
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  ExperimentOutput out;
  out.output_dir = cfg.output_dir;
  if (const char* env = std::getenv("FLSIM_OUTPUT_DIR"))
    if (*env) out.output_dir = env;
  const fs::path root(out.output_dir);
  fs::create_directories(root);
  {
    std::ofstream cfg_copy(root / "config.json");
    cfg_copy << cfg.to_json().dump(2) << "\n";
  }

  const int n_runs = static_cast<int>(cfg.seeds.size());
  const int n_strats = static_cast<int>(cfg.strategies.size());

  // Shared per-seed inputs: data, schedule and w0 are generated once so that
  // all strategies see identical conditions.
  std::vector<FederationData> feds(n_runs);
  std::vector<DropoutSchedule> schedules(n_runs);
  std::vector<ParamVector> w0s(n_runs);
  std::vector<fs::path> run_dirs(n_runs);
  for (int r = 0; r < n_runs; ++r) {
    const std::uint64_t seed = cfg.seeds[r];
    feds[r] = build_federation(cfg.data, seed);
    const int K = feds[r].n_clients();
    if (cfg.dropout.kind == DropoutKind::from_file)
      schedules[r] =
          load_schedule_json(cfg.dropout.schedule_path, K, cfg.dropout.alpha);
    else
      schedules[r] = generate_schedule(
          cfg.dropout.kind, K, cfg.dropout.rounds, cfg.dropout.alpha,
          RngStream(seed, RngPurpose::dropout, -1, 0));
    if (schedules[r].rounds() < cfg.dropout.rounds)
      throw ConfigError("dropout.schedule_path: fewer rounds than configured");
    schedules[r].participation.resize(cfg.dropout.rounds);
    w0s[r] = init_params(cfg.model,
                         RngStream(seed, RngPurpose::model_init, -1, 0));
    char dirname[64];
    std::snprintf(dirname, sizeof(dirname), "run_%03d_seed_%llu", r,
                  static_cast<unsigned long long>(seed));
    run_dirs[r] = root / dirname;
    fs::create_directories(run_dirs[r]);
  }

  std::vector<RunTask> tasks;
  for (int r = 0; r < n_runs; ++r)
    for (int s = 0; s < n_strats; ++s)
      tasks.push_back(RunTask{r, cfg.seeds[r], cfg.strategies[s]});

  std::vector<RunResult> results(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), cfg.n_threads, [&](int i) {
    const RunTask& task = tasks[i];
    results[i] = run_one(cfg, feds[task.run_index], schedules[task.run_index],
                         w0s[task.run_index], task, run_dirs[task.run_index]);
  });

  // summary.csv: deterministic content (wall-clock stays out of files)
  std::ofstream summary_csv(root / "summary.csv");
  summary_csv << "run,seed,strategy,final_accuracy,best_accuracy,"
                 "cumulative_e_sq,total_comp_count,diverged\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const RunSummary& s = results[i].summary;
    out.summaries.push_back(s);
    out.records[{s.run_index, s.strategy}] = results[i].records;
    if (results[i].final_scores && !out.final_scores.count(s.run_index))
      out.final_scores[s.run_index] = *results[i].final_scores;
    summary_csv << s.run_index << ',' << s.seed << ',' << to_string(s.strategy)
                << ',' << format_double(s.final_accuracy) << ','
                << format_double(s.best_accuracy) << ','
                << format_double(s.cumulative_e_sq) << ','
                << s.total_comp_count << ',' << (s.diverged ? 1 : 0) << '\n';
    std::cout << "[flsim] run " << s.run_index << " seed " << s.seed << " "
              << to_string(s.strategy) << ": final_acc "
              << format_double(s.final_accuracy) << ", sum e^2 "
              << format_double(s.cumulative_e_sq) << ", "
              << format_double(s.wall_seconds) << "s"
              << (s.diverged ? " [DIVERGED]" : "") << "\n";
  }

  if (cfg.heterogeneity.enabled) {
    std::ofstream het_csv(root / "heterogeneity.csv");
    het_csv << "run,seed,sigma2_P_hat,sigma2_F_hat\n";
    for (int r = 0; r < n_runs; ++r) {
      // probe along the first strategy's trajectory
      const std::vector<ParamVector>& probes = results[r * n_strats].probe_ws;
      if (probes.empty()) continue;
      const HeterogeneityEstimate est = estimate_heterogeneity(
          cfg.model, probes, feds[r].clients, cfg.train,
          cfg.heterogeneity.n_repeats, cfg.seeds[r],
          feds[r].ground_truth_friends);
      HeterogeneitySummary hs;
      hs.run_index = r;
      hs.seed = cfg.seeds[r];
      hs.sigma2_p_hat = est.sigma2_p_hat;
      hs.sigma2_f_hat = est.sigma2_f_hat;
      out.heterogeneity.push_back(hs);
      het_csv << r << ',' << cfg.seeds[r] << ','
              << format_double(est.sigma2_p_hat) << ','
              << format_double(est.sigma2_f_hat ? *est.sigma2_f_hat
                                                : std::nan(""))
              << '\n';
    }
  }

  // charts over seed-averaged curves, heat map from the first fdms run
  std::map<std::string, std::vector<RoundRecord>> merged;
  for (Strategy s : cfg.strategies) {
    std::vector<std::vector<RoundRecord>> runs;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].strategy == s) runs.push_back(results[i].records);
    std::size_t T = 0;
    for (const auto& r : runs) T = std::max(T, r.size());
    std::vector<RoundRecord> avg;
    for (std::size_t t = 0; t < T; ++t) {
      RoundRecord rec;
      rec.t = static_cast<int>(t);
      rec.strategy = s;
      double acc = 0, loss = 0, esq = 0, gsq = 0, comp = 0;
      int n_acc = 0, n = 0;
      for (const auto& run : runs) {
        if (t >= run.size()) continue;
        ++n;
        if (std::isfinite(run[t].test_accuracy)) {
          acc += run[t].test_accuracy;
          loss += run[t].test_loss;
          ++n_acc;
        }
        esq += run[t].e_sq;
        gsq += std::isfinite(run[t].grad_sq) ? run[t].grad_sq : 0.0;
        comp += static_cast<double>(run[t].comp_count_delta);
      }
      if (n == 0) continue;
      rec.test_accuracy = n_acc ? acc / n_acc : std::nan("");
      rec.test_loss = n_acc ? loss / n_acc : std::nan("");
      rec.e_sq = esq / n;
      rec.grad_sq = gsq / n;
      rec.comp_count_delta = static_cast<long long>(comp / n);
      avg.push_back(rec);
    }
    merged[to_string(s)] = std::move(avg);
  }
  std::optional<Eigen::MatrixXd> heat;
  if (!out.final_scores.empty()) heat = out.final_scores.begin()->second;
  emit_charts((root / "charts").string(), merged, heat);

  return out;
}

}  // namespace flsim
