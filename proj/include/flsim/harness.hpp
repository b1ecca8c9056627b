#pragma once

#include "flsim/aggregate.hpp"
#include "flsim/csv.hpp"
#include "flsim/data.hpp"
#include "flsim/dropout.hpp"
#include "flsim/metrics.hpp"
#include "flsim/model.hpp"
#include "flsim/similarity.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flsim {

/// Config validation failure; the message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string kind = "clustered";  // clustered|general|file|idx_clustered|idx_general
  ClusteredParams clustered;
  GeneralParams general;
  std::string federation_path;  // kind = file
  // kind = idx_*
  std::string idx_train_images, idx_train_labels;
  std::string idx_test_images, idx_test_labels;
  int idx_n_clients = 20;
  int idx_n_clusters = 5;
  int idx_n_classes = 10;
  double idx_dirichlet_alpha = 0.5;
};

struct DropoutConfig {
  DropoutKind kind = DropoutKind::iid_random;
  double alpha = 0.5;
  int rounds = 300;
  std::string schedule_path;  // kind = from_file
};

struct SimilarityConfig {
  std::string score = "cosine";   // cosine | neg_distance
  EliminationConfig elimination;  // n_clients/horizon filled in at run time
  int snapshot_every = 0;         // 0: final snapshot only
};

struct HeterogeneityConfig {
  bool enabled = false;
  int n_repeats = 2;
};

/// Everything a run needs. The defaults are the desk-scale preset: 20
/// clients in 5 clusters, softmax regression on synthetic blobs, T=300,
/// E=5, eta_local=0.05, eta=1, batch 32.
struct ExperimentConfig {
  DataConfig data;
  ModelSpec model{ModelKind::softmax_regression, 16, 10, 16, 0.01};
  LocalTrainConfig train;
  DropoutConfig dropout;
  std::vector<Strategy> strategies{Strategy::full, Strategy::naive_dropout,
                                   Strategy::stale, Strategy::fdms};
  SimilarityConfig similarity;
  HeterogeneityConfig heterogeneity;
  double eta_global = 1.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "out";
  int eval_every = 1;
  int grad_every = 1;
  int n_threads = 0;  // 0: hardware concurrency
  bool debug_pairing_check = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_json_file(const std::string& path);
};

struct RunSummary {
  int run_index = 0;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::full;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  double cumulative_e_sq = 0.0;
  long long total_comp_count = 0;
  double wall_seconds = 0.0;  // reported, never written into CSVs
  bool diverged = false;
  std::string divergence_message;
};

struct HeterogeneitySummary {
  int run_index = 0;
  std::uint64_t seed = 0;
  double sigma2_p_hat = 0.0;
  std::optional<double> sigma2_f_hat;
};

struct ExperimentOutput {
  std::vector<RunSummary> summaries;  // one per (run, strategy)
  std::map<std::pair<int, Strategy>, std::vector<RoundRecord>> records;
  /// Final similarity scores per fdms run (NaN where a pair was never scored).
  std::map<int, Eigen::MatrixXd> final_scores;
  std::vector<HeterogeneitySummary> heterogeneity;
  std::string output_dir;  // resolved (env override applied)
};

/// Runs every (seed, strategy) combination on paired data/schedules and
/// writes per-round CSVs, substitute audit logs, similarity snapshots,
/// summary.csv and charts under output_dir. FLSIM_OUTPUT_DIR overrides
/// the configured output_dir.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// (mean intra-friend score, mean inter score) over finite entries.
std::pair<double, double> intra_inter_similarity(
    const Eigen::MatrixXd& scores,
    const std::vector<std::vector<int>>& friends);

/// Chart rendering, shared by run_experiment, the acceptance suite and the
/// `report` subcommand. curves: label -> per-round records (one line per
/// label in each chart). A missing similarity matrix skips the heat map
/// with a notice.
void emit_charts(const std::string& dir,
                 const std::map<std::string, std::vector<RoundRecord>>& curves,
                 const std::optional<Eigen::MatrixXd>& similarity);

/// Builds the federation for a config (used by the CLI generate-data).
FederationData build_federation(const DataConfig& data, std::uint64_t seed);

}  // namespace flsim
