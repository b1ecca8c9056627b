#pragma once

#include "flsim/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flsim {

/// Labeled feature matrix owned by one client (rows are samples).
struct ClientDataset {
  Eigen::MatrixXd features;        // n_samples x n_features
  std::vector<int> labels;         // values in [0, n_classes)
  std::optional<int> cluster_id;   // clustered setting only

  int n_samples() const { return static_cast<int>(features.rows()); }
  int n_features() const { return static_cast<int>(features.cols()); }
};

/// All client datasets plus the shared test set. In the clustered setting
/// ground_truth_friends[k] holds the other members of k's cluster; the
/// friendship is hidden from strategies and used only by diagnostics/tests.
struct FederationData {
  std::vector<ClientDataset> clients;
  ClientDataset test_set;
  std::optional<std::vector<std::vector<int>>> ground_truth_friends;
  int n_classes = 0;

  int n_clients() const { return static_cast<int>(clients.size()); }
};

struct ClusteredParams {
  int n_clients = 20;
  int n_clusters = 5;
  int labels_per_cluster = 2;
  int n_classes = 10;
  int samples_per_client = 200;
  double noise_scale = 0.5;
  int n_features = 16;
  double mean_scale = 1.0;  // spread of the per-class blob centers
  int test_size = 2000;
  /// Tilts each cluster member's mix over the cluster's labels (0 =
  /// uniform). Members keep the same label set but lean toward different
  /// labels, so same-cluster clients are similar, not identical.
  double within_cluster_skew = 0.0;
  /// false: cluster c = clients [c*size, (c+1)*size) (contiguous blocks);
  /// true: cluster c = {k : k mod n_clusters == c}. Interleaving keeps
  /// window-style dropout schedules from wiping out whole clusters.
  bool interleave_clusters = false;
};

struct GeneralParams {
  int n_clients = 20;
  int n_classes = 10;
  int samples_per_client = 200;
  double dirichlet_alpha = 0.5;
  double noise_scale = 0.5;
  int n_features = 16;
  double mean_scale = 1.0;
  int test_size = 2000;
};

/// Clustered non-iid federation: each cluster owns a disjoint label range
/// (cluster c gets labels [c*labels_per_cluster, (c+1)*labels_per_cluster)),
/// clients draw only from their cluster's labels, features are Gaussian
/// blobs around per-class means. ground_truth_friends = same-cluster peers.
FederationData generate_clustered(const ClusteredParams& p, std::uint64_t seed);

/// General non-iid federation: per-client label proportions drawn from a
/// symmetric Dirichlet(alpha). No ground-truth friendship. When
/// proportions_out is given it receives each client's drawn proportions
/// (diagnostics use them to check the realized label histograms).
FederationData generate_general(const GeneralParams& p, std::uint64_t seed,
                                std::vector<Eigen::VectorXd>* proportions_out = nullptr);

/// Thrown on malformed IDX files or inconsistent image/label counts.
struct IdxFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Load an IDX image/label file pair (the format published with MNIST).
/// Pixels are scaled to [0, 1].
ClientDataset load_idx(const std::string& images_path,
                       const std::string& labels_path);

/// Split one dataset across clients with disjoint label ranges per cluster
/// (same rule as generate_clustered). Samples of each label are dealt
/// round-robin to the cluster's clients in shuffled order.
FederationData partition_clustered(const ClientDataset& pool,
                                   const ClientDataset& test, int n_clients,
                                   int n_clusters, int n_classes,
                                   std::uint64_t seed);

/// Split one dataset across clients with Dirichlet(alpha) label skew.
FederationData partition_general(const ClientDataset& pool,
                                 const ClientDataset& test, int n_clients,
                                 int n_classes, double dirichlet_alpha,
                                 std::uint64_t seed);

/// Federation <-> JSON file (schema documented in the README).
void save_federation_json(const FederationData& fed, const std::string& path);
FederationData load_federation_json(const std::string& path);

}  // namespace flsim
