#include "flsim/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace flsim {

namespace {

using nlohmann::json;

void validate_labels(const std::vector<int>& labels, int n_classes,
                     const char* what) {
  for (int y : labels)
    if (y < 0 || y >= n_classes)
      throw std::invalid_argument(std::string(what) + ": label " +
                                  std::to_string(y) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
}

// One blob center per class, drawn once per federation.
Eigen::MatrixXd draw_class_means(int n_classes, int n_features,
                                 double mean_scale, std::uint64_t seed) {
  RngStream rng(seed, RngPurpose::data_gen, /*client=*/-1, /*round=*/0);
  Eigen::MatrixXd means(n_classes, n_features);
  for (int c = 0; c < n_classes; ++c)
    for (int f = 0; f < n_features; ++f) means(c, f) = mean_scale * rng.normal();
  return means;
}

Eigen::RowVectorXd draw_sample(const Eigen::MatrixXd& means, int label,
                               double noise_scale, RngStream& rng) {
  Eigen::RowVectorXd x = means.row(label);
  for (Eigen::Index f = 0; f < x.size(); ++f) x(f) += noise_scale * rng.normal();
  return x;
}

// Class-balanced test set over the given label list.
ClientDataset make_test_set(const Eigen::MatrixXd& means,
                            const std::vector<int>& labels, int test_size,
                            double noise_scale, std::uint64_t seed) {
  RngStream rng(seed, RngPurpose::data_gen, /*client=*/-2, /*round=*/0);
  ClientDataset test;
  test.features.resize(test_size, means.cols());
  test.labels.resize(test_size);
  for (int i = 0; i < test_size; ++i) {
    const int y = labels[i % labels.size()];
    test.labels[i] = y;
    test.features.row(i) = draw_sample(means, y, noise_scale, rng);
  }
  return test;
}

std::vector<std::vector<int>> friends_from_clusters(
    const std::vector<int>& cluster_of) {
  const int K = static_cast<int>(cluster_of.size());
  std::vector<std::vector<int>> friends(K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (i != j && cluster_of[i] == cluster_of[j]) friends[i].push_back(j);
  return friends;
}

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IdxFormatError(path + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

FederationData generate_clustered(const ClusteredParams& p,
                                  std::uint64_t seed) {
  if (p.n_clients < 1 || p.n_clusters < 1 ||
      p.n_clients % p.n_clusters != 0)
    throw std::invalid_argument(
        "generate_clustered: n_clusters must divide n_clients");
  if (p.labels_per_cluster * p.n_clusters > p.n_classes)
    throw std::invalid_argument(
        "generate_clustered: labels_per_cluster * n_clusters exceeds "
        "n_classes");
  if (p.samples_per_client < 1 || p.test_size < 1 || p.n_features < 1)
    throw std::invalid_argument("generate_clustered: sizes must be positive");

  const Eigen::MatrixXd means =
      draw_class_means(p.n_classes, p.n_features, p.mean_scale, seed);

  FederationData fed;
  fed.n_classes = p.n_classes;
  fed.clients.resize(p.n_clients);
  std::vector<int> cluster_of(p.n_clients);
  std::vector<int> used_labels;
  const int per_cluster = p.n_clients / p.n_clusters;
  for (int c = 0; c < p.n_clusters; ++c)
    for (int l = 0; l < p.labels_per_cluster; ++l)
      used_labels.push_back(c * p.labels_per_cluster + l);

  for (int k = 0; k < p.n_clients; ++k) {
    const int cluster =
        p.interleave_clusters ? k % p.n_clusters : k / per_cluster;
    cluster_of[k] = cluster;
    RngStream rng(seed, RngPurpose::data_gen, k, 0);

    // member m's label mix: logistic tilt across the cluster's label range,
    // uniform at skew 0
    const int member =
        p.interleave_clusters ? k / p.n_clusters : k % per_cluster;
    const double side =
        per_cluster > 1 ? 2.0 * member / (per_cluster - 1) - 1.0 : 0.0;
    Eigen::VectorXd mix(p.labels_per_cluster);
    for (int l = 0; l < p.labels_per_cluster; ++l) {
      const double pos =
          p.labels_per_cluster > 1 ? 2.0 * l / (p.labels_per_cluster - 1) - 1.0
                                   : 0.0;
      mix(l) = std::exp(p.within_cluster_skew * side * pos);
    }
    mix /= mix.sum();

    ClientDataset& ds = fed.clients[k];
    ds.cluster_id = cluster;
    ds.features.resize(p.samples_per_client, p.n_features);
    ds.labels.resize(p.samples_per_client);
    for (int i = 0; i < p.samples_per_client; ++i) {
      const double u = rng.uniform();
      int l = p.labels_per_cluster - 1;
      double acc = 0.0;
      for (int j = 0; j < p.labels_per_cluster; ++j) {
        acc += mix(j);
        if (u < acc) {
          l = j;
          break;
        }
      }
      const int y = cluster * p.labels_per_cluster + l;
      ds.labels[i] = y;
      ds.features.row(i) = draw_sample(means, y, p.noise_scale, rng);
    }
  }

  fed.test_set =
      make_test_set(means, used_labels, p.test_size, p.noise_scale, seed);
  fed.ground_truth_friends = friends_from_clusters(cluster_of);
  return fed;
}

FederationData generate_general(const GeneralParams& p, std::uint64_t seed,
                                std::vector<Eigen::VectorXd>* proportions_out) {
  if (!(p.dirichlet_alpha > 0.0))
    throw std::invalid_argument("generate_general: dirichlet_alpha must be > 0");
  if (p.n_clients < 1 || p.samples_per_client < 1 || p.test_size < 1)
    throw std::invalid_argument("generate_general: sizes must be positive");

  const Eigen::MatrixXd means =
      draw_class_means(p.n_classes, p.n_features, p.mean_scale, seed);

  FederationData fed;
  fed.n_classes = p.n_classes;
  fed.clients.resize(p.n_clients);
  if (proportions_out) proportions_out->clear();

  for (int k = 0; k < p.n_clients; ++k) {
    RngStream rng(seed, RngPurpose::data_gen, k, 0);
    Eigen::VectorXd prop(p.n_classes);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      double sum = 0.0;
      for (int c = 0; c < p.n_classes; ++c) {
        prop(c) = rng.gamma(p.dirichlet_alpha);
        sum += prop(c);
      }
      if (sum > 0.0 && std::isfinite(sum)) {
        prop /= sum;
        ok = true;
      }
    }
    if (!ok)
      throw std::runtime_error(
          "generate_general: degenerate Dirichlet draw for client " +
          std::to_string(k) + " after 100 retries");
    if (proportions_out) proportions_out->push_back(prop);

    ClientDataset& ds = fed.clients[k];
    ds.features.resize(p.samples_per_client, p.n_features);
    ds.labels.resize(p.samples_per_client);
    for (int i = 0; i < p.samples_per_client; ++i) {
      // inverse-CDF draw from the client's categorical distribution
      const double u = rng.uniform();
      double acc = 0.0;
      int y = p.n_classes - 1;
      for (int c = 0; c < p.n_classes; ++c) {
        acc += prop(c);
        if (u < acc) {
          y = c;
          break;
        }
      }
      ds.labels[i] = y;
      ds.features.row(i) = draw_sample(means, y, p.noise_scale, rng);
    }
  }

  std::vector<int> all_labels(p.n_classes);
  std::iota(all_labels.begin(), all_labels.end(), 0);
  fed.test_set =
      make_test_set(means, all_labels, p.test_size, p.noise_scale, seed);
  return fed;
}

ClientDataset load_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IdxFormatError(images_path + ": cannot open");
  if (read_be_u32(img, images_path) != 0x00000803u)
    throw IdxFormatError(images_path + ": bad magic (expected 0x00000803)");
  const std::uint32_t n_images = read_be_u32(img, images_path);
  const std::uint32_t rows = read_be_u32(img, images_path);
  const std::uint32_t cols = read_be_u32(img, images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IdxFormatError(labels_path + ": cannot open");
  if (read_be_u32(lab, labels_path) != 0x00000801u)
    throw IdxFormatError(labels_path + ": bad magic (expected 0x00000801)");
  const std::uint32_t n_labels = read_be_u32(lab, labels_path);
  if (n_images != n_labels)
    throw IdxFormatError("IDX count mismatch: " + std::to_string(n_images) +
                         " images vs " + std::to_string(n_labels) + " labels");

  const std::size_t n_pixels = std::size_t(rows) * cols;
  ClientDataset ds;
  ds.features.resize(n_images, n_pixels);
  ds.labels.resize(n_images);

  std::vector<unsigned char> buf(n_pixels);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), n_pixels))
      throw IdxFormatError(images_path + ": truncated at image " +
                           std::to_string(i));
    for (std::size_t px = 0; px < n_pixels; ++px)
      ds.features(i, px) = buf[px] / 255.0;
  }
  std::vector<unsigned char> ybuf(n_labels);
  if (!lab.read(reinterpret_cast<char*>(ybuf.data()), n_labels))
    throw IdxFormatError(labels_path + ": truncated labels");
  for (std::uint32_t i = 0; i < n_labels; ++i) ds.labels[i] = ybuf[i];
  return ds;
}

FederationData partition_clustered(const ClientDataset& pool,
                                   const ClientDataset& test, int n_clients,
                                   int n_clusters, int n_classes,
                                   std::uint64_t seed) {
  if (n_clients % n_clusters != 0)
    throw std::invalid_argument(
        "partition_clustered: n_clusters must divide n_clients");
  if (n_classes % n_clusters != 0)
    throw std::invalid_argument(
        "partition_clustered: n_clusters must divide n_classes");
  validate_labels(pool.labels, n_classes, "partition_clustered");

  const int labels_per_cluster = n_classes / n_clusters;
  const int per_cluster = n_clients / n_clusters;

  std::vector<std::vector<int>> by_label(n_classes);
  for (int i = 0; i < pool.n_samples(); ++i)
    by_label[pool.labels[i]].push_back(i);

  std::vector<std::vector<int>> rows_of(n_clients);
  std::vector<int> cluster_of(n_clients);
  for (int k = 0; k < n_clients; ++k) cluster_of[k] = k / per_cluster;

  for (int y = 0; y < n_classes; ++y) {
    RngStream rng(seed, RngPurpose::data_gen, /*client=*/-3, /*round=*/y);
    auto& idx = by_label[y];
    // Fisher-Yates with our stream for reproducibility
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    const int cluster = y / labels_per_cluster;
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
      const int k = cluster * per_cluster + static_cast<int>(pos % per_cluster);
      rows_of[k].push_back(idx[pos]);
    }
  }

  FederationData fed;
  fed.n_classes = n_classes;
  fed.clients.resize(n_clients);
  for (int k = 0; k < n_clients; ++k) {
    if (rows_of[k].empty())
      throw std::runtime_error("partition_clustered: client " +
                               std::to_string(k) + " received no samples");
    ClientDataset& ds = fed.clients[k];
    ds.cluster_id = cluster_of[k];
    ds.features.resize(rows_of[k].size(), pool.n_features());
    ds.labels.resize(rows_of[k].size());
    for (std::size_t i = 0; i < rows_of[k].size(); ++i) {
      ds.features.row(i) = pool.features.row(rows_of[k][i]);
      ds.labels[i] = pool.labels[rows_of[k][i]];
    }
  }
  fed.test_set = test;
  fed.ground_truth_friends = friends_from_clusters(cluster_of);
  return fed;
}

FederationData partition_general(const ClientDataset& pool,
                                 const ClientDataset& test, int n_clients,
                                 int n_classes, double dirichlet_alpha,
                                 std::uint64_t seed) {
  if (!(dirichlet_alpha > 0.0))
    throw std::invalid_argument("partition_general: dirichlet_alpha must be > 0");
  validate_labels(pool.labels, n_classes, "partition_general");

  std::vector<std::vector<int>> by_label(n_classes);
  for (int i = 0; i < pool.n_samples(); ++i)
    by_label[pool.labels[i]].push_back(i);

  std::vector<std::vector<int>> rows_of(n_clients);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100)
      throw std::runtime_error(
          "partition_general: a client received no samples after 100 retries");
    for (auto& r : rows_of) r.clear();

    for (int y = 0; y < n_classes; ++y) {
      RngStream rng(seed + attempt, RngPurpose::data_gen, /*client=*/-3, y);
      auto& idx = by_label[y];
      for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
      // class-y mass per client ~ Dirichlet, allocated by largest remainder
      Eigen::VectorXd w(n_clients);
      double sum = 0.0;
      for (int k = 0; k < n_clients; ++k) {
        w(k) = rng.gamma(dirichlet_alpha);
        sum += w(k);
      }
      if (!(sum > 0.0)) continue;
      w /= sum;
      const int n = static_cast<int>(idx.size());
      std::vector<int> take(n_clients);
      std::vector<std::pair<double, int>> rem(n_clients);
      int assigned = 0;
      for (int k = 0; k < n_clients; ++k) {
        const double exact = w(k) * n;
        take[k] = static_cast<int>(exact);
        rem[k] = {exact - take[k], k};
        assigned += take[k];
      }
      std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      for (int i = 0; assigned < n; ++i, ++assigned) ++take[rem[i].second];
      int pos = 0;
      for (int k = 0; k < n_clients; ++k)
        for (int c = 0; c < take[k]; ++c) rows_of[k].push_back(idx[pos++]);
    }
    const bool all_nonempty =
        std::all_of(rows_of.begin(), rows_of.end(),
                    [](const auto& r) { return !r.empty(); });
    if (all_nonempty) break;
  }

  FederationData fed;
  fed.n_classes = n_classes;
  fed.clients.resize(n_clients);
  for (int k = 0; k < n_clients; ++k) {
    ClientDataset& ds = fed.clients[k];
    ds.features.resize(rows_of[k].size(), pool.n_features());
    ds.labels.resize(rows_of[k].size());
    for (std::size_t i = 0; i < rows_of[k].size(); ++i) {
      ds.features.row(i) = pool.features.row(rows_of[k][i]);
      ds.labels[i] = pool.labels[rows_of[k][i]];
    }
  }
  fed.test_set = test;
  return fed;
}

namespace {

json dataset_to_json(const ClientDataset& ds) {
  json j;
  if (ds.cluster_id) j["cluster_id"] = *ds.cluster_id;
  j["labels"] = ds.labels;
  json rows = json::array();
  for (int i = 0; i < ds.n_samples(); ++i) {
    json row = json::array();
    for (int f = 0; f < ds.n_features(); ++f) row.push_back(ds.features(i, f));
    rows.push_back(std::move(row));
  }
  j["features"] = std::move(rows);
  return j;
}

ClientDataset dataset_from_json(const json& j) {
  ClientDataset ds;
  if (j.contains("cluster_id") && !j["cluster_id"].is_null())
    ds.cluster_id = j["cluster_id"].get<int>();
  ds.labels = j.at("labels").get<std::vector<int>>();
  const auto& rows = j.at("features");
  const int n = static_cast<int>(rows.size());
  if (n != static_cast<int>(ds.labels.size()))
    throw std::invalid_argument("federation json: feature/label count mismatch");
  const int f = n > 0 ? static_cast<int>(rows[0].size()) : 0;
  ds.features.resize(n, f);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < f; ++c) ds.features(i, c) = rows[i][c].get<double>();
  return ds;
}

}  // namespace

void save_federation_json(const FederationData& fed, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["n_classes"] = fed.n_classes;
  json clients = json::array();
  for (const auto& c : fed.clients) clients.push_back(dataset_to_json(c));
  j["clients"] = std::move(clients);
  j["test_set"] = dataset_to_json(fed.test_set);
  if (fed.ground_truth_friends)
    j["ground_truth_friends"] = *fed.ground_truth_friends;
  else
    j["ground_truth_friends"] = nullptr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump();
  out << "\n";
}

FederationData load_federation_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  if (j.value("schema_version", 0) != 1)
    throw std::invalid_argument(path + ": unsupported federation schema");
  FederationData fed;
  fed.n_classes = j.at("n_classes").get<int>();
  for (const auto& c : j.at("clients")) {
    fed.clients.push_back(dataset_from_json(c));
    validate_labels(fed.clients.back().labels, fed.n_classes, "federation json");
  }
  fed.test_set = dataset_from_json(j.at("test_set"));
  validate_labels(fed.test_set.labels, fed.n_classes, "federation json");
  if (!j.at("ground_truth_friends").is_null())
    fed.ground_truth_friends =
        j["ground_truth_friends"].get<std::vector<std::vector<int>>>();
  return fed;
}

}  // namespace flsim
