#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flsim/harness.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace flsim;
namespace fs = std::filesystem;

namespace {

// quick desk config: 8 clients, 4 clusters, tiny data, 30 rounds
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.data.kind = "clustered";
  cfg.data.clustered.n_clients = 8;
  cfg.data.clustered.n_clusters = 4;
  cfg.data.clustered.labels_per_cluster = 2;
  cfg.data.clustered.n_classes = 8;
  cfg.data.clustered.samples_per_client = 60;
  cfg.data.clustered.noise_scale = 0.6;
  cfg.data.clustered.n_features = 6;
  cfg.data.clustered.test_size = 200;
  cfg.model = ModelSpec{ModelKind::softmax_regression, 6, 8, 0, 0.01};
  cfg.train = LocalTrainConfig{0.05, 3, 16};
  cfg.dropout.kind = DropoutKind::iid_random;
  cfg.dropout.alpha = 0.5;
  cfg.dropout.rounds = 30;
  cfg.seeds = {5};
  cfg.output_dir = out_dir;
  cfg.n_threads = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config validation reports the offending field") {
  auto cfg = tiny_config("x");
  cfg.dropout.alpha = 1.2;
  CHECK_THROWS_WITH_AS(cfg.validate(),
                       doctest::Contains("dropout.alpha"), ConfigError);

  cfg = tiny_config("x");
  cfg.strategies.clear();
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("strategies"),
                       ConfigError);

  cfg = tiny_config("x");
  cfg.train.batch_size = 100;  // > samples_per_client
  CHECK_THROWS_WITH_AS(cfg.validate(),
                       doctest::Contains("samples_per_client"), ConfigError);

  cfg = tiny_config("x");
  cfg.similarity.score = "what";
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("similarity.score"),
                       ConfigError);

  cfg = tiny_config("x");
  cfg.similarity.elimination.enabled = true;
  cfg.similarity.elimination.beta = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("beta"), ConfigError);
}

TEST_CASE("config json round trip") {
  auto cfg = tiny_config("somewhere");
  cfg.similarity.elimination.enabled = true;
  cfg.similarity.elimination.beta = 0.3;
  cfg.strategies = {Strategy::fdms, Strategy::stale};
  cfg.seeds = {1, 2, 3};
  const auto j = cfg.to_json();
  const auto back = ExperimentConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.data.clustered.n_clients == 8);
  CHECK(back.strategies == cfg.strategies);
  CHECK(back.similarity.elimination.beta == 0.3);
}

TEST_CASE("config file errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_file("/nonexistent/c.json"),
                  ConfigError);
  TempDir dir("flsim_cfg_test");
  const auto bad = dir.path / "bad.json";
  {
    std::ofstream out(bad);
    out << "{not json";
  }
  CHECK_THROWS_AS(ExperimentConfig::from_json_file(bad.string()), ConfigError);
}

TEST_CASE("alpha zero: full and naive trajectories are bit-identical") {
  TempDir dir("flsim_alpha0");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.dropout.alpha = 0.0;
  cfg.strategies = {Strategy::full, Strategy::naive_dropout};
  const auto out = run_experiment(cfg);

  const auto& full = out.records.at({0, Strategy::full});
  const auto& naive = out.records.at({0, Strategy::naive_dropout});
  REQUIRE(full.size() == naive.size());
  for (std::size_t t = 0; t < full.size(); ++t) {
    CHECK(full[t].test_accuracy == naive[t].test_accuracy);
    CHECK(full[t].test_loss == naive[t].test_loss);
    CHECK(full[t].e_sq == 0.0);
    CHECK(naive[t].e_sq == 0.0);
  }
}

TEST_CASE("duplicate seeds give bit-identical summaries") {
  TempDir dir("flsim_dupseed");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.seeds = {7, 7};
  cfg.strategies = {Strategy::fdms};
  const auto out = run_experiment(cfg);
  REQUIRE(out.summaries.size() == 2);
  CHECK(out.summaries[0].final_accuracy == out.summaries[1].final_accuracy);
  CHECK(out.summaries[0].cumulative_e_sq == out.summaries[1].cumulative_e_sq);
  CHECK(out.summaries[0].total_comp_count == out.summaries[1].total_comp_count);
  const auto a = slurp(dir.path / "out/run_000_seed_7/rounds_fdms.csv");
  const auto b = slurp(dir.path / "out/run_001_seed_7/rounds_fdms.csv");
  CHECK(a == b);
}

TEST_CASE("same config twice: byte-identical csv outputs") {
  TempDir dir("flsim_det");
  auto cfg = tiny_config((dir.path / "a").string());
  cfg.strategies = {Strategy::full, Strategy::naive_dropout, Strategy::stale,
                    Strategy::fdms};
  cfg.debug_pairing_check = true;
  run_experiment(cfg);
  cfg.output_dir = (dir.path / "b").string();
  cfg.n_threads = 1;  // thread count must not change results
  run_experiment(cfg);

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir.path / "a")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv")
      continue;
    const auto rel = fs::relative(entry.path(), dir.path / "a");
    CHECK(slurp(entry.path()) == slurp(dir.path / "b" / rel));
    ++compared;
  }
  CHECK(compared >= 9);  // 4 rounds + 4 substitutes + similarity + summary
}

TEST_CASE("round 0 pairs strategies through shared oracle updates") {
  // before any similarity is learned fdms falls back to the naive mean, so
  // both strategies apply the same aggregate at t=0
  TempDir dir("flsim_pair");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.strategies = {Strategy::naive_dropout, Strategy::fdms};
  const auto out = run_experiment(cfg);
  const auto& naive = out.records.at({0, Strategy::naive_dropout});
  const auto& fdms = out.records.at({0, Strategy::fdms});
  // the all-fallback aggregate equals the naive one up to the Eq.6 identity
  CHECK(fdms[0].e_sq == doctest::Approx(naive[0].e_sq).epsilon(1e-9));
  CHECK(naive[0].test_accuracy == fdms[0].test_accuracy);
  CHECK(fdms[0].fallback_count == naive[0].n_dropped);
}

TEST_CASE("divergence is recorded without killing sibling strategies") {
  TempDir dir("flsim_div");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.train.eta_local = 1e150;  // one step saturates the softmax
  cfg.data.clustered.noise_scale = 50.0;  // inseparable: some -log(0) is hit
  cfg.strategies = {Strategy::naive_dropout};
  auto out = run_experiment(cfg);
  REQUIRE(out.summaries.size() == 1);
  CHECK(out.summaries[0].diverged);
  CHECK(!out.summaries[0].divergence_message.empty());
  // partial rounds csv flushed with header
  CHECK(fs::exists(dir.path / "out/run_000_seed_5/rounds_naive_dropout.csv"));
}

TEST_CASE("outputs stay inside output_dir and charts render") {
  TempDir dir("flsim_outputs");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.strategies = {Strategy::full, Strategy::fdms};
  cfg.heterogeneity.enabled = true;
  cfg.heterogeneity.n_repeats = 1;
  cfg.similarity.snapshot_every = 10;
  const auto out = run_experiment(cfg);

  CHECK(fs::exists(dir.path / "out/config.json"));
  CHECK(fs::exists(dir.path / "out/summary.csv"));
  CHECK(fs::exists(dir.path / "out/heterogeneity.csv"));
  CHECK(fs::exists(dir.path / "out/run_000_seed_5/rounds_full.csv"));
  CHECK(fs::exists(dir.path / "out/run_000_seed_5/similarity_fdms.csv"));
  CHECK(fs::exists(dir.path / "out/charts/accuracy.svg"));
  CHECK(fs::exists(dir.path / "out/charts/substitution_error.svg"));
  CHECK(fs::exists(dir.path / "out/charts/comp_count.svg"));
  CHECK(fs::exists(dir.path / "out/charts/similarity_heatmap.svg"));

  // nothing written outside the requested directory
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);

  REQUIRE(!out.heterogeneity.empty());
  REQUIRE(out.heterogeneity[0].sigma2_f_hat.has_value());
  CHECK(*out.heterogeneity[0].sigma2_f_hat <=
        out.heterogeneity[0].sigma2_p_hat);
}

TEST_CASE("env var overrides output_dir") {
  TempDir dir("flsim_env");
  auto cfg = tiny_config((dir.path / "ignored").string());
  cfg.strategies = {Strategy::full};
  cfg.dropout.rounds = 3;
  const auto target = (dir.path / "env_target").string();
  setenv("FLSIM_OUTPUT_DIR", target.c_str(), 1);
  const auto out = run_experiment(cfg);
  unsetenv("FLSIM_OUTPUT_DIR");
  CHECK(out.output_dir == target);
  CHECK(fs::exists(fs::path(target) / "summary.csv"));
  CHECK_FALSE(fs::exists(dir.path / "ignored"));
}

TEST_CASE("heat map skipped with notice when only full runs") {
  TempDir dir("flsim_noheat");
  auto cfg = tiny_config((dir.path / "out").string());
  cfg.strategies = {Strategy::full};
  cfg.dropout.rounds = 4;
  run_experiment(cfg);
  CHECK(fs::exists(dir.path / "out/charts/accuracy.svg"));
  CHECK_FALSE(fs::exists(dir.path / "out/charts/similarity_heatmap.svg"));
}

TEST_CASE("federation file round trip through the harness") {
  TempDir dir("flsim_fedfile");
  const auto cfg = tiny_config((dir.path / "out").string());
  const auto fed = build_federation(cfg.data, 5);
  const auto fed_path = (dir.path / "fed.json").string();
  save_federation_json(fed, fed_path);

  auto cfg2 = cfg;
  cfg2.data.kind = "file";
  cfg2.data.federation_path = fed_path;
  cfg2.dropout.rounds = 5;
  cfg2.strategies = {Strategy::naive_dropout};
  const auto out = run_experiment(cfg2);
  CHECK(out.summaries[0].final_accuracy >= 0.0);
}

TEST_CASE("intra/inter similarity summary") {
  Eigen::MatrixXd scores(4, 4);
  scores.setConstant(std::nan(""));
  scores(0, 1) = scores(1, 0) = 0.9;
  scores(2, 3) = scores(3, 2) = 0.8;
  scores(0, 2) = scores(2, 0) = 0.3;
  const std::vector<std::vector<int>> friends{{1}, {0}, {3}, {2}};
  const auto [intra, inter] = intra_inter_similarity(scores, friends);
  CHECK(intra == doctest::Approx(0.85));
  CHECK(inter == doctest::Approx(0.3));
}
