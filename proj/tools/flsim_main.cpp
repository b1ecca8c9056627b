// flsim: FedAvg-under-dropout simulator with friend model substitution.
//
// Subcommands:
//   generate-data  write a federation JSON from a config's data section
//   run            run the experiment described by a config file
//   sweep          repeat the experiment across a list of dropout ratios
//   report         re-render charts from a run directory's CSVs
//
// Exit codes: 0 success, 1 validation/config error, 2 divergence abort.

#include "flsim/harness.hpp"
#include "flsim/svg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;

namespace {

int run_config(flsim::ExperimentConfig cfg) {
  const auto out = flsim::run_experiment(cfg);
  bool diverged = false;
  for (const auto& s : out.summaries)
    if (s.diverged) {
      std::cerr << "[flsim] divergence in run " << s.run_index << " ("
                << flsim::to_string(s.strategy)
                << "): " << s.divergence_message << "\n";
      diverged = true;
    }
  std::cout << "[flsim] outputs in " << out.output_dir << "\n";
  return diverged ? 2 : 0;
}

int cmd_generate_data(const std::string& config_path, const std::string& out_path,
                      std::uint64_t seed) {
  auto cfg = flsim::ExperimentConfig::from_json_file(config_path);
  cfg.validate();
  const auto fed = flsim::build_federation(cfg.data, seed);
  flsim::save_federation_json(fed, out_path);
  std::cout << "[flsim] wrote " << fed.n_clients() << " clients to " << out_path
            << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  std::map<std::string, std::vector<flsim::RoundRecord>> curves;
  std::optional<Eigen::MatrixXd> heat;

  for (const auto& run_entry : fs::directory_iterator(dir)) {
    if (!run_entry.is_directory()) continue;
    const std::string run_name = run_entry.path().filename().string();
    if (run_name.rfind("run_", 0) != 0) continue;
    for (const auto& f : fs::directory_iterator(run_entry.path())) {
      const std::string name = f.path().filename().string();
      if (name.rfind("rounds_", 0) == 0 && f.path().extension() == ".csv") {
        const std::string strategy =
            name.substr(7, name.size() - 7 - 4);  // rounds_<s>.csv
        curves[strategy + ":" + run_name] =
            flsim::read_round_csv(f.path().string());
      }
    }
  }
  if (curves.empty()) {
    std::cerr << "[flsim] no rounds_*.csv found under " << dir << "\n";
    return 1;
  }
  flsim::emit_charts((fs::path(dir) / "charts").string(), curves, heat);
  std::cout << "[flsim] charts re-rendered under " << dir << "/charts\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated-learning dropout simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path = "federation.json", report_dir;
  std::uint64_t seed = 1;
  std::vector<double> alphas;
  std::string output_root;

  auto* gen = app.add_subcommand("generate-data",
                                 "write a federation JSON for replay");
  gen->add_option("--config", config_path, "experiment config JSON")
      ->required();
  gen->add_option("--out", out_path, "output federation file");
  gen->add_option("--seed", seed, "generation seed");

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "experiment config JSON")
      ->required();

  auto* sweep = app.add_subcommand("sweep",
                                   "run the config across dropout ratios");
  sweep->add_option("--config", config_path, "experiment config JSON")
      ->required();
  sweep->add_option("--alphas", alphas, "comma-separated dropout ratios")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out-root", output_root,
                    "root directory for the per-alpha experiments");

  auto* report = app.add_subcommand("report",
                                    "re-render charts from CSV outputs");
  report->add_option("--dir", report_dir, "experiment output directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(config_path, out_path, seed);
    if (run->parsed()) {
      auto cfg = flsim::ExperimentConfig::from_json_file(config_path);
      return run_config(cfg);
    }
    if (sweep->parsed()) {
      auto base = flsim::ExperimentConfig::from_json_file(config_path);
      const std::string root =
          output_root.empty() ? base.output_dir : output_root;
      int exit_code = 0;
      for (double a : alphas) {
        auto cfg = base;
        cfg.dropout.alpha = a;
        char sub[32];
        std::snprintf(sub, sizeof(sub), "alpha_%g", a);
        cfg.output_dir = (fs::path(root) / sub).string();
        std::cout << "[flsim] sweep alpha=" << a << " -> " << cfg.output_dir
                  << "\n";
        exit_code = std::max(exit_code, run_config(cfg));
      }
      return exit_code;
    }
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const flsim::ConfigError& e) {
    std::cerr << "[flsim] config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "[flsim] invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[flsim] error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
