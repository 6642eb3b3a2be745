// exitoff: dual-threshold early-exit detection with channel-adaptive
// offloading. `exitoff sweep` evaluates an experiment grid and writes
// sweep.csv / constants.txt / summary.json; `exitoff constants` prints the
// derived optimization constants for a config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "exitoff/sweep.hpp"

namespace {

void write_error_record(const std::string& out_dir, const std::string& command,
                        const std::string& kind, const std::string& message) {
  try {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j{{"command", command}, {"error", kind},
                     {"message", message}};
    std::ofstream out(std::filesystem::path(out_dir) / "error.json");
    out << j.dump(2) << "\n";
  } catch (...) {
    // The record is best-effort; the exit status carries the failure.
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "event-triggered computation offloading: threshold optimization, "
      "baselines, and channel simulation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string axis_override;
  std::string out_override;
  int workers = 1;
  std::optional<std::uint64_t> seed;

  CLI::App* sweep = app.add_subcommand("sweep", "run the configured sweep");
  sweep->add_option("--config", config_path, "experiment config file")
      ->required();
  sweep->add_option("--sweep", axis_override,
                    "override the sweep axis (offload_constraint, "
                    "energy_constraint, snr, imbalance_ratio)");
  sweep->add_option("--out", out_override, "output directory override");
  sweep->add_option("--workers", workers, "concurrent grid points")
      ->check(CLI::PositiveNumber);
  sweep->add_option_function<std::uint64_t>(
      "--seed", [&seed](const std::uint64_t& s) { seed = s; },
      "override the trace/simulation seed");

  std::string const_config;
  std::string const_out;
  CLI::App* constants =
      app.add_subcommand("constants", "print derived optimization constants");
  constants->add_option("--config", const_config, "experiment config file")
      ->required();
  constants->add_option("--out", const_out,
                        "write to DIR/constants.txt instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (sweep->parsed()) {
    std::string out_dir = out_override;
    try {
      exitoff::ExperimentConfig config = exitoff::parse_config(config_path);
      if (!axis_override.empty()) {
        config.sweep.axis = exitoff::axis_from_string(axis_override);
        config.validate();
      }
      if (out_dir.empty()) out_dir = config.sweep.out_dir;
      exitoff::SweepResult result = exitoff::run_sweep(config, workers, seed);
      exitoff::write_sweep_outputs(result, out_dir);
      std::cout << "wrote " << result.rows.size() << " grid points to "
                << out_dir << "\n";
      return 0;
    } catch (const exitoff::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      if (!out_dir.empty()) {
        write_error_record(out_dir, "sweep", "exitoff", e.what());
      }
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      if (!out_dir.empty()) {
        write_error_record(out_dir, "sweep", "internal", e.what());
      }
      return 1;
    }
  }

  if (constants->parsed()) {
    try {
      exitoff::ExperimentConfig config = exitoff::parse_config(const_config);
      std::string report = exitoff::dump_constants(config);
      if (const_out.empty()) {
        std::cout << report;
      } else {
        std::filesystem::create_directories(const_out);
        const auto path = std::filesystem::path(const_out) / "constants.txt";
        std::ofstream out(path);
        if (!out) throw exitoff::Error("cannot open " + path.string());
        out << report;
        std::cout << "wrote " << path.string() << "\n";
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      if (!const_out.empty()) {
        write_error_record(const_out, "constants", "exitoff", e.what());
      }
      return 1;
    }
  }
  return 1;
}
