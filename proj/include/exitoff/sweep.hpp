#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exitoff/config.hpp"
#include "exitoff/policy.hpp"

namespace exitoff {

// Comparison schemes, evaluated per grid point. The baselines live here (not
// in the core library): single-threshold exits tail at the first block n < N
// with C_n > tau and forces head at block N; terminal applies one threshold
// only at block N. Both scan tau in [0.5, 1) under the same constraints.
Decision single_threshold_classify(std::span<const double> scores, double tau,
                                   int n_blocks);
Decision terminal_classify(std::span<const double> scores, double tau);

struct SchemeResult {
  bool feasible = false;
  // dual scheme fills lo/hi; baselines fill tau.
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  double tau = std::numeric_limits<double>::quiet_NaN();
  double p_miss = std::numeric_limits<double>::quiet_NaN();
  double p_false = std::numeric_limits<double>::quiet_NaN();
  double p_off = std::numeric_limits<double>::quiet_NaN();
  double f_acc = std::numeric_limits<double>::quiet_NaN();
  double v_bits = std::numeric_limits<double>::quiet_NaN();
  double f_energy = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";  // ok | infeasible | failed
};

// Best feasible tau for a baseline (hard metrics, ties -> smaller tau).
SchemeResult best_single_threshold(const TracePopulation& pop,
                                   const EnergyModel& model,
                                   const ChannelState& ch,
                                   const Constraints& cons, int tau_points);
SchemeResult best_terminal_threshold(const TracePopulation& pop,
                                     const EnergyModel& model,
                                     const ChannelState& ch,
                                     const Constraints& cons, int tau_points);

struct SweepRow {
  double axis_value = 0;
  SchemeResult dual, single, terminal;
  // Simulator block, filled for SNR sweeps only.
  bool has_sim = false;
  std::int64_t m_off_cap = 0;
  double sim_p_off = std::numeric_limits<double>::quiet_NaN();
  double sim_p_miss = std::numeric_limits<double>::quiet_NaN();
  double sim_f_acc = std::numeric_limits<double>::quiet_NaN();
  double sim_energy_j = std::numeric_limits<double>::quiet_NaN();
  double sim_bits = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string constants_text;   // the dump_constants report
  std::string summary_json;     // serialized summary
  std::string sweep_csv;        // serialized rows (stable schema)
};

// Evaluates every grid point (optimizing the dual thresholds, scanning both
// baselines, and for SNR sweeps simulating through the lookup table), up to
// `workers` points concurrently; rows come back in grid order regardless of
// completion order.
SweepResult run_sweep(const ExperimentConfig& config, int workers = 1,
                      std::optional<std::uint64_t> seed_override = {});

// Writes sweep.csv, constants.txt, summary.json into out_dir.
void write_sweep_outputs(const SweepResult& result, const std::string& out_dir);

// Derived constants + feasibility floor for each SNR on the report grid
// (the sweep grid for SNR sweeps, otherwise snr_bins log-spaced points).
std::string dump_constants(const ExperimentConfig& config);

// Resolves the trace source (generation or load). Exposed for tests/tools.
TracePopulation materialize_traces(const ExperimentConfig& config,
                                   std::optional<std::uint64_t> seed_override = {});

}  // namespace exitoff
