#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exitoff/energy.hpp"
#include "exitoff/optimizer.hpp"
#include "exitoff/traces.hpp"

namespace exitoff {

enum class SweepAxis { OffloadConstraint, EnergyConstraint, Snr, ImbalanceRatio };

SweepAxis axis_from_string(const std::string& s);
std::string to_string(SweepAxis axis);

struct TraceSource {
  std::string csv_path;  // empty -> synthetic
  SyntheticSpec synthetic;
};

struct SweepSpec {
  SweepAxis axis = SweepAxis::OffloadConstraint;
  std::vector<double> grid;  // sorted ascending, nonempty
  int sim_intervals = 1;     // campaign length per SNR grid point
  std::string out_dir = "out";
};

struct BaselineSpec {
  int tau_points = 200;  // 1-D scan resolution for both baselines
};

// Parsed form of the flat TOML-like experiment file. Axis-value semantics:
//   offload_constraint — theta as a fraction of D*M
//   energy_constraint  — xi as a fraction of M*(E_loc(N) + E_off(snr))
//   snr                — channel SNR grid in dB
//   imbalance_ratio    — R values (synthetic traces only)
struct ExperimentConfig {
  TraceSource traces;
  EnergyModel energy;
  ChannelState channel;
  // Budgets are stored as fractions; absolute limits need the event count,
  // which a CSV trace source only reveals at load time.
  double offload_fraction = 0.5;  // theta = fraction * D * M
  double energy_fraction = 0.8;   // xi = fraction * M*(E_loc(N) + E_off(snr))
  PenaltyConfig penalty;
  SweepSpec sweep;
  BaselineSpec baselines;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& path);
// Same parser on an in-memory string; `name` labels errors.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& name);

// Absolute limits from the configured fractions for a population of
// m_events traces, priced at the config's reference channel.
Constraints resolve_constraints(const ExperimentConfig& config,
                                std::int64_t m_events);

}  // namespace exitoff
