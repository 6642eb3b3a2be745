#pragma once

#include <cstdint>
#include <vector>

#include "exitoff/detector.hpp"
#include "exitoff/traces.hpp"

namespace exitoff {

// Device-side energy accounting: per-block memory-access counts, energy per
// access, and the fixed feature payload shipped on every offload.
struct EnergyModel {
  std::vector<std::int64_t> mem_ops;  // S_i^mem, one positive count per block
  double energy_per_access = 0;       // joules per access
  double payload_bits = 0;            // D, bits per offloaded event
  double tx_power = 0;                // P_tr, watts

  void validate() const;  // throws InvalidArgument
  int n_blocks() const { return static_cast<int>(mem_ops.size()); }
};

struct ChannelState {
  double snr = 0;        // linear, >= 0
  double bandwidth = 0;  // Hz, > 0
  void validate() const;
};

// Per-coherence-interval budgets.
struct Constraints {
  double data_volume_limit = 0;  // theta, bits
  double energy_limit = 0;       // xi, joules
  std::int64_t n_events = 0;     // M
  void validate() const;
};

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

// Shannon rate B*log2(1+snr), bits/second.
double transmission_rate(const ChannelState& ch);

// Energy to push the cumulative feature stack through blocks 1..n.
double cumulative_local_energy(const EnergyModel& model, int n);

// P_tr * D / rate, joules per offloaded event. Throws InfeasibleChannel when
// the rate is zero.
double offload_energy(const EnergyModel& model, const ChannelState& ch);

struct EnergyBreakdown {
  double e_loc = 0;    // per-event expected local energy
  double e_off = 0;    // per-event expected transmit energy
  double e_total = 0;  // sum of the two
};

// Expectation of the per-event energy under the exit distribution induced by
// thr (hard counts or smooth masses, matching population_metrics).
EnergyBreakdown expected_energy(const TracePopulation& pop,
                                const ThresholdPair& thr,
                                const EnergyModel& model,
                                const ChannelState& ch, MetricMode mode,
                                double alpha = 50.0);

// population_metrics with the energy fields filled in.
DetectionMetrics population_metrics(const TracePopulation& pop,
                                    const ThresholdPair& thr,
                                    const EnergyModel& model,
                                    const ChannelState& ch, MetricMode mode,
                                    double alpha = 50.0);

// Gradient of the per-event energy expectations (smooth mode).
std::array<double, 2> metrics_gradient(const TracePopulation& pop,
                                       const ThresholdPair& thr, double alpha,
                                       MetricKind kind,
                                       const EnergyModel& model,
                                       const ChannelState& ch);

// Minimum linear SNR at which one offload fits the energy budget left after
// running every event through block 1: 2^(P_tr*D / (B*(xi - M*E_loc(1)))) - 1.
// Throws InfeasibleBudget when even the block-1 local pass exceeds xi.
double feasibility_snr_floor(const EnergyModel& model, const ChannelState& ch,
                             const Constraints& cons);

}  // namespace exitoff
