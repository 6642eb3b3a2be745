#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exitoff/optimizer.hpp"

namespace exitoff {

// One coherence interval: constant channel, M events processed FIFO.
struct CoherenceInterval {
  double snr = 0;        // linear
  double bandwidth = 0;  // Hz (the channel's, constant across intervals)
  std::vector<ConfidenceTrace> events;
};

struct EventOutcome {
  EventClass label = EventClass::Head;  // local decision (server refinement
                                        // is tracked via offloaded flags)
  int exit_block = 0;   // 0 = ledger could not afford even block 1
  bool offloaded = false;
  bool truncated = false;  // traversal cut short by the energy ledger
  double energy = 0;       // joules spent on this event (local + transmit)
};

struct OffloadCap {
  std::int64_t cap = 0;
  bool budget_exhausted = false;  // negative budget inside the floor
};

struct PolicyDecision {
  std::optional<ThresholdPair> thresholds;  // none in pure-local mode
  std::int64_t m_off_cap = 0;
  bool pure_local = false;     // below floor or no usable bin
  bool fallback_bin = false;   // had to fall back to a lower bin (warning)
  bool budget_exhausted = false;
  std::vector<EventOutcome> outcomes;
  // Interval tallies.
  double energy_spent = 0;  // == sum of outcome energies, always <= xi
  double bits_sent = 0;
  std::int64_t n_offloaded = 0;
  std::int64_t n_tail_true = 0;           // ground-truth tails
  std::int64_t n_detected_tail_true = 0;  // tails locally detected as tail
  std::int64_t n_detected_tail_all = 0;   // tail detections, both classes
  std::int64_t n_credited = 0;  // offloaded true tails the server got right
};

// Proposition-2 cap: floor(B*(xi - M*e_loc_star*M_events...)/..) — precisely
// floor( B*log2(1+snr) * (xi - M*e_loc_star) / (P_tr*D) ), zero below the
// feasibility floor, zero-with-flag when the residual budget is negative.
// e_loc_star is the per-event expected local energy at thr_star.
OffloadCap offload_cap(const EnergyModel& model, const Constraints& cons,
                       const ChannelState& ch, const ThresholdPair& thr_star,
                       double e_loc_star);

// Replays one interval through the table: pick the bin (greatest edge <=
// snr; non-Ok bins fall back to the nearest lower Ok bin with a warning;
// nothing usable -> pure-local), classify events FIFO with hard_classify,
// offload tail detections while the cap and the energy ledger allow. The
// ledger gates local traversal too: an event is processed only as deep as
// the remaining budget affords (forced head at the truncation depth).
PolicyDecision run_interval(const CoherenceInterval& interval,
                            const LookupTable& table, const EnergyModel& model,
                            const Constraints& cons);

// Per-interval row plus campaign aggregates. Aggregates are ratio-of-sums
// (event-weighted), accumulated in a canonical order so interval permutation
// cannot change them.
struct IntervalRow {
  double snr = 0;
  bool pure_local = false;
  bool fallback_bin = false;
  std::int64_t m_off_cap = 0;
  std::int64_t n_events = 0;
  std::int64_t n_tail = 0;
  std::int64_t n_offloaded = 0;
  double p_off_emp = 0;  // offloads / events
  double p_miss = 0;     // NaN when the interval has no tails
  double f_acc = 0;      // NaN when the interval has no tails
  double energy_j = 0;
  double bits = 0;
};

struct SimulationReport {
  std::vector<IntervalRow> intervals;
  std::int64_t n_events = 0;
  std::int64_t n_tail = 0;
  std::int64_t n_offloaded = 0;
  double p_off = 0;
  double p_miss = 0;
  double f_acc = 0;
  double energy_j = 0;
  double bits = 0;
};

SimulationReport run_intervals(const std::vector<CoherenceInterval>& intervals,
                               const LookupTable& table,
                               const EnergyModel& model,
                               const Constraints& cons);

// Builds one interval per SNR: events are the population itself when its
// size equals cons.n_events, otherwise a with-replacement sample seeded by
// (seed, interval index) — independent of the SNR value.
SimulationReport run_campaign(const std::vector<double>& snrs,
                              double bandwidth, const TracePopulation& pop,
                              const LookupTable& table,
                              const EnergyModel& model, const Constraints& cons,
                              std::uint64_t seed);

void save_report_csv(const SimulationReport& report, const std::string& path);
void save_report_json(const SimulationReport& report, const std::string& path);

}  // namespace exitoff
