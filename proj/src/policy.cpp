#include "exitoff/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "exitoff/numerics.hpp"

namespace exitoff {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ratio(double num, double den) {
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / den;
}

}  // namespace

OffloadCap offload_cap(const EnergyModel& model, const Constraints& cons,
                       const ChannelState& ch, const ThresholdPair&,
                       double e_loc_star) {
  model.validate();
  cons.validate();
  ch.validate();
  if (!(e_loc_star >= 0.0 && std::isfinite(e_loc_star))) {
    throw InvalidArgument("offload_cap: e_loc_star must be finite and >= 0");
  }
  double floor = 0;
  try {
    floor = feasibility_snr_floor(model, ch, cons);
  } catch (const InfeasibleBudget&) {
    return {0, true};
  }
  if (ch.snr < floor) return {0, false};
  const double residual =
      cons.energy_limit -
      static_cast<double>(cons.n_events) * e_loc_star;
  if (residual < 0.0) return {0, true};
  const double raw =
      transmission_rate(ch) * residual / (model.tx_power * model.payload_bits);
  return {static_cast<std::int64_t>(std::floor(raw)), false};
}

PolicyDecision run_interval(const CoherenceInterval& interval,
                            const LookupTable& table, const EnergyModel& model,
                            const Constraints& cons) {
  model.validate();
  cons.validate();
  ChannelState ch{interval.snr, interval.bandwidth};
  ch.validate();

  PolicyDecision dec;

  // Bin selection: greatest edge <= snr; non-Ok bins fall back to the nearest
  // lower Ok bin; nothing usable (or below the floor) -> pure local.
  const LookupEntry* bin = nullptr;
  if (interval.snr >= table.feasibility_floor()) {
    const LookupEntry* hit = table.find(interval.snr);
    if (hit != nullptr) {
      const auto& entries = table.entries();
      auto idx = static_cast<std::size_t>(hit - entries.data());
      for (std::size_t i = idx + 1; i-- > 0;) {
        if (entries[i].status == BinStatus::Ok) {
          bin = &entries[i];
          dec.fallback_bin = (i != idx);
          break;
        }
      }
    }
  }
  dec.pure_local = (bin == nullptr);

  double e_off_event = std::numeric_limits<double>::infinity();
  const double rate = transmission_rate(ch);
  if (!dec.pure_local) {
    dec.thresholds = ThresholdPair(bin->beta_low, bin->beta_up);
    // Per-event local energy at the bin's operating point, reconstructed from
    // the stored totals (transmit side uses the bin-edge rate the optimizer
    // saw).
    const double bin_rate =
        transmission_rate(ChannelState{bin->snr_lo, interval.bandwidth});
    const double e_loc_star =
        (bin->f_energy - model.tx_power * bin->v_bits / bin_rate) /
        static_cast<double>(cons.n_events);
    OffloadCap cap = offload_cap(model, cons, ch, *dec.thresholds,
                                 std::max(0.0, e_loc_star));
    dec.m_off_cap = cap.cap;
    dec.budget_exhausted = cap.budget_exhausted;
    if (rate > 0.0) e_off_event = offload_energy(model, ch);
  }

  std::vector<double> block_cost(static_cast<std::size_t>(model.n_blocks()));
  for (int i = 0; i < model.n_blocks(); ++i) {
    block_cost[static_cast<std::size_t>(i)] =
        model.energy_per_access *
        static_cast<double>(model.mem_ops[static_cast<std::size_t>(i)]);
  }

  double remaining = cons.energy_limit;
  KahanSum spent_total;
  dec.outcomes.reserve(interval.events.size());
  for (const auto& ev : interval.events) {
    if (static_cast<int>(ev.scores.size()) != model.n_blocks()) {
      throw InvalidArgument("run_interval: event depth mismatch");
    }
    EventOutcome out;
    double spent = 0;
    const int n = model.n_blocks();
    int depth = 0;
    bool tail_candidate = false;
    for (int b = 0; b < n; ++b) {
      const double cost = block_cost[static_cast<std::size_t>(b)];
      if (cost > remaining) {
        out.truncated = true;
        break;
      }
      remaining -= cost;
      spent += cost;
      depth = b + 1;
      if (dec.pure_local) continue;  // no early exits without thresholds
      const double c = ev.scores[static_cast<std::size_t>(b)];
      if (b < n - 1) {
        if (c < dec.thresholds->lo) break;
        if (c > dec.thresholds->hi) {
          tail_candidate = true;
          break;
        }
      } else if (c > dec.thresholds->hi) {
        tail_candidate = true;
      }
    }
    out.exit_block = depth;
    if (tail_candidate && !out.truncated) {
      out.label = EventClass::Tail;
      if (dec.n_offloaded < dec.m_off_cap && e_off_event <= remaining) {
        remaining -= e_off_event;
        spent += e_off_event;
        out.offloaded = true;
        ++dec.n_offloaded;
        dec.bits_sent += model.payload_bits;
        if (ev.label == EventClass::Tail && ev.server_correct) {
          ++dec.n_credited;
        }
      }
    }
    out.energy = spent;
    spent_total.add(spent);
    if (ev.label == EventClass::Tail) ++dec.n_tail_true;
    if (out.label == EventClass::Tail) {
      ++dec.n_detected_tail_all;
      if (ev.label == EventClass::Tail) ++dec.n_detected_tail_true;
    }
    dec.outcomes.push_back(out);
  }
  dec.energy_spent = spent_total.value();
  return dec;
}

SimulationReport run_intervals(const std::vector<CoherenceInterval>& intervals,
                               const LookupTable& table,
                               const EnergyModel& model,
                               const Constraints& cons) {
  SimulationReport rep;
  rep.intervals.reserve(intervals.size());
  std::int64_t credited = 0, detected_true = 0;
  for (const auto& iv : intervals) {
    PolicyDecision d = run_interval(iv, table, model, cons);
    IntervalRow row;
    row.snr = iv.snr;
    row.pure_local = d.pure_local;
    row.fallback_bin = d.fallback_bin;
    row.m_off_cap = d.m_off_cap;
    row.n_events = static_cast<std::int64_t>(iv.events.size());
    row.n_tail = d.n_tail_true;
    row.n_offloaded = d.n_offloaded;
    row.p_off_emp = ratio(static_cast<double>(d.n_offloaded),
                          static_cast<double>(row.n_events));
    row.p_miss = ratio(static_cast<double>(d.n_tail_true -
                                           d.n_detected_tail_true),
                       static_cast<double>(d.n_tail_true));
    row.f_acc = ratio(static_cast<double>(d.n_credited),
                      static_cast<double>(d.n_tail_true));
    row.energy_j = d.energy_spent;
    row.bits = d.bits_sent;
    rep.intervals.push_back(row);

    rep.n_events += row.n_events;
    rep.n_tail += d.n_tail_true;
    rep.n_offloaded += d.n_offloaded;
    credited += d.n_credited;
    detected_true += d.n_detected_tail_true;
  }
  // Float totals are summed in a canonical (sorted) order so shuffling the
  // interval list cannot perturb the aggregate in the last bits.
  std::vector<double> energies, bits;
  energies.reserve(rep.intervals.size());
  bits.reserve(rep.intervals.size());
  for (const auto& r : rep.intervals) {
    energies.push_back(r.energy_j);
    bits.push_back(r.bits);
  }
  std::sort(energies.begin(), energies.end());
  std::sort(bits.begin(), bits.end());
  KahanSum se, sb;
  for (double v : energies) se.add(v);
  for (double v : bits) sb.add(v);
  rep.energy_j = se.value();
  rep.bits = sb.value();
  rep.p_off = ratio(static_cast<double>(rep.n_offloaded),
                    static_cast<double>(rep.n_events));
  rep.p_miss = ratio(static_cast<double>(rep.n_tail - detected_true),
                     static_cast<double>(rep.n_tail));
  rep.f_acc =
      ratio(static_cast<double>(credited), static_cast<double>(rep.n_tail));
  return rep;
}

SimulationReport run_campaign(const std::vector<double>& snrs,
                              double bandwidth, const TracePopulation& pop,
                              const LookupTable& table,
                              const EnergyModel& model, const Constraints& cons,
                              std::uint64_t seed) {
  std::vector<CoherenceInterval> intervals;
  intervals.reserve(snrs.size());
  const bool pass_through =
      static_cast<std::int64_t>(pop.size()) == cons.n_events;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    CoherenceInterval iv;
    iv.snr = snrs[i];
    iv.bandwidth = bandwidth;
    if (pass_through) {
      iv.events.assign(pop.traces().begin(), pop.traces().end());
    } else {
      // Interval i always draws the same events for a given seed, no matter
      // what SNR it carries.
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(i + 1)));
      iv.events.reserve(static_cast<std::size_t>(cons.n_events));
      for (std::int64_t k = 0; k < cons.n_events; ++k) {
        iv.events.push_back(pop[rng() % pop.size()]);
      }
    }
    intervals.push_back(std::move(iv));
  }
  return run_intervals(intervals, table, model, cons);
}

void save_report_csv(const SimulationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << "snr,pure_local,fallback_bin,m_off_cap,n_events,n_tail,n_offloaded,"
         "p_off_emp,p_miss,f_acc,energy_j,bits\n";
  for (const auto& r : report.intervals) {
    out << fmt(r.snr) << ',' << (r.pure_local ? 1 : 0) << ','
        << (r.fallback_bin ? 1 : 0) << ',' << r.m_off_cap << ',' << r.n_events
        << ',' << r.n_tail << ',' << r.n_offloaded << ',' << fmt(r.p_off_emp)
        << ',' << fmt(r.p_miss) << ',' << fmt(r.f_acc) << ','
        << fmt(r.energy_j) << ',' << fmt(r.bits) << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

void save_report_json(const SimulationReport& report, const std::string& path) {
  nlohmann::json j;
  j["aggregate"] = {
      {"n_events", report.n_events},   {"n_tail", report.n_tail},
      {"n_offloaded", report.n_offloaded}, {"p_off", report.p_off},
      {"p_miss", report.p_miss},       {"f_acc", report.f_acc},
      {"energy_j", report.energy_j},   {"bits", report.bits},
  };
  auto rows = nlohmann::json::array();
  for (const auto& r : report.intervals) {
    rows.push_back({{"snr", r.snr},
                    {"pure_local", r.pure_local},
                    {"fallback_bin", r.fallback_bin},
                    {"m_off_cap", r.m_off_cap},
                    {"n_events", r.n_events},
                    {"n_tail", r.n_tail},
                    {"n_offloaded", r.n_offloaded},
                    {"p_off_emp", r.p_off_emp},
                    {"p_miss", r.p_miss},
                    {"f_acc", r.f_acc},
                    {"energy_j", r.energy_j},
                    {"bits", r.bits}});
  }
  j["intervals"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed: " + path);
}

}  // namespace exitoff
