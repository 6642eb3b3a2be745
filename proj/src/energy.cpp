#include "exitoff/energy.hpp"

#include <cmath>

#include "exitoff/errors.hpp"
#include "exitoff/numerics.hpp"

namespace exitoff {

void EnergyModel::validate() const {
  if (mem_ops.empty()) throw InvalidArgument("EnergyModel: mem_ops empty");
  for (auto s : mem_ops) {
    if (s <= 0) throw InvalidArgument("EnergyModel: mem_ops must be positive");
  }
  if (!(energy_per_access > 0.0 && std::isfinite(energy_per_access))) {
    throw InvalidArgument("EnergyModel: energy_per_access must be positive");
  }
  if (!(payload_bits > 0.0 && std::isfinite(payload_bits))) {
    throw InvalidArgument("EnergyModel: payload_bits must be positive");
  }
  if (!(tx_power > 0.0 && std::isfinite(tx_power))) {
    throw InvalidArgument("EnergyModel: tx_power must be positive");
  }
}

void ChannelState::validate() const {
  if (!(std::isfinite(snr) && snr >= 0.0)) {
    throw InvalidArgument("ChannelState: snr must be finite and >= 0");
  }
  if (!(bandwidth > 0.0 && std::isfinite(bandwidth))) {
    throw InvalidArgument("ChannelState: bandwidth must be positive");
  }
}

void Constraints::validate() const {
  if (!(data_volume_limit > 0.0 && std::isfinite(data_volume_limit))) {
    throw InvalidArgument("Constraints: data_volume_limit must be positive");
  }
  if (!(energy_limit > 0.0 && std::isfinite(energy_limit))) {
    throw InvalidArgument("Constraints: energy_limit must be positive");
  }
  if (n_events < 1) throw InvalidArgument("Constraints: n_events >= 1");
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double watts_to_dbm(double watts) {
  if (!(watts > 0.0)) throw InvalidArgument("watts_to_dbm: watts must be > 0");
  return 10.0 * std::log10(watts) + 30.0;
}

double transmission_rate(const ChannelState& ch) {
  ch.validate();
  return ch.bandwidth * std::log2(1.0 + ch.snr);
}

double cumulative_local_energy(const EnergyModel& model, int n) {
  model.validate();
  if (n < 1 || n > model.n_blocks()) {
    throw InvalidArgument("cumulative_local_energy: block index out of range");
  }
  std::int64_t accesses = 0;
  for (int i = 0; i < n; ++i) accesses += model.mem_ops[static_cast<std::size_t>(i)];
  return model.energy_per_access * static_cast<double>(accesses);
}

double offload_energy(const EnergyModel& model, const ChannelState& ch) {
  model.validate();
  double rate = transmission_rate(ch);
  if (!(rate > 0.0)) {
    throw InfeasibleChannel("offload_energy: zero transmission rate");
  }
  return model.tx_power * model.payload_bits / rate;
}

namespace {

std::vector<double> cumulative_energies(const EnergyModel& model) {
  std::vector<double> cum(static_cast<std::size_t>(model.n_blocks()));
  std::int64_t accesses = 0;
  for (int i = 0; i < model.n_blocks(); ++i) {
    accesses += model.mem_ops[static_cast<std::size_t>(i)];
    cum[static_cast<std::size_t>(i)] =
        model.energy_per_access * static_cast<double>(accesses);
  }
  return cum;
}

}  // namespace

EnergyBreakdown expected_energy(const TracePopulation& pop,
                                const ThresholdPair& thr,
                                const EnergyModel& model,
                                const ChannelState& ch, MetricMode mode,
                                double alpha) {
  model.validate();
  if (model.n_blocks() != pop.n_blocks()) {
    throw InvalidArgument("expected_energy: model/population depth mismatch");
  }
  const double e_off_event = offload_energy(model, ch);
  const auto cum = cumulative_energies(model);
  const double m = static_cast<double>(pop.size());

  KahanSum local;
  KahanSum tail_mass;  // over all events — false alarms transmit too
  if (mode == MetricMode::Hard) {
    for (const auto& t : pop.traces()) {
      Decision d = hard_classify(t, thr);
      local.add(cum[static_cast<std::size_t>(d.exit_block - 1)]);
      if (d.label == EventClass::Tail) tail_mass.add(1.0);
    }
  } else {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    for (const auto& t : pop.traces()) {
      auto ev = eval_trace_smooth(t.scores, thr.lo, thr.hi, alpha, cum);
      local.add(ev.weighted_mass);
      tail_mass.add(ev.tail_mass);
    }
  }
  EnergyBreakdown out;
  out.e_loc = local.value() / m;
  out.e_off = e_off_event * tail_mass.value() / m;
  out.e_total = out.e_loc + out.e_off;
  return out;
}

DetectionMetrics population_metrics(const TracePopulation& pop,
                                    const ThresholdPair& thr,
                                    const EnergyModel& model,
                                    const ChannelState& ch, MetricMode mode,
                                    double alpha) {
  DetectionMetrics m = population_metrics(pop, thr, mode, alpha);
  EnergyBreakdown e = expected_energy(pop, thr, model, ch, mode, alpha);
  m.e_loc_mean = e.e_loc;
  m.e_off_mean = e.e_off;
  return m;
}

std::array<double, 2> metrics_gradient(const TracePopulation& pop,
                                       const ThresholdPair& thr, double alpha,
                                       MetricKind kind,
                                       const EnergyModel& model,
                                       const ChannelState& ch) {
  if (kind == MetricKind::FAcc || kind == MetricKind::POff) {
    return metrics_gradient(pop, thr, alpha, kind);
  }
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  model.validate();
  if (model.n_blocks() != pop.n_blocks()) {
    throw InvalidArgument("metrics_gradient: model/population depth mismatch");
  }
  const auto cum = cumulative_energies(model);
  const double m = static_cast<double>(pop.size());

  KahanSum g_lo, g_hi;
  if (kind == MetricKind::ELoc) {
    for (const auto& t : pop.traces()) {
      auto ev = eval_trace_smooth(t.scores, thr.lo, thr.hi, alpha, cum, true);
      g_lo.add(ev.d_weighted[0]);
      g_hi.add(ev.d_weighted[1]);
    }
    return {g_lo.value() / m, g_hi.value() / m};
  }
  // EOff: (P_tr*D/R_tr) * mean tail-indicator mass over all events.
  const double e_off_event = offload_energy(model, ch);
  for (const auto& t : pop.traces()) {
    auto ev = eval_trace_smooth(t.scores, thr.lo, thr.hi, alpha, {}, true);
    g_lo.add(ev.d_tail[0]);
    g_hi.add(ev.d_tail[1]);
  }
  return {e_off_event * g_lo.value() / m, e_off_event * g_hi.value() / m};
}

double feasibility_snr_floor(const EnergyModel& model, const ChannelState& ch,
                             const Constraints& cons) {
  model.validate();
  ch.validate();
  cons.validate();
  const double block1 = model.energy_per_access *
                        static_cast<double>(model.mem_ops.front()) *
                        static_cast<double>(cons.n_events);
  const double residual = cons.energy_limit - block1;
  if (!(residual > 0.0)) {
    throw InfeasibleBudget(
        "energy budget cannot cover block-1 local processing for all events");
  }
  return std::exp2(model.tx_power * model.payload_bits /
                   (ch.bandwidth * residual)) -
         1.0;
}

}  // namespace exitoff
