#include "exitoff/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "exitoff/numerics.hpp"

namespace exitoff {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace

Decision single_threshold_classify(std::span<const double> scores, double tau,
                                   int n_blocks) {
  if (scores.empty() || static_cast<int>(scores.size()) != n_blocks) {
    throw InvalidArgument("single_threshold_classify: depth mismatch");
  }
  if (!(tau >= 0.5 && tau < 1.0)) {
    throw InvalidArgument("single_threshold_classify: tau must be in [0.5, 1)");
  }
  for (int n = 0; n < n_blocks - 1; ++n) {
    if (scores[static_cast<std::size_t>(n)] > tau) {
      return {EventClass::Tail, n + 1};
    }
  }
  return {EventClass::Head, n_blocks};  // forced head at the last block
}

Decision terminal_classify(std::span<const double> scores, double tau) {
  if (scores.empty()) {
    throw InvalidArgument("terminal_classify: empty scores");
  }
  if (!(tau >= 0.5 && tau < 1.0)) {
    throw InvalidArgument("terminal_classify: tau must be in [0.5, 1)");
  }
  const int n = static_cast<int>(scores.size());
  EventClass label = scores[static_cast<std::size_t>(n - 1)] > tau
                         ? EventClass::Tail
                         : EventClass::Head;
  return {label, n};
}

namespace {

struct SchemeMetrics {
  double p_miss = 0, p_false = 0, p_off = 0, f_acc = 0;
  double v_bits = 0, f_energy = 0;
  bool feasible = false;
};

// Hard metrics of an arbitrary classifier under the shared cost model. The
// transmit term is skipped when nothing offloads so a dead channel (rate 0)
// never poisons zero-offload schemes with 0*inf.
template <typename Classify>
SchemeMetrics eval_scheme(const TracePopulation& pop, const EnergyModel& model,
                          const ChannelState& ch, const Constraints& cons,
                          Classify&& classify) {
  std::vector<double> cum(static_cast<std::size_t>(model.n_blocks()));
  std::int64_t acc = 0;
  for (int i = 0; i < model.n_blocks(); ++i) {
    acc += model.mem_ops[static_cast<std::size_t>(i)];
    cum[static_cast<std::size_t>(i)] =
        model.energy_per_access * static_cast<double>(acc);
  }
  const double rate = transmission_rate(ch);
  const double e_off_event =
      rate > 0.0 ? model.tx_power * model.payload_bits / rate
                 : std::numeric_limits<double>::infinity();

  std::int64_t offloads = 0, credited = 0, misses = 0, false_alarms = 0;
  KahanSum local;
  for (const auto& t : pop.traces()) {
    Decision d = classify(std::span<const double>(t.scores));
    local.add(cum[static_cast<std::size_t>(d.exit_block - 1)]);
    if (d.label == EventClass::Tail) {
      ++offloads;
      if (t.label == EventClass::Head) ++false_alarms;
      if (t.label == EventClass::Tail && t.server_correct) ++credited;
    } else if (t.label == EventClass::Tail) {
      ++misses;
    }
  }
  const double m = static_cast<double>(pop.size());
  const double m_tail = static_cast<double>(pop.m_tail());
  const double m_head = static_cast<double>(pop.m_head());
  SchemeMetrics out;
  out.p_miss = static_cast<double>(misses) / m_tail;
  out.p_false =
      m_head > 0 ? static_cast<double>(false_alarms) / m_head : 0.0;
  out.p_off = static_cast<double>(offloads) / m;
  out.f_acc = static_cast<double>(credited) / m_tail;
  out.v_bits = model.payload_bits * static_cast<double>(offloads);
  out.f_energy = local.value() +
                 (offloads > 0 ? e_off_event * static_cast<double>(offloads)
                               : 0.0);
  out.feasible = out.v_bits <= cons.data_volume_limit &&
                 out.f_energy <= cons.energy_limit;
  return out;
}

void fill_scheme(SchemeResult& r, const SchemeMetrics& m) {
  r.feasible = m.feasible;
  r.p_miss = m.p_miss;
  r.p_false = m.p_false;
  r.p_off = m.p_off;
  r.f_acc = m.f_acc;
  r.v_bits = m.v_bits;
  r.f_energy = m.f_energy;
  r.status = m.feasible ? "ok" : "infeasible";
}

template <typename MakeClassifier>
SchemeResult best_tau_scheme(const TracePopulation& pop,
                             const EnergyModel& model, const ChannelState& ch,
                             const Constraints& cons, int tau_points,
                             MakeClassifier&& make) {
  if (tau_points < 2) {
    throw InvalidArgument("baseline scan needs tau_points >= 2");
  }
  if (pop.m_tail() == 0) {
    throw DegeneratePopulation("baseline scan needs at least one tail event");
  }
  SchemeResult best;
  best.status = "infeasible";
  double best_viol = std::numeric_limits<double>::infinity();
  for (int i = 0; i < tau_points; ++i) {
    const double tau = 0.5 + 0.5 * i / tau_points;  // [0.5, 1)
    SchemeMetrics m = eval_scheme(pop, model, ch, cons, make(tau));
    if (m.feasible) {
      if (!best.feasible || m.f_acc > best.f_acc) {  // ties keep smaller tau
        fill_scheme(best, m);
        best.tau = tau;
      }
    } else if (!best.feasible) {
      const double viol =
          std::max((m.v_bits - cons.data_volume_limit) / cons.data_volume_limit,
                   (m.f_energy - cons.energy_limit) / cons.energy_limit);
      if (viol < best_viol) {
        best_viol = viol;
        fill_scheme(best, m);
        best.feasible = false;
        best.status = "infeasible";
        best.tau = tau;
      }
    }
  }
  return best;
}

}  // namespace

SchemeResult best_single_threshold(const TracePopulation& pop,
                                   const EnergyModel& model,
                                   const ChannelState& ch,
                                   const Constraints& cons, int tau_points) {
  const int n = pop.n_blocks();
  return best_tau_scheme(pop, model, ch, cons, tau_points, [n](double tau) {
    return [tau, n](std::span<const double> s) {
      return single_threshold_classify(s, tau, n);
    };
  });
}

SchemeResult best_terminal_threshold(const TracePopulation& pop,
                                     const EnergyModel& model,
                                     const ChannelState& ch,
                                     const Constraints& cons, int tau_points) {
  return best_tau_scheme(pop, model, ch, cons, tau_points, [](double tau) {
    return [tau](std::span<const double> s) {
      return terminal_classify(s, tau);
    };
  });
}

TracePopulation materialize_traces(const ExperimentConfig& config,
                                   std::optional<std::uint64_t> seed_override) {
  if (!config.traces.csv_path.empty()) {
    return load_population(config.traces.csv_path);
  }
  SyntheticSpec spec = config.traces.synthetic;
  if (seed_override) spec.seed = *seed_override;
  return generate_population(spec);
}

namespace {

SchemeResult dual_from_thresholds(const TracePopulation& pop,
                                  const EnergyModel& model,
                                  const ChannelState& ch,
                                  const Constraints& cons,
                                  const ThresholdPair& thr) {
  SchemeMetrics m = eval_scheme(pop, model, ch, cons,
                                [&](std::span<const double> s) {
                                  return hard_classify(s, thr);
                                });
  SchemeResult out;
  fill_scheme(out, m);
  out.lo = thr.lo;
  out.hi = thr.hi;
  return out;
}

struct PointContext {
  const TracePopulation* pop = nullptr;
  ChannelState ch;
  Constraints cons;
};

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, int workers,
                      std::optional<std::uint64_t> seed_override) {
  config.validate();
  const TracePopulation base = materialize_traces(config, seed_override);
  const Constraints cons_base = resolve_constraints(config, base.size());
  const SweepAxis axis = config.sweep.axis;
  const auto& grid = config.sweep.grid;
  const double e_ref_total =
      cumulative_local_energy(config.energy, config.energy.n_blocks()) +
      offload_energy(config.energy, config.channel);

  // SNR sweeps share one lookup table whose bins are the grid points.
  std::optional<LookupTable> table;
  std::vector<double> snr_lin;
  if (axis == SweepAxis::Snr) {
    snr_lin.reserve(grid.size());
    for (double db : grid) snr_lin.push_back(db_to_lin(db));
    table = build_lookup_table(base, config.energy, config.channel.bandwidth,
                               snr_lin, cons_base, config.penalty, true);
  }

  // Imbalance sweeps regenerate the population per point with the same seed
  // so points differ only in the mix.
  std::vector<std::optional<TracePopulation>> regen(grid.size());
  if (axis == SweepAxis::ImbalanceRatio) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      SyntheticSpec spec = config.traces.synthetic;
      if (seed_override) spec.seed = *seed_override;
      spec.imbalance_ratio = grid[i];
      regen[i] = generate_population(spec);
    }
  }

  const std::uint64_t sim_seed =
      seed_override.value_or(config.traces.synthetic.seed);
  std::vector<SweepRow> rows(grid.size());

  auto eval_point = [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.axis_value = grid[i];

    PointContext ctx;
    ctx.pop = &base;
    ctx.ch = config.channel;
    ctx.cons = cons_base;
    switch (axis) {
      case SweepAxis::OffloadConstraint:
        ctx.cons.data_volume_limit =
            grid[i] * config.energy.payload_bits * static_cast<double>(base.size());
        break;
      case SweepAxis::EnergyConstraint:
        ctx.cons.energy_limit =
            grid[i] * static_cast<double>(base.size()) * e_ref_total;
        break;
      case SweepAxis::Snr:
        ctx.ch.snr = snr_lin[i];
        break;
      case SweepAxis::ImbalanceRatio:
        ctx.pop = &*regen[i];
        ctx.cons = resolve_constraints(config, ctx.pop->size());
        break;
    }
    ctx.cons.validate();

    // Dual thresholds: reuse the table entry on SNR sweeps, optimize
    // elsewhere; below the feasibility floor the scheme is marked, not run.
    if (axis == SweepAxis::Snr) {
      const LookupEntry& e = table->entries()[i];
      if (e.status == BinStatus::Infeasible) {
        row.dual.status = "infeasible";
      } else {
        row.dual = dual_from_thresholds(*ctx.pop, config.energy, ctx.ch,
                                        ctx.cons,
                                        ThresholdPair(e.beta_low, e.beta_up));
        if (e.status == BinStatus::Failed) row.dual.status = "failed";
      }
    } else {
      bool below_floor = false;
      try {
        below_floor =
            ctx.ch.snr < feasibility_snr_floor(config.energy, ctx.ch, ctx.cons);
      } catch (const InfeasibleBudget&) {
        below_floor = true;
      }
      if (below_floor) {
        row.dual.status = "infeasible";
      } else {
        MultistartResult r = optimize_thresholds_multistart(
            *ctx.pop, config.energy, ctx.ch, ctx.cons, config.penalty);
        row.dual = dual_from_thresholds(*ctx.pop, config.energy, ctx.ch,
                                        ctx.cons, r.thresholds);
      }
    }

    row.single = best_single_threshold(*ctx.pop, config.energy, ctx.ch,
                                       ctx.cons, config.baselines.tau_points);
    row.terminal = best_terminal_threshold(
        *ctx.pop, config.energy, ctx.ch, ctx.cons, config.baselines.tau_points);

    if (axis == SweepAxis::Snr) {
      std::vector<double> snrs(
          static_cast<std::size_t>(config.sweep.sim_intervals), snr_lin[i]);
      SimulationReport rep =
          run_campaign(snrs, config.channel.bandwidth, *ctx.pop, *table,
                       config.energy, ctx.cons, sim_seed);
      row.has_sim = true;
      row.m_off_cap = rep.intervals.empty() ? 0 : rep.intervals[0].m_off_cap;
      row.sim_p_off = rep.p_off;
      row.sim_p_miss = rep.p_miss;
      row.sim_f_acc = rep.f_acc;
      row.sim_energy_j = rep.energy_j;
      row.sim_bits = rep.bits;
    }
  };

  const int n_workers = std::clamp<int>(workers, 1,
                                        static_cast<int>(grid.size()));
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) eval_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= grid.size()) return;
          try {
            eval_point(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  SweepResult result;
  result.rows = std::move(rows);
  result.constants_text = dump_constants(config);

  // Serialize rows once; both artifacts come from the same data.
  std::ostringstream csv;
  csv << "axis,axis_value,"
         "dual_status,dual_lo,dual_hi,dual_p_miss,dual_p_false,dual_p_off,"
         "dual_f_acc,dual_v_bits,dual_energy_j,"
         "single_status,single_tau,single_p_miss,single_p_false,single_p_off,"
         "single_f_acc,single_v_bits,single_energy_j,"
         "terminal_status,terminal_tau,terminal_p_miss,terminal_p_false,"
         "terminal_p_off,terminal_f_acc,terminal_v_bits,terminal_energy_j,"
         "m_off_cap,sim_p_off,sim_p_miss,sim_f_acc,sim_energy_j,sim_bits\n";
  nlohmann::json jrows = nlohmann::json::array();
  auto scheme_json = [](const SchemeResult& s, bool dual) {
    nlohmann::json j{{"status", s.status},   {"p_miss", s.p_miss},
                     {"p_false", s.p_false}, {"p_off", s.p_off},
                     {"f_acc", s.f_acc},     {"v_bits", s.v_bits},
                     {"energy_j", s.f_energy}};
    if (dual) {
      j["beta_low"] = s.lo;
      j["beta_up"] = s.hi;
    } else {
      j["tau"] = s.tau;
    }
    return j;
  };
  for (const auto& row : result.rows) {
    csv << to_string(axis) << ',' << fmt(row.axis_value) << ','
        << row.dual.status << ',' << fmt(row.dual.lo) << ',' << fmt(row.dual.hi)
        << ',' << fmt(row.dual.p_miss) << ',' << fmt(row.dual.p_false) << ','
        << fmt(row.dual.p_off) << ',' << fmt(row.dual.f_acc) << ','
        << fmt(row.dual.v_bits) << ',' << fmt(row.dual.f_energy) << ','
        << row.single.status << ',' << fmt(row.single.tau) << ','
        << fmt(row.single.p_miss) << ',' << fmt(row.single.p_false) << ','
        << fmt(row.single.p_off) << ',' << fmt(row.single.f_acc) << ','
        << fmt(row.single.v_bits) << ',' << fmt(row.single.f_energy) << ','
        << row.terminal.status << ',' << fmt(row.terminal.tau) << ','
        << fmt(row.terminal.p_miss) << ',' << fmt(row.terminal.p_false) << ','
        << fmt(row.terminal.p_off) << ',' << fmt(row.terminal.f_acc) << ','
        << fmt(row.terminal.v_bits) << ',' << fmt(row.terminal.f_energy) << ','
        << (row.has_sim ? std::to_string(row.m_off_cap) : std::string("-1"))
        << ',' << fmt(row.sim_p_off) << ',' << fmt(row.sim_p_miss) << ','
        << fmt(row.sim_f_acc) << ',' << fmt(row.sim_energy_j) << ','
        << fmt(row.sim_bits) << "\n";

    nlohmann::json jr{{"axis_value", row.axis_value},
                      {"dual", scheme_json(row.dual, true)},
                      {"single", scheme_json(row.single, false)},
                      {"terminal", scheme_json(row.terminal, false)}};
    if (row.has_sim) {
      jr["simulation"] = {{"m_off_cap", row.m_off_cap},
                          {"p_off", row.sim_p_off},
                          {"p_miss", row.sim_p_miss},
                          {"f_acc", row.sim_f_acc},
                          {"energy_j", row.sim_energy_j},
                          {"bits", row.sim_bits}};
    }
    jrows.push_back(std::move(jr));
  }
  result.sweep_csv = csv.str();

  nlohmann::json summary{
      {"axis", to_string(axis)},
      {"grid", grid},
      {"n_events", base.size()},
      {"n_blocks", base.n_blocks()},
      {"m_head", base.m_head()},
      {"m_tail", base.m_tail()},
      {"theta_bits", cons_base.data_volume_limit},
      {"xi_joules", cons_base.energy_limit},
      {"rows", std::move(jrows)},
  };
  result.summary_json = summary.dump(2) + "\n";
  return result;
}

void write_sweep_outputs(const SweepResult& result,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = std::filesystem::path(out_dir) / name;
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw Error("write failed: " + path.string());
  };
  write("sweep.csv", result.sweep_csv);
  write("constants.txt", result.constants_text);
  write("summary.json", result.summary_json);
}

std::string dump_constants(const ExperimentConfig& config) {
  config.validate();
  const TracePopulation pop = materialize_traces(config);
  const Constraints cons = resolve_constraints(config, pop.size());

  std::ostringstream out;
  out << "# derived optimization constants\n";
  out << "n_events = " << pop.size() << "\n";
  out << "n_blocks = " << pop.n_blocks() << "\n";
  out << "payload_bits = " << fmt(config.energy.payload_bits) << "\n";
  out << "theta_bits = " << fmt(cons.data_volume_limit) << "\n";
  out << "xi_joules = " << fmt(cons.energy_limit) << "\n";
  out << "slope = " << fmt(config.penalty.slope) << "\n";

  double floor = std::numeric_limits<double>::quiet_NaN();
  std::string floor_note;
  try {
    floor = feasibility_snr_floor(config.energy, config.channel, cons);
  } catch (const InfeasibleBudget& e) {
    floor_note = e.what();
  }
  if (floor_note.empty()) {
    out << "feasibility_floor_snr = " << fmt(floor) << "  (" << fmt(lin_to_db(floor))
        << " dB)\n";
  } else {
    out << "feasibility_floor_snr = unreachable (" << floor_note << ")\n";
  }

  std::vector<double> snrs;
  if (config.sweep.axis == SweepAxis::Snr) {
    for (double db : config.sweep.grid) snrs.push_back(db_to_lin(db));
  } else if (std::isfinite(floor)) {
    // log-spaced report grid just above the floor
    const int bins = config.penalty.snr_bins;
    for (int i = 0; i < bins; ++i) {
      const double t = bins == 1 ? 0.0 : static_cast<double>(i) / (bins - 1);
      snrs.push_back(floor * 1.05 * std::pow(1000.0, t));
    }
  } else {
    snrs.push_back(config.channel.snr);
  }

  out << "\nsnr_db,gamma,a_const,b_const,kappa,rho,lambda_min,lambda,psi,eta,"
         "above_floor\n";
  for (double snr : snrs) {
    ChannelState ch{snr, config.channel.bandwidth};
    try {
      DerivedConstants dc =
          penalty_constants(pop, config.energy, ch, cons, config.penalty);
      const bool above = std::isfinite(floor) && snr >= floor;
      out << fmt(lin_to_db(snr)) << ',' << fmt(dc.gamma) << ','
          << fmt(dc.a_const) << ',' << fmt(dc.b_const) << ',' << fmt(dc.kappa)
          << ',' << fmt(dc.rho) << ',' << fmt(dc.lambda_min) << ','
          << fmt(dc.lambda) << ',' << fmt(dc.psi) << ',' << fmt(dc.eta) << ','
          << (above ? 1 : 0) << "\n";
    } catch (const Error& e) {
      out << fmt(lin_to_db(snr)) << ",error: " << e.what() << "\n";
    }
  }
  return out.str();
}

}  // namespace exitoff
