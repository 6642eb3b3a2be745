#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "exitoff/energy.hpp"
#include "exitoff/optimizer.hpp"
#include "exitoff/policy.hpp"
#include "exitoff/traces.hpp"

namespace py = pybind11;
using namespace exitoff;

namespace {

py::dict metrics_to_dict(const DetectionMetrics& m) {
  py::dict d;
  d["p_miss"] = m.p_miss;
  d["p_false"] = m.p_false;
  d["p_off"] = m.p_off;
  d["f_acc"] = m.f_acc;
  d["p_tail"] = m.p_tail;
  d["p_head"] = m.p_head;
  d["e_loc_mean"] = m.e_loc_mean;
  d["e_off_mean"] = m.e_off_mean;
  return d;
}

MetricMode mode_from_string(const std::string& s) {
  if (s == "hard") return MetricMode::Hard;
  if (s == "smooth") return MetricMode::Smooth;
  throw InvalidArgument("mode must be 'hard' or 'smooth'");
}

MetricKind kind_from_string(const std::string& s) {
  if (s == "f_acc") return MetricKind::FAcc;
  if (s == "p_off") return MetricKind::POff;
  if (s == "e_loc") return MetricKind::ELoc;
  if (s == "e_off") return MetricKind::EOff;
  throw InvalidArgument("kind must be f_acc, p_off, e_loc, or e_off");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "dual-threshold early-exit event detection and channel-adaptive "
      "computation offloading";

  py::register_exception<InvalidArgument>(m, "InvalidArgumentError",
                                          PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseErrorError", PyExc_ValueError);
  py::register_exception<DegeneratePopulation>(m, "DegeneratePopulationError",
                                               PyExc_ValueError);
  py::register_exception<InfeasibleBudget>(m, "InfeasibleBudgetError");
  py::register_exception<InfeasibleChannel>(m, "InfeasibleChannelError");
  py::register_exception<LambdaTooSmall>(m, "LambdaTooSmallError");
  py::register_exception<NumericalFailure>(m, "NumericalFailureError");

  py::class_<TracePopulation>(m, "TracePopulation")
      .def_property_readonly("size", &TracePopulation::size)
      .def_property_readonly("n_blocks", &TracePopulation::n_blocks)
      .def_property_readonly("m_head", &TracePopulation::m_head)
      .def_property_readonly("m_tail", &TracePopulation::m_tail)
      .def("__len__", &TracePopulation::size)
      .def("scores",
           [](const TracePopulation& p, std::size_t i) {
             if (i >= p.size()) throw py::index_error();
             return p[i].scores;
           })
      .def("label",
           [](const TracePopulation& p, std::size_t i) {
             if (i >= p.size()) throw py::index_error();
             return p[i].label == EventClass::Tail ? "tail" : "head";
           })
      .def("server_correct", [](const TracePopulation& p, std::size_t i) {
        if (i >= p.size()) throw py::index_error();
        return p[i].server_correct;
      });

  py::class_<EnergyModel>(m, "EnergyModel")
      .def(py::init([](std::vector<std::int64_t> mem_ops,
                       double energy_per_access, double payload_bits,
                       double tx_power) {
             EnergyModel e{std::move(mem_ops), energy_per_access, payload_bits,
                           tx_power};
             e.validate();
             return e;
           }),
           py::arg("mem_ops"), py::arg("energy_per_access"),
           py::arg("payload_bits"), py::arg("tx_power"))
      .def_readonly("mem_ops", &EnergyModel::mem_ops)
      .def_readonly("energy_per_access", &EnergyModel::energy_per_access)
      .def_readonly("payload_bits", &EnergyModel::payload_bits)
      .def_readonly("tx_power", &EnergyModel::tx_power);

  py::class_<ChannelState>(m, "ChannelState")
      .def(py::init([](double snr, double bandwidth) {
             ChannelState c{snr, bandwidth};
             c.validate();
             return c;
           }),
           py::arg("snr"), py::arg("bandwidth"))
      .def_readonly("snr", &ChannelState::snr)
      .def_readonly("bandwidth", &ChannelState::bandwidth);

  py::class_<Constraints>(m, "Constraints")
      .def(py::init([](double data_volume_limit, double energy_limit,
                       std::int64_t n_events) {
             Constraints c{data_volume_limit, energy_limit, n_events};
             c.validate();
             return c;
           }),
           py::arg("data_volume_limit"), py::arg("energy_limit"),
           py::arg("n_events"))
      .def_readonly("data_volume_limit", &Constraints::data_volume_limit)
      .def_readonly("energy_limit", &Constraints::energy_limit)
      .def_readonly("n_events", &Constraints::n_events);

  m.def(
      "generate_population",
      [](std::int64_t n_events, int n_blocks, double imbalance_ratio,
         double head_loc_end, double head_latent_sd, double tail_loc_end,
         double tail_latent_sd, double server_accuracy, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.n_events = n_events;
        spec.n_blocks = n_blocks;
        spec.imbalance_ratio = imbalance_ratio;
        spec.head = {head_loc_end, head_latent_sd};
        spec.tail = {tail_loc_end, tail_latent_sd};
        spec.server_accuracy = server_accuracy;
        spec.seed = seed;
        return generate_population(spec);
      },
      py::arg("n_events"), py::arg("n_blocks"),
      py::arg("imbalance_ratio") = 4.0, py::arg("head_loc_end") = 0.15,
      py::arg("head_latent_sd") = 0.9, py::arg("tail_loc_end") = 0.85,
      py::arg("tail_latent_sd") = 0.9, py::arg("server_accuracy") = 1.0,
      py::arg("seed") = 1);
  m.def("load_population", &load_population, py::arg("path"));
  m.def("save_population", &save_population, py::arg("population"),
        py::arg("path"));

  m.def("softmax_confidence", &softmax_confidence, py::arg("f_tail"),
        py::arg("f_head"));
  m.def("logistic", &logistic, py::arg("y"), py::arg("alpha"));
  m.def(
      "hard_classify",
      [](const std::vector<double>& scores, double lo, double hi) {
        Decision d = hard_classify(scores, ThresholdPair(lo, hi));
        return py::make_tuple(
            d.label == EventClass::Tail ? "tail" : "head", d.exit_block);
      },
      py::arg("scores"), py::arg("beta_low"), py::arg("beta_up"));
  m.def(
      "smooth_head_indicator",
      [](const std::vector<double>& scores, double lo, double hi, double alpha,
         int n) {
        return smooth_head_indicator(scores, ThresholdPair(lo, hi), alpha, n);
      },
      py::arg("scores"), py::arg("beta_low"), py::arg("beta_up"),
      py::arg("alpha"), py::arg("n"));
  m.def(
      "smooth_tail_indicator",
      [](const std::vector<double>& scores, double lo, double hi, double alpha,
         int n) {
        return smooth_tail_indicator(scores, ThresholdPair(lo, hi), alpha, n);
      },
      py::arg("scores"), py::arg("beta_low"), py::arg("beta_up"),
      py::arg("alpha"), py::arg("n"));

  m.def(
      "population_metrics",
      [](const TracePopulation& pop, double lo, double hi,
         const std::string& mode, double alpha) {
        return metrics_to_dict(population_metrics(
            pop, ThresholdPair(lo, hi), mode_from_string(mode), alpha));
      },
      py::arg("population"), py::arg("beta_low"), py::arg("beta_up"),
      py::arg("mode") = "hard", py::arg("alpha") = 50.0);
  m.def(
      "population_metrics_with_energy",
      [](const TracePopulation& pop, double lo, double hi,
         const EnergyModel& model, const ChannelState& ch,
         const std::string& mode, double alpha) {
        return metrics_to_dict(
            population_metrics(pop, ThresholdPair(lo, hi), model, ch,
                               mode_from_string(mode), alpha));
      },
      py::arg("population"), py::arg("beta_low"), py::arg("beta_up"),
      py::arg("model"), py::arg("channel"), py::arg("mode") = "hard",
      py::arg("alpha") = 50.0);
  m.def(
      "metrics_gradient",
      [](const TracePopulation& pop, double lo, double hi, double alpha,
         const std::string& kind, std::optional<EnergyModel> model,
         std::optional<ChannelState> ch) {
        MetricKind k = kind_from_string(kind);
        ThresholdPair thr(lo, hi);
        std::array<double, 2> g{};
        if (k == MetricKind::ELoc || k == MetricKind::EOff) {
          if (!model || !ch) {
            throw InvalidArgument(
                "energy metric gradients need model and channel");
          }
          g = metrics_gradient(pop, thr, alpha, k, *model, *ch);
        } else {
          g = metrics_gradient(pop, thr, alpha, k);
        }
        return py::make_tuple(g[0], g[1]);
      },
      py::arg("population"), py::arg("beta_low"), py::arg("beta_up"),
      py::arg("alpha"), py::arg("kind"), py::arg("model") = py::none(),
      py::arg("channel") = py::none());

  m.def("transmission_rate", &transmission_rate, py::arg("channel"));
  m.def(
      "cumulative_local_energy",
      [](const EnergyModel& model, int n) {
        return cumulative_local_energy(model, n);
      },
      py::arg("model"), py::arg("n"));
  m.def("offload_energy", &offload_energy, py::arg("model"),
        py::arg("channel"));
  m.def("feasibility_snr_floor", &feasibility_snr_floor, py::arg("model"),
        py::arg("channel"), py::arg("constraints"));
  m.def("gamma_constant", &gamma_constant, py::arg("n_blocks"),
        py::arg("slope"));

  m.def(
      "penalty_constants",
      [](const TracePopulation& pop, const EnergyModel& model,
         const ChannelState& ch, const Constraints& cons, double slope) {
        PenaltyConfig cfg;
        cfg.slope = slope;
        DerivedConstants dc = penalty_constants(pop, model, ch, cons, cfg);
        py::dict d;
        d["gamma"] = dc.gamma;
        d["a_const"] = dc.a_const;
        d["b_const"] = dc.b_const;
        d["kappa"] = dc.kappa;
        d["rho"] = dc.rho;
        d["lambda_min"] = dc.lambda_min;
        d["lambda"] = dc.lambda;
        d["psi"] = dc.psi;
        d["eta"] = dc.eta;
        return d;
      },
      py::arg("population"), py::arg("model"), py::arg("channel"),
      py::arg("constraints"), py::arg("slope") = 50.0);

  m.def(
      "optimize_thresholds",
      [](const TracePopulation& pop, const EnergyModel& model,
         const ChannelState& ch, const Constraints& cons, double slope,
         int outer_iters, int inner_iters, double convergence_tol,
         int max_escalations) {
        PenaltyConfig cfg;
        cfg.slope = slope;
        cfg.outer_iters = outer_iters;
        cfg.inner_iters = inner_iters;
        cfg.convergence_tol = convergence_tol;
        cfg.max_escalations = max_escalations;
        MultistartResult r =
            optimize_thresholds_multistart(pop, model, ch, cons, cfg);
        py::dict d;
        d["beta_low"] = r.thresholds.lo;
        d["beta_up"] = r.thresholds.hi;
        d["feasible"] = r.feasible;
        d["f_acc"] = r.f_acc;
        d["v_bits"] = r.v_bits;
        d["energy_j"] = r.f_energy;
        d["starts"] = r.starts;
        d["failed_starts"] = r.failed_starts;
        return d;
      },
      py::arg("population"), py::arg("model"), py::arg("channel"),
      py::arg("constraints"), py::arg("slope") = 50.0,
      py::arg("outer_iters") = 600, py::arg("inner_iters") = 200,
      py::arg("convergence_tol") = 1e-3, py::arg("max_escalations") = 20);

  py::class_<LookupTable>(m, "LookupTable")
      .def_property_readonly("feasibility_floor",
                             &LookupTable::feasibility_floor)
      .def("__len__",
           [](const LookupTable& t) { return t.entries().size(); })
      .def("find",
           [](const LookupTable& t, double snr) -> py::object {
             const LookupEntry* e = t.find(snr);
             if (!e) return py::none();
             py::dict d;
             d["snr_lo"] = e->snr_lo;
             d["beta_low"] = e->beta_low;
             d["beta_up"] = e->beta_up;
             d["f_acc"] = e->f_acc;
             d["v_bits"] = e->v_bits;
             d["energy_j"] = e->f_energy;
             d["status"] = to_string(e->status);
             return d;
           },
           py::arg("snr"));

  m.def(
      "build_lookup_table",
      [](const TracePopulation& pop, const EnergyModel& model,
         double bandwidth, const std::vector<double>& snr_grid,
         const Constraints& cons, double slope, int outer_iters,
         int inner_iters, double convergence_tol, int max_escalations,
         bool warm_start) {
        PenaltyConfig cfg;
        cfg.slope = slope;
        cfg.outer_iters = outer_iters;
        cfg.inner_iters = inner_iters;
        cfg.convergence_tol = convergence_tol;
        cfg.max_escalations = max_escalations;
        return build_lookup_table(pop, model, bandwidth, snr_grid, cons, cfg,
                                  warm_start);
      },
      py::arg("population"), py::arg("model"), py::arg("bandwidth"),
      py::arg("snr_grid"), py::arg("constraints"), py::arg("slope") = 50.0,
      py::arg("outer_iters") = 600, py::arg("inner_iters") = 200,
      py::arg("convergence_tol") = 1e-3, py::arg("max_escalations") = 20,
      py::arg("warm_start") = true);
  m.def("save_lookup_csv", &save_lookup_csv, py::arg("table"),
        py::arg("path"));
  m.def("load_lookup_csv", &load_lookup_csv, py::arg("path"));

  m.def(
      "run_campaign",
      [](const std::vector<double>& snrs, double bandwidth,
         const TracePopulation& pop, const LookupTable& table,
         const EnergyModel& model, const Constraints& cons,
         std::uint64_t seed) {
        SimulationReport rep =
            run_campaign(snrs, bandwidth, pop, table, model, cons, seed);
        py::dict d;
        d["n_events"] = rep.n_events;
        d["n_tail"] = rep.n_tail;
        d["n_offloaded"] = rep.n_offloaded;
        d["p_off"] = rep.p_off;
        d["p_miss"] = rep.p_miss;
        d["f_acc"] = rep.f_acc;
        d["energy_j"] = rep.energy_j;
        d["bits"] = rep.bits;
        py::list rows;
        for (const auto& r : rep.intervals) {
          py::dict jr;
          jr["snr"] = r.snr;
          jr["pure_local"] = r.pure_local;
          jr["fallback_bin"] = r.fallback_bin;
          jr["m_off_cap"] = r.m_off_cap;
          jr["n_events"] = r.n_events;
          jr["n_tail"] = r.n_tail;
          jr["n_offloaded"] = r.n_offloaded;
          jr["p_off_emp"] = r.p_off_emp;
          jr["p_miss"] = r.p_miss;
          jr["f_acc"] = r.f_acc;
          jr["energy_j"] = r.energy_j;
          jr["bits"] = r.bits;
          rows.append(jr);
        }
        d["intervals"] = rows;
        return d;
      },
      py::arg("snrs"), py::arg("bandwidth"), py::arg("population"),
      py::arg("table"), py::arg("model"), py::arg("constraints"),
      py::arg("seed") = 1);
}
