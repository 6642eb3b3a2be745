#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <vector>

#include <exitoff/energy.hpp>
#include <exitoff/errors.hpp>
#include <exitoff/optimizer.hpp>

#include "support/helpers.hpp"

using namespace exitoff;
using testsupport::fd_gradient;
using testsupport::grad_rel_err;
using testsupport::make_population;
using testsupport::random_population;
using testsupport::small_energy_model;

namespace {

constexpr double kRt2 = 1.4142135623730950488;
constexpr double kRt3 = 1.7320508075688772935;

// Independent transcription of the curvature-constant algebra, kept separate
// from the library implementation on purpose.
struct IndepConstants {
    double gamma, a, b, c_energy, lambda_min, psi;
};

IndepConstants recompute_constants(const EnergyModel& model,
                                   const ChannelState& ch,
                                   const Constraints& cons, double slope,
                                   double kappa, double rho, double lambda) {
    const double n = model.n_blocks();
    const double m = static_cast<double>(cons.n_events);
    const double d = model.payload_bits;
    const double rate = transmission_rate(ch);
    const double e_loc_n = cumulative_local_energy(model, model.n_blocks());
    IndepConstants c{};
    c.gamma = slope * slope * n * (n + 1.0) * (n + 4.0 * kRt3 - 1.0) / 24.0;
    c.a = std::max(cons.data_volume_limit, d * m * (n - 1.0) / (2.0 * kRt2));
    c.b = std::max(cons.energy_limit,
                   (n * n + 1.0) * e_loc_n / (2.0 * kRt2) +
                       (n + 2.0) * (n - 1.0) * model.tx_power * d /
                           (4.0 * kRt2 * rate));
    c.c_energy = e_loc_n + model.tx_power * d / (2.0 * rate);
    c.lambda_min =
        c.gamma + 2.0 * m * c.gamma * (kappa * c.a * d + rho * c.b * c.c_energy);
    c.psi = c.gamma + lambda + kappa * d * m * c.a * (c.a + 2.0 * c.gamma) +
            rho * c.b * (c.b + 2.0 * m * c.gamma * c.c_energy);
    return c;
}

// Budgets as fractions of the obvious scales, matching how the config layer
// resolves them.
Constraints budgets(const TracePopulation& pop, const EnergyModel& model,
                    const ChannelState& ch, double frac_v, double frac_e) {
    Constraints cons;
    const double m = static_cast<double>(pop.size());
    cons.n_events = static_cast<std::int64_t>(pop.size());
    cons.data_volume_limit = frac_v * model.payload_bits * m;
    cons.energy_limit =
        frac_e * m *
        (cumulative_local_energy(model, model.n_blocks()) +
         offload_energy(model, ch));
    return cons;
}

PenaltyConfig fast_cfg() {
    PenaltyConfig cfg;
    cfg.outer_iters = 200;
    cfg.inner_iters = 120;
    return cfg;
}

}  // namespace

TEST_CASE("gamma constant: frozen values and slope scaling") {
    CHECK(gamma_constant(1, 1.0) ==
          doctest::Approx(0.5773502691896257).epsilon(1e-13));
    CHECK(gamma_constant(4, 1.0) ==
          doctest::Approx(8.273502691896256).epsilon(1e-13));
    // Quadratic in the slope: doubling k multiplies gamma by four.
    for (int n : {1, 3, 6}) {
        CHECK(gamma_constant(n, 2.0) ==
              doctest::Approx(4.0 * gamma_constant(n, 1.0)).epsilon(1e-13));
        CHECK(gamma_constant(n, 50.0) ==
              doctest::Approx(2500.0 * gamma_constant(n, 1.0)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(gamma_constant(0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(gamma_constant(2, 0.0), InvalidArgument);
}

TEST_CASE("box projection restores the threshold invariant") {
    // Interior points pass through untouched.
    Vec2 p = project_to_box({0.3, 0.7});
    CHECK(p[0] == 0.3);
    CHECK(p[1] == 0.7);
    // Out-of-range coordinates clamp; collapsed pairs split across the facet.
    for (Vec2 raw : {Vec2{-0.5, 1.5}, Vec2{0.9, 0.1}, Vec2{0.5, 0.5},
                     Vec2{0.0, 0.0}, Vec2{1.0, 1.0}, Vec2{0.7, 0.2}}) {
        Vec2 q = project_to_box(raw);
        CHECK(q[0] >= kBoxEps);
        CHECK(q[1] <= 1.0 - kBoxEps);
        CHECK(q[1] - q[0] >= kBoxDelta - 1e-15);
        CHECK_NOTHROW(ThresholdPair(q[0], q[1]));
    }
}

TEST_CASE("curvature cap A: frozen example and max dominance") {
    // D = 1, M = 10, N = 4, theta = 2: the data-volume side of the max wins.
    EnergyModel model;
    model.mem_ops = {1, 1, 1, 1};
    model.energy_per_access = 1e-6;
    model.payload_bits = 1.0;
    model.tx_power = 1.0;
    auto pop = random_population(3, 10, 4);
    ChannelState ch{1.0, 1e6};
    Constraints cons;
    cons.n_events = 10;
    cons.data_volume_limit = 2.0;
    cons.energy_limit = 1.0;
    auto dc = penalty_constants(pop, model, ch, cons, PenaltyConfig{});
    CHECK(dc.a_const == doctest::Approx(10.606601717798211).epsilon(1e-13));

    // A loose budget dominates the curvature term instead.
    cons.data_volume_limit = 1e9;
    dc = penalty_constants(pop, model, ch, cons, PenaltyConfig{});
    CHECK(dc.a_const == doctest::Approx(1e9).epsilon(1e-15));
}

TEST_CASE("penalty constants match an independent recomputation") {
    auto model = small_energy_model(4);
    auto pop = random_population(9, 30, 4);
    ChannelState ch{2.5, 8e6};
    auto cons = budgets(pop, model, ch, 0.4, 0.8);
    PenaltyConfig cfg;

    auto dc = penalty_constants(pop, model, ch, cons, cfg);
    auto want = recompute_constants(model, ch, cons, cfg.slope, dc.kappa,
                                    dc.rho, dc.lambda);
    CHECK(dc.gamma == doctest::Approx(want.gamma).epsilon(1e-12));
    CHECK(dc.a_const == doctest::Approx(want.a).epsilon(1e-12));
    CHECK(dc.b_const == doctest::Approx(want.b).epsilon(1e-12));
    CHECK(dc.lambda_min == doctest::Approx(want.lambda_min).epsilon(1e-12));
    CHECK(dc.psi == doctest::Approx(want.psi).epsilon(1e-12));
    // Auto weights resolve to 100 over the squared budget scale; auto lambda
    // sits 1.5x above the minimum, so eta is half the minimum.
    CHECK(dc.kappa == doctest::Approx(100.0 / (cons.data_volume_limit *
                                               cons.data_volume_limit))
                          .epsilon(1e-12));
    CHECK(dc.rho ==
          doctest::Approx(100.0 / (cons.energy_limit * cons.energy_limit))
              .epsilon(1e-12));
    CHECK(dc.lambda == doctest::Approx(1.5 * dc.lambda_min).epsilon(1e-12));
    CHECK(dc.eta == doctest::Approx(0.5 * dc.lambda_min).epsilon(1e-12));
}

TEST_CASE("explicit lambda below the convexity bound is rejected with the bound") {
    auto model = small_energy_model(3);
    auto pop = random_population(17, 20, 3);
    ChannelState ch{2.0, 5e6};
    auto cons = budgets(pop, model, ch, 0.5, 0.9);

    PenaltyConfig probe;
    double lambda_min = penalty_constants(pop, model, ch, cons, probe).lambda_min;

    PenaltyConfig low = probe;
    low.lambda = 0.5 * lambda_min;
    try {
        penalty_constants(pop, model, ch, cons, low);
        FAIL("expected LambdaTooSmall");
    } catch (const LambdaTooSmall& e) {
        CHECK(e.minimal_lambda == doctest::Approx(lambda_min).epsilon(1e-12));
    }

    PenaltyConfig ok = probe;
    ok.lambda = 2.0 * lambda_min;
    auto dc = penalty_constants(pop, model, ch, cons, ok);
    CHECK(dc.eta == doctest::Approx(lambda_min).epsilon(1e-12));
}

TEST_CASE("penalty objective reduces to -f_acc when nothing binds") {
    auto model = small_energy_model(3);
    auto pop = random_population(23, 40, 3);
    ChannelState ch{3.0, 1e7};
    auto cons = budgets(pop, model, ch, 50.0, 50.0);  // nowhere near binding
    PenaltyConfig cfg;
    ThresholdPair thr(0.35, 0.75);

    auto ev = penalty_value_and_grad(thr, thr, pop, model, ch, cons, cfg);
    auto m = population_metrics(pop, thr, MetricMode::Smooth, cfg.slope);
    CHECK(ev.value == doctest::Approx(-m.f_acc).epsilon(1e-12));
    CHECK(ev.f_acc == doctest::Approx(m.f_acc).epsilon(1e-12));

    auto g_acc = metrics_gradient(pop, thr, cfg.slope, MetricKind::FAcc);
    CHECK(ev.grad[0] == doctest::Approx(-g_acc[0]).epsilon(1e-12));
    CHECK(ev.grad[1] == doctest::Approx(-g_acc[1]).epsilon(1e-12));
}

TEST_CASE("penalty objective smooth quantities tie out against the metric layer") {
    auto model = small_energy_model(3);
    auto pop = random_population(29, 35, 3);
    ChannelState ch{2.0, 6e6};
    auto cons = budgets(pop, model, ch, 0.4, 0.7);
    PenaltyConfig cfg;
    ThresholdPair thr(0.3, 0.8);

    auto ev = penalty_value_and_grad(thr, thr, pop, model, ch, cons, cfg);
    auto m = population_metrics(pop, thr, model, ch, MetricMode::Smooth, cfg.slope);
    const double mm = static_cast<double>(pop.size());
    CHECK(ev.v_bits ==
          doctest::Approx(model.payload_bits * m.p_off * mm).epsilon(1e-10));
    CHECK(ev.f_energy ==
          doctest::Approx((m.e_loc_mean + m.e_off_mean) * mm).epsilon(1e-10));
}

TEST_CASE("penalty gradient matches finite differences with active hinges") {
    auto model = small_energy_model(3);
    auto pop = random_population(31, 30, 3);
    ChannelState ch{2.0, 6e6};
    ThresholdPair thr(0.3, 0.72);
    ThresholdPair anchor(0.4, 0.8);
    PenaltyConfig cfg;

    // Size the budgets so both hinges are strictly active at thr (and stay
    // active across the finite-difference probes).
    auto probe = budgets(pop, model, ch, 10.0, 10.0);
    auto ev0 = penalty_value_and_grad(thr, anchor, pop, model, ch, probe, cfg);
    Constraints cons = probe;
    cons.data_volume_limit = 0.6 * ev0.v_bits;
    cons.energy_limit = 0.7 * ev0.f_energy;

    auto ev = penalty_value_and_grad(thr, anchor, pop, model, ch, cons, cfg);
    CHECK(ev.v_bits > cons.data_volume_limit);
    CHECK(ev.f_energy > cons.energy_limit);
    auto fd = fd_gradient(
        [&](const ThresholdPair& p) {
            return penalty_value_and_grad(p, anchor, pop, model, ch, cons, cfg)
                .value;
        },
        thr, 1e-7);
    CHECK(grad_rel_err(ev.grad, fd) < 1e-4);
}

TEST_CASE("apg: converges on a quadratic with known moduli") {
    // f(x) = 0.5*(psi*(x0-1)^2 + eta*(x1+2)^2), minimized at (1,-2).
    const double psi = 50.0, eta = 2.0;
    auto f = [&](Vec2 x) {
        Vec2 g{psi * (x[0] - 1.0), eta * (x[1] + 2.0)};
        double v = 0.5 * (psi * (x[0] - 1.0) * (x[0] - 1.0) +
                          eta * (x[1] + 2.0) * (x[1] + 2.0));
        return std::pair<double, Vec2>(v, g);
    };
    auto ident = [](Vec2 p) { return p; };
    ApgOptions opt;
    opt.psi = psi;
    opt.eta = eta;
    opt.max_iters = 300;
    auto res = apg_minimize({0.0, 0.0}, f, ident, opt);
    CHECK(std::abs(res.x[0] - 1.0) < 1e-9);
    CHECK(std::abs(res.x[1] + 2.0) < 1e-9);
    CHECK(static_cast<int>(res.iterates.size()) == res.iters + 1);
}

TEST_CASE("apg: zero momentum reduces to plain projected gradient descent") {
    const double l = 10.0;
    auto f = [&](Vec2 x) {
        return std::pair<double, Vec2>(
            0.5 * l * (x[0] * x[0] + x[1] * x[1]), Vec2{l * x[0], l * x[1]});
    };
    auto ident = [](Vec2 p) { return p; };
    ApgOptions opt;
    opt.psi = l;
    opt.eta = l;  // momentum (sqrt(l)-sqrt(l))/(...) == 0
    opt.max_iters = 25;
    auto res = apg_minimize({0.7, -0.4}, f, ident, opt);

    Vec2 x{0.7, -0.4};
    for (int i = 0; i < 25; ++i) {
        auto [v, g] = f(x);
        (void)v;
        x = {x[0] - g[0] / l, x[1] - g[1] / l};
    }
    CHECK(res.x[0] == x[0]);  // bitwise: same arithmetic path
    CHECK(res.x[1] == x[1]);
}

TEST_CASE("apg: inconsistent oracle trips the divergence guard") {
    // Gradient says "increase x", value says moving that way helps; the
    // objective the guard sees rises every iteration.
    auto f = [](Vec2 x) {
        return std::pair<double, Vec2>(-x[0], Vec2{1.0, 0.0});
    };
    auto ident = [](Vec2 p) { return p; };
    ApgOptions opt;
    opt.psi = 1.0;
    opt.eta = 0.0;
    opt.max_iters = 100;
    try {
        apg_minimize({0.0, 0.0}, f, ident, opt);
        FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
        CHECK(e.iterates.size() >= 10);
    }
}

TEST_CASE("subproblem solution is a stable descent point") {
    auto model = small_energy_model(3);
    auto pop = random_population(41, 30, 3);
    ChannelState ch{2.5, 8e6};
    auto cons = budgets(pop, model, ch, 0.45, 0.85);
    auto cfg = fast_cfg();
    auto problem = PenaltyProblem::bind(pop, model, ch, cons, cfg);

    ThresholdPair anchor(0.4, 0.8);
    ThresholdPair sol = solve_subproblem(problem, anchor, cfg);
    const Vec2 av{anchor.lo, anchor.hi};
    double v_sol = problem.value_and_grad({sol.lo, sol.hi}, av, false).value;
    double v_anchor = problem.value_and_grad(av, av, false).value;
    CHECK(v_sol <= v_anchor + 1e-12);

    // Re-solving from the solution does not move it (fixed point of the
    // strongly convex subproblem).
    ThresholdPair again = solve_subproblem(problem, anchor, cfg, sol);
    CHECK(std::abs(again.lo - sol.lo) < 1e-7);
    CHECK(std::abs(again.hi - sol.hi) < 1e-7);
}

TEST_CASE("a heavier proximal weight keeps the step closer to the anchor") {
    auto model = small_energy_model(3);
    auto pop = random_population(43, 30, 3);
    ChannelState ch{2.5, 8e6};
    auto cons = budgets(pop, model, ch, 20.0, 20.0);  // slack: pure -f_acc
    auto cfg = fast_cfg();
    cfg.kappa = 1e-12;
    cfg.rho = 1e-12;

    double lambda_min =
        penalty_constants(pop, model, ch, cons, cfg).lambda_min;
    ThresholdPair anchor(0.45, 0.8);

    auto step_norm = [&](double lambda) {
        PenaltyConfig c = cfg;
        c.lambda = lambda;
        auto problem = PenaltyProblem::bind(pop, model, ch, cons, c);
        ThresholdPair sol = solve_subproblem(problem, anchor, c);
        return std::hypot(sol.lo - anchor.lo, sol.hi - anchor.hi);
    };
    double near = step_norm(2.0 * lambda_min);
    double far = step_norm(40.0 * lambda_min);
    CHECK(far <= near + 1e-9);
}

TEST_CASE("outer loop: monotone descent and the output rule") {
    auto model = small_energy_model(3);
    auto pop = random_population(47, 40, 3);
    ChannelState ch{2.5, 8e6};
    auto cons = budgets(pop, model, ch, 20.0, 20.0);  // slack budgets
    auto cfg = fast_cfg();
    cfg.kappa = 1e-12;
    cfg.rho = 1e-12;
    cfg.lambda = 2.0 * penalty_constants(pop, model, ch, cons, cfg).lambda_min;

    auto res = optimize_thresholds(pop, model, ch, cons, cfg,
                                   ThresholdPair(0.45, 0.8));
    CHECK(res.feasible);
    CHECK(res.escalations == 0);  // explicit weights never escalate
    REQUIRE(res.outer_iterates.size() >= 2);

    // The slack problem's outer objective is -f_acc (smooth); the proximal
    // point iteration must not increase it.
    auto outer_value = [&](const ThresholdPair& t) {
        return -population_metrics(pop, t, MetricMode::Smooth, cfg.slope).f_acc;
    };
    for (std::size_t i = 1; i < res.outer_iterates.size(); ++i) {
        CHECK(outer_value(res.outer_iterates[i]) <=
              outer_value(res.outer_iterates[i - 1]) + 1e-9);
    }

    // Output rule: the winner is the iterate ending the smallest successive
    // difference, earliest occurrence on ties.
    double best_d = std::numeric_limits<double>::infinity();
    std::size_t best_i = 1;
    for (std::size_t i = 1; i < res.outer_iterates.size(); ++i) {
        double d = std::hypot(res.outer_iterates[i].lo - res.outer_iterates[i - 1].lo,
                              res.outer_iterates[i].hi - res.outer_iterates[i - 1].hi);
        if (d < best_d) {
            best_d = d;
            best_i = i;
        }
    }
    CHECK(res.thresholds.lo == res.outer_iterates[best_i].lo);
    CHECK(res.thresholds.hi == res.outer_iterates[best_i].hi);
}

TEST_CASE("optimizer guards: degenerate population and infeasible channel") {
    auto model = small_energy_model(2);
    ChannelState ch{2.0, 5e6};
    auto cfg = fast_cfg();

    auto heads_only = make_population({{0.3, 0.4}, {0.2, 0.5}}, {false, false});
    auto cons = budgets(heads_only, model, ch, 0.5, 0.9);
    CHECK_THROWS_AS(optimize_thresholds(heads_only, model, ch, cons, cfg,
                                        ThresholdPair(0.3, 0.7)),
                    DegeneratePopulation);

    auto pop = random_population(51, 20, 2);
    cons = budgets(pop, model, ch, 0.5, 0.9);
    // Squeeze the energy budget until the feasibility floor clears the SNR.
    Constraints tight = cons;
    tight.energy_limit =
        20 * cumulative_local_energy(model, 1) +
        model.tx_power * model.payload_bits / (ch.bandwidth * 1e4);
    double floor = feasibility_snr_floor(model, ch, tight);
    CHECK(floor > ch.snr);
    CHECK_THROWS_AS(
        optimize_thresholds(pop, model, ch, tight, cfg, ThresholdPair(0.3, 0.7)),
        InfeasibleChannel);
}

TEST_CASE("separable classes: the optimizer lands in the gap") {
    // Heads never exceed 0.3, tails never drop under 0.7 — any pair inside
    // the gap classifies perfectly.
    auto pop = make_population(
        {{0.25, 0.1}, {0.3, 0.2}, {0.15, 0.22}, {0.8, 0.9}, {0.7, 0.95}},
        {false, false, false, true, true});
    auto model = small_energy_model(2);
    ChannelState ch{3.0, 1e7};
    auto cons = budgets(pop, model, ch, 1.0, 2.0);
    auto r = optimize_thresholds_multistart(pop, model, ch, cons, fast_cfg());
    CHECK(r.feasible);
    auto m = population_metrics(pop, r.thresholds, MetricMode::Hard);
    CHECK(m.p_miss == 0.0);
    CHECK(m.p_false == 0.0);
    CHECK(r.f_acc == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("multistart result is feasible and self-consistent under re-evaluation") {
    auto model = small_energy_model(3);
    ChannelState ch{2.0, 6e6};
    for (std::uint64_t seed : {61ull, 62ull}) {
        auto pop = random_population(seed, 60, 3);
        auto cons = budgets(pop, model, ch, 0.35, 0.75);
        auto r = optimize_thresholds_multistart(pop, model, ch, cons, fast_cfg());
        REQUIRE(r.feasible);
        CHECK(r.starts >= 2);

        auto m = population_metrics(pop, r.thresholds, model, ch, MetricMode::Hard);
        const double mm = static_cast<double>(pop.size());
        CHECK(r.f_acc == doctest::Approx(m.f_acc).epsilon(1e-12));
        CHECK(r.v_bits ==
              doctest::Approx(model.payload_bits * m.p_off * mm).epsilon(1e-9));
        CHECK(r.f_energy ==
              doctest::Approx((m.e_loc_mean + m.e_off_mean) * mm).epsilon(1e-9));
        CHECK(r.v_bits <= cons.data_volume_limit * (1.0 + 1e-12));
        CHECK(r.f_energy <= cons.energy_limit * (1.0 + 1e-12));
    }
}

TEST_CASE("multistart tracks the brute-force grid optimum") {
    auto model = small_energy_model(3);
    ChannelState ch{2.0, 6e6};
    auto pop = random_population(71, 60, 3);
    auto cons = budgets(pop, model, ch, 0.4, 0.8);
    auto r = optimize_thresholds_multistart(pop, model, ch, cons, fast_cfg());
    REQUIRE(r.feasible);

    // 200 x 200 hard-mode oracle.
    double best = 0.0;
    const double mm = static_cast<double>(pop.size());
    for (int i = 1; i < 200; ++i) {
        double lo = i / 200.0;
        for (int j = i + 1; j < 200; ++j) {
            double hi = j / 200.0;
            auto m = population_metrics(pop, ThresholdPair(lo, hi), model, ch,
                                        MetricMode::Hard);
            double v = model.payload_bits * m.p_off * mm;
            double fe = (m.e_loc_mean + m.e_off_mean) * mm;
            if (v <= cons.data_volume_limit && fe <= cons.energy_limit) {
                best = std::max(best, m.f_acc);
            }
        }
    }
    CHECK(r.f_acc >= best - 0.02);
}

TEST_CASE("tightening the data-volume budget never helps accuracy") {
    auto model = small_energy_model(3);
    ChannelState ch{2.5, 8e6};
    auto pop = random_population(81, 60, 3);
    double prev = 2.0;
    for (double frac : {0.5, 0.3, 0.15, 0.08}) {
        auto cons = budgets(pop, model, ch, frac, 1.5);
        auto r = optimize_thresholds_multistart(pop, model, ch, cons, fast_cfg());
        CHECK(r.f_acc <= prev + 1e-12);
        prev = r.f_acc;
    }
}

TEST_CASE("lookup table: construction, bin selection, and statuses") {
    std::vector<LookupEntry> entries(3);
    entries[0] = {0.5, 0.3, 0.7, 0.9, 100.0, 1.0, BinStatus::Ok};
    entries[1] = {1.0, 0.32, 0.72, 0.92, 110.0, 1.1, BinStatus::Ok};
    entries[2] = {2.0, std::nan(""), std::nan(""), std::nan(""), std::nan(""),
                  std::nan(""), BinStatus::Failed};
    LookupTable table(0.4, entries);

    CHECK(table.find(0.3) == nullptr);      // below the lowest edge
    CHECK(table.find(0.5)->snr_lo == 0.5);  // edge inclusive
    CHECK(table.find(0.9)->snr_lo == 0.5);
    CHECK(table.find(1.5)->snr_lo == 1.0);
    CHECK(table.find(50.0)->snr_lo == 2.0);  // top bin extends upward

    // Non-increasing edges are rejected, as are malformed Ok rows.
    auto bad_edges = entries;
    bad_edges[1].snr_lo = 0.5;
    CHECK_THROWS_AS(LookupTable(0.4, bad_edges), InvalidArgument);
    auto bad_ok = entries;
    bad_ok[0].beta_low = 0.9;  // lo >= hi in an Ok row
    CHECK_THROWS_AS(LookupTable(0.4, bad_ok), InvalidArgument);
}

TEST_CASE("lookup table build: floor bins infeasible, the rest solved") {
    auto model = small_energy_model(2);
    auto pop = random_population(91, 30, 2);
    const double bandwidth = 4e4;  // small bandwidth raises the floor
    Constraints cons;
    cons.n_events = 30;
    cons.data_volume_limit = 0.6 * model.payload_bits * 30;
    cons.energy_limit = 30 * cumulative_local_energy(model, 2) +
                        6.0 * model.tx_power;  // modest transmit headroom
    const double floor =
        feasibility_snr_floor(model, ChannelState{0.0, bandwidth}, cons);
    REQUIRE(floor > 0.05);

    std::vector<double> grid{floor * 0.3, floor * 0.8, floor * 1.6, floor * 3.0};
    auto table =
        build_lookup_table(pop, model, bandwidth, grid, cons, fast_cfg());
    CHECK(table.feasibility_floor() == doctest::Approx(floor).epsilon(1e-12));
    REQUIRE(table.entries().size() == 4);
    CHECK(table.entries()[0].status == BinStatus::Infeasible);
    CHECK(table.entries()[1].status == BinStatus::Infeasible);
    CHECK(table.entries()[2].status == BinStatus::Ok);
    CHECK(table.entries()[3].status == BinStatus::Ok);
    // Ok bins carry valid threshold pairs and within-budget loads.
    for (std::size_t i = 2; i < 4; ++i) {
        const auto& e = table.entries()[i];
        CHECK_NOTHROW(ThresholdPair(e.beta_low, e.beta_up));
        CHECK(e.v_bits <= cons.data_volume_limit * (1 + 1e-12));
        CHECK(e.f_energy <= cons.energy_limit * (1 + 1e-12));
    }

    std::vector<double> bad{1.0, 1.0};
    CHECK_THROWS_AS(build_lookup_table(pop, model, bandwidth, bad, cons,
                                       fast_cfg()),
                    InvalidArgument);
}

TEST_CASE("lookup table csv round-trips") {
    std::vector<LookupEntry> entries(3);
    entries[0] = {0.25, std::nan(""), std::nan(""), std::nan(""),
                  std::nan(""), std::nan(""), BinStatus::Infeasible};
    entries[1] = {0.75, 0.3141592653589793, 0.7182818284590452, 0.875,
                  123456.0, 0.04321, BinStatus::Ok};
    entries[2] = {3.5, std::nan(""), std::nan(""), std::nan(""), std::nan(""),
                  std::nan(""), BinStatus::Failed};
    LookupTable table(0.6180339887498949, entries);

    const std::string path = "tmp_lookup.csv";
    save_lookup_csv(table, path);
    auto loaded = load_lookup_csv(path);
    std::remove(path.c_str());

    CHECK(loaded.feasibility_floor() ==
          doctest::Approx(table.feasibility_floor()).epsilon(1e-15));
    REQUIRE(loaded.entries().size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = table.entries()[i];
        const auto& b = loaded.entries()[i];
        CHECK(b.status == a.status);
        // SNR passes through a dB conversion — near-exact, not bitwise.
        CHECK(b.snr_lo == doctest::Approx(a.snr_lo).epsilon(1e-12));
        if (a.status == BinStatus::Ok) {
            CHECK(b.beta_low == a.beta_low);  // %.17g round-trips exactly
            CHECK(b.beta_up == a.beta_up);
            CHECK(b.f_acc == a.f_acc);
            CHECK(b.v_bits == a.v_bits);
            CHECK(b.f_energy == a.f_energy);
        }
    }
}

TEST_CASE("lookup table csv: malformed inputs are located") {
    auto write = [](const std::string& name, const std::string& body) {
        std::string path = "tmp_" + name;
        std::ofstream out(path);
        out << body;
        return path;
    };
    const std::string header =
        "snr_db,beta_low,beta_up,f_acc,v_bits,energy_j,status\n";

    auto p = write("lt_nofloor.csv", header);
    CHECK_THROWS_AS(load_lookup_csv(p), ParseError);
    std::remove(p.c_str());

    p = write("lt_badhdr.csv", "# feasibility_floor_snr=1\nsnr,stuff\n");
    CHECK_THROWS_AS(load_lookup_csv(p), ParseError);
    std::remove(p.c_str());

    p = write("lt_badstatus.csv", "# feasibility_floor_snr=1\n" + header +
                                      "0,0.3,0.7,0.9,10,0.1,maybe\n");
    CHECK_THROWS_AS(load_lookup_csv(p), ParseError);
    std::remove(p.c_str());

    p = write("lt_fields.csv",
              "# feasibility_floor_snr=1\n" + header + "0,0.3,0.7,ok\n");
    CHECK_THROWS_AS(load_lookup_csv(p), ParseError);
    std::remove(p.c_str());

    p = write("lt_nonnum.csv", "# feasibility_floor_snr=1\n" + header +
                                   "0,x,0.7,0.9,10,0.1,ok\n");
    CHECK_THROWS_AS(load_lookup_csv(p), ParseError);
    std::remove(p.c_str());

    CHECK_THROWS_AS(load_lookup_csv("definitely_not_here.csv"), Error);
}

TEST_CASE("warm and cold table builds land on comparable accuracy") {
    auto model = small_energy_model(2);
    auto pop = random_population(97, 40, 2);
    ChannelState ref{1.0, 5e6};
    auto cons = budgets(pop, model, ref, 0.4, 0.8);
    std::vector<double> grid{0.8, 1.4, 2.2};
    auto warm = build_lookup_table(pop, model, 5e6, grid, cons, fast_cfg(), true);
    auto cold = build_lookup_table(pop, model, 5e6, grid, cons, fast_cfg(), false);
    REQUIRE(warm.entries().size() == cold.entries().size());
    for (std::size_t i = 0; i < warm.entries().size(); ++i) {
        const auto& w = warm.entries()[i];
        const auto& c = cold.entries()[i];
        CHECK(w.status == c.status);
        if (w.status == BinStatus::Ok && c.status == BinStatus::Ok) {
            CHECK(std::abs(w.f_acc - c.f_acc) <= 0.02);
        }
    }
}
