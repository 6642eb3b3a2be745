#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exitoff/energy.hpp"
#include "exitoff/errors.hpp"

namespace exitoff {

using Vec2 = std::array<double, 2>;  // (beta_low, beta_up) as raw coordinates

// Valid-box geometry for projected updates: eps <= lo <= hi - delta,
// hi <= 1 - eps. The unconstrained gradient step can leave the ThresholdPair
// invariant; projection restores it.
inline constexpr double kBoxEps = 1e-4;
inline constexpr double kBoxDelta = 1e-3;
Vec2 project_to_box(Vec2 p);

struct PenaltyConfig {
  // Unset weights are auto-derived: lambda = 1.5x the smallest value keeping
  // the subproblem strongly convex; kappa/rho = 100 / constraint-scale^2
  // reached through a doubling ladder (see optimize_thresholds).
  std::optional<double> lambda;
  std::optional<double> kappa;
  std::optional<double> rho;
  double slope = 50.0;  // shared sigma slope (alpha), also the k in gamma
  int outer_iters = 600;   // T: proximal-point steps per penalty level (cap)
  int inner_iters = 200;   // I: APG iterations per subproblem
  int snr_bins = 24;       // default lookup-table resolution for the CLI
  double convergence_tol = 1e-3;  // relative constraint-violation tolerance
  int max_escalations = 20;       // cap on penalty doublings past the start
  void validate() const;
};

struct DerivedConstants {
  double gamma = 0;    // gradient-Lipschitz bound of the smooth indicators
  double a_const = 0;  // A: cap used by the data-volume penalty curvature
  double b_const = 0;  // B: cap used by the energy penalty curvature
  double psi = 0;      // smoothness modulus of f_t
  double eta = 0;      // strong-convexity modulus of f_t
  // Resolved weights in effect and the lambda solving eta = 0 for them.
  double lambda = 0, kappa = 0, rho = 0;
  double lambda_min = 0;
};

// k^2 * N(N+1)(N + 4*sqrt(3) - 1) / 24.
double gamma_constant(int n_blocks, double slope);

// Computes gamma/A/B/psi/eta for the given problem, resolving auto weights.
// Throws LambdaTooSmall (carrying the minimal workable value) when an
// explicit lambda leaves eta <= 0.
DerivedConstants penalty_constants(const TracePopulation& pop,
                                   const EnergyModel& model,
                                   const ChannelState& ch,
                                   const Constraints& cons,
                                   const PenaltyConfig& cfg);

// Immutable binding of (population, physics, resolved weights) used by the
// inner loops. Rebuilt per penalty-escalation level.
class PenaltyProblem {
 public:
  static PenaltyProblem bind(const TracePopulation& pop,
                             const EnergyModel& model, const ChannelState& ch,
                             const Constraints& cons, const PenaltyConfig& cfg,
                             std::optional<double> kappa_override = {},
                             std::optional<double> rho_override = {});

  struct Eval {
    double value = 0;
    Vec2 grad{0, 0};
    double f_acc = 0;     // smooth
    double v_bits = 0;    // smooth D*M*p_off
    double f_energy = 0;  // smooth M*e_total
  };
  // f_t = -f_acc + (lambda/2)|thr-anchor|^2
  //       + (kappa/2) max{0, v-theta}^2 + (rho/2) max{0, f_energy-xi}^2
  Eval value_and_grad(Vec2 thr, Vec2 anchor, bool with_grad = true) const;

  const DerivedConstants& constants() const { return dc_; }
  const Constraints& constraints() const { return cons_; }
  const TracePopulation& population() const { return *pop_; }

 private:
  const TracePopulation* pop_ = nullptr;
  const EnergyModel* model_ = nullptr;
  ChannelState ch_{};
  Constraints cons_{};
  double slope_ = 0;
  DerivedConstants dc_{};
  std::vector<double> cum_energy_;  // E_loc(1..N)
  double e_off_per_event_ = 0;      // P_tr*D/R_tr
};

// Free-function form of the subproblem objective, for tests and bindings.
PenaltyProblem::Eval penalty_value_and_grad(
    const ThresholdPair& thr, const ThresholdPair& anchor,
    const TracePopulation& pop, const EnergyModel& model,
    const ChannelState& ch, const Constraints& cons, const PenaltyConfig& cfg);

// ---- generic projected APG ------------------------------------------------
struct ApgOptions {
  double psi = 1;        // stepsize 1/psi
  double eta = 0;        // momentum (sqrt(psi)-sqrt(eta))/(sqrt(psi)+sqrt(eta))
  int max_iters = 100;
  double stall_tol = 0;  // stop when the prox step norm drops below this
};

struct ApgResult {
  Vec2 x{0, 0};
  int iters = 0;
  std::vector<Vec2> iterates;  // x_0 .. x_iters (prox points)
};

// f: Vec2 -> (value, gradient). proj: Vec2 -> Vec2 (Euclidean-ish projection
// onto the feasible set; identity for unconstrained problems). Throws
// NumericalFailure when the objective rises 10 iterations in a row while
// sitting above its starting value — momentum iterations ripple by design,
// so a rise only counts as divergence once the ripple clears the start.
template <class ValueGrad, class Project>
ApgResult apg_minimize(Vec2 x0, ValueGrad&& f, Project&& proj,
                       const ApgOptions& opt) {
  const double mom = (std::sqrt(opt.psi) - std::sqrt(opt.eta)) /
                     (std::sqrt(opt.psi) + std::sqrt(opt.eta));
  ApgResult res;
  Vec2 x = proj(x0);
  Vec2 y = x;
  res.iterates.push_back(x);
  double prev_val = std::numeric_limits<double>::infinity();
  double ceiling = std::numeric_limits<double>::infinity();
  int rises = 0;
  for (int i = 0; i < opt.max_iters; ++i) {
    auto [val, grad] = f(y);
    if (i == 0) ceiling = val + std::max(std::abs(val), 1e-9);
    if (val > prev_val && val > ceiling) {
      if (++rises >= 10) {
        throw NumericalFailure(
            res.iterates,
            "APG objective rose for 10 consecutive iterations (divergence)");
      }
    } else {
      rises = 0;
    }
    prev_val = val;
    Vec2 xn = proj({y[0] - grad[0] / opt.psi, y[1] - grad[1] / opt.psi});
    double step = std::hypot(xn[0] - x[0], xn[1] - x[1]);
    y = proj({xn[0] + mom * (xn[0] - x[0]), xn[1] + mom * (xn[1] - x[1])});
    x = xn;
    res.iterates.push_back(x);
    res.iters = i + 1;
    if (step <= opt.stall_tol) break;
  }
  res.x = x;
  return res;
}

// One proximal subproblem: APG on f_t(., anchor) from `start`, projected into
// the threshold box. Returns the final iterate.
ThresholdPair solve_subproblem(const PenaltyProblem& problem,
                               const ThresholdPair& anchor,
                               const PenaltyConfig& cfg,
                               std::optional<ThresholdPair> start = {});

struct OptimizeResult {
  ThresholdPair thresholds;                   // output-rule winner
  std::vector<ThresholdPair> outer_iterates;  // final level, anchor included
  DerivedConstants constants;                 // final level
  int escalations = 0;   // penalty doublings actually taken
  bool feasible = false; // smooth constraints met within convergence_tol
  double f_acc_smooth = 0, v_bits = 0, f_energy = 0;  // smooth, at thresholds
};

// Outer proximal-point loop with quadratic-penalty continuation. Weights
// start well below their targets and double (on the violated constraint)
// until the returned point is feasible within convergence_tol or the
// escalation budget runs out; the output rule (smallest successive-difference
// norm, earliest tie) is applied to the final level's iterates.
OptimizeResult optimize_thresholds(const TracePopulation& pop,
                                   const EnergyModel& model,
                                   const ChannelState& ch,
                                   const Constraints& cons,
                                   const PenaltyConfig& cfg,
                                   ThresholdPair init);

struct MultistartResult {
  ThresholdPair thresholds;
  bool feasible = false;         // hard-mode feasibility
  double f_acc = 0, v_bits = 0, f_energy = 0;  // hard-mode at thresholds
  int starts = 0;                // APG runs attempted
  int failed_starts = 0;         // runs lost to NumericalFailure
};

// Deployment-grade wrapper around optimize_thresholds. Combines a dense
// hard-mode lattice scan (best cell, least-violation fallback, and a
// shortlist of spatially distinct top cells that each get a fine local
// refinement), a symmetric single-threshold family, and smooth descent runs
// from a default init, the scan winner, and any extra inits (e.g. the
// previous SNR bin). Candidates are ranked by hard-mode feasible f_acc with
// deterministic tie-breaks, and the overall winner gets a final local
// refinement. The smooth core keeps its convergence guarantees; this layer
// closes the gap between the sigma relaxation and hard-mode scoring.
MultistartResult optimize_thresholds_multistart(
    const TracePopulation& pop, const EnergyModel& model,
    const ChannelState& ch, const Constraints& cons, const PenaltyConfig& cfg,
    const std::vector<ThresholdPair>& extra_inits = {});

// ---- SNR-indexed lookup table ----------------------------------------------
enum class BinStatus { Ok, Infeasible, Failed };

struct LookupEntry {
  double snr_lo = 0;  // bin lower edge, linear SNR
  double beta_low = std::numeric_limits<double>::quiet_NaN();
  double beta_up = std::numeric_limits<double>::quiet_NaN();
  double f_acc = std::numeric_limits<double>::quiet_NaN();
  double v_bits = std::numeric_limits<double>::quiet_NaN();
  double f_energy = std::numeric_limits<double>::quiet_NaN();  // energy_j
  BinStatus status = BinStatus::Infeasible;
};

class LookupTable {
 public:
  LookupTable(double feasibility_floor, std::vector<LookupEntry> entries);

  const std::vector<LookupEntry>& entries() const { return entries_; }
  double feasibility_floor() const { return floor_; }
  // Greatest bin edge <= snr, any status; nullptr when snr is below the
  // lowest edge.
  const LookupEntry* find(double snr) const;

 private:
  double floor_ = 0;
  std::vector<LookupEntry> entries_;
};

// One optimization per grid SNR (ascending); bins under the feasibility
// floor are marked infeasible, per-bin solver failures are recorded as
// Failed entries rather than aborting. warm_start seeds each bin with the
// previous Ok bin's thresholds.
LookupTable build_lookup_table(const TracePopulation& pop,
                               const EnergyModel& model, double bandwidth,
                               const std::vector<double>& snr_grid,
                               const Constraints& cons,
                               const PenaltyConfig& cfg,
                               bool warm_start = true);

// CSV: header snr_db,beta_low,beta_up,f_acc,v_bits,energy_j,status plus a
// leading `# feasibility_floor_snr=` comment; round-trips through load.
void save_lookup_csv(const LookupTable& table, const std::string& path);
LookupTable load_lookup_csv(const std::string& path);

std::string to_string(BinStatus s);

}  // namespace exitoff
