#pragma once

#include <array>
#include <limits>
#include <span>
#include <vector>

#include "exitoff/traces.hpp"

namespace exitoff {

// Dual confidence thresholds, 0 < lo < hi < 1. The constructor enforces the
// invariant; optimizer internals work on raw coordinate pairs and convert at
// the boundary.
struct ThresholdPair {
  ThresholdPair(double beta_low, double beta_up);
  double lo;  // beta_low: below this the block declares head
  double hi;  // beta_up: above this the block declares tail
};

struct Decision {
  EventClass label;
  int exit_block;  // 1-based
};

enum class MetricMode { Hard, Smooth };

// Which metric metrics_gradient differentiates.
enum class MetricKind { FAcc, POff, ELoc, EOff };

struct DetectionMetrics {
  double p_miss = 0;   // tail events not detected tail, / M_tail
  double p_false = 0;  // head events detected tail, / M_head
  double p_off = 0;    // events sent to the server, / M
  double f_acc = 0;    // tail events offloaded AND server-correct, / M_tail
  double p_tail = 0;   // class priors
  double p_head = 0;
  // Per-event energy expectations; NaN unless the energy-model overload of
  // population_metrics (or expected_energy) filled them.
  double e_loc_mean = std::numeric_limits<double>::quiet_NaN();
  double e_off_mean = std::numeric_limits<double>::quiet_NaN();
};

// Verhulst logistic 1/(1+exp(-alpha*y)), overflow-safe on both tails.
double logistic(double y, double alpha);

// Scan blocks in order: score < lo -> head exit, score > hi -> tail exit,
// otherwise continue. At block N the rule is terminal: C_N > hi -> tail,
// else head (ties go head — forced-head convention).
Decision hard_classify(std::span<const double> scores, const ThresholdPair& thr);
Decision hard_classify(const ConfidenceTrace& trace, const ThresholdPair& thr);

// Softened exit indicators: sigma-products that converge to the hard one-hot
// exit vector as alpha -> inf. n is 1-based; n == N uses the forced-head
// terminal form sigma(hi - C_N) * prod.
double smooth_head_indicator(std::span<const double> scores,
                             const ThresholdPair& thr, double alpha, int n);
double smooth_tail_indicator(std::span<const double> scores,
                             const ThresholdPair& thr, double alpha, int n);

// One-pass smooth evaluation of a single trace: total tail mass
// T = sum_n t_n, total head mass H = sum_n h_n, and (optionally) the
// exit-weighted mass W = sum_n (t_n + h_n) * weights[n-1] used for local
// energy. Gradients are with respect to (lo, hi).
struct SmoothTraceEval {
  double tail_mass = 0;      // T
  double head_mass = 0;      // H
  double weighted_mass = 0;  // W (0 when no weights given)
  std::array<double, 2> d_tail{0, 0};
  std::array<double, 2> d_head{0, 0};
  std::array<double, 2> d_weighted{0, 0};
};
SmoothTraceEval eval_trace_smooth(std::span<const double> scores, double lo,
                                  double hi, double alpha,
                                  std::span<const double> weights = {},
                                  bool with_grad = false);

// Population metrics per the miss/false-alarm/offload definitions. Hard mode
// counts hard_classify outcomes; smooth mode replaces indicators with the
// sigma-products but keeps the same normalizations. The energy fields are NaN
// in this overload.
DetectionMetrics population_metrics(const TracePopulation& pop,
                                    const ThresholdPair& thr, MetricMode mode,
                                    double alpha = 50.0);

// d(metric)/d(lo, hi) in smooth mode, analytic. ELoc/EOff need the energy
// model and channel; see the overload in energy.hpp.
std::array<double, 2> metrics_gradient(const TracePopulation& pop,
                                       const ThresholdPair& thr, double alpha,
                                       MetricKind kind);

}  // namespace exitoff
