#include "exitoff/detector.hpp"

#include <cmath>

#include "exitoff/errors.hpp"
#include "exitoff/numerics.hpp"

namespace exitoff {

ThresholdPair::ThresholdPair(double beta_low, double beta_up)
    : lo(beta_low), hi(beta_up) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && 0.0 < lo && lo < hi &&
        hi < 1.0)) {
    throw InvalidArgument("ThresholdPair requires 0 < beta_low < beta_up < 1");
  }
}

double logistic(double y, double alpha) {
  if (!(std::isfinite(alpha) && alpha > 0.0)) {
    throw InvalidArgument("logistic: alpha must be finite and positive");
  }
  if (!std::isfinite(y)) throw InvalidArgument("logistic: y must be finite");
  double t = alpha * y;
  if (t >= 0.0) {
    double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

// sigma(alpha*y) without the argument checks; hot path.
inline double sig(double y, double alpha) {
  double t = alpha * y;
  if (t >= 0.0) {
    double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Decision hard_classify(std::span<const double> scores,
                       const ThresholdPair& thr) {
  const int n = static_cast<int>(scores.size());
  if (n == 0) throw InvalidArgument("hard_classify: empty trace");
  for (int b = 0; b < n - 1; ++b) {
    double c = scores[static_cast<std::size_t>(b)];
    if (c < thr.lo) return {EventClass::Head, b + 1};
    if (c > thr.hi) return {EventClass::Tail, b + 1};
  }
  // Terminal block: tail needs strict exceedance, ties go head.
  double last = scores[static_cast<std::size_t>(n - 1)];
  return {last > thr.hi ? EventClass::Tail : EventClass::Head, n};
}

Decision hard_classify(const ConfidenceTrace& trace, const ThresholdPair& thr) {
  return hard_classify(std::span<const double>(trace.scores), thr);
}

SmoothTraceEval eval_trace_smooth(std::span<const double> scores, double lo,
                                  double hi, double alpha,
                                  std::span<const double> weights,
                                  bool with_grad) {
  const int n = static_cast<int>(scores.size());
  const bool weighted = !weights.empty();

  SmoothTraceEval out;
  // Continue-mass through blocks 1..k-1 and the log-derivatives of that
  // product: q_k = sigma(hi-C_k)*sigma(C_k-lo), Q = prod q_k,
  // dQ/dhi = Q*sa, dQ/dlo = -Q*sb.
  double q = 1.0;
  double sa = 0.0;  // sum alpha*(1 - sigma(hi-C_k))
  double sb = 0.0;  // sum alpha*(1 - sigma(C_k-lo))
  for (int b = 0; b < n; ++b) {
    const double c = scores[static_cast<std::size_t>(b)];
    const bool terminal = b == n - 1;

    // Tail exit mass at this block: t = sigma(C-hi) * Q (all blocks).
    {
      double s = sig(c - hi, alpha);
      double t = s * q;
      out.tail_mass += t;
      if (weighted) out.weighted_mass += t * weights[static_cast<std::size_t>(b)];
      if (with_grad) {
        double dhi = t * (sa - alpha * (1.0 - s));
        double dlo = -t * sb;
        out.d_tail[0] += dlo;
        out.d_tail[1] += dhi;
        if (weighted) {
          out.d_weighted[0] += dlo * weights[static_cast<std::size_t>(b)];
          out.d_weighted[1] += dhi * weights[static_cast<std::size_t>(b)];
        }
      }
    }
    // Head exit mass: sigma(lo-C)*Q before the last block, forced-head
    // sigma(hi-C)*Q at the terminal block.
    {
      double h, dhi, dlo;
      if (!terminal) {
        double r = sig(lo - c, alpha);
        h = r * q;
        dlo = h * (alpha * (1.0 - r) - sb);
        dhi = h * sa;
      } else {
        double g = sig(hi - c, alpha);
        h = g * q;
        dlo = -h * sb;
        dhi = h * (alpha * (1.0 - g) + sa);
      }
      out.head_mass += h;
      if (weighted) out.weighted_mass += h * weights[static_cast<std::size_t>(b)];
      if (with_grad) {
        out.d_head[0] += dlo;
        out.d_head[1] += dhi;
        if (weighted) {
          out.d_weighted[0] += dlo * weights[static_cast<std::size_t>(b)];
          out.d_weighted[1] += dhi * weights[static_cast<std::size_t>(b)];
        }
      }
    }
    if (!terminal) {
      double a = sig(hi - c, alpha);
      double bfac = sig(c - lo, alpha);
      q *= a * bfac;
      sa += alpha * (1.0 - a);
      sb += alpha * (1.0 - bfac);
    }
  }
  return out;
}

namespace {

void check_block_index(std::span<const double> scores, int n) {
  if (n < 1 || n > static_cast<int>(scores.size())) {
    throw InvalidArgument("block index out of range");
  }
}

}  // namespace

double smooth_head_indicator(std::span<const double> scores,
                             const ThresholdPair& thr, double alpha, int n) {
  check_block_index(scores, n);
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  double q = 1.0;
  for (int k = 0; k < n - 1; ++k) {
    double c = scores[static_cast<std::size_t>(k)];
    q *= sig(thr.hi - c, alpha) * sig(c - thr.lo, alpha);
  }
  double c = scores[static_cast<std::size_t>(n - 1)];
  double front = (n == static_cast<int>(scores.size()))
                     ? sig(thr.hi - c, alpha)   // forced-head terminal form
                     : sig(thr.lo - c, alpha);
  return front * q;
}

double smooth_tail_indicator(std::span<const double> scores,
                             const ThresholdPair& thr, double alpha, int n) {
  check_block_index(scores, n);
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  double q = 1.0;
  for (int k = 0; k < n - 1; ++k) {
    double c = scores[static_cast<std::size_t>(k)];
    q *= sig(thr.hi - c, alpha) * sig(c - thr.lo, alpha);
  }
  return sig(scores[static_cast<std::size_t>(n - 1)] - thr.hi, alpha) * q;
}

DetectionMetrics population_metrics(const TracePopulation& pop,
                                    const ThresholdPair& thr, MetricMode mode,
                                    double alpha) {
  const auto m = static_cast<double>(pop.size());
  const auto m_tail = static_cast<double>(pop.m_tail());
  const auto m_head = static_cast<double>(pop.m_head());
  if (pop.m_tail() == 0) {
    throw DegeneratePopulation(
        "population has no tail events; p_miss/f_acc are undefined");
  }

  DetectionMetrics out;
  out.p_tail = m_tail / m;
  out.p_head = m_head / m;

  if (mode == MetricMode::Hard) {
    std::int64_t tail_hits = 0;   // true tails detected tail
    std::int64_t false_hits = 0;  // heads detected tail
    std::int64_t credited = 0;    // tail hits with server_correct
    for (const auto& t : pop.traces()) {
      Decision d = hard_classify(t, thr);
      if (d.label == EventClass::Tail) {
        if (t.label == EventClass::Tail) {
          ++tail_hits;
          if (t.server_correct) ++credited;
        } else {
          ++false_hits;
        }
      }
    }
    out.p_miss = 1.0 - static_cast<double>(tail_hits) / m_tail;
    out.p_false = pop.m_head() == 0
                      ? 0.0
                      : static_cast<double>(false_hits) / m_head;
    // First form of the offloading probability: tail detections on tails
    // plus head misdetections, over M.
    out.p_off =
        (static_cast<double>(tail_hits) + static_cast<double>(false_hits)) / m;
    out.f_acc = static_cast<double>(credited) / m_tail;
    return out;
  }

  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  KahanSum tail_mass_tails;   // sum of T(m) over true tails
  KahanSum head_mass_heads;   // sum of H(m) over true heads
  KahanSum credited_mass;     // sum of T(m) over server-correct tails
  for (const auto& t : pop.traces()) {
    auto ev = eval_trace_smooth(t.scores, thr.lo, thr.hi, alpha);
    if (t.label == EventClass::Tail) {
      tail_mass_tails.add(ev.tail_mass);
      if (t.server_correct) credited_mass.add(ev.tail_mass);
    } else {
      head_mass_heads.add(ev.head_mass);
    }
  }
  out.p_miss = 1.0 - tail_mass_tails.value() / m_tail;
  out.p_false =
      pop.m_head() == 0 ? 0.0 : 1.0 - head_mass_heads.value() / m_head;
  out.p_off = (tail_mass_tails.value() + (m_head - head_mass_heads.value())) / m;
  out.f_acc = credited_mass.value() / m_tail;
  return out;
}

std::array<double, 2> metrics_gradient(const TracePopulation& pop,
                                       const ThresholdPair& thr, double alpha,
                                       MetricKind kind) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (kind == MetricKind::ELoc || kind == MetricKind::EOff) {
    throw InvalidArgument(
        "energy gradients need the EnergyModel/ChannelState overload");
  }
  if (pop.m_tail() == 0) {
    throw DegeneratePopulation(
        "population has no tail events; metric gradients are undefined");
  }
  const auto m = static_cast<double>(pop.size());
  const auto m_tail = static_cast<double>(pop.m_tail());

  KahanSum g_lo, g_hi;
  for (const auto& t : pop.traces()) {
    auto ev = eval_trace_smooth(t.scores, thr.lo, thr.hi, alpha, {}, true);
    switch (kind) {
      case MetricKind::FAcc:
        if (t.label == EventClass::Tail && t.server_correct) {
          g_lo.add(ev.d_tail[0]);
          g_hi.add(ev.d_tail[1]);
        }
        break;
      case MetricKind::POff:
        if (t.label == EventClass::Tail) {
          g_lo.add(ev.d_tail[0]);
          g_hi.add(ev.d_tail[1]);
        } else {
          g_lo.add(-ev.d_head[0]);
          g_hi.add(-ev.d_head[1]);
        }
        break;
      default:
        break;
    }
  }
  double norm = kind == MetricKind::FAcc ? m_tail : m;
  return {g_lo.value() / norm, g_hi.value() / norm};
}

}  // namespace exitoff
