// Shared helpers for the unit and acceptance suites: finite-difference
// gradient oracles, small population builders, and tolerance utilities.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include <exitoff/detector.hpp>
#include <exitoff/energy.hpp>
#include <exitoff/optimizer.hpp>
#include <exitoff/traces.hpp>

namespace testsupport {

// Central finite difference of a scalar function of a threshold pair.
inline exitoff::Vec2 fd_gradient(
    const std::function<double(const exitoff::ThresholdPair&)>& f,
    const exitoff::ThresholdPair& at, double step = 1e-6) {
    auto shift = [&](double dlo, double dhi) {
        return f(exitoff::ThresholdPair(at.lo + dlo, at.hi + dhi));
    };
    return exitoff::Vec2{(shift(step, 0.0) - shift(-step, 0.0)) / (2.0 * step),
                         (shift(0.0, step) - shift(0.0, -step)) / (2.0 * step)};
}

// Relative error with an absolute floor so near-zero values compare sanely.
inline double rel_err(double got, double want, double floor_abs = 1e-8) {
    double denom = std::max(std::abs(want), floor_abs);
    return std::abs(got - want) / denom;
}

inline double grad_rel_err(const exitoff::Vec2& got, const exitoff::Vec2& want,
                           double floor_abs = 1e-8) {
    double norm = std::max(std::hypot(want[0], want[1]), floor_abs);
    return std::hypot(got[0] - want[0], got[1] - want[1]) / norm;
}

// Hand-built population; each inner vector is one event's per-block scores.
inline exitoff::TracePopulation make_population(
    const std::vector<std::vector<double>>& scores,
    const std::vector<bool>& is_tail,
    const std::vector<bool>& server_correct = {}) {
    std::vector<exitoff::ConfidenceTrace> traces;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        exitoff::ConfidenceTrace ev;
        ev.scores = scores[i];
        ev.label = is_tail[i] ? exitoff::EventClass::Tail : exitoff::EventClass::Head;
        ev.server_correct = server_correct.empty() ? true : bool(server_correct[i]);
        traces.push_back(std::move(ev));
    }
    return exitoff::TracePopulation::from_traces(std::move(traces));
}

// Random population with scores strictly inside (margin, 1 - margin) so that
// finite-difference probes never straddle a hard-classification boundary by
// accident and the smooth indicators stay well away from saturation.
inline exitoff::TracePopulation random_population(std::uint64_t seed,
                                                  std::size_t m, int n_blocks,
                                                  double margin = 0.02) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(margin, 1.0 - margin);
    std::bernoulli_distribution tail(0.25);
    std::vector<exitoff::ConfidenceTrace> traces;
    for (std::size_t i = 0; i < m; ++i) {
        exitoff::ConfidenceTrace ev;
        ev.label = tail(rng) ? exitoff::EventClass::Tail : exitoff::EventClass::Head;
        ev.server_correct = true;
        for (int n = 0; n < n_blocks; ++n) ev.scores.push_back(unif(rng));
        traces.push_back(std::move(ev));
    }
    traces.front().label = exitoff::EventClass::Tail;  // p_miss/f_acc defined
    traces.back().label = exitoff::EventClass::Head;   // p_false defined
    return exitoff::TracePopulation::from_traces(std::move(traces));
}

inline exitoff::EnergyModel small_energy_model(int n_blocks) {
    exitoff::EnergyModel model;
    for (int n = 0; n < n_blocks; ++n) model.mem_ops.push_back(100 * (n + 1));
    model.energy_per_access = 1e-6;
    model.payload_bits = 1e5;
    model.tx_power = 0.5;
    return model;
}

}  // namespace testsupport
