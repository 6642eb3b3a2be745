#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace exitoff {

enum class EventClass { Head, Tail };

// Scores are clamped into [kScoreFloor, 1 - kScoreFloor] on ingestion so
// logistic arguments stay finite.
inline constexpr double kScoreFloor = 1e-9;

// One event: tail-confidence score at each exit block, ground truth, and
// whether the server would classify it correctly if offloaded (only
// meaningful for tail events; ignored for heads).
struct ConfidenceTrace {
  std::vector<double> scores;  // c_1..c_N, each strictly in (0,1)
  EventClass label = EventClass::Head;
  bool server_correct = false;
};

// Immutable bundle of traces sharing one depth N. Construct through
// from_traces / generate_population / load_population so the invariants
// (M >= 1, uniform N, scores in (0,1)) are checked once up front.
class TracePopulation {
 public:
  static TracePopulation from_traces(std::vector<ConfidenceTrace> traces);

  const std::vector<ConfidenceTrace>& traces() const { return traces_; }
  const ConfidenceTrace& operator[](std::size_t i) const { return traces_[i]; }
  std::size_t size() const { return traces_.size(); }
  int n_blocks() const { return n_blocks_; }
  std::size_t m_head() const { return m_head_; }
  std::size_t m_tail() const { return m_tail_; }

 private:
  TracePopulation() = default;
  std::vector<ConfidenceTrace> traces_;
  int n_blocks_ = 0;
  std::size_t m_head_ = 0;
  std::size_t m_tail_ = 0;
};

// Per-class knobs for the synthetic generator. Scores are a logistic squash
// of a Gaussian latent whose mean drifts linearly (in logit space) from 0.5
// at depth 0 toward loc_end at the deepest block, so shallow blocks overlap
// across classes and deep blocks separate.
struct ClassParams {
  double loc_end = 0.5;    // mean score at block N, in (0,1)
  double latent_sd = 0.9;  // std dev of the logit-space latent, >= 0
};

struct SyntheticSpec {
  std::size_t n_events = 0;      // M
  int n_blocks = 0;              // N
  double imbalance_ratio = 1.0;  // R, head:tail = R:1
  ClassParams head{0.15, 0.9};
  ClassParams tail{0.85, 0.9};
  double server_accuracy = 1.0;  // P(server correct | tail offloaded)
  std::uint64_t seed = 0;
};

// P(tail) from the two exit-head logits, computed with max-subtraction so
// large-magnitude logits do not overflow.
double softmax_confidence(double f_tail, double f_head);

// Deterministic: identical spec (including seed) gives a bit-identical
// population. Head count is round(M*R/(R+1)) — no stochastic class split.
TracePopulation generate_population(const SyntheticSpec& spec);

// CSV with header `label,server_correct,c1,...,cN`. See save_population for
// the writer; the two round-trip exactly.
TracePopulation load_population(const std::string& path);
void save_population(const TracePopulation& pop, const std::string& path);

}  // namespace exitoff
