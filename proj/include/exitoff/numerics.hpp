#pragma once

#include <cmath>
#include <cstdint>

namespace exitoff {

// Compensated (Kahan–Neumaier) accumulator. Population reductions promise
// results stable to 1e-12 under reordering, which plain summation of ~1e4
// mixed-magnitude terms does not give.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// splitmix64: cheap, well-mixed stream splitter used to derive independent
// per-interval seeds from (campaign seed, interval index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace exitoff
