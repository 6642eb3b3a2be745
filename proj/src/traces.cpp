#include "exitoff/traces.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "exitoff/errors.hpp"

namespace exitoff {

namespace {

double clamp_score(double s) {
  return std::clamp(s, kScoreFloor, 1.0 - kScoreFloor);
}

void check_score_range(double s, const char* what) {
  if (!std::isfinite(s) || s <= 0.0 || s >= 1.0) {
    throw InvalidArgument(std::string(what) + ": score must lie strictly in (0,1)");
  }
}

// 53-bit uniform in [0,1) from one engine draw.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box–Muller (cosine branch only) — std::normal_distribution's algorithm is
// implementation-defined, and the generator promises bit-identical output
// for a given seed.
double gaussian(std::mt19937_64& rng) {
  constexpr double two_pi = 6.283185307179586476925287;
  double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TracePopulation TracePopulation::from_traces(std::vector<ConfidenceTrace> traces) {
  if (traces.empty()) {
    throw InvalidArgument("population must contain at least one trace");
  }
  const std::size_t n = traces.front().scores.size();
  if (n == 0) {
    throw InvalidArgument("traces must have at least one block");
  }
  TracePopulation pop;
  for (const auto& t : traces) {
    if (t.scores.size() != n) {
      throw InvalidArgument("all traces must share the same number of blocks");
    }
    for (double s : t.scores) check_score_range(s, "TracePopulation");
    (t.label == EventClass::Head ? pop.m_head_ : pop.m_tail_)++;
  }
  pop.traces_ = std::move(traces);
  pop.n_blocks_ = static_cast<int>(n);
  return pop;
}

double softmax_confidence(double f_tail, double f_head) {
  if (!std::isfinite(f_tail) || !std::isfinite(f_head)) {
    throw InvalidArgument("softmax_confidence: logits must be finite");
  }
  double m = std::max(f_tail, f_head);
  double et = std::exp(f_tail - m);
  double eh = std::exp(f_head - m);
  return et / (et + eh);
}

TracePopulation generate_population(const SyntheticSpec& spec) {
  if (spec.n_events < 1) throw InvalidArgument("generate_population: M >= 1 required");
  if (spec.n_blocks < 1) throw InvalidArgument("generate_population: N >= 1 required");
  if (!(spec.imbalance_ratio >= 1.0)) {
    throw InvalidArgument("generate_population: imbalance ratio R >= 1 required");
  }
  if (!(spec.server_accuracy >= 0.0 && spec.server_accuracy <= 1.0)) {
    throw InvalidArgument("generate_population: server_accuracy in [0,1]");
  }
  for (const ClassParams* p : {&spec.head, &spec.tail}) {
    if (!(p->loc_end > 0.0 && p->loc_end < 1.0)) {
      throw InvalidArgument("generate_population: loc_end in (0,1)");
    }
    if (!(p->latent_sd >= 0.0)) {
      throw InvalidArgument("generate_population: latent_sd >= 0");
    }
  }

  const double m = static_cast<double>(spec.n_events);
  const double r = spec.imbalance_ratio;
  const auto n_head =
      static_cast<std::size_t>(std::llround(m * r / (r + 1.0)));

  std::mt19937_64 rng(spec.seed);

  // Class layout first (heads, then tails), then one Fisher–Yates pass so
  // interval replays see an interleaved stream.
  std::vector<EventClass> labels(spec.n_events, EventClass::Tail);
  std::fill(labels.begin(), labels.begin() + static_cast<long>(n_head),
            EventClass::Head);
  for (std::size_t i = spec.n_events; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(labels[i - 1], labels[j]);
  }

  // Latent means per block, in logit space: drift from 0.5 toward loc_end.
  const int n = spec.n_blocks;
  auto block_means = [&](const ClassParams& p) {
    std::vector<double> mu(static_cast<std::size_t>(n));
    for (int b = 1; b <= n; ++b) {
      double frac = static_cast<double>(b) / static_cast<double>(n);
      mu[static_cast<std::size_t>(b - 1)] =
          logit(0.5 + (p.loc_end - 0.5) * frac);
    }
    return mu;
  };
  const std::vector<double> mu_head = block_means(spec.head);
  const std::vector<double> mu_tail = block_means(spec.tail);

  std::vector<ConfidenceTrace> traces(spec.n_events);
  for (std::size_t i = 0; i < spec.n_events; ++i) {
    auto& t = traces[i];
    t.label = labels[i];
    const bool tail = t.label == EventClass::Tail;
    const auto& mu = tail ? mu_tail : mu_head;
    const double sd = tail ? spec.tail.latent_sd : spec.head.latent_sd;
    t.scores.resize(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
      double z = mu[static_cast<std::size_t>(b)] + sd * gaussian(rng);
      t.scores[static_cast<std::size_t>(b)] =
          clamp_score(1.0 / (1.0 + std::exp(-z)));
    }
    // Draw for every event to keep the stream layout label-independent;
    // only tails keep the result.
    double u = uniform01(rng);
    t.server_correct = tail && u < spec.server_accuracy;
  }
  return TracePopulation::from_traces(std::move(traces));
}

void save_population(const TracePopulation& pop, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << "label,server_correct";
  for (int b = 1; b <= pop.n_blocks(); ++b) out << ",c" << b;
  out << "\n";
  for (const auto& t : pop.traces()) {
    out << (t.label == EventClass::Head ? "head" : "tail") << ','
        << (t.server_correct ? 1 : 0);
    for (double s : t.scores) out << ',' << format_double(s);
    out << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double_field(const std::string& s, const std::string& path,
                          long line) {
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) {
    throw ParseError(path, line, "not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

TracePopulation load_population(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "label" ||
      header[1] != "server_correct") {
    throw ParseError(path, line_no,
                     "expected header label,server_correct,c1,...,cN");
  }
  const std::size_t n_blocks = header.size() - 2;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    if (header[b + 2] != "c" + std::to_string(b + 1)) {
      throw ParseError(path, line_no,
                       "bad score column name: '" + header[b + 2] + "'");
    }
  }

  std::vector<ConfidenceTrace> traces;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != n_blocks + 2) {
      throw ParseError(path, line_no,
                       "expected " + std::to_string(n_blocks + 2) +
                           " fields, got " + std::to_string(fields.size()));
    }
    ConfidenceTrace t;
    if (fields[0] == "head") {
      t.label = EventClass::Head;
    } else if (fields[0] == "tail") {
      t.label = EventClass::Tail;
    } else {
      throw ParseError(path, line_no, "label must be head or tail");
    }
    if (fields[1] == "0") {
      t.server_correct = false;
    } else if (fields[1] == "1") {
      t.server_correct = true;
    } else {
      throw ParseError(path, line_no, "server_correct must be 0 or 1");
    }
    t.scores.reserve(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      double v = parse_double_field(fields[b + 2], path, line_no);
      if (!std::isfinite(v) || v <= 0.0 || v >= 1.0) {
        throw ParseError(path, line_no,
                         "score out of (0,1): " + fields[b + 2]);
      }
      t.scores.push_back(clamp_score(v));
    }
    traces.push_back(std::move(t));
  }
  if (traces.empty()) throw ParseError(path, line_no, "no data rows");
  return TracePopulation::from_traces(std::move(traces));
}

}  // namespace exitoff
