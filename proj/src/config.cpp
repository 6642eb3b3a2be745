#include "exitoff/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "exitoff/errors.hpp"

namespace exitoff {

SweepAxis axis_from_string(const std::string& s) {
  if (s == "offload_constraint") return SweepAxis::OffloadConstraint;
  if (s == "energy_constraint") return SweepAxis::EnergyConstraint;
  if (s == "snr") return SweepAxis::Snr;
  if (s == "imbalance_ratio") return SweepAxis::ImbalanceRatio;
  throw InvalidArgument(
      "unknown sweep axis '" + s +
      "' (expected offload_constraint, energy_constraint, snr, or "
      "imbalance_ratio)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::OffloadConstraint: return "offload_constraint";
    case SweepAxis::EnergyConstraint: return "energy_constraint";
    case SweepAxis::Snr: return "snr";
    case SweepAxis::ImbalanceRatio: return "imbalance_ratio";
  }
  return "unknown";
}

namespace {

struct RawValue {
  std::string text;
  long line = 0;
  mutable bool used = false;
};

// section -> key -> value; insertion-ordered enough via std::map for error
// reporting.
using RawConfig = std::map<std::string, std::map<std::string, RawValue>>;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment, respecting double quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

class Section {
 public:
  Section(const RawConfig& raw, std::string name, std::string file)
      : name_(std::move(name)), file_(std::move(file)) {
    auto it = raw.find(name_);
    if (it != raw.end()) values_ = &it->second;
  }

  bool present() const { return values_ != nullptr; }

  const RawValue* find(const std::string& key) const {
    if (!values_) return nullptr;
    auto it = values_->find(key);
    if (it == values_->end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  const RawValue& require(const std::string& key) const {
    const RawValue* v = find(key);
    if (!v) {
      throw ParseError(file_, 0,
                       "missing required key '" + key + "' in [" + name_ + "]");
    }
    return *v;
  }

  double get_double(const std::string& key) const {
    return parse_double(require(key), key);
  }
  std::optional<double> opt_double(const std::string& key) const {
    const RawValue* v = find(key);
    if (!v) return {};
    return parse_double(*v, key);
  }
  double get_double_or(const std::string& key, double dflt) const {
    return opt_double(key).value_or(dflt);
  }

  std::int64_t get_int(const std::string& key) const {
    return parse_int(require(key), key);
  }
  std::int64_t get_int_or(const std::string& key, std::int64_t dflt) const {
    const RawValue* v = find(key);
    return v ? parse_int(*v, key) : dflt;
  }

  std::string get_string(const std::string& key) const {
    return parse_string(require(key), key);
  }
  std::string get_string_or(const std::string& key,
                            const std::string& dflt) const {
    const RawValue* v = find(key);
    return v ? parse_string(*v, key) : dflt;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    const RawValue& v = require(key);
    std::vector<double> out;
    for (const auto& item : split_list(v, key)) {
      out.push_back(parse_double(RawValue{item, v.line}, key));
    }
    return out;
  }
  std::vector<std::int64_t> get_int_list(const std::string& key) const {
    const RawValue& v = require(key);
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(v, key)) {
      out.push_back(parse_int(RawValue{item, v.line}, key));
    }
    return out;
  }

  void check_all_used() const {
    if (!values_) return;
    for (const auto& [key, value] : *values_) {
      if (!value.used) {
        throw ParseError(file_, value.line,
                         "unknown key '" + key + "' in [" + name_ + "]");
      }
    }
  }

 private:
  double parse_double(const RawValue& v, const std::string& key) const {
    double out = 0;
    const char* b = v.text.data();
    const char* e = b + v.text.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) {
      throw ParseError(file_, v.line,
                       "key '" + key + "': expected a number, got '" + v.text +
                           "'");
    }
    return out;
  }
  std::int64_t parse_int(const RawValue& v, const std::string& key) const {
    std::int64_t out = 0;
    const char* b = v.text.data();
    const char* e = b + v.text.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) {
      throw ParseError(file_, v.line,
                       "key '" + key + "': expected an integer, got '" +
                           v.text + "'");
    }
    return out;
  }
  std::string parse_string(const RawValue& v, const std::string& key) const {
    const std::string& t = v.text;
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
      return t.substr(1, t.size() - 2);
    }
    if (!t.empty() && (t.front() == '"' || t.back() == '"')) {
      throw ParseError(file_, v.line, "key '" + key + "': unbalanced quotes");
    }
    return t;
  }
  std::vector<std::string> split_list(const RawValue& v,
                                      const std::string& key) const {
    const std::string& t = v.text;
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') {
      throw ParseError(file_, v.line,
                       "key '" + key + "': expected a [a, b, ...] list");
    }
    std::vector<std::string> items;
    std::string body = t.substr(1, t.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    if (items.empty()) {
      throw ParseError(file_, v.line, "key '" + key + "': empty list");
    }
    return items;
  }

  std::string name_;
  std::string file_;
  const std::map<std::string, RawValue>* values_ = nullptr;
};

RawConfig tokenize(const std::string& text, const std::string& name) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  std::string section;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError(name, line_no, "malformed section header: " + line);
      }
      section = trim(line.substr(1, line.size() - 2));
      raw[section];  // a section may legitimately be empty
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(name, line_no, "expected key = value: " + line);
    }
    if (section.empty()) {
      throw ParseError(name, line_no, "key outside of any [section]");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(name, line_no, "empty key");
    if (value.empty()) {
      throw ParseError(name, line_no, "empty value for key '" + key + "'");
    }
    auto [it, inserted] = raw[section].emplace(key, RawValue{value, line_no});
    if (!inserted) {
      throw ParseError(name, line_no, "duplicate key '" + key + "'");
    }
  }
  return raw;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& name) {
  RawConfig raw = tokenize(text, name);
  const std::set<std::string> known = {"traces",      "energy", "channel",
                                       "constraints", "penalty", "sweep",
                                       "baselines"};
  for (const auto& [section, _] : raw) {
    if (!known.count(section)) {
      throw ParseError(name, 0, "unknown section [" + section + "]");
    }
  }

  ExperimentConfig cfg;

  Section traces(raw, "traces", name);
  cfg.traces.csv_path = traces.get_string_or("csv_path", "");
  auto& syn = cfg.traces.synthetic;
  if (cfg.traces.csv_path.empty()) {
    syn.n_events = traces.get_int("n_events");
    syn.n_blocks = static_cast<int>(traces.get_int("n_blocks"));
    syn.imbalance_ratio = traces.get_double_or("imbalance_ratio", 4.0);
    syn.head.loc_end = traces.get_double_or("head_loc_end", 0.15);
    syn.head.latent_sd = traces.get_double_or("head_latent_sd", 0.9);
    syn.tail.loc_end = traces.get_double_or("tail_loc_end", 0.85);
    syn.tail.latent_sd = traces.get_double_or("tail_latent_sd", 0.9);
    syn.server_accuracy = traces.get_double_or("server_accuracy", 1.0);
    syn.seed = static_cast<std::uint64_t>(traces.get_int_or("seed", 1));
  }
  traces.check_all_used();

  Section energy(raw, "energy", name);
  cfg.energy.mem_ops = energy.get_int_list("mem_ops");
  cfg.energy.energy_per_access = energy.get_double("energy_per_access");
  cfg.energy.payload_bits = energy.get_double("payload_bits");
  cfg.energy.tx_power = energy.get_double("tx_power");
  energy.check_all_used();

  Section channel(raw, "channel", name);
  cfg.channel.snr = std::pow(10.0, channel.get_double("snr_db") / 10.0);
  cfg.channel.bandwidth = channel.get_double("bandwidth");
  channel.check_all_used();

  Section cons(raw, "constraints", name);
  cfg.offload_fraction = cons.get_double("offload_fraction");
  cfg.energy_fraction = cons.get_double("energy_fraction");
  cons.check_all_used();

  Section pen(raw, "penalty", name);
  cfg.penalty.lambda = pen.opt_double("lambda");
  cfg.penalty.kappa = pen.opt_double("kappa");
  cfg.penalty.rho = pen.opt_double("rho");
  cfg.penalty.slope = pen.get_double_or("slope", 50.0);
  cfg.penalty.outer_iters =
      static_cast<int>(pen.get_int_or("outer_iters", 600));
  cfg.penalty.inner_iters =
      static_cast<int>(pen.get_int_or("inner_iters", 200));
  cfg.penalty.snr_bins = static_cast<int>(pen.get_int_or("snr_bins", 24));
  cfg.penalty.convergence_tol = pen.get_double_or("convergence_tol", 1e-3);
  cfg.penalty.max_escalations =
      static_cast<int>(pen.get_int_or("max_escalations", 20));
  pen.check_all_used();

  Section sweep(raw, "sweep", name);
  cfg.sweep.axis = axis_from_string(sweep.get_string("axis"));
  cfg.sweep.grid = sweep.get_double_list("grid");
  cfg.sweep.sim_intervals =
      static_cast<int>(sweep.get_int_or("sim_intervals", 1));
  cfg.sweep.out_dir = sweep.get_string_or("out_dir", "out");
  sweep.check_all_used();

  Section base(raw, "baselines", name);
  cfg.baselines.tau_points =
      static_cast<int>(base.get_int_or("tau_points", 200));
  base.check_all_used();

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void ExperimentConfig::validate() const {
  energy.validate();
  channel.validate();
  penalty.validate();
  if (!(offload_fraction > 0.0 && std::isfinite(offload_fraction))) {
    throw InvalidArgument("offload_fraction must be positive");
  }
  if (!(energy_fraction > 0.0 && std::isfinite(energy_fraction))) {
    throw InvalidArgument("energy_fraction must be positive");
  }
  if (sweep.grid.empty()) throw InvalidArgument("sweep grid must be nonempty");
  for (std::size_t i = 1; i < sweep.grid.size(); ++i) {
    if (!(sweep.grid[i] > sweep.grid[i - 1])) {
      throw InvalidArgument("sweep grid must be strictly ascending");
    }
  }
  if (sweep.sim_intervals < 1) {
    throw InvalidArgument("sim_intervals must be >= 1");
  }
  if (baselines.tau_points < 2) {
    throw InvalidArgument("tau_points must be >= 2");
  }
  if (sweep.axis == SweepAxis::ImbalanceRatio && !traces.csv_path.empty()) {
    throw InvalidArgument(
        "imbalance_ratio sweeps need synthetic traces (the ratio regenerates "
        "the population)");
  }
  if (traces.csv_path.empty()) {
    if (traces.synthetic.n_events < 1) {
      throw InvalidArgument("n_events must be >= 1");
    }
    if (traces.synthetic.n_blocks != static_cast<int>(energy.mem_ops.size())) {
      throw InvalidArgument("n_blocks must match the mem_ops depth");
    }
  }
}

Constraints resolve_constraints(const ExperimentConfig& config,
                                std::int64_t m_events) {
  if (m_events < 1) {
    throw InvalidArgument("resolve_constraints: m_events must be >= 1");
  }
  const double m = static_cast<double>(m_events);
  const double e_loc_n =
      cumulative_local_energy(config.energy, config.energy.n_blocks());
  const double e_off = offload_energy(config.energy, config.channel);
  Constraints out;
  out.data_volume_limit =
      config.offload_fraction * config.energy.payload_bits * m;
  out.energy_limit = config.energy_fraction * m * (e_loc_n + e_off);
  out.n_events = m_events;
  out.validate();
  return out;
}

}  // namespace exitoff
