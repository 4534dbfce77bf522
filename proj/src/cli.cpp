#include "lobhawkes/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/rng.hpp"
#include "lobhawkes/serialize.hpp"
#include "lobhawkes/warnings.hpp"

namespace lobhawkes {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

// ---- configuration ----

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw InputError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

HistoryPolicy parse_history(const std::string& s) {
  if (s == "restart") return HistoryPolicy::Restart;
  if (s == "carry") return HistoryPolicy::Carry;
  if (s == "as_given") return HistoryPolicy::AsGiven;
  throw InputError("config: history must be restart, carry or as_given");
}

const char* history_name(HistoryPolicy h) {
  switch (h) {
    case HistoryPolicy::Restart: return "restart";
    case HistoryPolicy::Carry: return "carry";
    default: return "as_given";
  }
}

std::vector<ModelVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<ModelVariant> out;
  for (const auto& n : names) {
    std::stringstream ss(n);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(parse_variant(item));
    }
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(j,
               {"instruments", "instrument_names", "side", "kind", "variants", "pairs", "budget", "bounds", "split",
                "seed", "fit", "floor", "history", "quantile", "levels", "quantiles", "session_start", "out_dir",
                "dataset", "days", "simulation"},
               "top level");
    take(j, "instruments", c.instruments);
    take(j, "instrument_names", c.instrument_names);
    if (j.contains("side")) c.side = parse_side(j.at("side").get<std::string>());
    if (j.contains("kind")) c.kind = parse_kind(j.at("kind").get<std::string>());
    if (j.contains("variants")) c.variants = parse_variants(j.at("variants").get<std::vector<std::string>>());
    if (j.contains("pairs")) {
      for (const auto& p : j.at("pairs")) {
        const auto v = p.get<std::vector<std::string>>();
        if (v.size() != 2) throw InputError("config: each pair needs two variants");
        c.pairs.emplace_back(parse_variant(v[0]), parse_variant(v[1]));
      }
    }
    if (j.contains("budget")) {
      const json& b = j.at("budget");
      check_keys(b, {"rule", "value", "per_coordinate", "grid"}, "budget");
      BudgetSpec spec;
      take(b, "rule", spec.rule);
      take(b, "value", spec.value);
      take(b, "per_coordinate", spec.per_coordinate);
      take(b, "grid", spec.grid);
      c.budget = spec;
    }
    if (j.contains("bounds")) c.bounds = j.at("bounds").get<std::string>();
    if (j.contains("split")) {
      const json& s = j.at("split");
      check_keys(s, {"train_days", "test_days"}, "split");
      take(s, "train_days", c.train_days);
      take(s, "test_days", c.test_days);
    }
    take(j, "seed", c.seed);
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      check_keys(f, {"max_iterations", "fixed_iterations", "tolerance", "restarts"}, "fit");
      take(f, "max_iterations", c.max_iterations);
      if (f.contains("fixed_iterations") && !f.at("fixed_iterations").is_null()) {
        c.fixed_iterations = f.at("fixed_iterations").get<int>();
      }
      take(f, "tolerance", c.tolerance);
      take(f, "restarts", c.restarts);
    }
    take(j, "floor", c.floor);
    if (j.contains("history")) c.history = parse_history(j.at("history").get<std::string>());
    take(j, "quantile", c.quantile);
    take(j, "levels", c.levels);
    take(j, "quantiles", c.quantiles);
    take(j, "session_start", c.session_start);
    take(j, "out_dir", c.out_dir);
    c.out_dir = resolve(base_dir, c.out_dir);
    take(j, "dataset", c.dataset);
    c.dataset = resolve(base_dir, c.dataset);
    if (j.contains("days")) {
      std::size_t i = 0;
      for (const auto& d : j.at("days")) {
        check_keys(d, {"name", "files"}, "days");
        DayInput day;
        day.name = d.value("name", "day" + std::to_string(i));
        for (const auto& f : d.at("files")) {
          check_keys(f, {"instrument", "messages", "orderbook"}, "day files");
          InstrumentFiles files;
          take(f, "instrument", files.instrument);
          files.messages = resolve(base_dir, f.at("messages").get<std::string>());
          files.orderbook = resolve(base_dir, f.at("orderbook").get<std::string>());
          day.files.push_back(files);
        }
        c.days.push_back(day);
        ++i;
      }
    }
    if (j.contains("simulation")) {
      const json& s = j.at("simulation");
      check_keys(s,
                 {"design", "K", "jumps", "horizon", "reps", "c", "d", "a", "b0", "law", "burn_in", "allow_unstable",
                  "iterations", "write_paths", "days", "threads"},
                 "simulation");
      SimulationSpec& sim = c.simulation;
      take(s, "design", sim.design);
      take(s, "K", sim.K);
      take(s, "jumps", sim.jumps);
      if (s.contains("horizon") && !s.at("horizon").is_null()) sim.horizon = s.at("horizon").get<double>();
      take(s, "reps", sim.reps);
      take(s, "c", sim.c);
      take(s, "d", sim.d);
      take(s, "a", sim.a);
      take(s, "b0", sim.b0);
      take(s, "law", sim.law);
      take(s, "burn_in", sim.burn_in);
      take(s, "allow_unstable", sim.allow_unstable);
      take(s, "iterations", sim.iterations);
      take(s, "write_paths", sim.write_paths);
      take(s, "days", sim.days);
      take(s, "threads", sim.threads);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

std::string RunConfig::to_json() const {
  ojson j;
  j["instruments"] = instruments;
  j["instrument_names"] = instrument_names;
  j["side"] = to_string(side);
  j["kind"] = to_string(kind);
  std::vector<std::string> names;
  for (auto v : variants) names.emplace_back(to_string(v));
  j["variants"] = names;
  ojson pj = ojson::array();
  for (const auto& [a, b] : pairs) pj.push_back({std::string(to_string(a)), std::string(to_string(b))});
  j["pairs"] = pj;
  if (budget) {
    j["budget"] = {{"rule", budget->rule}, {"value", budget->value}, {"per_coordinate", budget->per_coordinate},
                   {"grid", budget->grid}};
  } else {
    j["budget"] = nullptr;
  }
  j["bounds"] = bounds ? ojson(*bounds) : ojson(nullptr);
  j["split"] = {{"train_days", train_days}, {"test_days", test_days}};
  j["seed"] = seed;
  j["fit"] = {{"max_iterations", max_iterations},
              {"fixed_iterations", fixed_iterations ? ojson(*fixed_iterations) : ojson(nullptr)},
              {"tolerance", tolerance},
              {"restarts", restarts}};
  j["floor"] = floor;
  j["history"] = history_name(history);
  j["quantile"] = quantile;
  j["levels"] = levels;
  j["quantiles"] = quantiles;
  j["session_start"] = session_start;
  const SimulationSpec& s = simulation;
  j["simulation"] = {{"design", s.design},
                     {"K", s.K},
                     {"jumps", s.jumps},
                     {"horizon", s.horizon ? ojson(*s.horizon) : ojson(nullptr)},
                     {"reps", s.reps},
                     {"c", s.c},
                     {"d", s.d},
                     {"a", s.a},
                     {"b0", s.b0},
                     {"law", s.law},
                     {"burn_in", s.burn_in},
                     {"allow_unstable", s.allow_unstable},
                     {"iterations", s.iterations},
                     {"days", s.days}};
  return j.dump();
}

void RunConfig::validate() const {
  if (instruments.empty()) throw InputError("config: instruments must not be empty");
  if (!instrument_names.empty() && instrument_names.size() != instruments.size()) {
    throw InputError("config: instrument_names must match instruments");
  }
  if (variants.empty()) throw InputError("config: variant set is empty");
  if (budget) {
    const auto& r = budget->rule;
    if (r != "box" && r != "mult" && r != "fixed" && r != "K" && r != "grid") {
      throw InputError("config: budget rule must be box, mult, fixed, K or grid");
    }
    if (r != "K" && r != "grid" && !(budget->value > 0.0)) throw InputError("config: budget value must be positive");
    if (r == "grid" && budget->grid.empty()) throw InputError("config: budget grid is empty");
  }
  if (bounds && *bounds != "empirical" && *bounds != "simulation") {
    throw InputError("config: bounds must be empirical or simulation");
  }
  if (max_iterations < 1) throw InputError("config: fit.max_iterations must be positive");
  if (fixed_iterations && *fixed_iterations < 1) throw InputError("config: fit.fixed_iterations must be positive");
  if (!(floor > 0.0)) throw InputError("config: floor must be positive");
  if (levels < 1) throw InputError("config: levels must be positive");
  const SimulationSpec& s = simulation;
  if (s.design != "convergence" && s.design != "custom") throw InputError("config: simulation.design must be convergence or custom");
  if (s.design == "convergence" && s.K == 0) throw InputError("config: simulation.K must be positive");
  if (s.design == "custom" && s.b0.empty()) throw InputError("config: custom simulation needs b0");
  if (s.reps == 0) throw InputError("config: simulation.reps must be positive");
  if (s.days == 0) throw InputError("config: simulation.days must be positive");
  if (s.iterations < 1) throw InputError("config: simulation.iterations must be positive");
  if (s.law != "uniform" && s.law != "constant") throw InputError("config: simulation.law must be uniform or constant");
}

namespace {

// ---- outputs ----

// Files are written to a staging directory and moved into place on commit,
// so a failing command leaves no partial outputs.
class OutputSet {
 public:
  explicit OutputSet(const std::string& out_dir) : root_(out_dir), staging_(fs::path(out_dir) / ".lobhawkes-staging") {
    fs::create_directories(root_);
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~OutputSet() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  // Path to write `relative` to; thread-safe.
  std::string stage(const std::string& relative) {
    const fs::path p = staging_ / relative;
    {
      std::lock_guard lock(mutex_);
      fs::create_directories(p.parent_path());
      files_.push_back(relative);
    }
    return p.string();
  }

  void write_text(const std::string& relative, const std::string& text) {
    std::ofstream f(stage(relative), std::ios::binary);
    f << text;
    if (!f) throw InputError("cannot write " + relative);
  }

  void commit() {
    std::sort(files_.begin(), files_.end());
    for (const auto& rel : files_) {
      const fs::path dst = root_ / rel;
      fs::create_directories(dst.parent_path());
      fs::rename(staging_ / rel, dst);
    }
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  fs::path staging_;
  std::vector<std::string> files_;
  std::mutex mutex_;
};

Provenance provenance(const std::string& command, const RunConfig& cfg) {
  return {{"program", "lobhawkes"}, {"version", kToolVersion},         {"command", command},
          {"seed", std::to_string(cfg.seed)}, {"rng", CounterRng::kName}, {"config", cfg.to_json()}};
}

std::string with_provenance(const Provenance& prov, const std::string& body) {
  std::ostringstream os;
  write_csv_provenance(os, prov);
  os << body;
  return os.str();
}

// ---- dataset manifest ----

struct DayRecord {
  std::string name;
  std::string updates;
  std::string trades;
  std::map<std::string, std::string> events;  // "<side>_<kind>" -> file
  std::string covariates;
  std::string raw_covariates;
};

struct Manifest {
  std::string source;  // "ingest" | "encode" | "simulate"
  std::vector<DayRecord> days;
  std::string encoder;
  fs::path dir;  // paths are relative to this
};

std::string events_key(Side side, EventKind kind) { return std::string(to_string(side)) + "_" + to_string(kind); }

std::string manifest_json(const Manifest& m) {
  ojson j;
  j["format"] = "lobhawkes-dataset";
  j["version"] = 1;
  j["source"] = m.source;
  j["encoder"] = m.encoder.empty() ? ojson(nullptr) : ojson(m.encoder);
  ojson days = ojson::array();
  for (const auto& d : m.days) {
    ojson e = ojson::object();
    for (const auto& [k, v] : d.events) e[k] = v;
    days.push_back({{"name", d.name},
                    {"updates", d.updates.empty() ? ojson(nullptr) : ojson(d.updates)},
                    {"trades", d.trades},
                    {"events", e},
                    {"covariates", d.covariates.empty() ? ojson(nullptr) : ojson(d.covariates)},
                    {"raw_covariates", d.raw_covariates.empty() ? ojson(nullptr) : ojson(d.raw_covariates)}});
  }
  j["days"] = days;
  return j.dump(2) + "\n";
}

Manifest read_manifest(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open dataset manifest " + file);
  Manifest m;
  m.dir = fs::path(file).parent_path();
  try {
    json j;
    in >> j;
    if (j.value("format", "") != "lobhawkes-dataset") throw InputError(file + ": not a dataset manifest");
    m.source = j.at("source").get<std::string>();
    if (!j.at("encoder").is_null()) m.encoder = j.at("encoder").get<std::string>();
    for (const auto& d : j.at("days")) {
      DayRecord r;
      r.name = d.at("name").get<std::string>();
      if (!d.at("updates").is_null()) r.updates = d.at("updates").get<std::string>();
      r.trades = d.at("trades").get<std::string>();
      r.events = d.at("events").get<std::map<std::string, std::string>>();
      if (!d.at("covariates").is_null()) r.covariates = d.at("covariates").get<std::string>();
      if (!d.at("raw_covariates").is_null()) r.raw_covariates = d.at("raw_covariates").get<std::string>();
      m.days.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InputError(file + ": " + e.what());
  }
  if (m.days.empty()) throw InputError(file + ": no days");
  return m;
}

std::string in_manifest(const Manifest& m, const std::string& rel) { return (m.dir / rel).string(); }

std::ifstream open_input(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file);
  return in;
}

struct Split {
  std::size_t train_begin = 0, train_end = 0, test_begin = 0, test_end = 0;
};

Split resolve_split(std::size_t n, const RunConfig& cfg) {
  if (cfg.test_days >= n) {
    throw InputError("split: " + std::to_string(n) + " day(s) cannot hold " + std::to_string(cfg.test_days) +
                     " test day(s) and at least one training day");
  }
  Split s;
  s.test_end = n;
  s.test_begin = n - cfg.test_days;
  s.train_end = s.test_begin;
  if (cfg.train_days > 0) {
    if (cfg.train_days > s.train_end) throw InputError("split: not enough days for train_days");
    s.train_begin = s.train_end - cfg.train_days;
  }
  return s;
}

std::string manifest_path(const RunConfig& cfg, const char* fallback) {
  return cfg.dataset.empty() ? (fs::path(cfg.out_dir) / fallback).string() : cfg.dataset;
}

std::vector<Segment> load_segments(const Manifest& m, std::size_t begin, std::size_t end, bool raw, Side side,
                                   EventKind kind) {
  std::vector<Segment> out;
  const std::string key = events_key(side, kind);
  for (std::size_t i = begin; i < end; ++i) {
    const DayRecord& d = m.days[i];
    const std::string& cov = raw ? d.raw_covariates : d.covariates;
    if (cov.empty()) throw InputError("day " + d.name + " has no " + (raw ? "raw " : "") + "covariate path; run encode");
    auto it = d.events.find(key);
    if (it == d.events.end()) throw InputError("day " + d.name + " has no " + key + " events");
    Segment seg;
    {
      auto in = open_input(in_manifest(m, cov));
      seg.path = read_path_csv(in, cov);
    }
    {
      auto in = open_input(in_manifest(m, it->second));
      seg.events = read_events_csv(in, it->second);
    }
    seg.validate();
    out.push_back(std::move(seg));
  }
  return out;
}

std::string fit_file(ModelVariant v, const RunConfig& cfg) {
  return "fit_" + std::string(to_string(v)) + "_" + events_key(cfg.side, cfg.kind) + ".json";
}

BudgetSpec effective_budget(const RunConfig& cfg, bool simulated) {
  if (cfg.budget) return *cfg.budget;
  BudgetSpec b;
  if (simulated) {
    b.rule = "K";
    b.per_coordinate = true;
  }
  return b;
}

BudgetPolicy to_policy(const BudgetSpec& b, std::size_t K) {
  if (b.rule == "box") return {BudgetRule::BoxRule, b.value, false};
  if (b.rule == "mult") return {BudgetRule::Heuristic, b.value, b.per_coordinate};
  if (b.rule == "K") return {BudgetRule::Fixed, static_cast<double>(K), b.per_coordinate};
  return {BudgetRule::Fixed, b.value, b.per_coordinate};
}

FitConfig fit_config(const RunConfig& cfg, ModelVariant v, const BudgetSpec& budget, std::size_t K,
                     const ParameterBounds& bounds) {
  FitConfig f;
  f.variant = v;
  f.budget = to_policy(budget, K);
  f.bounds = bounds;
  f.max_iterations = cfg.max_iterations;
  f.fixed_iterations = cfg.fixed_iterations;
  f.relative_tolerance = cfg.tolerance;
  f.restarts = cfg.restarts;
  return f;
}

// ---- simulate ----

SimDesign make_design(const RunConfig& cfg, std::size_t rep) {
  const SimulationSpec& s = cfg.simulation;
  SimDesign d;
  if (s.design == "convergence") {
    d = SimDesign::convergence_study(s.K, s.jumps, cfg.seed);
  } else {
    d.params = KernelParams{s.c, s.d, s.a};
    d.b0 = s.b0;
    d.law = s.law == "constant" ? CovariateLaw::Constant : CovariateLaw::UniformAtEvents;
    d.jumps = s.jumps;
    d.seed = cfg.seed;
    d.allow_unstable = s.allow_unstable;
  }
  if (s.horizon) {
    d.horizon = s.horizon;
    d.jumps.reset();
  }
  d.stream = rep;
  d.burn_in = s.burn_in;
  d.validate();
  return d;
}

struct MetricRow {
  std::size_t rep = 0;
  int iter = 0;
  std::vector<double> values;  // per column after (K, rep, iter)
};

std::vector<std::string> metric_columns(const std::vector<std::size_t>& positives) {
  std::vector<std::string> cols;
  for (std::size_t k : positives) cols.push_back("b" + std::to_string(k + 1));
  for (const char* c : {"c", "d", "a", "err_0.1", "err_0.05", "err_0.01", "l1", "l2", "FP", "FN", "P", "B"}) {
    cols.emplace_back(c);
  }
  return cols;
}

std::vector<Segment> split_days(const Segment& seg, std::size_t days) {
  const std::size_t m = seg.path.rows();
  if (days > m) throw InputError("simulate: more days than covariate rows");
  std::vector<Segment> out;
  std::size_t lo = 0;
  for (std::size_t d = 0; d < days; ++d) {
    const std::size_t hi = m * (d + 1) / days;
    Segment s;
    s.path.start = lo == 0 ? seg.path.start : seg.path.times[lo - 1];
    s.path.dim = seg.path.dim;
    s.path.names = seg.path.names;
    s.path.lagged = seg.path.lagged;
    s.path.times.assign(seg.path.times.begin() + static_cast<std::ptrdiff_t>(lo),
                        seg.path.times.begin() + static_cast<std::ptrdiff_t>(hi));
    s.path.values.assign(seg.path.values.begin() + static_cast<std::ptrdiff_t>(lo * seg.path.dim),
                         seg.path.values.begin() + static_cast<std::ptrdiff_t>(hi * seg.path.dim));
    const Timestamp end = s.path.end();
    for (Timestamp t : seg.events) {
      const bool history = d == 0 && !(s.path.start < t);
      if (history || (s.path.start < t && !(end < t))) s.events.push_back(t);
    }
    out.push_back(std::move(s));
    lo = hi;
  }
  return out;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const SimulationSpec& s = cfg.simulation;
  const ModelVariant variant = cfg.variants.front();
  const BudgetSpec budget = effective_budget(cfg, true);
  if (budget.rule == "grid") throw InputError("simulate: the grid budget rule is not supported here");
  if (cfg.bounds.value_or("simulation") != "simulation") throw InputError("simulate: fits use the simulation bounds");
  const ParameterBounds bounds = ParameterBounds::simulation();
  const SimDesign probe = make_design(cfg, 0);  // validates (and warns about) the design up front
  const std::size_t K = probe.dim();
  std::vector<std::size_t> positives;
  for (std::size_t k = 0; k < K; ++k) {
    if (probe.b0[k] != 0.0) positives.push_back(k);
  }

  OutputSet outputs(cfg.out_dir);
  const Provenance prov = provenance("simulate", cfg);
  const std::string key = events_key(cfg.side, cfg.kind);
  std::vector<std::vector<MetricRow>> rows(s.reps);
  std::vector<std::exception_ptr> errors(s.reps);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t r = next++; r < s.reps; r = next++) {
      try {
        const SimDesign design = make_design(cfg, r);
        const SimulatedPath sp = simulate(design);
        if (s.write_paths) {
          Manifest m;
          m.source = "simulate";
          const auto days = split_days(sp.segment, s.days);
          for (std::size_t d = 0; d < days.size(); ++d) {
            const std::string dir = "rep_" + std::to_string(r) + "/day_" + std::to_string(d);
            {
              std::ofstream f(outputs.stage(dir + "/events.csv"));
              write_events_csv(f, days[d].events);
            }
            {
              std::ofstream f(outputs.stage(dir + "/covariates.csv"));
              write_path_csv(f, days[d].path);
            }
            DayRecord rec;
            rec.name = "day_" + std::to_string(d);
            rec.trades = rec.name + "/events.csv";
            rec.events[key] = rec.trades;
            rec.covariates = rec.name + "/covariates.csv";
            rec.raw_covariates = rec.covariates;
            m.days.push_back(rec);
          }
          outputs.write_text("rep_" + std::to_string(r) + "/dataset.json", manifest_json(m));
          if (r == 0) {
            for (auto& d : m.days) {
              d.trades = "rep_0/" + d.trades;
              for (auto& [k, v] : d.events) v = "rep_0/" + v;
              d.covariates = "rep_0/" + d.covariates;
              d.raw_covariates = d.covariates;
            }
            outputs.write_text("dataset.json", manifest_json(m));
          }
        }
        FitConfig fc = fit_config(cfg, variant, budget, K, bounds);
        fc.fixed_iterations = s.iterations;
        const FitResult fit = alternate_fit(std::span(&sp.segment, 1), fc);
        {
          std::ofstream f(outputs.stage("fits/rep_" + std::to_string(r) + ".json"));
          write_fit_result(f, fit, prov);
        }
        double B = kUnbounded;
        if (fit.env) B = std::isfinite(fit.env->budget) ? fit.env->budget : fit.env->beta.value_or(kUnbounded);
        for (const auto& rec : fit.history) {
          MetricRow row;
          row.rep = r;
          row.iter = rec.iteration;
          std::vector<double> b = rec.b.empty() ? std::vector<double>(K, 1.0) : rec.b;
          for (std::size_t k : positives) row.values.push_back(b[k]);
          row.values.push_back(rec.params.c);
          row.values.push_back(rec.params.d.empty() ? 0.0 : rec.params.d.front());
          row.values.push_back(rec.params.a.empty() ? 0.0 : rec.params.a.front());
          const SimMetrics met = fp_fn(b, design.b0);
          for (std::size_t e : met.errors) row.values.push_back(static_cast<double>(e));
          row.values.push_back(met.l1);
          row.values.push_back(met.l2);
          row.values.push_back(static_cast<double>(met.fp));
          row.values.push_back(static_cast<double>(met.fn));
          row.values.push_back(static_cast<double>(met.p));
          row.values.push_back(B);
          rows[r].push_back(std::move(row));
        }
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(s.threads ? s.threads : hw, s.reps));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto cols = metric_columns(positives);
  std::ostringstream csv;
  csv << "K,rep,iter";
  for (const auto& c : cols) csv << ',' << c;
  csv << '\n';
  for (const auto& per_rep : rows) {
    for (const auto& row : per_rep) {
      csv << K << ',' << row.rep << ',' << row.iter;
      for (double v : row.values) csv << ',' << fmt(v);
      csv << '\n';
    }
  }
  // avg and s.e. per iteration across replications
  const std::size_t iters = rows.front().size();
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> mean(cols.size(), 0.0), sq(cols.size(), 0.0);
    for (const auto& per_rep : rows) {
      for (std::size_t c = 0; c < cols.size(); ++c) mean[c] += per_rep[it].values[c];
    }
    const double n = static_cast<double>(rows.size());
    for (double& m : mean) m /= n;
    for (const auto& per_rep : rows) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const double dlt = per_rep[it].values[c] - mean[c];
        sq[c] += dlt * dlt;
      }
    }
    csv << K << ",avg," << rows.front()[it].iter;
    for (double m : mean) csv << ',' << fmt(m);
    csv << '\n' << K << ",se," << rows.front()[it].iter;
    for (double q : sq) csv << ',' << fmt(rows.size() > 1 ? std::sqrt(q / (n - 1.0) / n) : 0.0);
    csv << '\n';
  }
  outputs.write_text("metrics.csv", with_provenance(prov, csv.str()));
  outputs.commit();
  out << "simulate: " << s.reps << " replication(s), K=" << K << ", metrics in "
      << (outputs.root() / "metrics.csv").string() << '\n';
  return 0;
}

// ---- ingest ----

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  if (cfg.days.empty()) throw InputError("ingest: config lists no days");
  const int target = cfg.instruments.front();
  for (const auto& day : cfg.days) {
    if (day.files.empty()) throw InputError("ingest: day " + day.name + " has no files");
    for (const auto& f : day.files) {
      if (!fs::exists(f.messages)) throw InputError("ingest: missing " + f.messages);
      if (!fs::exists(f.orderbook)) throw InputError("ingest: missing " + f.orderbook);
    }
  }
  OutputSet outputs(cfg.out_dir);
  const Provenance prov = provenance("ingest", cfg);
  Manifest m;
  m.source = "ingest";
  std::ostringstream summary;
  summary << "day,updates,trades,buy_any,buy_large,sell_any,sell_large,dropped_buy_large,dropped_sell_large\n";
  for (const auto& day : cfg.days) {
    std::vector<std::vector<MarketUpdate>> streams;
    for (const auto& f : day.files) {
      const LobsterDay ld = parse_lobster(f.messages, f.orderbook, f.instrument);
      streams.push_back(filter_levels(conflate(to_updates(ld)), cfg.levels));
    }
    const auto merged = synchronize(streams);
    DayRecord rec;
    rec.name = day.name;
    rec.updates = day.name + "/updates.bin";
    write_updates_binary(outputs.stage(rec.updates), merged);

    EventStream trades;
    for (const auto& u : merged) {
      if (u.instrument == target && u.has_trade()) trades.push_back(u.time);
    }
    rec.trades = day.name + "/trades.csv";
    {
      std::ofstream f(outputs.stage(rec.trades));
      write_events_csv(f, trades);
    }
    summary << day.name << ',' << std::count_if(merged.begin(), merged.end(), [&](const MarketUpdate& u) {
      return u.instrument == target;
    }) << ',' << trades.size();
    std::vector<std::size_t> dropped;
    for (Side side : {Side::Buy, Side::Sell}) {
      for (EventKind kind : {EventKind::Any, EventKind::Large}) {
        const ExtractedEvents ex = extract_events(merged, side, kind, target);
        const std::string key = events_key(side, kind);
        rec.events[key] = day.name + "/events_" + key + ".csv";
        std::ofstream f(outputs.stage(rec.events[key]));
        write_events_csv(f, ex.events);
        write_events_binary(outputs.stage(day.name + "/events_" + key + ".bin"), ex.events);
        summary << ',' << ex.events.size();
        if (kind == EventKind::Large) dropped.push_back(ex.dropped);
      }
    }
    summary << ',' << dropped[0] << ',' << dropped[1] << '\n';
    m.days.push_back(rec);
  }
  outputs.write_text("ingested.json", manifest_json(m));
  outputs.write_text("ingest_summary.csv", with_provenance(prov, summary.str()));
  outputs.commit();
  out << "ingest: " << m.days.size() << " day(s) written to " << outputs.root().string() << '\n';
  return 0;
}

// ---- encode ----

std::string instrument_name(const RunConfig& cfg, std::size_t i) {
  return cfg.instrument_names.empty() ? "I" + std::to_string(cfg.instruments[i]) : cfg.instrument_names[i];
}

int cmd_encode(const RunConfig& cfg, std::ostream& out) {
  const Manifest in = read_manifest(manifest_path(cfg, "ingested.json"));
  const Timestamp session_start = parse_decimal_seconds(cfg.session_start);
  const Split split = resolve_split(in.days.size(), cfg);

  std::vector<LaggedCovariates> lagged;
  for (const auto& d : in.days) {
    if (d.updates.empty()) throw InputError("encode: day " + d.name + " has no update stream");
    const auto updates = read_updates_binary(in_manifest(in, d.updates));
    std::vector<RawCovariatePath> raws;
    for (std::size_t i = 0; i < cfg.instruments.size(); ++i) {
      CovariateOptions opt;
      opt.prefix = instrument_name(cfg, i) + ".";
      opt.include_seasonal = i == 0;
      opt.levels = cfg.levels;
      raws.push_back(build_instrument_covariates(updates, cfg.instruments[i], opt));
    }
    std::vector<Timestamp> reference;
    for (const auto& u : updates) {
      if (u.instrument == cfg.instruments.front()) reference.push_back(u.time);
    }
    lagged.push_back(sample_and_lag(raws, reference, session_start));
    if (lagged.back().path.rows() == 0) throw InputError("encode: day " + d.name + " has no complete covariate rows");
  }

  RawCovariatePath train;
  train.names = lagged.front().path.names;
  for (std::size_t i = split.train_begin; i < split.train_end; ++i) {
    const auto& p = lagged[i].path;
    for (std::size_t j = 0; j < p.rows(); ++j) train.append(p.times[j], p.row(j));
  }
  // Days are concatenated only to pool values; their times need not increase.
  EncoderSpec spec;
  {
    RawCovariatePath pooled = train;
    for (std::size_t j = 0; j < pooled.times.size(); ++j) pooled.times[j] = Timestamp{static_cast<std::int64_t>(j)};
    spec = fit_encoder(pooled, true, cfg.quantiles);
  }

  OutputSet outputs(cfg.out_dir);
  const Provenance prov = provenance("encode", cfg);
  Manifest m;
  m.source = "encode";
  m.encoder = "encoder.json";
  {
    std::ostringstream os;
    write_encoder(os, spec);
    outputs.write_text(m.encoder, os.str());
  }
  const fs::path out_root(cfg.out_dir);
  std::ostringstream summary;
  summary << "day,rows,dropped\n";
  for (std::size_t i = 0; i < in.days.size(); ++i) {
    const DayRecord& d = in.days[i];
    DayRecord rec;
    rec.name = d.name;
    auto rebase = [&](const std::string& rel) {
      return fs::relative(fs::absolute(in.dir / rel), fs::absolute(out_root)).lexically_normal().string();
    };
    rec.updates = rebase(d.updates);
    rec.trades = rebase(d.trades);
    for (const auto& [k, v] : d.events) rec.events[k] = rebase(v);
    rec.covariates = d.name + "/covariates.csv";
    rec.raw_covariates = d.name + "/raw_covariates.csv";
    {
      std::ofstream f(outputs.stage(rec.covariates));
      write_path_csv(f, encode_path(lagged[i], spec));
    }
    {
      std::ofstream f(outputs.stage(rec.raw_covariates));
      write_path_csv(f, raw_linear_path(lagged[i], true));
    }
    summary << d.name << ',' << lagged[i].path.rows() << ',' << lagged[i].dropped << '\n';
    m.days.push_back(rec);
  }
  outputs.write_text("dataset.json", manifest_json(m));
  outputs.write_text("encode_summary.csv", with_provenance(prov, summary.str()));
  outputs.commit();
  out << "encode: K=" << spec.dim() << " one-hot features over " << m.days.size() << " day(s)\n";
  return 0;
}

// ---- fit ----

ParameterBounds dataset_bounds(const RunConfig& cfg, const Manifest& m, const Split& split) {
  const std::string kind = cfg.bounds.value_or(m.source == "simulate" ? "simulation" : "empirical");
  if (kind == "simulation") return ParameterBounds::simulation();
  std::vector<double> durations;
  for (std::size_t i = split.train_begin; i < split.train_end; ++i) {
    auto in = open_input(in_manifest(m, m.days[i].trades));
    const EventStream t = read_events_csv(in, m.days[i].trades);
    for (std::size_t k = 1; k < t.size(); ++k) durations.push_back(seconds_between(t[k - 1], t[k]));
  }
  if (durations.size() < 2) throw InputError("fit: too few trades to scale the parameter bounds");
  const double q10 = nearest_rank_quantile(durations, 0.10);
  const double q50 = nearest_rank_quantile(durations, 0.50);
  if (!(q10 > 0.0) || !(q50 > 0.0)) throw InputError("fit: trade duration quantiles must be positive");
  return ParameterBounds::empirical(q10, q50);
}

std::string coefficient_csv(const FitResult& fit, const std::vector<std::string>& names,
                            const std::optional<EncoderSpec>& encoder) {
  std::ostringstream os;
  os << "feature,covariate,bin,lower,upper,coefficient\n";
  const auto& b = fit.env->b;
  std::size_t k = 0;
  if (encoder && encoder->dim() == b.size()) {
    if (encoder->constant) os << "const,const,0,-inf,inf," << fmt(b[k++]) << '\n';
    for (const auto& c : encoder->covariates) {
      for (std::size_t bin = 0; bin < c.bins(); ++bin, ++k) {
        const double lo = bin == 0 ? -INFINITY : c.breakpoints[bin - 1];
        const double hi = bin == c.breakpoints.size() ? INFINITY : c.breakpoints[bin];
        os << c.name << '#' << bin + 1 << ',' << c.name << ',' << bin + 1 << ',' << fmt(lo) << ',' << fmt(hi) << ','
           << fmt(b[k]) << '\n';
      }
    }
  } else {
    for (; k < b.size(); ++k) {
      const std::string n = k < names.size() ? names[k] : "x" + std::to_string(k + 1);
      os << n << ',' << n << ",,,," << fmt(b[k]) << '\n';
    }
  }
  return os.str();
}

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(manifest_path(cfg, "dataset.json"));
  const Split split = resolve_split(m.days.size(), cfg);
  const ParameterBounds bounds = dataset_bounds(cfg, m, split);
  const BudgetSpec budget = effective_budget(cfg, m.source == "simulate");
  std::optional<EncoderSpec> encoder;
  if (!m.encoder.empty()) {
    auto in = open_input(in_manifest(m, m.encoder));
    encoder = read_encoder(in);
  }
  // Load everything before writing anything.
  std::map<bool, std::vector<Segment>> samples;
  for (ModelVariant v : cfg.variants) {
    const bool raw = is_raw_linear(v);
    if (!samples.count(raw)) samples[raw] = load_segments(m, split.train_begin, split.train_end, raw, cfg.side, cfg.kind);
  }

  OutputSet outputs(cfg.out_dir);
  const Provenance prov = provenance("fit", cfg);
  for (ModelVariant v : cfg.variants) {
    const auto& sample = samples.at(is_raw_linear(v));
    const std::size_t K = sample.front().path.dim;
    FitConfig fc = fit_config(cfg, v, budget, K, bounds);
    const std::string tag = std::string(to_string(v)) + "_" + events_key(cfg.side, cfg.kind);
    if (budget.rule == "grid" && has_environment(v) && !is_raw_linear(v)) {
      const BudgetScan scan = scan_budget(sample, fc, budget.grid);
      std::ostringstream os;
      os << "budget,log_likelihood,nonzero,criterion\n";
      for (const auto& e : scan.entries) {
        os << fmt(e.budget) << ',' << fmt(e.log_likelihood) << ',' << e.nonzero << ',' << fmt(e.criterion) << '\n';
      }
      outputs.write_text("budget_scan_" + tag + ".csv", with_provenance(prov, os.str()));
      fc.budget = BudgetPolicy{BudgetRule::Fixed, scan.best_budget, false};
    } else if (budget.rule == "grid") {
      fc.budget = BudgetPolicy{};
    }
    const FitResult fit = alternate_fit(sample, fc);
    {
      std::ostringstream os;
      write_fit_result(os, fit, prov);
      outputs.write_text(fit_file(v, cfg), os.str());
    }
    if (fit.env) {
      const std::optional<EncoderSpec> enc = is_raw_linear(v) ? std::nullopt : encoder;
      outputs.write_text("coefficients_" + tag + ".csv",
                         with_provenance(prov, coefficient_csv(fit, sample.front().path.names, enc)));
    }
    out << "fit " << to_string(v) << ": " << fit.iterations << " iteration(s), Q_T=" << fmt(fit.objective_trace.back());
    if (fit.params) out << ", c=" << fmt(fit.params->c);
    if (fit.env) out << ", nonzero=" << fit.env->nonzero() << "/" << fit.env->b.size();
    out << '\n';
  }
  outputs.commit();
  return 0;
}

// ---- evaluate / compare ----

std::map<ModelVariant, ModelSpec> load_specs(const RunConfig& cfg, const std::vector<ModelVariant>& variants) {
  std::vector<std::string> missing;
  std::map<ModelVariant, ModelSpec> specs;
  for (ModelVariant v : variants) {
    if (specs.count(v)) continue;
    const fs::path file = fs::path(cfg.out_dir) / fit_file(v, cfg);
    if (!fs::exists(file)) {
      if (std::find(missing.begin(), missing.end(), to_string(v)) == missing.end()) missing.emplace_back(to_string(v));
      continue;
    }
    std::ifstream in(file);
    specs.emplace(v, ModelSpec::from_fit(read_fit_result(in), cfg.floor));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw InputError("missing fits for " + std::string(to_string(cfg.side)) + "/" + to_string(cfg.kind) + ": " + list +
                     " (run fit first)");
  }
  return specs;
}

std::vector<Segment> test_sample(const RunConfig& cfg, const Manifest& m, bool raw) {
  if (cfg.test_days == 0) throw InputError("split: no test days");
  const Split split = resolve_split(m.days.size(), cfg);
  return load_segments(m, split.test_begin, split.test_end, raw, cfg.side, cfg.kind);
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(manifest_path(cfg, "dataset.json"));
  const auto specs = load_specs(cfg, cfg.variants);
  std::map<bool, std::vector<Segment>> samples;
  for (ModelVariant v : cfg.variants) {
    const bool raw = is_raw_linear(v);
    if (!samples.count(raw)) samples[raw] = test_sample(cfg, m, raw);
  }
  OutputSet outputs(cfg.out_dir);
  const Provenance prov = provenance("evaluate", cfg);
  const EvaluationOptions opts{cfg.history};
  std::ostringstream os;
  os << "model,side,kind,log_likelihood,n,T,ks_statistic,ks_p_value\n";
  for (ModelVariant v : cfg.variants) {
    const IntensityTrace tr = evaluate_intensity(specs.at(v), samples.at(is_raw_linear(v)), opts);
    KsResult ks;
    if (!tr.residuals.empty()) ks = ks_exponential(tr.residuals);
    os << to_string(v) << ',' << to_string(cfg.side) << ',' << to_string(cfg.kind) << ',' << fmt(tr.log_likelihood())
       << ',' << tr.event_intensity.size() << ',' << fmt(tr.T) << ',' << fmt(ks.statistic) << ',' << fmt(ks.p_value)
       << '\n';
    std::ostringstream res;
    res << "residual\n";
    for (double r : tr.residuals) res << fmt(r) << '\n';
    outputs.write_text("residuals_" + std::string(to_string(v)) + "_" + events_key(cfg.side, cfg.kind) + ".csv",
                       with_provenance(prov, res.str()));
    out << "evaluate " << to_string(v) << ": L=" << fmt(tr.log_likelihood()) << ", KS p=" << fmt(ks.p_value) << '\n';
  }
  outputs.write_text("evaluate_" + events_key(cfg.side, cfg.kind) + ".csv", with_provenance(prov, os.str()));
  outputs.commit();
  return 0;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(manifest_path(cfg, "dataset.json"));
  auto pairs = cfg.pairs;
  if (pairs.empty()) {
    for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
      for (std::size_t j = i + 1; j < cfg.variants.size(); ++j) pairs.emplace_back(cfg.variants[i], cfg.variants[j]);
    }
    if (pairs.empty()) pairs.emplace_back(cfg.variants.front(), cfg.variants.front());
  }
  std::vector<ModelVariant> needed;
  for (const auto& [a, b] : pairs) {
    needed.push_back(a);
    needed.push_back(b);
  }
  const auto specs = load_specs(cfg, needed);
  std::map<bool, std::vector<Segment>> samples;
  for (ModelVariant v : needed) {
    const bool raw = is_raw_linear(v);
    if (!samples.count(raw)) samples[raw] = test_sample(cfg, m, raw);
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [a, b] : pairs) {
    // Raw and encoded paths share event files, so the traces align.
    const IntensityTrace ta = evaluate_intensity(specs.at(a), samples.at(is_raw_linear(a)), {cfg.history});
    const IntensityTrace tb = evaluate_intensity(specs.at(b), samples.at(is_raw_linear(b)), {cfg.history});
    rows.push_back({std::string(to_string(a)), std::string(to_string(b)), to_string(cfg.side),
                    compare_traces(ta, tb, cfg.quantile)});
    const auto& r = rows.back().result;
    out << "compare " << to_string(a) << "-" << to_string(b) << ": "
        << (r.degenerate() ? std::string("degenerate (identical intensities at every event)") : fmt(r.statistic)) << '\n';
  }
  OutputSet outputs(cfg.out_dir);
  std::ostringstream os;
  write_comparison_csv(os, rows);
  outputs.write_text("compare_" + events_key(cfg.side, cfg.kind) + ".csv",
                     with_provenance(provenance("compare", cfg), os.str()));
  outputs.commit();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Order-book-dependent Hawkes intensities: simulate, ingest, encode, fit, evaluate, compare"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> variants;
  std::string side, kind, out_dir;
  std::optional<double> mult;
  app.add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--variant", variants, "model variant(s): E,H01,H02,H1,H2,H1L,H2L");
  app.add_option("--side", side, "buy | sell");
  app.add_option("--kind", kind, "any | large");
  app.add_option("--mult", mult, "heuristic budget multiplier (sets the budget rule to mult)");
  app.add_option("--out-dir", out_dir, "output directory");

  for (const char* name : {"simulate", "ingest", "encode", "fit", "evaluate", "compare"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = RunConfig::from_json(ss.str(), fs::path(config_file).parent_path().string());
    }
    if (seed) cfg.seed = *seed;
    if (!variants.empty()) cfg.variants = parse_variants(variants);
    if (!side.empty()) cfg.side = parse_side(side);
    if (!kind.empty()) cfg.kind = parse_kind(kind);
    if (mult) {
      BudgetSpec b = cfg.budget.value_or(BudgetSpec{});
      b.rule = "mult";
      b.value = *mult;
      cfg.budget = b;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") return cmd_simulate(cfg, out);
    if (cmd == "ingest") return cmd_ingest(cfg, out);
    if (cmd == "encode") return cmd_encode(cfg, out);
    if (cmd == "fit") return cmd_fit(cfg, out);
    if (cmd == "evaluate") return cmd_evaluate(cfg, out);
    return cmd_compare(cfg, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lobhawkes
