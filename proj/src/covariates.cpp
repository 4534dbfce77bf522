#include "lobhawkes/covariates.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/warnings.hpp"

namespace lobhawkes {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Ewma::Ewma(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("ewma: alpha must lie in (0, 1)");
}

double Ewma::update(double x) {
  if (!started_) {
    value_ = x;
    started_ = true;
  } else {
    value_ = alpha_ * value_ + (1.0 - alpha_) * x;
  }
  return value_;
}

std::vector<double> ewma(std::span<const double> values, double alpha) {
  Ewma f(alpha);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(f.update(v));
  return out;
}

double volume_imbalance(double bid_size, double ask_size) {
  const double total = bid_size + ask_size;
  if (!(total > 0.0)) return kNaN;
  return (bid_size - ask_size) / total;
}

std::vector<double> trade_imbalance(std::span<const double> signed_sizes, double alpha) {
  Ewma num(alpha), den(alpha);
  std::vector<double> out;
  out.reserve(signed_sizes.size());
  for (double s : signed_sizes) {
    const double n = num.update(s);
    const double d = den.update(std::abs(s));
    out.push_back(d > 0.0 ? n / d : 0.0);
  }
  return out;
}

double spread_bps(std::int64_t ask_price, std::int64_t bid_price) {
  const double mid = 0.5 * (static_cast<double>(ask_price) + static_cast<double>(bid_price));
  if (!(mid > 0.0)) return kNaN;
  return 1e4 * static_cast<double>(ask_price - bid_price) / mid;
}

double seasonal(Timestamp time_of_day) {
  const double x = static_cast<double>(time_of_day.ns - kSessionOpen) / static_cast<double>(kSessionClose - kSessionOpen);
  return std::clamp(x, 0.0, 1.0);
}

RawCovariatePath build_instrument_covariates(std::span<const MarketUpdate> session, int instrument,
                                             const CovariateOptions& options) {
  if (options.levels < 1) throw InputError("covariates: levels must be positive");
  RawCovariatePath out;
  const std::string& p = options.prefix;
  if (options.include_seasonal) out.names.push_back(p + "Seas");
  for (int l = 1; l <= options.levels; ++l) out.names.push_back(p + "VolImb" + std::to_string(l));
  out.names.push_back(p + "Spread");
  out.names.push_back(p + "TrdImb98");
  out.names.push_back(p + "Dur98");
  out.names.push_back(p + "Dur90");

  const auto L = static_cast<std::size_t>(options.levels);
  std::vector<double> imbalance(L, 0.0);
  double spread = kNaN;
  Ewma trade_num(options.trade_alpha), trade_den(options.trade_alpha);
  Ewma dur_slow(options.slow_duration_alpha), dur_fast(options.fast_duration_alpha);
  bool have_trade = false;
  Timestamp last_trade{};
  std::size_t clamped = 0;
  std::vector<double> row;
  row.reserve(out.names.size());

  for (const MarketUpdate& u : session) {
    if (u.instrument != instrument) continue;
    if (!out.times.empty() && !(out.times.back() < u.time)) {
      throw InputError("covariates: updates must be conflated (strictly increasing times)");
    }
    row.clear();
    if (options.include_seasonal) {
      if (u.time.ns < kSessionOpen || u.time.ns > kSessionClose) ++clamped;
      row.push_back(seasonal(u.time));
    }
    for (std::size_t l = 0; l < L; ++l) {
      if (l < u.levels.size()) {
        const double vi = volume_imbalance(static_cast<double>(u.levels[l].bid_size),
                                           static_cast<double>(u.levels[l].ask_size));
        if (!std::isnan(vi)) imbalance[l] = vi;
      }
      row.push_back(imbalance[l]);
    }
    if (!u.levels.empty() && u.levels[0].has_ask() && u.levels[0].has_bid()) {
      spread = spread_bps(u.levels[0].ask_price, u.levels[0].bid_price);
    }
    row.push_back(spread);
    if (u.has_trade()) {
      const double vol = static_cast<double>(u.buy_volume + u.sell_volume);
      trade_num.update(static_cast<double>(u.buy_volume - u.sell_volume));
      trade_den.update(vol);
      if (have_trade) {
        const double dur = seconds_between(last_trade, u.time);
        dur_slow.update(dur);
        dur_fast.update(dur);
      }
      have_trade = true;
      last_trade = u.time;
    }
    row.push_back(trade_den.started() && trade_den.value() > 0.0 ? trade_num.value() / trade_den.value() : 0.0);
    row.push_back(dur_slow.started() ? dur_slow.value() : kNaN);
    row.push_back(dur_fast.started() ? dur_fast.value() : kNaN);
    out.append(u.time, row);
  }
  if (clamped > 0) {
    warn("seasonal: " + std::to_string(clamped) + " update(s) outside 09:30-16:30 clamped to the session");
  }
  return out;
}

LaggedCovariates sample_and_lag(std::span<const RawCovariatePath> paths, std::span<const Timestamp> reference,
                                Timestamp session_start) {
  require_sorted(reference, true, "reference times");
  LaggedCovariates out;
  out.start = session_start;
  std::size_t width = 0;
  for (const auto& p : paths) {
    p.validate();
    out.path.names.insert(out.path.names.end(), p.names.begin(), p.names.end());
    width += p.dim();
  }
  std::vector<std::size_t> next(paths.size(), 0);  // first index with time >= r
  std::vector<double> row(width);
  bool started = false;
  for (Timestamp r : reference) {
    if (!(session_start < r)) continue;
    bool complete = true;
    std::size_t col = 0;
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const auto& p = paths[k];
      while (next[k] < p.rows() && p.times[next[k]] < r) ++next[k];
      if (next[k] == 0) {
        complete = false;
        for (std::size_t c = 0; c < p.dim(); ++c) row[col++] = kNaN;
        continue;
      }
      const auto v = p.row(next[k] - 1);
      for (double x : v) {
        if (std::isnan(x)) complete = false;
        row[col++] = x;
      }
    }
    if (!complete) {
      if (started) {
        throw InputError("sample_and_lag: covariate becomes undefined at " + std::to_string(r.ns) + " ns");
      }
      ++out.dropped;
      out.start = r;
      continue;
    }
    started = true;
    out.path.append(r, row);
  }
  return out;
}

std::size_t EncoderSpec::dim() const {
  std::size_t k = constant ? 1 : 0;
  for (const auto& c : covariates) k += c.bins();
  return k;
}

std::vector<std::string> EncoderSpec::feature_names() const {
  std::vector<std::string> names;
  if (constant) names.push_back("const");
  for (const auto& c : covariates) {
    for (std::size_t b = 0; b < c.bins(); ++b) names.push_back(c.name + "#" + std::to_string(b + 1));
  }
  return names;
}

void EncoderSpec::validate() const {
  for (const auto& c : covariates) {
    for (std::size_t i = 0; i < c.breakpoints.size(); ++i) {
      if (!std::isfinite(c.breakpoints[i])) throw InputError("encoder: non-finite breakpoint for " + c.name);
      if (i > 0 && !(c.breakpoints[i - 1] < c.breakpoints[i])) {
        throw InputError("encoder: breakpoints for " + c.name + " are not strictly increasing");
      }
    }
  }
}

double nearest_rank_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile: empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw InputError("quantile: level must lie in (0, 1]");
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

EncoderSpec fit_encoder(const RawCovariatePath& sample, bool constant, std::span<const double> quantiles) {
  sample.validate();
  if (sample.rows() == 0) throw InputError("fit_encoder: empty sample");
  EncoderSpec spec;
  spec.constant = constant;
  std::vector<double> column;
  for (std::size_t k = 0; k < sample.dim(); ++k) {
    column.clear();
    for (std::size_t j = 0; j < sample.rows(); ++j) {
      const double x = sample.row(j)[k];
      if (!std::isnan(x)) column.push_back(x);
    }
    if (column.empty()) throw InputError("fit_encoder: covariate " + sample.names[k] + " has no defined values");
    std::sort(column.begin(), column.end());
    CovariateBins bins;
    bins.name = sample.names[k];
    if (column.front() == column.back()) {
      warn("fit_encoder: covariate " + bins.name + " is constant; it is collinear with the constant column");
    } else {
      for (double q : quantiles) {
        const auto rank = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::ceil(q * static_cast<double>(column.size()) - 1e-9)), 1, column.size());
        const double v = column[rank - 1];
        if (bins.breakpoints.empty() || bins.breakpoints.back() < v) bins.breakpoints.push_back(v);
      }
    }
    spec.covariates.push_back(std::move(bins));
  }
  return spec;
}

std::vector<double> one_hot_encode(std::span<const double> z, const EncoderSpec& spec) {
  if (z.size() != spec.covariates.size()) throw InputError("one_hot_encode: raw vector has the wrong width");
  std::vector<double> x(spec.dim(), 0.0);
  std::size_t offset = 0;
  if (spec.constant) x[offset++] = 1.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (std::isnan(z[k])) throw InputError("one_hot_encode: NaN in covariate " + spec.covariates[k].name);
    const auto& bp = spec.covariates[k].breakpoints;
    const auto bin = static_cast<std::size_t>(std::upper_bound(bp.begin(), bp.end(), z[k]) - bp.begin());
    x[offset + bin] = 1.0;
    offset += spec.covariates[k].bins();
  }
  return x;
}

CovariatePath encode_path(const LaggedCovariates& lagged, const EncoderSpec& spec) {
  spec.validate();
  CovariatePath out;
  out.start = lagged.start;
  out.dim = spec.dim();
  out.names = spec.feature_names();
  out.lagged = true;
  out.times.reserve(lagged.path.rows());
  out.values.reserve(lagged.path.rows() * out.dim);
  for (std::size_t j = 0; j < lagged.path.rows(); ++j) out.append(lagged.path.times[j], one_hot_encode(lagged.path.row(j), spec));
  return out;
}

CovariatePath raw_linear_path(const LaggedCovariates& lagged, bool constant) {
  CovariatePath out;
  out.start = lagged.start;
  out.dim = lagged.path.dim() + (constant ? 1 : 0);
  if (constant) out.names.push_back("const");
  out.names.insert(out.names.end(), lagged.path.names.begin(), lagged.path.names.end());
  out.lagged = true;
  std::vector<double> row(out.dim);
  for (std::size_t j = 0; j < lagged.path.rows(); ++j) {
    std::size_t c = 0;
    if (constant) row[c++] = 1.0;
    for (double z : lagged.path.row(j)) row[c++] = z;
    out.append(lagged.path.times[j], row);
  }
  return out;
}

namespace {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

std::int64_t header_field(const std::string& header, const std::string& key, const std::string& source) {
  const auto pos = header.find(key + "=");
  if (pos == std::string::npos) throw ParseError(source, 0, "header lacks " + key);
  std::int64_t v = 0;
  const char* first = header.data() + pos + key.size() + 1;
  auto [p, ec] = std::from_chars(first, header.data() + header.size(), v);
  if (ec != std::errc{}) throw ParseError(source, 0, "malformed " + key);
  return v;
}

}  // namespace

void write_path_csv(std::ostream& out, const CovariatePath& path) {
  path.validate();
  out << "# lobhawkes covariate-path v1 start_ns=" << path.start.ns << " lagged=" << (path.lagged ? 1 : 0) << '\n';
  out << "timestamp_ns";
  for (std::size_t k = 0; k < path.dim; ++k) {
    out << ',' << (k < path.names.size() ? path.names[k] : "x" + std::to_string(k + 1));
  }
  out << '\n';
  for (std::size_t j = 0; j < path.rows(); ++j) {
    out << path.times[j].ns;
    for (double x : path.row(j)) out << ',' << format_double(x);
    out << '\n';
  }
}

CovariatePath read_path_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!next_line(in, line) || line.rfind("# lobhawkes covariate-path v1", 0) != 0) {
    throw ParseError(source, 0, "missing covariate-path header");
  }
  CovariatePath path;
  path.start.ns = header_field(line, "start_ns", source);
  path.lagged = header_field(line, "lagged", source) != 0;
  if (!next_line(in, line)) throw ParseError(source, 1, "missing column header");
  const auto cols = split_csv(line);
  if (cols.empty() || cols[0] != "timestamp_ns") throw ParseError(source, 1, "first column must be timestamp_ns");
  for (std::size_t k = 1; k < cols.size(); ++k) path.names.emplace_back(cols[k]);
  path.dim = path.names.size();
  std::size_t row = 0;
  std::vector<double> values(path.dim);
  while (next_line(in, line)) {
    const auto f = split_csv(line);
    if (f.size() != path.dim + 1) throw ParseError(source, row, "wrong number of columns");
    Timestamp t;
    auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), t.ns);
    if (ec != std::errc{} || p != f[0].data() + f[0].size()) throw ParseError(source, row, "malformed timestamp");
    for (std::size_t k = 0; k < path.dim; ++k) {
      auto [q, ec2] = std::from_chars(f[k + 1].data(), f[k + 1].data() + f[k + 1].size(), values[k]);
      if (ec2 != std::errc{} || q != f[k + 1].data() + f[k + 1].size()) throw ParseError(source, row, "malformed value");
    }
    path.append(t, values);
    ++row;
  }
  try {
    path.validate();
  } catch (const InputError& e) {
    throw ParseError(source, row, e.what());
  }
  return path;
}

void write_events_csv(std::ostream& out, const EventStream& events) {
  out << "# lobhawkes events v1\ntimestamp_ns\n";
  for (Timestamp t : events) out << t.ns << '\n';
}

EventStream read_events_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!next_line(in, line) || line.rfind("# lobhawkes events v1", 0) != 0) {
    throw ParseError(source, 0, "missing events header");
  }
  if (!next_line(in, line) || line != "timestamp_ns") throw ParseError(source, 1, "missing timestamp_ns column");
  EventStream events;
  std::size_t row = 0;
  while (next_line(in, line)) {
    Timestamp t;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), t.ns);
    if (ec != std::errc{} || p != line.data() + line.size()) throw ParseError(source, row, "malformed timestamp");
    if (!events.empty() && !(events.back() < t)) throw ParseError(source, row, "times not strictly increasing");
    events.push_back(t);
    ++row;
  }
  return events;
}

void write_encoder(std::ostream& out, const EncoderSpec& spec) {
  nlohmann::ordered_json j;
  j["format"] = "lobhawkes-encoder";
  j["version"] = 1;
  j["constant"] = spec.constant;
  j["covariates"] = nlohmann::ordered_json::array();
  for (const auto& c : spec.covariates) {
    j["covariates"].push_back({{"name", c.name}, {"breakpoints", c.breakpoints}});
  }
  out << j.dump(2) << '\n';
}

EncoderSpec read_encoder(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("encoder: ") + e.what());
  }
  if (j.value("format", "") != "lobhawkes-encoder") throw InputError("encoder: wrong format tag");
  EncoderSpec spec;
  spec.constant = j.value("constant", true);
  for (const auto& c : j.at("covariates")) {
    spec.covariates.push_back({c.at("name").get<std::string>(), c.at("breakpoints").get<std::vector<double>>()});
  }
  spec.validate();
  return spec;
}

}  // namespace lobhawkes
