#include "lobhawkes/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "lobhawkes/errors.hpp"

namespace lobhawkes {

Side parse_side(const std::string& s) {
  if (s == "buy") return Side::Buy;
  if (s == "sell") return Side::Sell;
  throw InputError("unknown side '" + s + "' (expected buy or sell)");
}

EventKind parse_kind(const std::string& s) {
  if (s == "any") return EventKind::Any;
  if (s == "large") return EventKind::Large;
  throw InputError("unknown event kind '" + s + "' (expected any or large)");
}

const char* to_string(Side s) { return s == Side::Buy ? "buy" : "sell"; }
const char* to_string(EventKind k) { return k == EventKind::Any ? "any" : "large"; }

void BookSnapshot::validate() const {
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const BookLevel& lv = levels[l];
    if (lv.ask_size < 0 || lv.bid_size < 0) throw InputError("book: negative size at level " + std::to_string(l + 1));
    if (l > 0) {
      const BookLevel& up = levels[l - 1];
      if (lv.has_ask() && up.has_ask() && lv.ask_price <= up.ask_price) {
        throw InputError("book: ask prices not increasing at level " + std::to_string(l + 1));
      }
      if (lv.has_bid() && up.has_bid() && lv.bid_price >= up.bid_price) {
        throw InputError("book: bid prices not decreasing at level " + std::to_string(l + 1));
      }
    }
  }
  if (!levels.empty() && levels[0].has_ask() && levels[0].has_bid() && levels[0].ask_price < levels[0].bid_price) {
    throw InputError("book: crossed top of book");
  }
}

Timestamp parse_decimal_seconds(std::string_view text) {
  std::size_t dot = text.find('.');
  const std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty()) throw InputError("time: missing integer seconds in '" + std::string(text) + "'");
  std::int64_t secs = 0;
  auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), secs);
  if (ec != std::errc{} || p != whole.data() + whole.size() || secs < 0) {
    throw InputError("time: malformed seconds '" + std::string(text) + "'");
  }
  while (frac.size() > 9 && frac.back() == '0') frac.remove_suffix(1);
  if (frac.size() > 9) throw InputError("time: sub-nanosecond precision in '" + std::string(text) + "'");
  std::int64_t ns = 0;
  for (char ch : frac) {
    if (ch < '0' || ch > '9') throw InputError("time: malformed fraction '" + std::string(text) + "'");
    ns = ns * 10 + (ch - '0');
  }
  for (std::size_t i = frac.size(); i < 9; ++i) ns *= 10;
  return Timestamp{secs * kNanosPerSecond + ns};
}

std::string format_decimal_seconds(Timestamp t) {
  if (t.ns < 0) throw InputError("time: negative timestamp cannot be written");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%09lld", static_cast<long long>(t.ns / kNanosPerSecond),
                static_cast<long long>(t.ns % kNanosPerSecond));
  return buf;
}

namespace {

std::string read_text_file(const std::string& file) {
  gzFile f = gzopen(file.c_str(), "rb");
  if (!f) throw InputError("cannot open " + file);
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(f, &err);
  const bool failed = n < 0 || (err != Z_OK && err != Z_STREAM_END);
  const std::string why = failed ? std::string(msg) : std::string();
  gzclose(f);
  if (failed) throw InputError("cannot read " + file + ": " + why);
  return out;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

std::int64_t parse_int(std::string_view s, const std::string& source, std::size_t row, const char* what) {
  std::int64_t v = 0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError(source, row, std::string("malformed ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> data_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

LobsterDay parse_lobster(std::istream& messages, std::istream& orderbook, int instrument, std::optional<int> levels,
                         const std::string& source) {
  const auto msg_lines = data_lines(messages);
  const auto book_lines = data_lines(orderbook);
  const std::string msg_src = source + ".message";
  const std::string book_src = source + ".orderbook";
  if (msg_lines.size() != book_lines.size()) {
    throw ParseError(book_src, std::min(msg_lines.size(), book_lines.size()) + 1,
                     "row count mismatch: " + std::to_string(msg_lines.size()) + " messages vs " +
                         std::to_string(book_lines.size()) + " book rows");
  }
  if (levels && (*levels < 1 || *levels > 10)) throw InputError("lobster: levels must be between 1 and 10");

  LobsterDay day;
  day.instrument = instrument;
  day.messages.reserve(msg_lines.size());
  day.books.reserve(msg_lines.size());
  int width = levels.value_or(0);
  for (std::size_t i = 0; i < msg_lines.size(); ++i) {
    const std::size_t row = i + 1;  // 1-based data row for messages
    const auto mf = split(msg_lines[i]);
    if (mf.size() < 6) throw ParseError(msg_src, row, "expected 6 columns, found " + std::to_string(mf.size()));
    MessageRow m;
    try {
      m.time = parse_decimal_seconds(mf[0]);
    } catch (const InputError& e) {
      throw ParseError(msg_src, row, e.what());
    }
    m.type = static_cast<int>(parse_int(mf[1], msg_src, row, "event type"));
    m.order_id = parse_int(mf[2], msg_src, row, "order id");
    m.size = parse_int(mf[3], msg_src, row, "size");
    m.price = parse_int(mf[4], msg_src, row, "price");
    m.direction = static_cast<int>(parse_int(mf[5], msg_src, row, "direction"));
    if (m.type < 1 || m.type > 7) throw ParseError(msg_src, row, "unknown event type " + std::to_string(m.type));
    if (m.direction != 1 && m.direction != -1) throw ParseError(msg_src, row, "direction must be 1 or -1");
    if (m.size < 0) throw ParseError(msg_src, row, "negative size");
    if (!day.messages.empty() && m.time < day.messages.back().time) {
      throw ParseError(msg_src, row, "time decreases");
    }

    const auto bf = split(book_lines[i]);
    if (bf.size() % 4 != 0 || bf.empty()) {
      throw ParseError(book_src, row, "book row must have 4 columns per level, found " + std::to_string(bf.size()));
    }
    const int found = static_cast<int>(bf.size() / 4);
    if (width == 0) width = std::min(found, 10);
    if (found < width) throw ParseError(book_src, row, "fewer levels than requested");
    BookSnapshot b;
    b.time = m.time;
    b.instrument = instrument;
    b.levels.resize(static_cast<std::size_t>(width));
    for (int l = 0; l < width; ++l) {
      BookLevel& lv = b.levels[static_cast<std::size_t>(l)];
      const auto base = static_cast<std::size_t>(4 * l);
      lv.ask_price = parse_int(bf[base], book_src, row, "ask price");
      lv.ask_size = parse_int(bf[base + 1], book_src, row, "ask size");
      lv.bid_price = parse_int(bf[base + 2], book_src, row, "bid price");
      lv.bid_size = parse_int(bf[base + 3], book_src, row, "bid size");
    }
    try {
      b.validate();
    } catch (const InputError& e) {
      throw ParseError(book_src, row, e.what());
    }
    if (m.is_trade()) {
      if (m.size <= 0) throw ParseError(msg_src, row, "execution with nonpositive size");
      day.trades.push_back({m.time, instrument, m.price, m.size, m.aggressor(), false});
    }
    day.messages.push_back(m);
    day.books.push_back(std::move(b));
  }
  return day;
}

LobsterDay parse_lobster(const std::string& message_file, const std::string& orderbook_file, int instrument,
                         std::optional<int> levels) {
  std::istringstream msg(read_text_file(message_file));
  std::istringstream book(read_text_file(orderbook_file));
  return parse_lobster(msg, book, instrument, levels, message_file);
}

void write_lobster(const LobsterDay& day, std::ostream& messages, std::ostream& orderbook) {
  if (day.messages.size() != day.books.size()) throw InputError("lobster: messages and books differ in length");
  for (std::size_t i = 0; i < day.messages.size(); ++i) {
    const MessageRow& m = day.messages[i];
    messages << format_decimal_seconds(m.time) << ',' << m.type << ',' << m.order_id << ',' << m.size << ','
             << m.price << ',' << m.direction << '\n';
    const auto& lv = day.books[i].levels;
    for (std::size_t l = 0; l < lv.size(); ++l) {
      if (l > 0) orderbook << ',';
      orderbook << lv[l].ask_price << ',' << lv[l].ask_size << ',' << lv[l].bid_price << ',' << lv[l].bid_size;
    }
    orderbook << '\n';
  }
}

void write_lobster(const LobsterDay& day, const std::string& message_file, const std::string& orderbook_file) {
  std::ofstream msg(message_file), book(orderbook_file);
  if (!msg || !book) throw InputError("cannot open LOBSTER output files for writing");
  write_lobster(day, msg, book);
  if (!msg || !book) throw InputError("failed writing LOBSTER output files");
}

std::vector<MarketUpdate> to_updates(const LobsterDay& day) {
  std::vector<MarketUpdate> out;
  out.reserve(day.messages.size());
  for (std::size_t i = 0; i < day.messages.size(); ++i) {
    const MessageRow& m = day.messages[i];
    MarketUpdate u;
    u.time = m.time;
    u.instrument = day.instrument;
    u.levels = day.books[i].levels;
    if (m.is_trade()) {
      if (m.aggressor() == Side::Buy) {
        u.buy_volume = m.size;
        u.buy_trades = 1;
      } else {
        u.sell_volume = m.size;
        u.sell_trades = 1;
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<MarketUpdate> conflate(const std::vector<MarketUpdate>& stream) {
  std::vector<MarketUpdate> out;
  out.reserve(stream.size());
  for (const MarketUpdate& u : stream) {
    if (!out.empty() && u.time < out.back().time) throw InputError("conflate: input not sorted by time");
    if (!out.empty() && out.back().time == u.time && out.back().instrument == u.instrument) {
      MarketUpdate& last = out.back();
      last.levels = u.levels;
      last.buy_volume += u.buy_volume;
      last.sell_volume += u.sell_volume;
      last.buy_trades += u.buy_trades;
      last.sell_trades += u.sell_trades;
    } else {
      out.push_back(u);
    }
  }
  return out;
}

std::vector<MarketUpdate> filter_levels(const std::vector<MarketUpdate>& stream, int levels) {
  if (levels < 1) throw InputError("filter_levels: levels must be positive");
  std::vector<MarketUpdate> out;
  std::map<int, const MarketUpdate*> previous;
  const auto depth = static_cast<std::size_t>(levels);
  for (const MarketUpdate& u : stream) {
    auto it = previous.find(u.instrument);
    bool keep = it == previous.end() || u.has_trade();
    if (!keep) {
      const auto& a = it->second->levels;
      const auto& b = u.levels;
      const std::size_t na = std::min(depth, a.size());
      const std::size_t nb = std::min(depth, b.size());
      keep = na != nb;
      for (std::size_t l = 0; l < na && !keep; ++l) keep = !(a[l] == b[l]);
    }
    previous[u.instrument] = &u;
    if (keep) out.push_back(u);
  }
  return out;
}

std::vector<MarketUpdate> synchronize(const std::vector<std::vector<MarketUpdate>>& streams) {
  std::vector<MarketUpdate> out;
  std::size_t total = 0;
  for (const auto& s : streams) total += s.size();
  out.reserve(total);
  for (const auto& s : streams) out.insert(out.end(), s.begin(), s.end());
  std::stable_sort(out.begin(), out.end(), [](const MarketUpdate& l, const MarketUpdate& r) {
    if (l.time != r.time) return l.time < r.time;
    return l.instrument < r.instrument;
  });
  return out;
}

ExtractedEvents extract_events(const std::vector<MarketUpdate>& stream, Side side, EventKind kind,
                               std::optional<int> instrument) {
  ExtractedEvents out;
  const MarketUpdate* prev = nullptr;
  const int id = instrument.value_or(stream.empty() ? 0 : stream.front().instrument);
  for (const MarketUpdate& u : stream) {
    if (u.instrument != id) continue;
    const std::int64_t volume = side == Side::Buy ? u.buy_volume : u.sell_volume;
    if (volume > 0) {
      bool take = true;
      if (kind == EventKind::Large) {
        const BookLevel* top = prev && !prev->levels.empty() ? &prev->levels.front() : nullptr;
        const bool present = top && (side == Side::Buy ? top->has_ask() : top->has_bid());
        if (!present) {
          ++out.dropped;
          take = false;
        } else {
          take = volume >= (side == Side::Buy ? top->ask_size : top->bid_size);
        }
      }
      if (take) {
        if (!out.events.empty() && !(out.events.back() < u.time)) {
          throw InputError("extract_events: repeated trade timestamp; conflate the stream first");
        }
        out.events.push_back(u.time);
      }
    }
    prev = &u;
  }
  return out;
}

namespace {

constexpr char kUpdatesMagic[8] = {'L', 'O', 'B', 'H', 'W', 'K', 'U', 'P'};
constexpr char kEventsMagic[8] = {'L', 'O', 'B', 'H', 'W', 'K', 'E', 'V'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw InputError(file + ": truncated binary file");
  return v;
}

void check_header(std::istream& in, const char (&magic)[8], const std::string& file) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0) throw InputError(file + ": bad magic, not a lobhawkes binary file");
  const auto version = get<std::uint32_t>(in, file);
  if (version != kBinaryVersion) {
    throw InputError(file + ": unsupported binary version " + std::to_string(version));
  }
}

}  // namespace

void write_updates_binary(const std::string& file, const std::vector<MarketUpdate>& updates) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot open " + file + " for writing");
  out.write(kUpdatesMagic, 8);
  put<std::uint32_t>(out, kBinaryVersion);
  put<std::uint64_t>(out, updates.size());
  for (const MarketUpdate& u : updates) {
    put<std::int64_t>(out, u.time.ns);
    put<std::int32_t>(out, u.instrument);
    put<std::int64_t>(out, u.buy_volume);
    put<std::int64_t>(out, u.sell_volume);
    put<std::uint32_t>(out, u.buy_trades);
    put<std::uint32_t>(out, u.sell_trades);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(u.levels.size()));
    for (const BookLevel& l : u.levels) {
      put(out, l.ask_price);
      put(out, l.ask_size);
      put(out, l.bid_price);
      put(out, l.bid_size);
    }
  }
  if (!out) throw InputError("failed writing " + file);
}

std::vector<MarketUpdate> read_updates_binary(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file);
  check_header(in, kUpdatesMagic, file);
  const auto n = get<std::uint64_t>(in, file);
  std::vector<MarketUpdate> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    MarketUpdate u;
    u.time.ns = get<std::int64_t>(in, file);
    u.instrument = get<std::int32_t>(in, file);
    u.buy_volume = get<std::int64_t>(in, file);
    u.sell_volume = get<std::int64_t>(in, file);
    u.buy_trades = get<std::uint32_t>(in, file);
    u.sell_trades = get<std::uint32_t>(in, file);
    const auto levels = get<std::uint32_t>(in, file);
    if (levels > 10) throw InputError(file + ": corrupt record (too many levels)");
    u.levels.resize(levels);
    for (BookLevel& l : u.levels) {
      l.ask_price = get<std::int64_t>(in, file);
      l.ask_size = get<std::int64_t>(in, file);
      l.bid_price = get<std::int64_t>(in, file);
      l.bid_size = get<std::int64_t>(in, file);
    }
    out.push_back(std::move(u));
  }
  return out;
}

void write_events_binary(const std::string& file, const EventStream& events) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot open " + file + " for writing");
  out.write(kEventsMagic, 8);
  put<std::uint32_t>(out, kBinaryVersion);
  put<std::uint64_t>(out, events.size());
  for (Timestamp t : events) put<std::int64_t>(out, t.ns);
  if (!out) throw InputError("failed writing " + file);
}

EventStream read_events_binary(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file);
  check_header(in, kEventsMagic, file);
  const auto n = get<std::uint64_t>(in, file);
  EventStream out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(Timestamp{get<std::int64_t>(in, file)});
  return out;
}

}  // namespace lobhawkes
