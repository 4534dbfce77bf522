#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/ingest.hpp"
#include "synthetic_lobster.hpp"

using namespace lobhawkes;
namespace fs = std::filesystem;
namespace synth = lobhawkes::testing;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lobhawkes_ingest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MarketUpdate update(std::int64_t ns, int instrument, std::int64_t ask_size, std::int64_t buy_volume = 0) {
  MarketUpdate u;
  u.time = Timestamp{ns};
  u.instrument = instrument;
  u.levels = {BookLevel{1000100, ask_size, 1000000, 300}};
  u.buy_volume = buy_volume;
  u.buy_trades = buy_volume > 0 ? 1 : 0;
  return u;
}

EventStream from_json(const nlohmann::json& j) {
  EventStream out;
  for (const auto& v : j) out.push_back(Timestamp{v.get<std::int64_t>()});
  return out;
}

}  // namespace

TEST(Parse, ExecutionRow) {
  std::istringstream msg("34200.000000001,4,17,100,2239500,-1\n34200.5,1,18,40,2239400,1\n");
  std::istringstream book("2239600,200,2239400,300\n2239600,200,2239400,340\n");
  const LobsterDay day = parse_lobster(msg, book, 3);
  ASSERT_EQ(day.messages.size(), 2u);
  const MessageRow& m = day.messages[0];
  EXPECT_EQ(m.time.ns, 34200000000001LL);
  EXPECT_EQ(m.price, 2239500);
  EXPECT_NEAR(static_cast<double>(m.price) / kPriceScale, 223.95, 1e-12);
  EXPECT_TRUE(m.is_trade());
  EXPECT_EQ(m.aggressor(), Side::Buy);  // resting sell order hit by a buyer
  EXPECT_FALSE(day.messages[1].is_trade());
  ASSERT_EQ(day.trades.size(), 1u);
  EXPECT_EQ(day.trades[0].aggressor, Side::Buy);
  EXPECT_EQ(day.trades[0].instrument, 3);
  EXPECT_EQ(day.trades[0].size, 100);
  ASSERT_EQ(day.books.size(), 2u);
  EXPECT_EQ(day.books[1].levels[0].bid_size, 340);

  MessageRow sell_side;
  sell_side.type = 5;
  sell_side.direction = 1;
  EXPECT_EQ(sell_side.aggressor(), Side::Sell);
}

TEST(Parse, Errors) {
  {
    std::istringstream msg("34200.5,1,1,10,100,1\n34200.4,1,2,10,100,1\n");
    std::istringstream book("200,5,100,10\n200,5,100,20\n");
    try {
      parse_lobster(msg, book);
      FAIL() << "decreasing time accepted";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.row(), 2u);
    }
  }
  {
    std::istringstream msg("34200.5,1,1,10,100,1\n34200.6,1,2,1x,100,1\n");
    std::istringstream book("200,5,100,10\n200,5,100,20\n");
    EXPECT_THROW(parse_lobster(msg, book), ParseError);
  }
  {
    std::istringstream msg("34200.5,1,1,10,100,1\n");
    std::istringstream book("200,5,100,10\n200,5,100,20\n");
    EXPECT_THROW(parse_lobster(msg, book), ParseError);  // row-count mismatch
  }
  {
    std::istringstream msg("34200.5,1,1,10,100,0\n");
    std::istringstream book("200,5,100,10\n");
    EXPECT_THROW(parse_lobster(msg, book), ParseError);  // direction must be +-1
  }
  EXPECT_THROW(parse_lobster("/nonexistent/m.csv", "/nonexistent/b.csv"), InputError);
  EXPECT_THROW(parse_side("up"), InputError);
  EXPECT_THROW(parse_kind("huge"), InputError);
}

TEST(Parse, DecimalSeconds) {
  EXPECT_EQ(parse_decimal_seconds("34200.000000001").ns, 34200000000001LL);
  EXPECT_EQ(parse_decimal_seconds("34200").ns, 34200000000000LL);
  EXPECT_EQ(parse_decimal_seconds("0.5").ns, 500000000LL);
  EXPECT_EQ(format_decimal_seconds(Timestamp{34200000000001LL}), "34200.000000001");
  EXPECT_THROW(parse_decimal_seconds("12.3.4"), InputError);
  EXPECT_THROW(parse_decimal_seconds(""), InputError);
  for (std::int64_t ns : {0LL, 1LL, 999999999LL, 57599999999999LL})
    EXPECT_EQ(parse_decimal_seconds(format_decimal_seconds(Timestamp{ns})).ns, ns);
}

TEST(Streams, ConflateSumsFlowAndKeepsLastBook) {
  const std::vector<MarketUpdate> s{update(5, 0, 100, 10), update(5, 0, 90, 20), update(5, 0, 70, 30),
                                    update(6, 0, 70)};
  const auto c = conflate(s);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].buy_volume, 60);
  EXPECT_EQ(c[0].buy_trades, 3u);
  EXPECT_EQ(c[0].levels[0].ask_size, 70);
  EXPECT_EQ(conflate(c), c);
}

TEST(Streams, FilterKeepsTradesAndTopLevelChanges) {
  MarketUpdate deep = update(3, 0, 100);
  deep.levels.resize(5);
  deep.levels[4] = BookLevel{1000500, 10, 999500, 10};
  MarketUpdate a = deep;
  a.time = Timestamp{1};
  MarketUpdate b = deep;  // only level 5 differs from a
  b.time = Timestamp{2};
  b.levels[4].ask_size = 20;
  MarketUpdate c = b;  // trade with no book change
  c.time = Timestamp{3};
  c.sell_volume = 5;
  c.sell_trades = 1;
  MarketUpdate d = c;  // level 3 change
  d.time = Timestamp{4};
  d.sell_volume = 0;
  d.sell_trades = 0;
  d.levels[2].bid_size = 7;
  d.levels[2].bid_price = 999800;
  const auto kept = filter_levels({a, b, c, d}, 3);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].time.ns, 1);
  EXPECT_EQ(kept[1].time.ns, 3);
  EXPECT_EQ(kept[2].time.ns, 4);
  EXPECT_EQ(filter_levels({a, b, c, d}, 5).size(), 4u);
}

TEST(Streams, SynchronizeIsStableByTimeThenInstrument) {
  const std::vector<MarketUpdate> x{update(1, 1, 100), update(4, 1, 100), update(4, 1, 50)};
  const std::vector<MarketUpdate> y{update(2, 0, 100), update(4, 0, 100), update(5, 0, 100)};
  const auto m = synchronize({x, y});
  ASSERT_EQ(m.size(), 6u);
  EXPECT_TRUE(std::is_sorted(m.begin(), m.end(), [](const auto& a, const auto& b) {
    return std::pair(a.time, a.instrument) < std::pair(b.time, b.instrument);
  }));
  EXPECT_EQ(m[2].instrument, 0);
  EXPECT_EQ(m[3].levels[0].ask_size, 100);  // equal keys keep input order
  EXPECT_EQ(m[4].levels[0].ask_size, 50);
  EXPECT_EQ(synchronize({y, x}), m);
}

TEST(Events, LargeNeedsPriorTopSize) {
  // Previous top ask 100: buying 100 is large, 50 is not.
  const std::vector<MarketUpdate> s{update(1, 0, 100), update(2, 0, 0, 100), update(3, 0, 100), update(4, 0, 100, 50)};
  const auto large = extract_events(s, Side::Buy, EventKind::Large);
  ASSERT_EQ(large.events.size(), 1u);
  EXPECT_EQ(large.events[0].ns, 2);
  const auto any = extract_events(s, Side::Buy, EventKind::Any);
  EXPECT_EQ(any.events, (EventStream{Timestamp{2}, Timestamp{4}}));
  EXPECT_TRUE(extract_events(s, Side::Sell, EventKind::Any).events.empty());

  // A trade in the first update has no prior book.
  const auto first = extract_events({update(1, 0, 10, 500)}, Side::Buy, EventKind::Large);
  EXPECT_TRUE(first.events.empty());
  EXPECT_EQ(first.dropped, 1u);

  // The prior book is the instrument's own.
  const std::vector<MarketUpdate> mixed{update(1, 0, 100), update(2, 1, 5), update(3, 0, 10, 100)};
  EXPECT_EQ(extract_events(mixed, Side::Buy, EventKind::Large, 0).events.size(), 1u);
}

TEST(Events, AnyContainsLargeOnSyntheticDays) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    synth::SyntheticOptions opt;
    opt.seed = seed;
    const auto s = synth::synthetic_lobster_day(opt);
    const auto stream = conflate(to_updates(s.day));
    for (Side side : {Side::Buy, Side::Sell}) {
      const auto any = extract_events(stream, side, EventKind::Any).events;
      const auto large = extract_events(stream, side, EventKind::Large).events;
      EXPECT_TRUE(std::includes(any.begin(), any.end(), large.begin(), large.end()));
      EXPECT_LT(large.size(), any.size());
    }
  }
}

TEST(Pipeline, MatchesSyntheticTruth) {
  for (std::uint64_t seed : {1u, 2u, 11u, 99u}) {
    synth::SyntheticOptions opt;
    opt.seed = seed;
    opt.instrument = static_cast<int>(seed % 3);
    const auto s = synth::synthetic_lobster_day(opt);
    const auto raw = to_updates(s.day);
    EXPECT_EQ(raw.size(), s.truth.messages);
    const auto stamps = conflate(raw);
    EXPECT_EQ(stamps.size(), s.truth.stamps);
    EXPECT_EQ(filter_levels(stamps, 3).size(), s.truth.filtered);
    EXPECT_EQ(extract_events(stamps, Side::Buy, EventKind::Any).events, s.truth.buy);
    EXPECT_EQ(extract_events(stamps, Side::Sell, EventKind::Any).events, s.truth.sell);
    EXPECT_EQ(extract_events(stamps, Side::Buy, EventKind::Large).events, s.truth.buy_large);
    EXPECT_EQ(extract_events(stamps, Side::Sell, EventKind::Large).events, s.truth.sell_large);
    // Filtering cannot lose trades.
    EXPECT_EQ(extract_events(filter_levels(stamps, 3), Side::Buy, EventKind::Any).events, s.truth.buy);
    for (const auto& b : s.day.books) EXPECT_NO_THROW(b.validate());
  }
}

TEST(Files, TextRoundTrip) {
  synth::SyntheticOptions opt;
  opt.seed = 8;
  opt.bursts = 300;
  const auto s = synth::synthetic_lobster_day(opt);
  std::ostringstream msg, book;
  write_lobster(s.day, msg, book);
  std::istringstream msg_in(msg.str()), book_in(book.str());
  const LobsterDay back = parse_lobster(msg_in, book_in, opt.instrument, opt.levels);
  ASSERT_EQ(back.messages.size(), s.day.messages.size());
  for (std::size_t i = 0; i < back.messages.size(); ++i) {
    EXPECT_EQ(back.messages[i].time, s.day.messages[i].time);
    EXPECT_EQ(back.messages[i].price, s.day.messages[i].price);
    EXPECT_EQ(back.messages[i].size, s.day.messages[i].size);
    EXPECT_EQ(back.books[i].levels, s.day.books[i].levels);
  }
  EXPECT_EQ(to_updates(back), to_updates(s.day));
  std::ostringstream msg2, book2;
  write_lobster(back, msg2, book2);
  EXPECT_EQ(msg2.str(), msg.str());
  EXPECT_EQ(book2.str(), book.str());
}

TEST(Files, GzipMatchesPlain) {
  synth::SyntheticOptions opt;
  opt.seed = 9;
  opt.bursts = 200;
  const auto s = synth::synthetic_lobster_day(opt);
  const fs::path dir = scratch("gzip");
  write_lobster(s.day, (dir / "m.csv").string(), (dir / "b.csv").string());
  for (const char* name : {"m.csv", "b.csv"}) {
    const std::string text = slurp(dir / name);
    gzFile f = gzopen((dir / (std::string(name) + ".gz")).string().c_str(), "wb");
    ASSERT_NE(f, nullptr);
    ASSERT_EQ(gzwrite(f, text.data(), static_cast<unsigned>(text.size())), static_cast<int>(text.size()));
    gzclose(f);
  }
  const auto plain = parse_lobster((dir / "m.csv").string(), (dir / "b.csv").string());
  const auto packed = parse_lobster((dir / "m.csv.gz").string(), (dir / "b.csv.gz").string());
  EXPECT_EQ(to_updates(packed), to_updates(plain));
  fs::remove_all(dir);
}

TEST(Files, BinaryRoundTrip) {
  synth::SyntheticOptions opt;
  opt.seed = 10;
  opt.bursts = 400;
  const auto s = synth::synthetic_lobster_day(opt);
  const auto stream = conflate(to_updates(s.day));
  const fs::path dir = scratch("binary");
  write_updates_binary((dir / "u.bin").string(), stream);
  EXPECT_EQ(read_updates_binary((dir / "u.bin").string()), stream);
  write_events_binary((dir / "e.bin").string(), s.truth.buy);
  EXPECT_EQ(read_events_binary((dir / "e.bin").string()), s.truth.buy);

  // Wrong file kind and truncation are rejected.
  EXPECT_THROW(read_events_binary((dir / "u.bin").string()), InputError);
  const std::string bytes = slurp(dir / "u.bin");
  std::ofstream(dir / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(read_updates_binary((dir / "cut.bin").string()), InputError);
  fs::remove_all(dir);
}

TEST(Golden, RegenerationIsByteIdentical) {
  const fs::path golden = LOBHAWKES_GOLDEN_DIR;
  ASSERT_TRUE(fs::exists(golden / "truth.json")) << "missing fixture " << golden;
  const fs::path fresh = scratch("golden");
  synth::write_golden(fresh.string());
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(fresh)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), fresh);
    EXPECT_EQ(slurp(entry.path()), slurp(golden / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 14u);
  fs::remove_all(fresh);
}

TEST(Golden, FilesMatchTruth) {
  const fs::path golden = LOBHAWKES_GOLDEN_DIR;
  const auto truth = nlohmann::json::parse(slurp(golden / "truth.json"));
  ASSERT_EQ(truth.size(), 6u);
  for (const auto& [key, t] : truth.items()) {
    const std::string day = key.substr(0, key.find('/'));
    const std::string name = key.substr(key.find('/') + 1);
    const int instrument = name == "AAA" ? 0 : 1;
    const auto parsed = parse_lobster((golden / day / (name + "_message.csv")).string(),
                                      (golden / day / (name + "_orderbook.csv")).string(), instrument);
    const auto stamps = conflate(to_updates(parsed));
    EXPECT_EQ(parsed.messages.size(), t["messages"].get<std::size_t>()) << key;
    EXPECT_EQ(stamps.size(), t["stamps"].get<std::size_t>()) << key;
    EXPECT_EQ(filter_levels(stamps, 3).size(), t["filtered"].get<std::size_t>()) << key;
    EXPECT_EQ(extract_events(stamps, Side::Buy, EventKind::Any).events, from_json(t["buy"])) << key;
    EXPECT_EQ(extract_events(stamps, Side::Sell, EventKind::Any).events, from_json(t["sell"])) << key;
    EXPECT_EQ(extract_events(stamps, Side::Buy, EventKind::Large).events, from_json(t["buy_large"])) << key;
    EXPECT_EQ(extract_events(stamps, Side::Sell, EventKind::Large).events, from_json(t["sell_large"])) << key;
  }
}
