#pragma once

// LOBSTER-format message/order-book files.
//
// Message file columns: time (seconds after midnight, decimal), event type,
// order id, size, price (dollars x 10^4), direction (+1 buy order, -1 sell
// order). Types 4 (visible execution) and 5 (hidden execution) are trades;
// the aggressor is on the opposite side of the resting order.
//
// Order-book file: per level, ask price, ask size, bid price, bid size.
// Empty levels carry prices 9999999999 (ask) / -9999999999 (bid) and size 0.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lobhawkes/time.hpp"

namespace lobhawkes {

inline constexpr std::int64_t kEmptyAskPrice = 9999999999LL;
inline constexpr std::int64_t kEmptyBidPrice = -9999999999LL;
inline constexpr double kPriceScale = 1e4;  // integer ticks per dollar

enum class Side : int { Buy = 1, Sell = -1 };
enum class EventKind { Any, Large };

Side parse_side(const std::string& s);         // "buy" | "sell", throws InputError
EventKind parse_kind(const std::string& s);    // "any" | "large"
const char* to_string(Side s);
const char* to_string(EventKind k);

struct BookLevel {
  std::int64_t ask_price = kEmptyAskPrice;
  std::int64_t ask_size = 0;
  std::int64_t bid_price = kEmptyBidPrice;
  std::int64_t bid_size = 0;

  bool has_ask() const { return ask_price != kEmptyAskPrice && ask_size > 0; }
  bool has_bid() const { return bid_price != kEmptyBidPrice && bid_size > 0; }
  bool operator==(const BookLevel&) const = default;
};

struct BookSnapshot {
  Timestamp time;
  int instrument = 0;
  std::vector<BookLevel> levels;

  // Sizes nonnegative, ask_1 >= bid_1 when both present, prices sorted.
  void validate() const;
};

struct MessageRow {
  Timestamp time;
  int type = 0;
  std::int64_t order_id = 0;
  std::int64_t size = 0;
  std::int64_t price = 0;
  int direction = 0;

  bool is_trade() const { return type == 4 || type == 5; }
  Side aggressor() const { return direction > 0 ? Side::Sell : Side::Buy; }
};

struct TradeEvent {
  Timestamp time;
  int instrument = 0;
  std::int64_t price = 0;
  std::int64_t size = 0;
  Side aggressor = Side::Buy;
  bool is_large = false;
};

struct LobsterDay {
  int instrument = 0;
  std::vector<MessageRow> messages;
  std::vector<BookSnapshot> books;  // books[i] is the state after messages[i]
  std::vector<TradeEvent> trades;   // execution messages, unconflated
};

// Parses row-aligned message and book files (gzip-compressed or plain).
// `levels` defaults to the width found in the book file. Throws ParseError
// with the offending row on malformed input, decreasing time, or a row-count
// mismatch.
LobsterDay parse_lobster(const std::string& message_file, const std::string& orderbook_file, int instrument = 0,
                         std::optional<int> levels = std::nullopt);
LobsterDay parse_lobster(std::istream& messages, std::istream& orderbook, int instrument = 0,
                         std::optional<int> levels = std::nullopt, const std::string& source = "lobster");

// Writes the two files back; times are printed with nine decimals.
void write_lobster(const LobsterDay& day, std::ostream& messages, std::ostream& orderbook);
void write_lobster(const LobsterDay& day, const std::string& message_file, const std::string& orderbook_file);

// One book state plus the trade flow that produced it.
struct MarketUpdate {
  Timestamp time;
  int instrument = 0;
  std::vector<BookLevel> levels;
  std::int64_t buy_volume = 0;   // buyer-initiated traded quantity at this stamp
  std::int64_t sell_volume = 0;  // seller-initiated traded quantity at this stamp
  std::uint32_t buy_trades = 0;
  std::uint32_t sell_trades = 0;

  bool has_trade() const { return buy_volume > 0 || sell_volume > 0; }
  bool operator==(const MarketUpdate&) const = default;
};

// One update per message row.
std::vector<MarketUpdate> to_updates(const LobsterDay& day);

// Collapses rows sharing a timestamp: last book state, summed trade flow.
std::vector<MarketUpdate> conflate(const std::vector<MarketUpdate>& stream);

// Keeps updates that trade or change any of the first `levels` book levels.
std::vector<MarketUpdate> filter_levels(const std::vector<MarketUpdate>& stream, int levels = 3);

// Stable merge by (time, instrument id).
std::vector<MarketUpdate> synchronize(const std::vector<std::vector<MarketUpdate>>& streams);

struct ExtractedEvents {
  EventStream events;
  std::size_t dropped = 0;  // large-trade candidates without a prior book
};

// Trade times on `side` for one instrument. A Large event also needs the
// traded quantity to reach the top-of-book size on the hit side of the
// previous update (ask for buys, bid for sells).
ExtractedEvents extract_events(const std::vector<MarketUpdate>& stream, Side side, EventKind kind,
                               std::optional<int> instrument = std::nullopt);

// Normalized binary files: 8-byte magic, u32 version, then records.
inline constexpr std::uint32_t kBinaryVersion = 1;
void write_updates_binary(const std::string& file, const std::vector<MarketUpdate>& updates);
std::vector<MarketUpdate> read_updates_binary(const std::string& file);
void write_events_binary(const std::string& file, const EventStream& events);
EventStream read_events_binary(const std::string& file);

// Exact decimal seconds to nanoseconds ("34200.000000001" -> 34200000000001).
Timestamp parse_decimal_seconds(std::string_view text);
std::string format_decimal_seconds(Timestamp t);

}  // namespace lobhawkes
