#include <cstdio>
#include <mutex>
#include <string>
#include <utility>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/time.hpp"
#include "lobhawkes/warnings.hpp"

namespace lobhawkes {

void require_sorted(std::span<const Timestamp> times, bool strict, const char* what) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    const bool bad = strict ? !(times[i - 1] < times[i]) : times[i] < times[i - 1];
    if (bad) {
      throw InputError(std::string(what) + ": times not " + (strict ? "strictly increasing" : "sorted") +
                       " at index " + std::to_string(i));
    }
  }
}

namespace {

WarningHandler& handler_slot() {
  static WarningHandler handler = [](std::string_view msg) {
    std::fprintf(stderr, "warning: %.*s\n", static_cast<int>(msg.size()), msg.data());
  };
  return handler;
}

// Replications warn from worker threads.
std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  if (auto& h = handler_slot()) h(message);
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  return std::exchange(handler_slot(), std::move(handler));
}

ScopedWarningCapture::ScopedWarningCapture() {
  previous_ = set_warning_handler([this](std::string_view msg) { messages_.emplace_back(msg); });
}

ScopedWarningCapture::~ScopedWarningCapture() { set_warning_handler(std::move(previous_)); }

bool ScopedWarningCapture::contains(std::string_view needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace lobhawkes
