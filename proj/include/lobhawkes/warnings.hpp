#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace lobhawkes {

using WarningHandler = std::function<void(std::string_view)>;

// Routes non-fatal diagnostics. The default handler prints to stderr.
void warn(std::string_view message);

// Installs `handler` and returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

// Collects warnings for the lifetime of the object (used by tests and the CLI).
class ScopedWarningCapture {
 public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const;

 private:
  WarningHandler previous_;
  std::vector<std::string> messages_;
};

}  // namespace lobhawkes
