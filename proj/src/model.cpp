#include "lobhawkes/model.hpp"

#include <array>
#include <string>
#include <utility>

#include "lobhawkes/errors.hpp"

namespace lobhawkes {

namespace {
constexpr std::array<std::pair<ModelVariant, std::string_view>, 7> kNames{{
    {ModelVariant::E, "E"},
    {ModelVariant::H01, "H01"},
    {ModelVariant::H02, "H02"},
    {ModelVariant::H1, "H1"},
    {ModelVariant::H2, "H2"},
    {ModelVariant::H1L, "H1L"},
    {ModelVariant::H2L, "H2L"},
}};
}  // namespace

std::string_view to_string(ModelVariant v) {
  for (const auto& [variant, name] : kNames) {
    if (variant == v) return name;
  }
  return "?";
}

ModelVariant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kNames) {
    if (n == name) return variant;
  }
  throw InputError("unknown model variant '" + std::string(name) + "'");
}

}  // namespace lobhawkes
