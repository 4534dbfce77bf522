#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace lobhawkes {

// Model zoo: E (environment only), H01/H02 (plain Hawkes, L = 1, 2),
// H1/H2 (Hawkes times one-hot environment), H1L/H2L (Hawkes times an
// unconstrained linear function of the raw covariates).
enum class ModelVariant { E, H01, H02, H1, H2, H1L, H2L };

std::string_view to_string(ModelVariant v);
ModelVariant parse_variant(std::string_view name);  // throws InputError

constexpr bool has_kernel(ModelVariant v) { return v != ModelVariant::E; }
constexpr bool has_environment(ModelVariant v) { return v != ModelVariant::H01 && v != ModelVariant::H02; }
constexpr bool is_raw_linear(ModelVariant v) { return v == ModelVariant::H1L || v == ModelVariant::H2L; }

// Number of exponential terms; zero for E.
constexpr std::size_t kernel_terms(ModelVariant v) {
  switch (v) {
    case ModelVariant::E: return 0;
    case ModelVariant::H01:
    case ModelVariant::H1:
    case ModelVariant::H1L: return 1;
    default: return 2;
  }
}

}  // namespace lobhawkes
