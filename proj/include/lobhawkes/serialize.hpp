#pragma once

// JSON persistence of fits and model specs. Coefficient vectors are stored
// sparsely as [index, value] pairs plus their length; doubles round-trip.

#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lobhawkes/estimator.hpp"
#include "lobhawkes/evaluator.hpp"

namespace lobhawkes {

// Ordered key/value pairs printed into every output for provenance.
using Provenance = std::vector<std::pair<std::string, std::string>>;

void write_fit_result(std::ostream& out, const FitResult& fit, const Provenance& provenance = {});
FitResult read_fit_result(std::istream& in);

void write_model_spec(std::ostream& out, const ModelSpec& spec);
ModelSpec read_model_spec(std::istream& in);

// "# key=value" lines.
void write_csv_provenance(std::ostream& out, const Provenance& provenance);

}  // namespace lobhawkes
