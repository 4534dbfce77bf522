#pragma once

// Command-line front end: simulate | ingest | encode | fit | evaluate | compare.
// Exit codes: 0 ok, 1 numeric failure, 2 usage or input error.

#include <cstdint>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lobhawkes/covariates.hpp"
#include "lobhawkes/estimator.hpp"
#include "lobhawkes/evaluator.hpp"
#include "lobhawkes/ingest.hpp"
#include "lobhawkes/model.hpp"
#include "lobhawkes/simulator.hpp"

namespace lobhawkes {

struct InstrumentFiles {
  int instrument = 0;
  std::string messages;
  std::string orderbook;
};

struct DayInput {
  std::string name;
  std::vector<InstrumentFiles> files;
};

struct BudgetSpec {
  // "box": b_k in [0, value beta]; "mult": heuristic B times value;
  // "fixed": B = value; "K": B = K; "grid": pick B from `grid` by -L + K_B.
  std::string rule = "box";
  double value = 10.0;
  bool per_coordinate = false;
  std::vector<double> grid;
};

struct SimulationSpec {
  std::string design = "convergence";  // or "custom"
  std::size_t K = 3;
  std::size_t jumps = 100000;
  std::optional<double> horizon;
  std::size_t reps = 10;
  double c = 1.0;
  std::vector<double> d{1.0};
  std::vector<double> a{2.0};
  std::vector<double> b0;  // custom design only
  std::string law = "uniform";  // uniform | constant
  double burn_in = 0.0;
  bool allow_unstable = false;
  int iterations = 4;
  bool write_paths = true;
  std::size_t days = 1;     // split each path into this many segments
  unsigned threads = 0;     // 0: hardware concurrency
};

struct RunConfig {
  std::vector<int> instruments{0};  // first one is traded
  std::vector<std::string> instrument_names;
  Side side = Side::Buy;
  EventKind kind = EventKind::Any;
  std::vector<ModelVariant> variants{ModelVariant::H1};
  std::vector<std::pair<ModelVariant, ModelVariant>> pairs;  // empty: all pairs in variant order
  std::optional<BudgetSpec> budget;   // default: box x10 on data, B = K per coordinate in simulation
  std::optional<std::string> bounds;  // "empirical" | "simulation"
  std::size_t train_days = 0;         // 0: every day before the test block
  std::size_t test_days = 5;
  std::uint64_t seed = 0;
  int max_iterations = 10;
  std::optional<int> fixed_iterations;
  double tolerance = 1e-8;
  int restarts = 3;
  double floor = kMachineEpsilon;
  HistoryPolicy history = HistoryPolicy::Restart;
  double quantile = 1.64;
  int levels = 3;
  std::vector<double> quantiles{std::begin(kDefaultQuantiles), std::end(kDefaultQuantiles)};
  std::string session_start = "34200";  // decimal seconds after midnight
  std::string out_dir = ".";
  std::string dataset;  // manifest; default <out_dir>/dataset.json (ingested.json for encode)
  std::vector<DayInput> days;
  SimulationSpec simulation;

  // Parses a JSON document; relative paths resolve against `base_dir`.
  static RunConfig from_json(const std::string& text, const std::string& base_dir = ".");
  std::string to_json() const;  // effective configuration, one line
  void validate() const;
};

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lobhawkes
