#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobhawkes/cli.hpp"
#include "lobhawkes/covariates.hpp"

using namespace lobhawkes;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "lobhawkes");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lobhawkes_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "config.json") {
      files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return files;
}

// Data rows of a CSV with '#' provenance lines, split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

json small_simulation(std::size_t K) {
  return json{{"seed", 11},
              {"variants", {"H1"}},
              {"simulation", {{"K", K}, {"jumps", 4000}, {"reps", 2}, {"iterations", 2}, {"threads", 2}}}};
}

// Golden config with absolute day paths so it can live elsewhere.
json golden_config() {
  const fs::path golden = LOBHAWKES_GOLDEN_DIR;
  json j = json::parse(slurp(golden / "config.json"));
  for (auto& d : j["days"]) {
    for (auto& f : d["files"]) {
      f["messages"] = (golden / f["messages"].get<std::string>()).string();
      f["orderbook"] = (golden / f["orderbook"].get<std::string>()).string();
    }
  }
  return j;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"fit", "--config", "/nonexistent/config.json"}).code, 2);
  EXPECT_EQ(run({"--version"}).code, 0);

  const fs::path dir = scratch("usage");
  const CliRun bad_key = run({"simulate", "--config", write_config(dir, json{{"sedd", 1}}).string()});
  EXPECT_EQ(bad_key.code, 2);
  EXPECT_NE(bad_key.err.find("sedd"), std::string::npos);
  const CliRun bad_variant = run({"simulate", "--variant", "H3", "--out-dir", dir.string()});
  EXPECT_EQ(bad_variant.code, 2);
  fs::remove_all(dir);
}

TEST(Cli, ZeroDimensionRejected) {
  const fs::path dir = scratch("k0");
  const CliRun r = run({"simulate", "--config", write_config(dir, small_simulation(0)).string(), "--out-dir",
                     (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("K"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out" / "metrics.csv"));
  fs::remove_all(dir);
}

TEST(Cli, SimulateIsReproducible) {
  const fs::path dir = scratch("repro");
  const std::string cfg = write_config(dir, small_simulation(5)).string();
  ASSERT_EQ(run({"simulate", "--config", cfg}).code, 0);
  const auto first = snapshot(dir);
  ASSERT_TRUE(first.count("metrics.csv"));
  ASSERT_TRUE(first.count("fits/rep_1.json"));
  ASSERT_TRUE(first.count("rep_0/day_0/events.csv"));
  fs::remove_all(dir / "rep_0");
  fs::remove_all(dir / "rep_1");
  fs::remove_all(dir / "fits");
  fs::remove(dir / "metrics.csv");
  ASSERT_EQ(run({"simulate", "--config", cfg}).code, 0);
  EXPECT_EQ(snapshot(dir), first);

  // A different seed changes the paths.
  ASSERT_EQ(run({"simulate", "--config", cfg, "--seed", "12"}).code, 0);
  EXPECT_NE(slurp(dir / "rep_0/day_0/events.csv"), first.at("rep_0/day_0/events.csv"));

  // Metrics header: the active coefficients then the summary columns.
  std::istringstream in(first.at("metrics.csv"));
  std::string line;
  while (std::getline(in, line) && line[0] == '#') {
  }
  EXPECT_EQ(line, "K,rep,iter,b1,b2,b3,c,d,a,err_0.1,err_0.05,err_0.01,l1,l2,FP,FN,P,B");
  fs::remove_all(dir);
}

TEST(Cli, MissingInputLeavesNoOutputs) {
  const fs::path dir = scratch("missing");
  json j = golden_config();
  j["days"][1]["files"][0]["messages"] = (dir / "nope.csv").string();
  const CliRun r = run({"ingest", "--config", write_config(dir, j).string(), "--out-dir", (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
  EXPECT_TRUE(!fs::exists(dir / "out") || fs::is_empty(dir / "out"));

  // fit without a dataset
  EXPECT_EQ(run({"fit", "--out-dir", (dir / "empty").string()}).code, 2);
  EXPECT_TRUE(!fs::exists(dir / "empty") || snapshot(dir / "empty").empty());
  fs::remove_all(dir);
}

TEST(Cli, RecoversKernelFromSimulatedHawkes) {
  const fs::path dir = scratch("h01");
  const json j{{"seed", 3},
               {"variants", {"H01"}},
               {"simulation",
                {{"design", "custom"},
                 {"c", 1.0},
                 {"d", {1.0}},
                 {"a", {2.0}},
                 {"b0", {1.0}},
                 {"law", "constant"},
                 {"jumps", 40000},
                 {"reps", 1},
                 {"iterations", 1}}}};
  ASSERT_EQ(run({"simulate", "--config", write_config(dir, j).string()}).code, 0);
  const json fit = json::parse(slurp(dir / "fits/rep_0.json"));
  EXPECT_EQ(fit["variant"], "H01");
  EXPECT_TRUE(fit["env"].is_null());
  const json& p = fit["params"];
  EXPECT_NEAR(p["c"].get<double>(), 1.0, 0.1);
  EXPECT_NEAR(p["d"][0].get<double>(), 1.0, 0.1);
  EXPECT_NEAR(p["a"][0].get<double>(), 2.0, 0.2);
  fs::remove_all(dir);
}

TEST(Cli, GoldenPipeline) {
  const fs::path dir = scratch("golden");
  const std::string cfg = write_config(dir, golden_config()).string();
  for (const char* cmd : {"ingest", "encode", "fit", "evaluate", "compare"}) {
    const CliRun r = run({cmd, "--config", cfg, "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }

  // Ingested events match the generator's truth for the traded instrument.
  const json truth = json::parse(slurp(fs::path(LOBHAWKES_GOLDEN_DIR) / "truth.json"));
  for (const char* day : {"day1", "day2", "day3"}) {
    const json& t = truth[std::string(day) + "/AAA"];
    for (const char* key : {"buy", "sell", "buy_large", "sell_large"}) {
      const std::string k = key;
      const std::string file = "events_" + (k.find('_') == std::string::npos ? k + "_any" : k) + ".csv";
      std::ifstream in(dir / day / file);
      EventStream expected;
      for (const auto& v : t[k]) expected.push_back(Timestamp{v.get<std::int64_t>()});
      EXPECT_EQ(read_events_csv(in), expected) << day << ' ' << file;
    }
  }

  // E carries no kernel; H01 carries no environment.
  const json e = json::parse(slurp(dir / "fit_E_buy_any.json"));
  EXPECT_TRUE(e["params"].is_null());
  EXPECT_FALSE(e["env"].is_null());
  const json h01 = json::parse(slurp(dir / "fit_H01_buy_any.json"));
  EXPECT_FALSE(h01["params"].is_null());
  EXPECT_TRUE(h01["env"].is_null());
  EXPECT_TRUE(fs::exists(dir / "coefficients_H1_buy_any.csv"));
  EXPECT_FALSE(fs::exists(dir / "coefficients_H01_buy_any.csv"));

  const auto eval = csv_rows(dir / "evaluate_buy_any.csv");
  ASSERT_EQ(eval.size(), 3u);
  for (const auto& row : eval) EXPECT_TRUE(std::isfinite(std::stod(row[3]))) << row[0];

  const auto pairs = csv_rows(dir / "compare_buy_any.csv");
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0][0], "E");
  EXPECT_EQ(pairs[0][1], "H1");
  EXPECT_EQ(pairs[2][0], "H1");
  EXPECT_EQ(pairs[2][1], "H01");

  // Swapping a pair negates the statistic; a model against itself is degenerate.
  json swapped = golden_config();
  swapped["pairs"] = json::array({json::array({"H1", "E"}), json::array({"H1", "H1"})});
  const std::string cfg2 = write_config(dir, swapped).string();
  const CliRun cmp = run({"compare", "--config", cfg2, "--out-dir", dir.string()});
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  const auto rows2 = csv_rows(dir / "compare_buy_any.csv");
  ASSERT_EQ(rows2.size(), 2u);
  EXPECT_EQ(std::stod(rows2[0][3]), -std::stod(pairs[0][3]));
  EXPECT_EQ(rows2[1][3], "degenerate");
  EXPECT_NE(slurp(dir / "compare_buy_any.csv").find("H1,H1,buy,degenerate,"), std::string::npos);

  // Evaluating a variant that was never fitted is an input error and writes nothing.
  const std::string before = slurp(dir / "evaluate_buy_any.csv");
  const CliRun missing = run({"evaluate", "--config", cfg2, "--out-dir", dir.string(), "--variant", "H2"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("H2"), std::string::npos);
  EXPECT_EQ(slurp(dir / "evaluate_buy_any.csv"), before);
  fs::remove_all(dir);
}
