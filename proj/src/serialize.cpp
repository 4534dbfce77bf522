#include "lobhawkes/serialize.hpp"

#include <cmath>

#include <json.hpp>

#include "lobhawkes/errors.hpp"

namespace lobhawkes {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

ojson kernel_json(const KernelParams& p) { return {{"c", p.c}, {"d", p.d}, {"a", p.a}}; }

KernelParams kernel_from(const json& j) {
  KernelParams p{j.at("c").get<double>(), j.at("d").get<std::vector<double>>(), j.at("a").get<std::vector<double>>()};
  p.validate();
  return p;
}

ojson sparse_json(const std::vector<double>& b) {
  ojson nz = ojson::array();
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (b[k] != 0.0) nz.push_back(ojson::array({k, b[k]}));
  }
  return {{"dim", b.size()}, {"nonzero", nz}};
}

std::vector<double> sparse_from(const json& j) {
  std::vector<double> b(j.at("dim").get<std::size_t>(), 0.0);
  for (const auto& e : j.at("nonzero")) {
    const auto k = e.at(0).get<std::size_t>();
    if (k >= b.size()) throw InputError("sparse vector: index out of range");
    b[k] = e.at(1).get<double>();
  }
  return b;
}

// JSON has no infinity; unbounded budgets are written as null.
ojson bound_json(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }
double bound_from(const json& j) { return j.is_null() ? kUnbounded : j.get<double>(); }

json parse(std::istream& in, const char* what) {
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + ": " + e.what());
  }
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void write_fit_result(std::ostream& out, const FitResult& fit, const Provenance& provenance) {
  ojson j;
  j["format"] = "lobhawkes-fit";
  j["version"] = 1;
  ojson prov = ojson::object();
  for (const auto& [k, v] : provenance) prov[k] = v;
  j["provenance"] = prov;
  j["variant"] = std::string(to_string(fit.variant));
  j["params"] = fit.params ? kernel_json(*fit.params) : ojson(nullptr);
  j["intensity_kernel"] = fit.intensity_kernel ? kernel_json(*fit.intensity_kernel) : ojson(nullptr);
  if (fit.env) {
    ojson env = sparse_json(fit.env->b);
    env["budget"] = bound_json(fit.env->budget);
    env["beta"] = fit.env->beta ? ojson(*fit.env->beta) : ojson(nullptr);
    env["signed"] = fit.env->signed_box;
    j["env"] = env;
  } else {
    j["env"] = nullptr;
  }
  j["g_mean"] = fit.g_mean;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["objective_trace"] = fit.objective_trace;
  ojson hist = ojson::array();
  for (const auto& r : fit.history) {
    hist.push_back({{"iteration", r.iteration},
                    {"params", kernel_json(r.params)},
                    {"b", sparse_json(r.b)},
                    {"g_mean", r.g_mean},
                    {"objective", r.objective}});
  }
  j["history"] = hist;
  j["budget_choices"] = {{"heuristic", fit.budget_choices.heuristic ? ojson(*fit.budget_choices.heuristic) : ojson(nullptr)},
                         {"beta", fit.budget_choices.beta},
                         {"box_budget", fit.budget_choices.box_budget}};
  j["branching"] = fit.branching;
  j["warnings"] = fit.warnings;
  j["events"] = fit.events;
  j["updates"] = fit.updates;
  j["T"] = fit.T;
  out << j.dump(2) << '\n';
}

FitResult read_fit_result(std::istream& in) {
  const json j = parse(in, "fit result");
  return guarded("fit result", [&] {
    if (j.value("format", "") != "lobhawkes-fit") throw InputError("fit result: wrong format tag");
    FitResult f;
    f.variant = parse_variant(j.at("variant").get<std::string>());
    if (!j.at("params").is_null()) f.params = kernel_from(j.at("params"));
    if (!j.at("intensity_kernel").is_null()) f.intensity_kernel = kernel_from(j.at("intensity_kernel"));
    if (!j.at("env").is_null()) {
      const json& e = j.at("env");
      EnvCoefficients env;
      env.b = sparse_from(e);
      env.budget = bound_from(e.at("budget"));
      if (!e.at("beta").is_null()) env.beta = e.at("beta").get<double>();
      env.signed_box = e.at("signed").get<bool>();
      f.env = env;
    }
    f.g_mean = j.at("g_mean").get<double>();
    f.iterations = j.at("iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    for (const auto& r : j.at("history")) {
      IterationRecord rec;
      rec.iteration = r.at("iteration").get<int>();
      const json& p = r.at("params");
      rec.params = KernelParams{p.at("c").get<double>(), p.at("d").get<std::vector<double>>(),
                                p.at("a").get<std::vector<double>>()};
      rec.b = sparse_from(r.at("b"));
      rec.g_mean = r.at("g_mean").get<double>();
      rec.objective = r.at("objective").get<double>();
      f.history.push_back(std::move(rec));
    }
    const json& bc = j.at("budget_choices");
    if (!bc.at("heuristic").is_null()) f.budget_choices.heuristic = bc.at("heuristic").get<double>();
    f.budget_choices.beta = bc.at("beta").get<double>();
    f.budget_choices.box_budget = bc.at("box_budget").get<double>();
    f.branching = j.at("branching").get<double>();
    f.warnings = j.at("warnings").get<std::vector<std::string>>();
    f.events = j.at("events").get<std::size_t>();
    f.updates = j.at("updates").get<std::size_t>();
    f.T = j.at("T").get<double>();
    return f;
  });
}

void write_model_spec(std::ostream& out, const ModelSpec& spec) {
  spec.validate();
  ojson j;
  j["format"] = "lobhawkes-model";
  j["version"] = 1;
  j["variant"] = std::string(to_string(spec.variant));
  j["kernel"] = spec.kernel ? kernel_json(*spec.kernel) : ojson(nullptr);
  j["b"] = spec.b ? sparse_json(*spec.b) : ojson(nullptr);
  j["raw_linear"] = spec.raw_linear;
  j["floor"] = spec.floor;
  out << j.dump(2) << '\n';
}

ModelSpec read_model_spec(std::istream& in) {
  const json j = parse(in, "model spec");
  return guarded("model spec", [&] {
    if (j.value("format", "") != "lobhawkes-model") throw InputError("model spec: wrong format tag");
    ModelSpec s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    if (!j.at("kernel").is_null()) s.kernel = kernel_from(j.at("kernel"));
    if (!j.at("b").is_null()) s.b = sparse_from(j.at("b"));
    s.raw_linear = j.at("raw_linear").get<bool>();
    s.floor = j.at("floor").get<double>();
    s.validate();
    return s;
  });
}

void write_csv_provenance(std::ostream& out, const Provenance& provenance) {
  for (const auto& [k, v] : provenance) out << "# " << k << '=' << v << '\n';
}

}  // namespace lobhawkes
