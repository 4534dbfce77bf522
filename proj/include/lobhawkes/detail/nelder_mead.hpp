#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace lobhawkes::detail {

struct NelderMeadOptions {
  int max_evaluations = 1500;
  double f_tolerance = 1e-13;  // relative spread of simplex values
  double x_tolerance = 1e-9;   // simplex diameter (max abs coordinate spread)
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Standard reflection/expansion/contraction/shrink on an axis-aligned start simplex.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> x0, double step, const NelderMeadOptions& opt) {
  const std::size_t n = x0.size();
  NelderMeadResult out;
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step;
  for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);
  out.evaluations = static_cast<int>(n + 1);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto point = [&](double t, std::vector<double>& dst, const std::vector<double>& worst) {
    for (std::size_t k = 0; k < n; ++k) dst[k] = centroid[k] + t * (worst[k] - centroid[k]);
  };

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return values[l] < values[r]; });
    const double best = values[order.front()];
    const double worst = values[order.back()];
    double diameter = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        diameter = std::max(diameter, std::abs(simplex[order[i]][k] - simplex[order[0]][k]));
      }
    }
    if (worst - best <= opt.f_tolerance * std::max(1.0, std::abs(best)) && diameter <= opt.x_tolerance) {
      out.converged = true;
      break;
    }
    if (out.evaluations >= opt.max_evaluations) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[order[i]][k] / static_cast<double>(n);
    }
    const std::size_t w = order.back();
    const double second_worst = values[order[n - 1]];

    point(-1.0, trial, simplex[w]);
    const double fr = f(trial);
    ++out.evaluations;
    if (fr < best) {
      point(-2.0, trial2, simplex[w]);
      const double fe = f(trial2);
      ++out.evaluations;
      if (fe < fr) {
        simplex[w] = trial2;
        values[w] = fe;
      } else {
        simplex[w] = trial;
        values[w] = fr;
      }
      continue;
    }
    if (fr < second_worst) {
      simplex[w] = trial;
      values[w] = fr;
      continue;
    }
    const bool outside = fr < values[w];
    point(outside ? -0.5 : 0.5, trial2, simplex[w]);
    const double fc = f(trial2);
    ++out.evaluations;
    if (fc < std::min(fr, values[w])) {
      simplex[w] = trial2;
      values[w] = fc;
      continue;
    }
    const auto& xb = simplex[order.front()];
    for (std::size_t i = 1; i <= n; ++i) {
      auto& xi = simplex[order[i]];
      for (std::size_t k = 0; k < n; ++k) xi[k] = xb[k] + 0.5 * (xi[k] - xb[k]);
      values[order[i]] = f(xi);
      ++out.evaluations;
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  out.f = *it;
  out.x = simplex[static_cast<std::size_t>(it - values.begin())];
  return out;
}

}  // namespace lobhawkes::detail
