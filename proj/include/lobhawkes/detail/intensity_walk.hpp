#pragma once

// Single pass over a window that splits it at covariate updates and events.
// Shared by the estimator (streaming sufficient statistics, kernel contrast)
// and the evaluator (likelihood, residuals).

#include <cstddef>
#include <span>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/kernel.hpp"
#include "lobhawkes/path.hpp"

namespace lobhawkes::detail {

// on_piece(row, s, t, state): (s, t] carries covariate row `row`, holds no
//   event strictly inside, and state.time() == s.
// on_event(row, t, state): event at t, state decayed to t but not yet
//   including the event itself (left-open convention).
// `kernel` supplies decay rates and magnitudes; with zero terms h is flat.
template <class OnPiece, class OnEvent>
void walk_window(const CovariatePath& path, std::span<const Timestamp> events, const KernelParams& kernel,
                 OnPiece&& on_piece, OnEvent&& on_event) {
  const std::size_t n = events.size();
  std::size_t idx = 0;
  Timestamp origin = path.start;
  if (n > 0 && events.front() < origin) origin = events.front();
  KernelState state(kernel.terms(), origin);

  for (; idx < n && !(path.start < events[idx]); ++idx) {
    state.advance(kernel, events[idx]);
    state.add_event(kernel);
  }
  state.advance(kernel, path.start);

  Timestamp cur = path.start;
  const std::size_t m = path.rows();
  for (std::size_t j = 0; j < m; ++j) {
    const Timestamp tj = path.times[j];
    while (idx < n && !(tj < events[idx])) {
      const Timestamp e = events[idx];
      if (cur < e) {
        on_piece(j, cur, e, static_cast<const KernelState&>(state));
        state.advance(kernel, e);
        cur = e;
      }
      on_event(j, e, static_cast<const KernelState&>(state));
      state.add_event(kernel);
      ++idx;
    }
    if (cur < tj) {
      on_piece(j, cur, tj, static_cast<const KernelState&>(state));
      state.advance(kernel, tj);
      cur = tj;
    }
  }
  if (idx < n) throw InputError("event after the end of the covariate window");
}

// Kernel with no excitation terms: h is constant and state tracking is free.
inline const KernelParams& flat_kernel() {
  static const KernelParams k{1.0, {}, {}};
  return k;
}

}  // namespace lobhawkes::detail
