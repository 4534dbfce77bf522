#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/kernel.hpp"
#include "lobhawkes/rng.hpp"
#include "oracles.hpp"

using namespace lobhawkes;
using lobhawkes::testing::h_direct;
using lobhawkes::testing::random_events;
using lobhawkes::testing::random_params;
using lobhawkes::testing::state_after;

namespace {

Timestamp sec(double s) { return Timestamp::from_seconds(s); }

}  // namespace

TEST(Kernel, HAtExamples) {
  const KernelParams p(1.0, {1.0}, {2.0});
  KernelState st(1);
  st.add_event(p);  // event at 0
  EXPECT_NEAR(h_at(st, p, sec(1.0)), 1.0 + std::exp(-2.0), 1e-12);
  EXPECT_NEAR(h_at(st, p, sec(1.0)), 1.135335, 1e-6);

  KernelState st2 = state_after(p, {sec(0.0), sec(1.0)}, sec(1.5));
  EXPECT_NEAR(h_at(st2, p, sec(1.5)), 1.0 + std::exp(-3.0) + std::exp(-1.0), 1e-12);
  EXPECT_NEAR(h_at(st2, p, sec(1.5)), 1.417666, 1e-6);

  KernelState empty(1);
  EXPECT_DOUBLE_EQ(h_at(empty, p, sec(123.0)), 1.0);
}

TEST(Kernel, EventAtTDoesNotCountTowardHAtT) {
  const KernelParams p(1.0, {1.0}, {2.0});
  KernelState st(1, sec(1.0));
  EXPECT_DOUBLE_EQ(h_at(st, p, sec(1.0)), 1.0);
  st.add_event(p);
  EXPECT_DOUBLE_EQ(st.total(), 1.0);  // counts just after
}

TEST(Kernel, TimeRegressionRejected) {
  const KernelParams p(1.0, {1.0}, {2.0});
  KernelState st(1, sec(2.0));
  EXPECT_THROW(h_at(st, p, sec(1.0)), InputError);
  EXPECT_THROW(integrate_h(p, st, sec(3.0), sec(2.5)), InputError);
  EXPECT_THROW(integrate_hg_squared(p, st, 1.0, sec(3.0), sec(2.5)), InputError);
}

TEST(Kernel, IntegrateHExamples) {
  const KernelParams p(1.0, {1.0}, {2.0});
  KernelState st(1);
  st.add_event(p);
  EXPECT_NEAR(integrate_h(p, st, sec(0.0), sec(1.0)), 1.0 + (1.0 - std::exp(-2.0)) / 2.0, 1e-12);
  EXPECT_NEAR(integrate_h(p, st, sec(0.0), sec(1.0)), 1.432332, 1e-6);
  EXPECT_DOUBLE_EQ(integrate_h(p, KernelState(1), sec(0.0), sec(2.5)), 2.5);
  EXPECT_DOUBLE_EQ(integrate_h(p, st, sec(0.7), sec(0.7)), 0.0);
}

TEST(Kernel, IntegrateHgSquaredExamples) {
  const KernelParams p(1.0, {1.0}, {2.0});
  KernelState st(1);
  st.add_event(p);
  const double expected = 1.0 + (1.0 - std::exp(-2.0)) + (1.0 - std::exp(-4.0)) / 4.0;
  EXPECT_NEAR(integrate_hg_squared(p, st, 1.0, sec(0.0), sec(1.0)), expected, 1e-12);
  EXPECT_NEAR(expected, 2.110086, 1e-6);
  EXPECT_DOUBLE_EQ(integrate_hg_squared(p, st, 0.0, sec(0.0), sec(1.0)), 0.0);
  const KernelParams q(1.5, {1.0}, {2.0});
  EXPECT_NEAR(integrate_hg_squared(q, KernelState(1), 0.3, sec(0.0), sec(2.0)), 0.09 * 2.25 * 2.0, 1e-14);
}

TEST(Kernel, BranchingRatioExamples) {
  auto r1 = branching_ratio(KernelParams(1.0, {1.0}, {2.0}), 1.0);
  EXPECT_DOUBLE_EQ(r1.value, 0.5);
  EXPECT_TRUE(r1.stable);
  auto r2 = branching_ratio(KernelParams(1.0, {1.0, 1.0}, {2.0, 4.0}), 1.0);
  EXPECT_DOUBLE_EQ(r2.value, 0.75);
  EXPECT_TRUE(r2.stable);
  auto r3 = branching_ratio(KernelParams(1.0, {1.0}, {2.0}), 3.0);
  EXPECT_DOUBLE_EQ(r3.value, 1.5);
  EXPECT_FALSE(r3.stable);
  EXPECT_FALSE(branching_ratio(KernelParams(1.0, {1.0}, {2.0}), 2.0).stable);  // exactly 1
}

TEST(Kernel, ParamsValidation) {
  EXPECT_THROW(KernelParams(0.0, {1.0}, {2.0}).validate(), InputError);
  EXPECT_THROW(KernelParams(1.0, {-1.0}, {2.0}).validate(), InputError);
  EXPECT_THROW(KernelParams(1.0, {1.0}, {0.0}).validate(), InputError);
  EXPECT_THROW(KernelParams(1.0, {1.0, 2.0}, {1.0}).validate(), InputError);
  EXPECT_NO_THROW(KernelParams(1.0, {0.0}, {1.0}).validate());
  ParameterBounds b;
  b.c = {0.0, 1.0};
  EXPECT_THROW(b.validate(), InputError);
  EXPECT_TRUE(ParameterBounds::simulation().contains(KernelParams(1.0, {1.0}, {2.0})));
}

TEST(Kernel, DecayIsExact) {
  const KernelParams p(1.0, {0.7, 2.0}, {3.0, 0.5});
  KernelState st(2);
  st.add_event(p);
  const std::vector<double> before(st.excitation().begin(), st.excitation().end());
  st.advance(p, sec(0.4));
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_NEAR(st.excitation()[l], before[l] * std::exp(-p.a[l] * 0.4), 1e-15);
    EXPECT_GE(st.excitation()[l], 0.0);
  }
}

TEST(KernelProperty, RecursionMatchesDirectSum) {
  CounterRng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const KernelParams p = random_params(rng, 1 + rep % 3);
    const auto n = static_cast<std::size_t>(1 + rng.uniform() * 200);
    const auto events = random_events(rng, n, 50.0);
    KernelState st(p.terms());
    std::size_t next = 0;
    // Query between and at events.
    for (int k = 0; k < 40; ++k) {
      const Timestamp t = sec(50.0 * (k + 1) / 40.0);
      while (next < events.size() && events[next] < t) {
        h_at(st, p, events[next]);
        st.add_event(p);
        ++next;
      }
      const double h = h_at(st, p, t);
      const double oracle = h_direct(p, events, t);
      ASSERT_LE(std::abs(h - oracle), 1e-12 * oracle) << "rep " << rep << " k " << k;
    }
  }
}

TEST(KernelProperty, ClosedFormsMatchQuadrature) {
  EXPECT_LE(lobhawkes::testing::kernel_quadrature_error(12, 1000), 1e-8);
}

TEST(KernelProperty, IntegralAdditivity) {
  CounterRng rng(13);
  for (int rep = 0; rep < 300; ++rep) {
    const KernelParams p = random_params(rng, 1 + rep % 3);
    const auto events = random_events(rng, 20, 5.0);
    const KernelState st = state_after(p, events, sec(5.0));
    const Timestamp s = sec(5.0), t = sec(5.0 + 0.01 + 4.0 * rng.uniform());
    const Timestamp u{s.ns + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(t.ns - s.ns))};
    const double whole = integrate_h(p, st, s, t);
    const double parts = integrate_h(p, st, s, u) + integrate_h(p, st, u, t);
    ASSERT_LE(std::abs(whole - parts), 1e-12 * whole);
    const double whole2 = integrate_hg_squared(p, st, 0.8, s, t);
    const double parts2 = integrate_hg_squared(p, st, 0.8, s, u) + integrate_hg_squared(p, st, 0.8, u, t);
    ASSERT_LE(std::abs(whole2 - parts2), 1e-12 * whole2);
  }
}

TEST(KernelProperty, ExtraEventNeverDecreasesH) {
  CounterRng rng(14);
  for (int rep = 0; rep < 300; ++rep) {
    const KernelParams p = random_params(rng, 1 + rep % 3);
    auto events = random_events(rng, 30, 10.0);
    const Timestamp s = sec(10.0);
    const Timestamp t = sec(10.0 + 5.0 * rng.uniform());
    const double before = h_direct(p, events, t);
    KernelState st = state_after(p, events, s);
    const double rec_before = h_at(st, p, t);
    events.push_back(sec(10.0 * rng.uniform()));
    std::sort(events.begin(), events.end());
    KernelState st2 = state_after(p, events, s);
    ASSERT_GE(h_at(st2, p, t), rec_before);
    ASSERT_GE(h_direct(p, events, t), before);
  }
}

TEST(Kernel, MonteCarloAgreesWithClosedForm) {
  const KernelParams p(0.8, {1.5, 0.4}, {3.0, 0.7});
  const KernelState st = state_after(p, {sec(0.0), sec(0.2), sec(0.9)}, sec(1.0));
  CounterRng rng(15);
  const double exact = integrate_hg_squared(p, st, 1.3, sec(1.0), sec(3.0));
  const double mc = integrate_hg_squared_mc(p, st, 1.3, sec(1.0), sec(3.0), 200000, rng);
  EXPECT_NEAR(mc, exact, 0.02 * exact);
}

TEST(Kernel, KernelMass) {
  EXPECT_DOUBLE_EQ(KernelParams(1.0, {1.0, 1.0}, {2.0, 4.0}).kernel_mass(), 0.75);
}
