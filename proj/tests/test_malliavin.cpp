#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "scelab/malliavin.hpp"
#include "support/oracles.hpp"

using namespace scelab;

namespace {

const TimeGrid kGrid(1.0, 1000);
const InitialConditionSpec kArctan = InitialConditionSpec::arctan_shift(0.1);

BrownianPath constant_slope_path(const TimeGrid& g, double b_end) {
  return BrownianPath(g, std::vector<double>(static_cast<std::size_t>(g.steps()),
                                             b_end / g.steps()));
}

BackwardTrajectory backward(const DriftSpec& d, const BrownianPath& p, double t, double x) {
  return solve_backward(d, p, 0.0, t, x);
}

}  // namespace

TEST(DY, ZeroDriftIsMinusOne) {
  const auto traj = backward(DriftSpec::zero(), sample_path(kGrid, 1, 0), 1.0, 0.0);
  EXPECT_EQ(dY(DriftSpec::zero(), traj, 0.5), -1.0);
}

TEST(DY, LinearDriftClosedForm) {
  const auto d = DriftSpec::linear(1.0);
  const auto traj = backward(d, sample_path(kGrid, 1, 0), 1.0, 0.0);
  EXPECT_NEAR(dY(d, traj, 0.5), -std::exp(0.5), 1e-12);
}

TEST(DY, VanishesPastT) {
  const auto d = DriftSpec::quadratic(1.0);
  const auto traj = backward(d, sample_path(kGrid, 1, 0), 0.5, 0.0);
  EXPECT_EQ(dY(d, traj, 0.501), 0.0);
  EXPECT_EQ(dJY(d, traj, 0.501), 0.0);
  EXPECT_EQ(d2Y(d, traj, 0.501, 0.2), 0.0);
  EXPECT_EQ(d2JY(d, traj, 0.2, 0.7), 0.0);
}

TEST(DY, RejectsOffGridAlpha) {
  const auto traj = backward(DriftSpec::zero(), sample_path(kGrid, 1, 0), 1.0, 0.0);
  EXPECT_THROW(dY(DriftSpec::zero(), traj, 0.1234), InvalidArgument);
}

TEST(DJY, VanishesWithoutCurvature) {
  for (const auto& d : {DriftSpec::zero(), DriftSpec::linear(2.0, 0.3)}) {
    const auto traj = backward(d, sample_path(kGrid, 2, 0), 1.0, 0.4);
    EXPECT_EQ(dJY(d, traj, 0.3), 0.0);
    EXPECT_EQ(d2Y(d, traj, 0.3, 0.6), 0.0);
    EXPECT_EQ(d2JY(d, traj, 0.3, 0.6), 0.0);
  }
}

TEST(DJY, MatchesCameronMartinOracle) {
  const auto d = DriftSpec::quadratic(1.0);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto p = sample_path(kGrid, 17, i);
    const auto prof = du_profile(d, kArctan, backward(d, p, 1.0, 0.0));
    const double fd = oracle::directional_jy(d, p, 1.0, 0.0, 0.2, 1e-4);
    EXPECT_LT(oracle::relative_error(oracle::integral_to(prof.dJY, 0.2), fd), 1e-2) << i;
  }
}

TEST(Profiles, DirectAndFactoredRoutesAgree) {
  for (const auto& d : {DriftSpec::quadratic(1.0), DriftSpec::logcosh(1.3),
                        DriftSpec::polynomial({0.1, -0.5, 0.3, 0.2})}) {
    const TimeGrid g(1.0, 200);
    const auto traj = backward(d, sample_path(g, 5, 3), 0.8, 0.2);
    const auto p1 = du_profile(d, kArctan, traj);
    const auto p2 = d2u_profile(d, kArctan, traj);
    for (double a : {0.0, 0.1, 0.35, 0.8}) {
      const int ka = g.node(a);
      EXPECT_NEAR(dY(d, traj, a), p1.dY[ka], 1e-13 * std::abs(p1.dY[ka]));
      EXPECT_NEAR(dJY(d, traj, a), p1.dJY[ka], 1e-12 * (std::abs(p1.dJY[ka]) + 1e-300));
      for (double b : {0.05, 0.35, 0.6}) {
        const int kb = g.node(b);
        const double y = d2Y(d, traj, a, b), jy = d2JY(d, traj, a, b);
        EXPECT_NEAR(y, p2.y(ka, kb), 1e-12 * (std::abs(y) + 1e-12));
        EXPECT_NEAR(jy, p2.jy(ka, kb), 1e-11 * (std::abs(jy) + 1e-12));
      }
    }
  }
}

TEST(D2Y, QuadraticDependsOnBetaThroughDY) {
  // b'' is constant, so for beta1, beta2 >= alpha the inner integral is
  // proportional to D_beta Y.
  const auto d = DriftSpec::quadratic(1.0);
  const auto traj = backward(d, sample_path(kGrid, 6, 1), 1.0, 0.1);
  const double a = 0.3, b1 = 0.5, b2 = 0.9;
  const double ratio = d2Y(d, traj, a, b1) / d2Y(d, traj, a, b2);
  EXPECT_NEAR(ratio, dY(d, traj, b1) / dY(d, traj, b2), 1e-12);
}

TEST(D2Y, SecondOrderSymmetry) {
  const auto d = DriftSpec::logcosh(1.0);
  const auto traj = backward(d, sample_path(kGrid, 6, 2), 1.0, 0.3);
  const auto p = d2u_profile(d, kArctan, traj);
  for (int a : {0, 100, 450, 999})
    for (int b : {3, 450, 1000}) {
      EXPECT_DOUBLE_EQ(p.y(a, b), p.y(b, a));
      EXPECT_DOUBLE_EQ(p.jy(a, b), p.jy(b, a));
      EXPECT_NEAR(p.u(a, b), p.u(b, a), 1e-13 * std::abs(p.u(a, b)));
    }
}

TEST(DuProfile, ZeroDriftClosedForm) {
  const auto p = constant_slope_path(kGrid, 0.3);
  const auto prof = du_profile(DriftSpec::zero(), kArctan, backward(DriftSpec::zero(), p, 1.0, 0.0));
  for (double v : prof.du.values) EXPECT_NEAR(v, -1.0 / 1.09, 1e-14);
  EXPECT_NEAR(h_inner(prof.du, prof.du), 1.0 / (1.09 * 1.09), 1e-12);
}

TEST(DuProfile, SupportEndsAtT) {
  const auto d = DriftSpec::quadratic(1.0);
  const auto prof = du_profile(d, kArctan, backward(d, sample_path(kGrid, 1, 1), 0.6, 0.0));
  EXPECT_EQ(prof.du.support_end, 600);
  for (int k = 601; k <= 1000; ++k) {
    EXPECT_EQ(prof.du[k], 0.0);
    EXPECT_EQ(prof.dY[k], 0.0);
    EXPECT_EQ(prof.dJY[k], 0.0);
  }
  EXPECT_NE(prof.du[600], 0.0);
}

TEST(DuProfile, RequiresAnchorAtZero) {
  const auto traj = solve_backward(DriftSpec::zero(), sample_path(kGrid, 1, 1), 0.5, 1.0, 0.0);
  EXPECT_THROW(du_profile(DriftSpec::zero(), kArctan, traj), InvalidArgument);
}

TEST(MasterOracle, FirstOrderQuadratic) {
  const auto d = DriftSpec::quadratic(1.0);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto p = sample_path(kGrid, 21, i);
    const auto prof = du_profile(d, kArctan, backward(d, p, 1.0, 0.0));
    for (double a0 : {0.25, 0.5, 0.75, 1.0}) {
      const double fd = oracle::directional(d, kArctan, p, 1.0, 0.0, a0, 1e-4);
      EXPECT_LT(oracle::relative_error(oracle::integral_to(prof.du, a0), fd), 1e-2)
          << "path " << i << " a0 " << a0;
    }
  }
}

TEST(MasterOracle, SecondOrderQuadratic) {
  const auto d = DriftSpec::quadratic(1.0);
  const TimeGrid g(1.0, 400);
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto p = sample_path(g, 22, i);
    const auto prof = d2u_profile(d, kArctan, backward(d, p, 1.0, 0.0));
    for (auto [a0, b0] : {std::pair{0.25, 0.5}, std::pair{1.0, 1.0}, std::pair{0.75, 0.5}}) {
      const double fd = oracle::directional2(d, kArctan, p, 1.0, 0.0, a0, b0, 1e-4);
      EXPECT_LT(oracle::relative_error(oracle::integral2_to(prof, a0, b0), fd), 5e-2)
          << "path " << i << " a0 " << a0 << " b0 " << b0;
    }
  }
}

TEST(D2u, ZeroDriftReducesToSecondDerivativeOfU0) {
  const auto p = sample_path(kGrid, 3, 3);
  const auto traj = backward(DriftSpec::zero(), p, 0.5, 0.2);
  const auto prof = d2u_profile(DriftSpec::zero(), kArctan, traj);
  const double want = eval_initial(kArctan, 0.2 - p.value(500), 2);
  EXPECT_NEAR(prof.u(10, 300), want, 1e-14);
  EXPECT_NEAR(prof.u(500, 500), want, 1e-14);
  EXPECT_EQ(prof.u(501, 10), 0.0);
  EXPECT_EQ(prof.u(10, 1000), 0.0);
  EXPECT_NEAR(d2u_sup(DriftSpec::zero(), kArctan, traj), std::abs(want), 1e-14);
}

TEST(HNorm, ConstantProfile) {
  GridFunction f{kGrid, 400, std::vector<double>(1001, 0.0)};
  for (int k = 0; k <= 400; ++k) f.values[static_cast<std::size_t>(k)] = 3.0;
  EXPECT_NEAR(h_inner(f, f), 9.0 * 0.4, 1e-13);
  EXPECT_DOUBLE_EQ(h_norm(f) * h_norm(f), h_inner(f, f));
  GridFunction other{TimeGrid(1.0, 500), 500, std::vector<double>(501, 1.0)};
  EXPECT_THROW(h_inner(f, other), GridMismatch);
}

TEST(BoundsReport, ZeroDriftPassesTrivially) {
  const auto ic = kArctan;
  const Window w{-10.0, 10.0, 401};
  const auto hyp = check_hypotheses(DriftSpec::zero(), ic, w, 1.0);
  const auto k = constants(hyp, 1.0, 1.0);
  EXPECT_EQ(k.c1, 1.0);
  const auto r = bounds_report(DriftSpec::zero(), ic, hyp, k, backward(DriftSpec::zero(),
                               sample_path(kGrid, 1, 0), 1.0, 0.0));
  EXPECT_TRUE(r.in_window);
  EXPECT_FALSE(r.any_failed());
  EXPECT_EQ(r.find("du_norm_lower_C5")->verdict, Verdict::not_applicable);
  EXPECT_EQ(r.find("dY_bound_C1")->verdict, Verdict::pass);
}

TEST(BoundsReport, LinearDriftHasOnlyA1) {
  const auto d = DriftSpec::linear(1.0);
  const Window w{-10.0, 10.0, 401};
  const auto hyp = check_hypotheses(d, kArctan, w, 1.0);
  const auto r = bounds_report(d, kArctan, hyp, constants(hyp, 1.0, 1.0),
                               backward(d, sample_path(kGrid, 4, 0), 1.0, 0.0));
  EXPECT_EQ(r.norm.a2, 0.0);
  EXPECT_EQ(r.norm.a3, 0.0);
  EXPECT_GT(r.norm.a1, 0.0);
  EXPECT_FALSE(r.any_failed());
}

TEST(BoundsReport, QuadraticInWindowPath) {
  const auto d = DriftSpec::quadratic(1.0);
  const auto hyp = check_hypotheses(d, kArctan, Window{}, 1.0);
  const auto k = constants(hyp, 1.0, 1.0);
  int in_window = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto r = bounds_report(d, kArctan, hyp, k, backward(d, sample_path(kGrid, 7, i), 1.0, 0.0),
                                 i < 3);
    EXPECT_FALSE(r.any_failed()) << i;
    EXPECT_LT(r.norm.relative_error, 1e-10);
    if (r.in_window) {
      ++in_window;
      EXPECT_EQ(r.find("du_norm_lower_C5")->verdict, Verdict::pass);
      ASSERT_TRUE(r.djy_lower_derived.has_value());
      EXPECT_TRUE(*r.djy_lower_derived);
    } else {
      EXPECT_EQ(r.find("du_bound_C3")->verdict, Verdict::not_applicable);
    }
  }
  EXPECT_GT(in_window, 10);
}

TEST(BoundsReport, WindowExitMarksBoundsNotApplicable) {
  const auto d = DriftSpec::quadratic(1.0);
  const Window tiny{-0.01, 0.01, 11};
  const auto hyp = check_hypotheses(d, kArctan, tiny, 1.0);
  const auto r = bounds_report(d, kArctan, hyp, constants(hyp, 1.0, 1.0),
                               backward(d, sample_path(kGrid, 7, 0), 1.0, 0.0));
  EXPECT_FALSE(r.in_window);
  for (const char* name : {"dY_bound_C1", "dJY_bound_C2", "du_bound_C3", "d2u_bound_C4",
                           "du_norm_lower_C5", "A1_positive", "A3_nonnegative"})
    EXPECT_EQ(r.find(name)->verdict, Verdict::not_applicable) << name;
  EXPECT_FALSE(r.djy_lower_derived.has_value());
}

TEST(ProfileCsv, Header) {
  const auto prof = du_profile(DriftSpec::zero(), kArctan,
                               backward(DriftSpec::zero(), sample_path(TimeGrid(1.0, 10), 1, 0),
                                        1.0, 0.0));
  std::ostringstream os;
  write_profile_csv(os, prof);
  EXPECT_EQ(os.str().substr(0, 16), "alpha,dY,dJY,du\n");
}
