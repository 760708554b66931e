#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

#include "scelab/density.hpp"
#include "support/oracles.hpp"

using namespace scelab;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; i += 2) {
    const auto [a, b] = normal_pair(seed, i / 2, 0);
    v[i] = a;
    if (i + 1 < n) v[i + 1] = b;
  }
  return v;
}

Scenario zero_drift(InitialConditionSpec ic) {
  Scenario s;
  s.drift = DriftSpec::zero();
  s.ic = ic;
  s.window = Window{-10.0, 10.0, 401};
  return s;
}

}  // namespace

TEST(Kde, StandardNormalPeak) {
  const auto v = normals(100000, 1);
  const auto d = kde(v);
  const auto j = static_cast<std::size_t>(std::min_element(d.z.begin(), d.z.end(),
                                                           [](double a, double b) {
                                                             return std::abs(a) < std::abs(b);
                                                           }) -
                                          d.z.begin());
  // The nearest node sits within half a grid step of 0, where phi is flat.
  EXPECT_NEAR(kde(v, {std::nullopt, 513, std::nullopt}).rho[256], 0.39894, 0.01);
  EXPECT_NEAR(d.rho[j], 0.39894, 0.01);
  EXPECT_GE(d.mass(), 0.98);
  EXPECT_LE(d.mass(), 1.001);
  EXPECT_NEAR(d.bandwidth, 1.06 * d.sample_sd * std::pow(1e5, -0.2), 1e-15);
  EXPECT_EQ(d.z.size(), 512u);
}

TEST(Kde, SingleSampleWithFixedBandwidth) {
  const std::vector<double> one{2.5};
  const auto d = kde(one, {0.3, 512, std::nullopt});
  EXPECT_EQ(d.n, 1u);
  EXPECT_GE(d.mass(), 0.98);
  EXPECT_LE(d.mass(), 1.001);
  EXPECT_THROW(kde(one), InvalidArgument);
}

TEST(Kde, IdenticalSamplesAreDegenerate) {
  const std::vector<double> same(10, 1.0);
  EXPECT_THROW(kde(same), DegenerateSample);
  EXPECT_NO_THROW(kde(same, {0.1, 64, std::nullopt}));
}

TEST(Kde, RejectsBadOptions) {
  const std::vector<double> v{0.0, 1.0};
  EXPECT_THROW(kde(v, {-1.0, 512, std::nullopt}), InvalidArgument);
  EXPECT_THROW(kde(v, {std::nullopt, 1, std::nullopt}), InvalidArgument);
  EXPECT_THROW(kde(v, {std::nullopt, 64, std::pair{1.0, 0.0}}), InvalidArgument);
}

TEST(Kde, StandardErrorFormula) {
  const auto v = normals(2000, 4);
  const auto d = kde(v);
  for (std::size_t j = 0; j < d.z.size(); j += 37)
    EXPECT_DOUBLE_EQ(d.se[j], std::sqrt(d.rho[j] / (2.0 * std::sqrt(std::numbers::pi)) /
                                        (2000.0 * d.bandwidth)));
}

TEST(Sampling, ExponentialIcGivesLognormal) {
  const auto sc = zero_drift(InitialConditionSpec::exponential());
  const TimeGrid g(1.0, 100);
  const auto set = sample_solution(sc, g, 1.0, 0.0, {100000, 5, 1, 0});
  double s = 0.0;
  for (const auto& r : set.samples) s += std::log(r.u);
  EXPECT_LT(std::abs(s / 1e5), 4.0 / std::sqrt(1e5));
  EXPECT_EQ(set.excluded_count(), 0u);
}

TEST(Sampling, SingleSample) {
  const auto sc = zero_drift(InitialConditionSpec::arctan_shift(0.1));
  const auto set = sample_solution(sc, TimeGrid(1.0, 50), 1.0, 0.0, {1, 0, 1, 1});
  ASSERT_EQ(set.size(), 1u);
  const auto d = kde(set.included_values(), {0.05, 512, std::nullopt});
  EXPECT_GE(d.mass(), 0.98);
}

TEST(Sampling, DeterministicAcrossThreadCounts) {
  Scenario sc;
  sc.drift = DriftSpec::quadratic(1.0);
  const TimeGrid g(1.0, 200);
  const auto a = sample_solution(sc, g, 1.0, 0.0, {300, 9, 1, 20});
  const auto b = sample_solution(sc, g, 1.0, 0.0, {300, 9, 3, 20});
  const auto c = sample_solution(sc, g, 1.0, 0.0, {300, 9, 1, 20});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.samples[i].u, &b.samples[i].u, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&a.samples[i].du_norm_sq, &c.samples[i].du_norm_sq, sizeof(double)), 0);
    EXPECT_EQ(a.samples[i].in_window, b.samples[i].in_window);
  }
  ASSERT_EQ(a.audit.checks.size(), b.audit.checks.size());
  for (std::size_t i = 0; i < a.audit.checks.size(); ++i) {
    EXPECT_EQ(a.audit.checks[i].name, b.audit.checks[i].name);
    EXPECT_EQ(a.audit.checks[i].pass, b.audit.checks[i].pass);
    EXPECT_EQ(a.audit.checks[i].observed_max, b.audit.checks[i].observed_max);
    EXPECT_EQ(a.audit.checks[i].first_failure, b.audit.checks[i].first_failure);
  }
}

TEST(Sampling, DivergentPathsAreCounted) {
  Scenario sc;
  sc.drift = DriftSpec::polynomial({0, 0, 0, 50});
  const auto set = sample_solution(sc, TimeGrid(1.0, 10), 1.0, 5.0, {20, 0, 2, 0});
  EXPECT_EQ(set.divergent_count(), 20u);
  EXPECT_TRUE(set.included_values().empty());
  EXPECT_EQ(set.exclusion_fraction(), 1.0);
}

TEST(BouleauHirsch, ZeroDriftMinimumMatchesClosedForm) {
  const auto ic = InitialConditionSpec::arctan_shift(0.1);
  const auto sc = zero_drift(ic);
  const TimeGrid g(1.0, 100);
  const auto set = sample_solution(sc, g, 1.0, 0.0, {500, 2, 1, 0});
  double want = INFINITY;
  for (std::size_t i = 0; i < 500; ++i) {
    const double b = sample_path(g, 2, i).value(100);
    const double u1 = eval_initial(ic, -b, 1);
    want = std::min(want, u1 * u1);
  }
  const auto hyp = check_hypotheses(sc.drift, sc.ic, sc.window, 1.0);
  const auto r = bouleau_hirsch_check(set, hyp, constants(hyp, 1.0, 1.0));
  EXPECT_TRUE(r.positive);
  EXPECT_NEAR(r.min_du_norm_sq, want, 1e-12);
  EXPECT_FALSE(r.c5_holds.has_value());
}

TEST(BouleauHirsch, ConstantIcFails) {
  Scenario sc;
  sc.drift = DriftSpec::linear(1.0);
  sc.ic = InitialConditionSpec::affine(0.0, 1.0);
  sc.window = Window{-10.0, 10.0, 101};
  const auto set = sample_solution(sc, TimeGrid(1.0, 100), 1.0, 0.0, {50, 3, 1, 0});
  const auto hyp = check_hypotheses(sc.drift, sc.ic, sc.window, 1.0);
  const auto r = bouleau_hirsch_check(set, hyp, constants(hyp, 1.0, 1.0));
  EXPECT_EQ(r.min_du_norm_sq, 0.0);
  EXPECT_FALSE(r.positive);
  EXPECT_EQ(r.nonpositive, 50u);
}

TEST(Sandwich, ZeroDriftInnerProductsHaveClosedForm) {
  const auto ic = InitialConditionSpec::arctan_shift(0.1);
  const auto sc = zero_drift(ic);
  const TimeGrid g(1.0, 100);
  const auto set = sample_solution(sc, g, 1.0, 0.0, {400, 8, 1, 0});
  SandwichParams sp;
  sp.n_prime = 50;
  const auto s = sandwich(sc, g, set, sp);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t j = 0; j < 50; ++j) {
    const auto w = sample_path(g, 8, j);
    const auto wp = sample_path(g, 8, kTildeStreamOffset + j);
    for (double th : sp.theta_nodes) {
      const double bt = mix_paths(w, wp, th).value(100);
      const double v = eval_initial(ic, -w.value(100), 1) * eval_initial(ic, -bt, 1);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  ASSERT_TRUE(s.empirical.has_value());
  EXPECT_NEAR(s.empirical->gamma2_min, lo, 1e-10);
  EXPECT_NEAR(s.empirical->gamma2_max, hi, 1e-10);
  EXPECT_EQ(s.inner_products, 50u * 6u);
  EXPECT_EQ(s.theta0_identity_error, 0.0);
  EXPECT_FALSE(s.analytic_gamma2_min.has_value());
  EXPECT_LE(s.q01, s.q99);
}

TEST(Sandwich, RefusesTimesBeforeT0) {
  const auto sc = zero_drift(InitialConditionSpec::arctan_shift(0.1));
  const TimeGrid g(1.0, 100);
  const auto set = sample_solution(sc, g, 0.05, 0.0, {10, 0, 1, 0});
  EXPECT_THROW(sandwich(sc, g, set, SandwichParams{}), InvalidArgument);
}

TEST(Envelope, GaussianCaseMatchesAffineIc) {
  // u = x - B_t + c is Gaussian with variance t, and <Du, Du~> = t for every
  // pair, so gamma2_min = gamma2_max = t and E|u - m| = sqrt(2t/pi).
  const auto ic = InitialConditionSpec::affine(1.0, 3.0);
  const auto sc = zero_drift(ic);
  const TimeGrid g(1.0, 50);
  const auto set = sample_solution(sc, g, 1.0, 0.0, {100000, 12, 1, 0});
  SandwichParams sp;
  sp.n_prime = 20;
  const auto s = sandwich(sc, g, set, sp);
  ASSERT_TRUE(s.empirical);
  EXPECT_NEAR(s.empirical->gamma2_min, 1.0, 1e-12);
  EXPECT_NEAR(s.empirical->gamma2_max, 1.0, 1e-12);
  const auto d = kde(set.included_values());
  const auto er = envelope_check(d, s.m_hat, s.d_hat, s.sigma_hat, *s.empirical,
                                 s.m_hat - 2 * s.sigma_hat, s.m_hat + 2 * s.sigma_hat);
  EXPECT_TRUE(er.pass());
  EXPECT_GT(er.tested, 100u);
  // Both envelopes equal d/(2 t) exp(-(z-m)^2/(2t)) ~ phi at the centre.
  EXPECT_NEAR(upper_envelope(s.m_hat, s.m_hat, s.d_hat, *s.empirical), oracle::phi(0.0), 5e-3);
}

TEST(Envelope, FarTailIsUntested) {
  const auto v = normals(5000, 3);
  const auto d = kde(v);
  const auto er = envelope_check(d, 0.0, std::sqrt(2.0 / std::numbers::pi), 1.0, {1.0, 1.0},
                                 -100.0, 100.0);
  EXPECT_GT(er.untested, 0u);
  EXPECT_EQ(er.tested + er.untested, d.z.size());
  EXPECT_THROW(envelope_check(d, 0.0, 1.0, 1.0, {2.0, 1.0}, -1.0, 1.0), InvalidArgument);
}

TEST(Tail, NormalPasses) {
  const auto d = kde(normals(100000, 7));
  const auto r = tail_check(d, 4, 0.95);
  EXPECT_TRUE(r.pass());
  EXPECT_GT(r.upper.examined, 5u);
  EXPECT_GT(r.lower.examined, 5u);
  EXPECT_TRUE(tail_check(d, 0, 0.95).pass());
}

TEST(Tail, CauchyControlFails) {
  std::mt19937_64 rng(11);
  std::cauchy_distribution<double> cauchy;
  std::vector<double> v(100000);
  for (auto& x : v) x = cauchy(rng);
  const auto d = kde(v, {0.1, 4096, std::pair{-50.0, 50.0}});
  EXPECT_FALSE(tail_check(d, 2, 0.95).pass());
}

TEST(Csv, Headers) {
  const auto sc = zero_drift(InitialConditionSpec::arctan_shift(0.1));
  const auto set = sample_solution(sc, TimeGrid(1.0, 20), 1.0, 0.0, {3, 0, 1, 0});
  std::ostringstream a, b;
  write_samples_csv(a, set);
  EXPECT_EQ(a.str().substr(0, 29), "index,u,du_norm_sq,in_window\n");
  write_density_csv(b, kde(set.included_values(), {0.1, 8, std::nullopt}), 0.0, 1.0, std::nullopt);
  EXPECT_EQ(b.str().substr(0, 33), "z,rho_hat,se,lower_env,upper_env\n");
}
