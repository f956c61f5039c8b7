#include <gtest/gtest.h>

#include <cmath>

#include "battery.hpp"
#include "effbound/effbound.hpp"
#include "effbound/fixtures.hpp"

namespace {

using namespace effbound;

// Weights P(x) p_S(x) / p_S* recomputed from the raw propensity.
Eigen::VectorXd oracle_weights(const Dgp& d, const Subpopulation& S) {
  Eigen::VectorXd w(d.M());
  for (int m = 0; m < d.M(); ++m) {
    const Eigen::VectorXd p = evaluate(d.propensity(), m);
    double ps = 0.0;
    for (int j : S.members()) ps += p(j);
    w(m) = d.support().prob(m) * ps;
  }
  return w / w.sum();
}

// tau-quantile of a Gaussian mixture by Newton's method from the mixture mean.
double oracle_mixture_quantile(const Dgp& d, const Eigen::VectorXd& w, int t, double tau) {
  auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  double lo = 0.0, hi = 0.0;
  for (int m = 0; m < d.M(); ++m) {
    const auto& g = d.outcome(t, m).as_gaussian();
    lo = std::min(lo, g.mean - 40.0 * g.sd);
    hi = std::max(hi, g.mean + 40.0 * g.sd);
  }
  // Bisection on the mixture CDF, which is monotone even when it is multimodal.
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    double F = -tau;
    for (int m = 0; m < d.M(); ++m) {
      const auto& g = d.outcome(t, m).as_gaussian();
      F += w(m) * Phi((mid - g.mean) / g.sd);
    }
    (F < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(MomentFamily, RejectsInvalidLevel) {
  EXPECT_THROW(MomentFamily::quantile(0.0), ValidationError);
  EXPECT_THROW(MomentFamily::quantile(1.0), ValidationError);
  EXPECT_NO_THROW(MomentFamily::quantile(0.3));
}

TEST(MomentFamily, Evaluation) {
  EXPECT_DOUBLE_EQ(MomentFamily::mean().evaluate(3.0, 1.0), 2.0);
  const MomentFamily q = MomentFamily::quantile(0.25);
  EXPECT_DOUBLE_EQ(q.evaluate(1.0, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(q.evaluate(1.5, 1.0), -0.25);
}

TEST(ConditionalMoment, MeanAndQuantile) {
  const Dgp d = fixtures::d1();
  EXPECT_DOUBLE_EQ(conditional_moment(d, MomentFamily::mean(), 1, 1, 1.5), 0.5);
  EXPECT_NEAR(conditional_moment(d, MomentFamily::quantile(0.5), 1, 0, 1.0), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(conditional_moment_variance(d, MomentFamily::mean(), 1, 1, 0.0), 1.0);
  EXPECT_NEAR(conditional_moment_variance(d, MomentFamily::quantile(0.5), 1, 0, 1.0), 0.25, 1e-15);
}

TEST(SolveBeta, D1Mean) {
  const MomentSolution sol = solve_beta(fixtures::d1(), Subpopulation(1, {1}), MomentFamily::mean());
  // Treated-weighted means: weights (0.4, 0.6) after normalizing by p_S* = 0.5.
  EXPECT_NEAR(sol.beta(1), 0.4 * 1.0 + 0.6 * 2.0, 1e-15);
  EXPECT_NEAR(sol.beta(0), 0.0, 1e-15);
  EXPECT_NEAR(sol.p_s_star, 0.5, 1e-15);
  EXPECT_NEAR(sol.e(1, 0), -0.6, 1e-15);
  EXPECT_NEAR(sol.e(1, 1), 0.4, 1e-15);
  EXPECT_EQ(jacobian_matrix(sol), -Eigen::MatrixXd::Identity(2, 2));
}

TEST(SolveBeta, D2Mean) {
  const MomentSolution sol = solve_beta(fixtures::d2(), Subpopulation(1, {1}), MomentFamily::mean());
  EXPECT_NEAR(sol.beta(1), 1.5, 1e-15);
}

TEST(SolveBeta, MomentResidualVanishesOverTheBattery) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Dgp d = battery::random_stratified_dgp(2000 + seed);
    for (const MomentFamily& fam :
         {MomentFamily::mean(), MomentFamily::quantile(0.2), MomentFamily::quantile(0.7)}) {
      const MomentSolution sol = solve_beta(d, d.subpopulation(), fam);
      const Eigen::VectorXd w = oracle_weights(d, d.subpopulation());
      EXPECT_LE((sol.weights - w).cwiseAbs().maxCoeff(), 1e-14);
      for (int t = 0; t <= d.J(); ++t) {
        EXPECT_LE(std::abs(sol.moment_residual(t)), 1e-10) << "seed " << seed << " " << fam.name();
        if (!fam.is_mean()) {
          EXPECT_NEAR(sol.beta(t), oracle_mixture_quantile(d, w, t, fam.tau()), 1e-10);
        }
        for (int m = 0; m < d.M(); ++m) EXPECT_GE(sol.cond_var(t, m), 0.0);
      }
    }
  }
}

TEST(SolveBeta, QuantileJacobianMatchesFiniteDifference) {
  const Dgp d = fixtures::d1();
  const Subpopulation S(1, {1});
  for (double tau : {0.25, 0.5, 0.75}) {
    const MomentFamily fam = MomentFamily::quantile(tau);
    const MomentSolution sol = solve_beta(d, S, fam);
    const Eigen::VectorXd w = oracle_weights(d, S);
    for (int t = 0; t <= 1; ++t) {
      const double h = 1e-5;
      double up = 0.0, dn = 0.0;
      for (int m = 0; m < d.M(); ++m) {
        up += w(m) * conditional_moment(d, fam, t, m, sol.beta(t) + h);
        dn += w(m) * conditional_moment(d, fam, t, m, sol.beta(t) - h);
      }
      EXPECT_NEAR(sol.jacobian(t), (up - dn) / (2.0 * h), 1e-6);
      EXPECT_NEAR(sol.jacobian(t), (*sol.density)(t), 0.0);
    }
  }
}

TEST(SolveBeta, MeanIsAffineInTheOutcome) {
  const Dgp d = battery::random_stratified_dgp(31);
  std::vector<OutcomeLaw> scaled;
  for (const auto& law : d.outcomes()) {
    scaled.push_back(OutcomeLaw::gaussian(2.0 * law.mean() + 1.0, 2.0 * std::sqrt(law.variance())));
  }
  const Dgp d2(d.treatments(), d.support(), scaled, d.propensity());
  const auto a = solve_beta(d, d.subpopulation(), MomentFamily::mean());
  const auto b = solve_beta(d2, d.subpopulation(), MomentFamily::mean());
  EXPECT_LE((b.beta - (2.0 * a.beta.array() + 1.0).matrix()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(SolveBeta, QuantileOfDiscreteOutcomeViolatesIdentification) {
  const Dgp d = battery::random_stratified_dgp(5, {.discrete_outcomes = true});
  try {
    solve_beta(d, d.subpopulation(), MomentFamily::quantile(0.5));
    FAIL() << "expected AssumptionError";
  } catch (const AssumptionError& e) {
    EXPECT_EQ(e.assumption(), 1);
  }
}

TEST(Jacobian, ZeroBlockViolatesFullRank) {
  MomentSolution sol;
  sol.jacobian = Eigen::Vector2d(0.3, 0.0);
  try {
    jacobian_matrix(sol);
    FAIL() << "expected AssumptionError";
  } catch (const AssumptionError& e) {
    EXPECT_EQ(e.assumption(), 4);
  }
}

}  // namespace
