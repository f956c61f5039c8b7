#include <gtest/gtest.h>

#include "battery.hpp"
#include "effbound/effbound.hpp"
#include "effbound/fixtures.hpp"

namespace {

using namespace effbound;

BoundCurve curve_for(const Dgp& d, const SequenceSpec& spec, int depth, int threads = 1) {
  return bound_curve(d, d.subpopulation(), MomentFamily::mean(), build_sequence(d, spec, depth),
                     kDefaultPMin, threads);
}

TEST(Sequence, DyadicLevelsReproduceTheTruth) {
  const Dgp d = fixtures::d3_stratified();
  const ModelSequence seq = build_sequence(d, SequenceSpec::stratified(fixtures::d3_dyadic_partition()), 4);
  EXPECT_EQ(seq.truth_level, 1);
  ASSERT_EQ(seq.levels.size(), 4u);
  for (const auto& lv : seq.levels) {
    EXPECT_EQ(lv.D, (1 << lv.n) * 2);
    EXPECT_LE(linalg::max_abs(probability_table(lv.model) - probability_table(d.propensity())), 1e-12);
  }
}

TEST(Sequence, LogisticFullStartsAtTheLastNonzeroRow) {
  const Dgp d = fixtures::d3_logistic_full();
  const ModelSequence seq = build_sequence(d, SequenceSpec::logistic_full(), 16);
  EXPECT_EQ(seq.truth_level, 4);
  ASSERT_EQ(seq.levels.size(), 13u);
  for (const auto& lv : seq.levels) EXPECT_EQ(lv.D, lv.n * 2);
  EXPECT_THROW(build_sequence(d, SequenceSpec::logistic_full(), 3), ModelError);
}

TEST(Sequence, DegenerateSharesOneCoefficientPerTerm) {
  const Dgp d = fixtures::d3_logistic_degenerate();
  const ModelSequence seq = build_sequence(d, SequenceSpec::logistic_degenerate(), 16);
  EXPECT_EQ(seq.truth_level, 2);
  for (const auto& lv : seq.levels) EXPECT_EQ(lv.D, lv.n);
}

TEST(Sequence, RejectsTruthOutsideTheFamily) {
  EXPECT_THROW(build_sequence(fixtures::d3_logistic_full(),
                              SequenceSpec::stratified(fixtures::d3_dyadic_partition()), 3),
               ModelError);
  EXPECT_THROW(build_sequence(fixtures::d3_stratified(), SequenceSpec::logistic_full(), 4), ModelError);
  EXPECT_THROW(build_sequence(fixtures::d3_stratified(),
                              SequenceSpec::stratified(fixtures::d3_dyadic_partition()), 5),
               ValidationError);
}

TEST(EpsilonBar, BinaryTreatedEntries) {
  const Dgp d = fixtures::d1();
  const Eigen::MatrixXd eb = epsilon_bar(d, d.subpopulation(), MomentFamily::mean(), 1);
  // (1 - p_S(x)) e_1(x) with e_1 = (-0.6, 0.4).
  EXPECT_NEAR(eb(0, 0), 0.6 * -0.6, 1e-15);
  EXPECT_NEAR(eb(1, 0), 0.4 * 0.4, 1e-15);
}

TEST(EpsilonBar, TwoTreatmentEntries) {
  const Dgp d = fixtures::d3_stratified();
  const battery::detail::Enumeration en(d, d.subpopulation(), Regime::Known, d.propensity());
  for (int t = 0; t <= 2; ++t) {
    const Eigen::MatrixXd eb = epsilon_bar(d, d.subpopulation(), MomentFamily::mean(), t);
    for (int m = 0; m < 16; ++m) {
      EXPECT_NEAR(eb(m, 0), (1.0 - en.ps(m)) * en.e(t, m), 1e-14);
      EXPECT_NEAR(eb(m, 1), -en.ps(m) * en.e(t, m), 1e-14);
    }
  }
}

TEST(ConditionF, SpanningDictionaryHasZeroResidual) {
  const Dgp d = fixtures::d3_logistic_full();
  const Population pop = make_population(d, d.subpopulation());
  const MomentSolution sol = solve_beta(d, d.subpopulation(), MomentFamily::mean());
  const ConditionFResult r = condition_f_residual(pop, sol, d.propensity());
  EXPECT_LE(r.residuals.maxCoeff(), 1e-10);
  EXPECT_EQ(r.score_rank, 32);
}

TEST(ConditionF, DegenerateResidualEqualsHalfTheConditionalMomentNorm) {
  // Shared scores force c' S_1 = c' S_2, so the best fit of ((1 - p_S) e, -p_S e)
  // is their average and the squared residual is at least E[e_t^2] / 2, with
  // equality once the dictionary spans every function of x.
  const Dgp d = fixtures::d3_logistic_degenerate();
  const battery::detail::Enumeration en(d, d.subpopulation(), Regime::Known, d.propensity());
  const Population pop = make_population(d, d.subpopulation());
  const MomentSolution sol = solve_beta(d, d.subpopulation(), MomentFamily::mean());
  const ModelSequence seq = build_sequence(d, SequenceSpec::logistic_degenerate(), 16);
  for (const auto& lv : seq.levels) {
    const ConditionFResult r = condition_f_residual(pop, sol, lv.model);
    for (int t = 0; t <= 2; ++t) {
      double half = 0.0;
      for (int m = 0; m < 16; ++m) half += d.support().prob(m) * en.e(t, m) * en.e(t, m) / 2.0;
      EXPECT_GE(r.residuals(t) * r.residuals(t), half - 1e-12) << "level " << lv.n;
      if (lv.n == 16) {
        EXPECT_NEAR(r.residuals(t) * r.residuals(t), half, 1e-12);
      }
    }
  }
}

TEST(ConditionF, FullPopulationHasZeroTarget) {
  const Dgp d = fixtures::d3_logistic_degenerate().with_subpopulation({0, 1, 2});
  const ConditionFResult r = condition_f_residual(make_population(d, d.subpopulation()),
                                                  solve_beta(d, d.subpopulation(), MomentFamily::mean()),
                                                  d.propensity());
  EXPECT_EQ(r.residuals.maxCoeff(), 0.0);
}

TEST(BoundCurve, DyadicRefinementAttains) {
  const BoundCurve c = curve_for(fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_dyadic_partition()), 4);
  const LimitVerdict v = classify_limit(c);
  EXPECT_TRUE(v.attains());
  EXPECT_LE(v.residual_max, 1e-10);
  EXPECT_LE(v.gap_eig, 1e-10);
  EXPECT_LE(linalg::max_abs(c.points.back().V_pn - c.V_uk), 1e-10);
  EXPECT_EQ(c.points.back().score_rank, 32);
}

TEST(BoundCurve, SpanningLogisticAttains) {
  const LimitVerdict v = classify_limit(curve_for(fixtures::d3_logistic_full(), SequenceSpec::logistic_full(), 16));
  EXPECT_TRUE(v.attains());
  EXPECT_LE(v.residual_max, 1e-10);
}

TEST(BoundCurve, DegenerateLogisticHasAGap) {
  const BoundCurve c = curve_for(fixtures::d3_logistic_degenerate(), SequenceSpec::logistic_degenerate(), 16);
  const LimitVerdict v = classify_limit(c);
  EXPECT_EQ(v.kind, LimitVerdict::Kind::Gap);
  EXPECT_GE(v.gap_eig, 1e-4);
  for (const auto& pt : c.points) {
    EXPECT_GE(pt.residual_max, v.residual_max - 1e-12);
    EXPECT_GT(pt.h_distance, 1e-4);
  }
}

TEST(BoundCurve, FrozenPartitionHasAGap) {
  const BoundCurve c = curve_for(fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_frozen_partition()), 4);
  const LimitVerdict v = classify_limit(c);
  EXPECT_EQ(v.kind, LimitVerdict::Kind::Gap);
  EXPECT_GE(v.gap_eig, 1e-4);
  for (double g : v.gap_history) EXPECT_GE(g, 1e-4);
}

TEST(BoundCurve, MonotoneAndBelowTheUnknownBound) {
  const std::vector<std::pair<Dgp, SequenceSpec>> cases = {
      {fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_dyadic_partition())},
      {fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_frozen_partition())},
      {fixtures::d3_logistic_full(), SequenceSpec::logistic_full()},
      {fixtures::d3_logistic_degenerate(), SequenceSpec::logistic_degenerate()}};
  for (const auto& [d, spec] : cases) {
    const int depth = spec.partition ? 4 : 16;
    const BoundCurve c = curve_for(d, spec, depth);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const auto& pt = c.points[i];
      EXPECT_GE(linalg::min_eigenvalue(c.V_uk - pt.V_pn), -1e-10);
      EXPECT_LE(pt.frobenius_gap, pt.h_distance * pt.h_distance + 1e-10);
      if (i > 0) {
        EXPECT_GE(linalg::min_eigenvalue(pt.V_pn - c.points[i - 1].V_pn), -1e-10);
      }
    }
  }
}

TEST(BoundCurve, ThreadCountDoesNotChangeResults) {
  const Dgp d = fixtures::d3_logistic_full();
  const BoundCurve a = curve_for(d, SequenceSpec::logistic_full(), 16, 1);
  const BoundCurve b = curve_for(d, SequenceSpec::logistic_full(), 16, 3);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].V_pn, b.points[i].V_pn);
    EXPECT_EQ(a.points[i].residuals, b.points[i].residuals);
  }
}

TEST(ClassifyLimit, FullPopulationAttainsTrivially) {
  const Dgp d = fixtures::d3_logistic_degenerate().with_subpopulation({0, 1, 2});
  const LimitVerdict v = classify_limit(curve_for(d, SequenceSpec::logistic_degenerate(), 16));
  EXPECT_TRUE(v.attains());
  EXPECT_LE(v.gap_eig, 1e-10);
}

TEST(ClassifyLimit, SplitVerdictIsANumericAssertion) {
  BoundCurve c;
  SequencePoint pt;
  pt.residual_max = 0.0;
  pt.h_distance = 0.0;
  pt.gap_eig = 0.5;
  c.points.push_back(pt);
  EXPECT_THROW(classify_limit(c), NumericAssertionError);
  EXPECT_THROW(classify_limit(BoundCurve{}), ValidationError);
}

}  // namespace
