#include <gtest/gtest.h>

#include "battery.hpp"
#include "effbound/effbound.hpp"
#include "effbound/fixtures.hpp"

namespace {

using namespace effbound;

TEST(Subpopulation, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(Subpopulation(1, {}), ValidationError);
  EXPECT_THROW(Subpopulation(1, {2}), ValidationError);
  EXPECT_THROW(Subpopulation(1, {-1}), ValidationError);
  EXPECT_THROW(Subpopulation(0, {0}), ValidationError);
}

TEST(Subpopulation, MembershipAndProperness) {
  const Subpopulation s(2, {2, 1, 1});
  EXPECT_EQ(s.members(), (std::vector<int>{1, 2}));
  EXPECT_TRUE(s.contains(1));
  EXPECT_FALSE(s.contains(0));
  EXPECT_FALSE(s.contains(3));
  EXPECT_TRUE(s.is_proper());
  EXPECT_TRUE(Subpopulation::full(2).is_full());
}

TEST(DiscreteSupport, ProbabilitiesMustSumToOne) {
  EXPECT_NO_THROW(DiscreteSupport({"a", "b"}, {0.5, 0.5}));
  EXPECT_NO_THROW(DiscreteSupport({"a", "b"}, {0.5, 0.5 + 5e-13}));
  EXPECT_THROW(DiscreteSupport({"a", "b"}, {0.5, 0.5 + 1e-9}), ValidationError);
  EXPECT_THROW(DiscreteSupport({"a", "a"}, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(DiscreteSupport({"a", "b"}, {1.0, 0.0}), ValidationError);
  EXPECT_THROW(DiscreteSupport({}, {}), ValidationError);
  EXPECT_THROW(DiscreteSupport({"a", "b"}, {0.5, 0.5}, {{0.0}}), ValidationError);
}

TEST(DiscreteSupport, LabelLookup) {
  const DiscreteSupport s({"a", "b"}, {0.25, 0.75});
  EXPECT_EQ(s.index_of("b"), 1);
  EXPECT_THROW(s.index_of("c"), ValidationError);
}

TEST(OutcomeLaw, Validation) {
  EXPECT_THROW(OutcomeLaw::gaussian(0.0, 0.0), ValidationError);
  EXPECT_THROW(OutcomeLaw::gaussian(std::nan(""), 1.0), ValidationError);
  EXPECT_THROW(OutcomeLaw::discrete({}), ValidationError);
  EXPECT_THROW(OutcomeLaw::discrete({{0.0, 0.5}, {1.0, 0.4}}), ValidationError);
}

TEST(OutcomeLaw, DiscreteMoments) {
  const OutcomeLaw law = OutcomeLaw::discrete({{-1.0, 0.25}, {3.0, 0.75}});
  EXPECT_DOUBLE_EQ(law.mean(), 2.0);
  EXPECT_DOUBLE_EQ(law.variance(), 0.25 * 9.0 + 0.75 * 1.0);
  EXPECT_DOUBLE_EQ(law.cdf(-1.0), 0.25);
  EXPECT_DOUBLE_EQ(law.cdf(2.9), 0.25);
  EXPECT_DOUBLE_EQ(law.cdf(3.0), 1.0);
}

TEST(Dgp, RejectsMissingOutcomeLaw) {
  const Dgp d1 = fixtures::d1();
  auto outcomes = d1.outcomes();
  outcomes.pop_back();
  EXPECT_THROW(Dgp(d1.treatments(), d1.support(), outcomes, d1.propensity()), ValidationError);
}

TEST(Dgp, RejectsPropensityOfWrongShape) {
  const Dgp d1 = fixtures::d1();
  EXPECT_THROW(d1.with_propensity(StratifiedModel({0, 0, 0}, Eigen::MatrixXd::Constant(1, 1, 0.5))),
               ValidationError);
  EXPECT_THROW(d1.with_propensity(StratifiedModel({0, 0}, Eigen::MatrixXd::Constant(2, 1, 0.3))),
               ValidationError);
}

TEST(Validate, D1PassesWithSubpopulationMassOneHalf) {
  const ValidationReport rep = validate_dgp(fixtures::d1(), 0.05);
  EXPECT_TRUE(rep.pass());
  EXPECT_NEAR(rep.p_S_star, 0.5, 1e-15);
  ASSERT_EQ(rep.points.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.points[0].min_prob, 0.4);
}

TEST(Validate, D2PassesAtTightThreshold) {
  EXPECT_TRUE(validate_dgp(fixtures::d2(), 0.49).pass());
  EXPECT_FALSE(validate_dgp(fixtures::d2(), 0.5).pass());
}

TEST(Validate, ZeroPropensityStratumIsAnOverlapFailureNamingThePoint) {
  Eigen::MatrixXd cells(1, 2);
  cells << 0.0, 0.6;
  const Dgp d = fixtures::d1().with_propensity(StratifiedModel({0, 1}, cells));
  const ValidationReport rep = validate_dgp(d, 0.01);
  EXPECT_TRUE(rep.structural_ok());
  ASSERT_EQ(rep.overlap_failures.size(), 1u);
  EXPECT_NE(rep.overlap_failures[0].find("x1"), std::string::npos);
  EXPECT_FALSE(rep.points[0].overlap_ok);
  EXPECT_TRUE(rep.points[1].overlap_ok);
}

TEST(Population, RejectsZeroSubpopulationMass) {
  Eigen::MatrixXd cells(1, 1);
  cells << 0.0;
  const Dgp d = fixtures::d2().with_propensity(StratifiedModel({0, 0}, cells));
  try {
    make_population(d, d.subpopulation());
    FAIL() << "expected an exception";
  } catch (const ModelError&) {
    // evaluate() rejects the zero propensity before p_S* is formed.
  } catch (const AssumptionError& e) {
    EXPECT_EQ(e.assumption(), 2);
  }
}

TEST(MarginalPs, Fixtures) {
  EXPECT_NEAR(marginal_ps(fixtures::d1(), Subpopulation(1, {1})), 0.5, 1e-15);
  EXPECT_NEAR(marginal_ps(fixtures::d2(), Subpopulation(1, {1})), 0.5, 1e-15);
  EXPECT_EQ(marginal_ps(fixtures::d1(), Subpopulation::full(1)), 1.0);
}

TEST(MarginalPs, AdditiveAndMonotoneOverTheBattery) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Dgp d = battery::random_stratified_dgp(1000 + seed);
    const int J = d.J();
    double sum = 0.0;
    for (int t = 0; t <= J; ++t) sum += marginal_ps(d, Subpopulation(J, {t}));
    EXPECT_NEAR(sum, 1.0, 1e-12) << "seed " << seed;
    const double one = marginal_ps(d, Subpopulation(J, {0}));
    const double two = marginal_ps(d, Subpopulation(J, {0, 1}));
    EXPECT_NEAR(two, one + marginal_ps(d, Subpopulation(J, {1})), 1e-14);
    EXPECT_LE(one, two);
  }
}

}  // namespace
