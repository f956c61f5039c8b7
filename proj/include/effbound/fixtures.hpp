#pragma once

// Canonical data-generating processes used by the tests, the acceptance suite
// and the sample configs.
//
//   D1  two points, binary treatment, singleton strata with p_1 = (0.4, 0.6)
//   D2  D1 with a constant propensity 0.5 on a single stratum
//   D3  sixteen points, three treatments, S = {1}, in three propensity variants

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "effbound/dgp.hpp"

namespace effbound::fixtures {

namespace detail {

inline std::vector<OutcomeLaw> d1_outcomes() {
  return {OutcomeLaw::gaussian(0.0, 1.0), OutcomeLaw::gaussian(0.0, 1.0),
          OutcomeLaw::gaussian(1.0, 1.0), OutcomeLaw::gaussian(2.0, 1.0)};
}

inline DiscreteSupport d1_support() { return DiscreteSupport({"x1", "x2"}, {0.5, 0.5}); }

inline double d3_u(int m) { return (m + 0.5) / 16.0; }

inline DiscreteSupport d3_support() {
  std::vector<std::string> labels;
  std::vector<double> probs(16, 1.0 / 16.0);
  std::vector<std::vector<double>> emb;
  for (int m = 0; m < 16; ++m) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "x%02d", m);
    labels.emplace_back(buf);
    emb.push_back({d3_u(m)});
  }
  return DiscreteSupport(labels, probs, emb);
}

inline std::vector<OutcomeLaw> d3_outcomes() {
  std::vector<OutcomeLaw> out;
  for (int m = 0; m < 16; ++m) {
    const double u = d3_u(m);
    out.push_back(OutcomeLaw::gaussian(u * u, 1.0 + 0.5 * u));
  }
  for (int m = 0; m < 16; ++m) {
    const double u = d3_u(m);
    out.push_back(OutcomeLaw::gaussian(1.0 + 2.0 * u + 0.5 * std::sin(6.0 * u), 0.8));
  }
  for (int m = 0; m < 16; ++m) {
    const double u = d3_u(m);
    out.push_back(OutcomeLaw::gaussian(std::cos(3.0 * u), 1.2 - 0.4 * u));
  }
  return out;
}

inline Dgp d3_with(PropensityModel model) {
  return Dgp(TreatmentSet(2, {1}), d3_support(), d3_outcomes(), std::move(model));
}

}  // namespace detail

inline Dgp d1() {
  Eigen::MatrixXd cells(1, 2);
  cells << 0.4, 0.6;
  return Dgp(TreatmentSet(1, {1}), detail::d1_support(), detail::d1_outcomes(),
             StratifiedModel({0, 1}, cells));
}

inline Dgp d2() {
  return Dgp(TreatmentSet(1, {1}), detail::d1_support(), detail::d1_outcomes(),
             StratifiedModel({0, 0}, Eigen::MatrixXd::Constant(1, 1, 0.5)));
}

/// D2's constant propensity written as a two-stratum model.
inline StratifiedModel d2_two_strata_model() {
  return StratifiedModel({0, 1}, Eigen::MatrixXd::Constant(1, 2, 0.5));
}

/// Left half of the support is stratum 0, right half stratum 1.
inline std::vector<int> d3_halves() {
  std::vector<int> part(16);
  for (int m = 0; m < 16; ++m) part[m] = m < 8 ? 0 : 1;
  return part;
}

/// Propensity constant on the halves: (p1, p2) = (0.3, 0.2) left, (0.5, 0.25) right.
inline Dgp d3_stratified() {
  Eigen::MatrixXd cells(2, 2);
  cells << 0.3, 0.5,
           0.2, 0.25;
  return detail::d3_with(StratifiedModel(d3_halves(), cells));
}

/// Full-rank logistic on the sixteen point indicators; four nonzero rows.
inline Dgp d3_logistic_full() {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(16, 2);
  gamma.topRows(4) << 0.5, -0.3,
                      -0.4, 0.2,
                      0.8, 0.6,
                      -0.6, -0.5;
  return detail::d3_with(FullRankLogisticModel(Eigen::MatrixXd::Identity(16, 16), gamma));
}

/// Degenerate logistic on the sixteen point indicators; two nonzero entries.
inline Dgp d3_logistic_degenerate() {
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(16);
  gamma(0) = 0.7;
  gamma(1) = -0.5;
  return detail::d3_with(DegenerateLogisticModel(Eigen::MatrixXd::Identity(16, 16), gamma, 2));
}

inline std::shared_ptr<const NestedPartition> d3_dyadic_partition() {
  return std::make_shared<const NestedPartition>(NestedPartition::dyadic(16, 4));
}

/// Depth-4 partition whose left half is never refined after level 1 while the
/// right half is split dyadically.
inline std::shared_ptr<const NestedPartition> d3_frozen_partition() {
  std::vector<std::vector<int>> levels(4, std::vector<int>(16));
  for (int n = 1; n <= 4; ++n) {
    const int blocks = 1 << (n - 1);
    for (int m = 0; m < 16; ++m) levels[n - 1][m] = m < 8 ? 0 : 1 + ((m - 8) * blocks) / 8;
  }
  return std::make_shared<const NestedPartition>(levels);
}

}  // namespace effbound::fixtures
