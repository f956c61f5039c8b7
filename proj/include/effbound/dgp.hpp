#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "effbound/core.hpp"
#include "effbound/propensity.hpp"

namespace effbound {

/// Finite-support data-generating process. Expectations over W = (Y, T, X)
/// are exact finite sums over the support, the treatments, and the
/// analytically known moments of each conditional outcome law.
class Dgp {
 public:
  /// `outcomes[t * M + m]` is the law of Y_t given X = x_m.
  Dgp(TreatmentSet treatments, DiscreteSupport support, std::vector<OutcomeLaw> outcomes,
      PropensityModel propensity)
      : treatments_(std::move(treatments)),
        support_(std::move(support)),
        outcomes_(std::move(outcomes)),
        propensity_(std::move(propensity)) {
    const int M = support_.size();
    const int count = treatments_.count();
    if (static_cast<int>(outcomes_.size()) != count * M) {
      throw ValidationError("dgp: expected " + std::to_string(count * M) +
                            " outcome laws (one per treatment and support point), got " +
                            std::to_string(outcomes_.size()));
    }
    if (model_J(propensity_) != treatments_.J()) {
      throw ValidationError("dgp: propensity model has J = " + std::to_string(model_J(propensity_)) +
                            " but treatments has J = " + std::to_string(treatments_.J()));
    }
    if (model_support_size(propensity_) != M) {
      throw ValidationError("dgp: propensity model is defined on " +
                            std::to_string(model_support_size(propensity_)) +
                            " points but the support has " + std::to_string(M));
    }
  }

  const TreatmentSet& treatments() const noexcept { return treatments_; }
  const Subpopulation& subpopulation() const noexcept { return treatments_.subpopulation(); }
  const DiscreteSupport& support() const noexcept { return support_; }
  const PropensityModel& propensity() const noexcept { return propensity_; }
  const std::vector<OutcomeLaw>& outcomes() const noexcept { return outcomes_; }
  int J() const noexcept { return treatments_.J(); }
  int M() const noexcept { return support_.size(); }

  const OutcomeLaw& outcome(int t, int m) const {
    if (t < 0 || t > J() || m < 0 || m >= M()) {
      throw ValidationError("dgp: outcome (t=" + std::to_string(t) + ", x=" + std::to_string(m) +
                            ") out of range");
    }
    return outcomes_[static_cast<std::size_t>(t) * M() + m];
  }

  Dgp with_subpopulation(std::vector<int> S) const {
    return Dgp(TreatmentSet(J(), std::move(S)), support_, outcomes_, propensity_);
  }

  Dgp with_propensity(PropensityModel model) const {
    return Dgp(treatments_, support_, outcomes_, std::move(model));
  }

 private:
  TreatmentSet treatments_;
  DiscreteSupport support_;
  std::vector<OutcomeLaw> outcomes_;
  PropensityModel propensity_;
};

struct PointCheck {
  int x = 0;
  std::string label;
  double min_prob = 0.0;
  double prob_sum = 0.0;
  bool overlap_ok = false;
};

struct ValidationReport {
  double p_min = kDefaultPMin;
  std::vector<PointCheck> points;
  /// Hard failures: malformed probabilities.
  std::vector<std::string> structural_errors;
  /// Points whose smallest propensity does not exceed p_min, or p_S* = 0.
  std::vector<std::string> overlap_failures;
  double p_S_star = 0.0;

  bool structural_ok() const { return structural_errors.empty(); }
  bool pass() const { return structural_errors.empty() && overlap_failures.empty(); }
};

/// p_S(x) = sum_{j in S} p_j(x); exactly 1 when S is the full treatment set.
inline double subpopulation_prob(const Eigen::VectorXd& p, const Subpopulation& S) {
  if (S.is_full()) return 1.0;
  double s = 0.0;
  for (int j : S.members()) s += p(j);
  return s;
}

/// Checks that the propensity is a distribution at every point and that it
/// exceeds p_min (overlap).
inline ValidationReport validate_dgp(const Dgp& dgp, double p_min = kDefaultPMin) {
  ValidationReport report;
  report.p_min = p_min;
  const auto& S = dgp.subpopulation();
  for (int m = 0; m < dgp.M(); ++m) {
    PointCheck pc;
    pc.x = m;
    pc.label = dgp.support().label(m);
    Eigen::VectorXd p;
    try {
      p = raw_probabilities(dgp.propensity(), m);
    } catch (const Error& e) {
      report.structural_errors.push_back(pc.label + ": " + e.what());
      report.points.push_back(pc);
      continue;
    }
    pc.min_prob = p.minCoeff();
    pc.prob_sum = p.sum();
    if (!p.allFinite() || (p.array() > 1.0 + kModelProbTol).any() ||
        (p.array() < -kModelProbTol).any()) {
      report.structural_errors.push_back(pc.label + ": propensity entries outside [0,1]");
    } else if (std::abs(pc.prob_sum - 1.0) > kModelProbTol) {
      report.structural_errors.push_back(pc.label + ": propensities sum to " +
                                         std::to_string(pc.prob_sum));
    }
    pc.overlap_ok = pc.min_prob > p_min;
    if (!pc.overlap_ok) {
      report.overlap_failures.push_back(pc.label + ": min propensity " + std::to_string(pc.min_prob) +
                                        " <= p_min " + std::to_string(p_min));
    }
    report.p_S_star += dgp.support().prob(m) * subpopulation_prob(p, S);
    report.points.push_back(pc);
  }
  if (!(report.p_S_star > 0.0)) report.overlap_failures.push_back("p_S* = 0");
  return report;
}

/// p_S* = sum_x P(x) sum_{j in S} p_j(x).
inline double marginal_ps(const Dgp& dgp, const Subpopulation& S) {
  if (S.is_full()) return 1.0;
  double total = 0.0;
  for (int m = 0; m < dgp.M(); ++m) {
    total += dgp.support().prob(m) * subpopulation_prob(evaluate(dgp.propensity(), m), S);
  }
  return total;
}

/// Fisher information of `model` under the DGP's covariate law.
inline FisherInformation fisher_information(const Dgp& dgp, const PropensityModel& model) {
  return fisher_information(dgp.support().probs(), model);
}

/// Precomputed propensity quantities for one subpopulation S.
struct Population {
  int M = 0;
  int J = 0;
  Eigen::VectorXd px;        // P(X = x_m)
  Eigen::MatrixXd probs;     // M x (J+1), p_j(x_m)
  Eigen::VectorXd p_s;       // p_S(x_m)
  double p_s_star = 0.0;
  std::vector<bool> in_s;    // membership of each treatment in S
  bool s_is_full = false;

  /// w_S(x) = P(x) p_S(x) / p_S*.
  double weight(int m) const { return px(m) * p_s(m) / p_s_star; }
};

inline Population make_population(const Dgp& dgp, const Subpopulation& S) {
  if (S.J() != dgp.J()) throw ValidationError("subpopulation J does not match the DGP");
  Population pop;
  pop.M = dgp.M();
  pop.J = dgp.J();
  pop.px = Eigen::Map<const Eigen::VectorXd>(dgp.support().probs().data(), pop.M);
  pop.probs = probability_table(dgp.propensity());
  pop.p_s.resize(pop.M);
  pop.in_s.assign(pop.J + 1, false);
  for (int t = 0; t <= pop.J; ++t) pop.in_s[t] = S.contains(t);
  pop.s_is_full = S.is_full();
  for (int m = 0; m < pop.M; ++m) {
    pop.p_s(m) = subpopulation_prob(pop.probs.row(m).transpose(), S);
  }
  pop.p_s_star = pop.s_is_full ? 1.0 : pop.px.dot(pop.p_s);
  if (!(pop.p_s_star > 0.0)) throw AssumptionError(2, "p_S* = 0: the subpopulation has no mass");
  return pop;
}

}  // namespace effbound
