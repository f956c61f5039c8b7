#pragma once

// Scalar moment families m(y; beta) and the solution of the identifying
// condition E[m(Y_t; beta_t) | T in S] = 0 on a finite-support DGP.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "effbound/dgp.hpp"

namespace effbound {

class MomentFamily {
 public:
  enum class Kind { Mean, Quantile };

  /// m(y; beta) = y - beta.
  static MomentFamily mean() { return MomentFamily(Kind::Mean, 0.0); }

  /// m(y; beta) = 1{y <= beta} - tau.
  static MomentFamily quantile(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw ValidationError("moment family: quantile level must lie in (0,1)");
    }
    return MomentFamily(Kind::Quantile, tau);
  }

  Kind kind() const noexcept { return kind_; }
  bool is_mean() const noexcept { return kind_ == Kind::Mean; }
  double tau() const noexcept { return tau_; }
  std::string name() const {
    return is_mean() ? "mean" : "quantile(" + std::to_string(tau_) + ")";
  }

  /// m(y; beta).
  double evaluate(double y, double beta) const {
    if (is_mean()) return y - beta;
    return (y <= beta ? 1.0 : 0.0) - tau_;
  }

  friend bool operator==(const MomentFamily&, const MomentFamily&) = default;

 private:
  MomentFamily(Kind kind, double tau) : kind_(kind), tau_(tau) {}
  Kind kind_;
  double tau_;
};

/// e_t(x; beta) = E[m(Y; beta) | X = x, T = t].
inline double conditional_moment(const Dgp& dgp, const MomentFamily& family, int t, int m,
                                 double beta) {
  const OutcomeLaw& law = dgp.outcome(t, m);
  if (family.is_mean()) return law.mean() - beta;
  return law.cdf(beta) - family.tau();
}

/// Var(m(Y_t; beta) | X = x).
inline double conditional_moment_variance(const Dgp& dgp, const MomentFamily& family, int t,
                                          int m, double beta) {
  const OutcomeLaw& law = dgp.outcome(t, m);
  if (family.is_mean()) return law.variance();
  const double F = law.cdf(beta);
  return F * (1.0 - F);
}

struct MomentSolution {
  MomentFamily family = MomentFamily::mean();
  Eigen::VectorXd beta;        // beta*_t, t = 0..J
  Eigen::MatrixXd e;           // (J+1) x M, e*_t(x_m; beta*_t)
  Eigen::MatrixXd cond_var;    // (J+1) x M, Var(m(Y_t; beta*_t) | x_m)
  Eigen::VectorXd jacobian;    // diagonal blocks J_t
  std::optional<Eigen::VectorXd> density;  // f_{t|T in S}(beta*_t), quantile only
  Eigen::VectorXd weights;     // w_S(x_m)
  double p_s_star = 0.0;

  int J() const { return static_cast<int>(beta.size()) - 1; }

  /// sum_x w_S(x) e*_t(x).
  double moment_residual(int t) const { return weights.dot(e.row(t).transpose()); }
};

namespace detail {

// Weighted mixture moment sum_x w_S(x) e_t(x; beta).
inline double weighted_moment(const Dgp& dgp, const MomentFamily& family,
                              const Eigen::VectorXd& w, int t, double beta) {
  double s = 0.0;
  for (int m = 0; m < dgp.M(); ++m) s += w(m) * conditional_moment(dgp, family, t, m, beta);
  return s;
}

inline double solve_quantile(const Dgp& dgp, const MomentFamily& family, const Eigen::VectorXd& w,
                             int t) {
  double lo_mu = std::numeric_limits<double>::infinity();
  double hi_mu = -lo_mu;
  double sd_max = 0.0;
  for (int m = 0; m < dgp.M(); ++m) {
    const OutcomeLaw& law = dgp.outcome(t, m);
    if (!law.is_gaussian()) {
      throw AssumptionError(1, "quantile moment for treatment " + std::to_string(t) +
                                   " needs a continuous outcome law; the discrete law at " +
                                   dgp.support().label(m) + " has a flat CDF");
    }
    lo_mu = std::min(lo_mu, law.as_gaussian().mean);
    hi_mu = std::max(hi_mu, law.as_gaussian().mean);
    sd_max = std::max(sd_max, law.as_gaussian().sd);
  }
  double lo = lo_mu - 10.0 * sd_max;
  double hi = hi_mu + 10.0 * sd_max;
  double g_lo = weighted_moment(dgp, family, w, t, lo);
  double g_hi = weighted_moment(dgp, family, w, t, hi);
  if (!(g_lo < 0.0 && g_hi > 0.0)) {
    throw AssumptionError(1, "no sign change of the quantile moment for treatment " +
                                 std::to_string(t) + " on the bisection bracket");
  }
  double best = 0.5 * (lo + hi);
  double best_abs = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = weighted_moment(dgp, family, w, t, mid);
    if (std::abs(g) < best_abs) {
      best_abs = std::abs(g);
      best = mid;
    }
    if (g == 0.0) break;
    if (g < 0.0) lo = mid;
    else hi = mid;
  }
  if (best_abs > 1e-12) {
    throw AssumptionError(1, "quantile moment for treatment " + std::to_string(t) +
                                 " could not be driven below 1e-12");
  }
  return best;
}

}  // namespace detail

/// Solves E[m(Y_t; beta_t) | T in S] = 0 for every treatment t and fills in the
/// conditional moments, conditional variances and Jacobian blocks at beta*.
inline MomentSolution solve_beta(const Dgp& dgp, const Subpopulation& S,
                                 const MomentFamily& family) {
  const Population pop = make_population(dgp, S);
  const int J = dgp.J();
  const int M = dgp.M();
  MomentSolution sol;
  sol.family = family;
  sol.p_s_star = pop.p_s_star;
  sol.weights.resize(M);
  for (int m = 0; m < M; ++m) sol.weights(m) = pop.weight(m);
  sol.beta.resize(J + 1);
  sol.e.resize(J + 1, M);
  sol.cond_var.resize(J + 1, M);
  sol.jacobian.resize(J + 1);
  if (!family.is_mean()) sol.density = Eigen::VectorXd(J + 1);

  for (int t = 0; t <= J; ++t) {
    if (family.is_mean()) {
      double b = 0.0;
      for (int m = 0; m < M; ++m) b += sol.weights(m) * dgp.outcome(t, m).mean();
      sol.beta(t) = b;
      sol.jacobian(t) = -1.0;
    } else {
      sol.beta(t) = detail::solve_quantile(dgp, family, sol.weights, t);
      double f = 0.0;
      for (int m = 0; m < M; ++m) f += sol.weights(m) * dgp.outcome(t, m).pdf(sol.beta(t));
      (*sol.density)(t) = f;
      sol.jacobian(t) = f;
    }
    for (int m = 0; m < M; ++m) {
      sol.e(t, m) = conditional_moment(dgp, family, t, m, sol.beta(t));
      sol.cond_var(t, m) = conditional_moment_variance(dgp, family, t, m, sol.beta(t));
    }
  }
  return sol;
}

/// Block-diagonal Jacobian diag(J_0, ..., J_J) of the stacked moment.
inline Eigen::MatrixXd jacobian_matrix(const MomentSolution& sol) {
  for (Eigen::Index t = 0; t < sol.jacobian.size(); ++t) {
    if (!(std::abs(sol.jacobian(t)) > 1e-10)) {
      throw AssumptionError(4, "Jacobian block for treatment " + std::to_string(t) +
                                   " is zero (" + std::to_string(sol.jacobian(t)) + ")");
    }
  }
  return sol.jacobian.asDiagonal();
}

}  // namespace effbound
