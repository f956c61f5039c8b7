#pragma once

// Efficient influence functions and semiparametric efficiency bounds under
// three information regimes on the propensity score:
//
//   Known       F_t = D_t s~_t + t~_t
//   Parametric  F_t = D_t s~_t + c~_t sum_j D_j S_j(X) + t~_t
//   Unknown     F_t = D_t s~_t + (D_S - p_S(X)) e_t(X) / p_S* + t~_t
//
// with s~_t = p_S(X)/p_t(X) (m(Y; beta_t) - e_t(X)) / p_S*, t~_t = p_S(X) e_t(X) / p_S*,
// and V = (J' E[F F']^{-1} J)^{-1}. All expectations are exact sums over the
// support and treatments; the outcome integral enters only through the
// conditional variance of m(Y; beta*) because the s-term has conditional mean
// zero given (X, T).

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "effbound/dgp.hpp"
#include "effbound/linalg.hpp"
#include "effbound/moments.hpp"
#include "effbound/propensity.hpp"

namespace effbound {

enum class Regime { Known, Parametric, Unknown };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::Known: return "known";
    case Regime::Parametric: return "parametric";
    case Regime::Unknown: return "unknown";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "known") return Regime::Known;
  if (s == "parametric") return Regime::Parametric;
  if (s == "unknown") return Regime::Unknown;
  throw ValidationError("unknown regime '" + s + "' (expected known|parametric|unknown)");
}

/// Everything needed to evaluate F(W) for one regime.
struct InfluenceSpec {
  Regime regime = Regime::Known;
  MomentSolution moments;
  Population pop;
  /// Per support point, d_gamma x (J+1) scores. Filled for the parametric regime.
  std::vector<Eigen::MatrixXd> scores;
  /// (J+1) x d_gamma projection coefficients c_t / p_S*. Zero for the known regime.
  Eigen::MatrixXd c_tilde;
  /// Mean of the t~ term, subtracted from F when `centered`.
  Eigen::VectorXd t_mean;
  bool centered = true;

  int J() const { return pop.J; }
  int M() const { return pop.M; }

  /// Middle term h(x, j) of F for an observation with X = x_m, T = j.
  Eigen::VectorXd h(int m, int j) const {
    const int T = J() + 1;
    switch (regime) {
      case Regime::Known:
        return Eigen::VectorXd::Zero(T);
      case Regime::Parametric:
        return c_tilde * scores[m].col(j);
      case Regime::Unknown: {
        const double d = (pop.in_s[j] ? 1.0 : 0.0) - pop.p_s(m);
        return (d / pop.p_s_star) * moments.e.col(m);
      }
    }
    return Eigen::VectorXd::Zero(T);
  }

  /// E[F(W) | X = x_m, T = j].
  Eigen::VectorXd conditional_mean(int m, int j) const {
    Eigen::VectorXd a = h(m, j) + (pop.p_s(m) / pop.p_s_star) * moments.e.col(m);
    if (centered) a -= t_mean;
    return a;
  }

  /// Var(s~_j | X = x_m, T = j): the only conditional variance in F, on coordinate j.
  double s_variance(int m, int j) const {
    const double ratio = pop.p_s(m) / pop.probs(m, j) / pop.p_s_star;
    return ratio * ratio * moments.cond_var(j, m);
  }

  /// F(w) at an observation.
  Eigen::VectorXd evaluate(const ObservationRecord& w) const {
    if (w.x < 0 || w.x >= M()) {
      throw ValidationError("observation x=" + std::to_string(w.x) + " outside the support");
    }
    if (w.t < 0 || w.t > J()) {
      throw ValidationError("observation t=" + std::to_string(w.t) + " outside the treatment set");
    }
    Eigen::VectorXd f = conditional_mean(w.x, w.t);
    const double m_val = moments.family.evaluate(w.y, moments.beta(w.t));
    f(w.t) += pop.p_s(w.x) / pop.probs(w.x, w.t) / pop.p_s_star * (m_val - moments.e(w.t, w.x));
    return f;
  }
};

namespace detail {

inline void require_reproduces_truth(const Population& pop, const PropensityModel& model) {
  if (model_support_size(model) != pop.M || model_J(model) != pop.J) {
    throw ValidationError("propensity model dimensions do not match the DGP");
  }
  const Eigen::MatrixXd table = probability_table(model);
  const double diff = linalg::max_abs(table - pop.probs);
  if (diff > 1e-10) {
    throw ValidationError(model_name(model) +
                          " model does not reproduce the true propensity (max difference " +
                          std::to_string(diff) + ")");
  }
}

// G_t = E[e_t(X) sum_{j in S} D_j S_j(X)'] stacked over t: (J+1) x d.
inline Eigen::MatrixXd score_covariance(const Population& pop, const MomentSolution& sol,
                                        const std::vector<Eigen::MatrixXd>& scores, int d) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(pop.J + 1, d);
  for (int m = 0; m < pop.M; ++m) {
    Eigen::VectorXd agg = Eigen::VectorXd::Zero(d);
    for (int j = 0; j <= pop.J; ++j) {
      if (pop.in_s[j]) agg += pop.probs(m, j) * scores[m].col(j);
    }
    G.noalias() += pop.px(m) * sol.e.col(m) * agg.transpose();
  }
  return G;
}

}  // namespace detail

/// Builds the influence-function components for one regime from a solved moment.
inline InfluenceSpec influence_components(const Dgp& dgp, const Subpopulation& S,
                                          const MomentSolution& sol, const PropensityModel& model,
                                          Regime regime, bool centered = true) {
  InfluenceSpec spec;
  spec.regime = regime;
  spec.moments = sol;
  spec.pop = make_population(dgp, S);
  spec.centered = centered;
  const auto& pop = spec.pop;
  spec.t_mean = Eigen::VectorXd::Zero(pop.J + 1);
  if (centered) {
    for (int m = 0; m < pop.M; ++m) {
      spec.t_mean += pop.px(m) * pop.p_s(m) / pop.p_s_star * sol.e.col(m);
    }
  }
  if (regime == Regime::Unknown) {
    spec.c_tilde = Eigen::MatrixXd::Zero(pop.J + 1, 0);
    return spec;
  }
  const int d = model_dim(model);
  if (regime == Regime::Known) {
    spec.c_tilde = Eigen::MatrixXd::Zero(pop.J + 1, d);
    return spec;
  }
  detail::require_reproduces_truth(pop, model);
  spec.scores.reserve(pop.M);
  for (int m = 0; m < pop.M; ++m) spec.scores.push_back(score(model, m));
  const FisherInformation info = fisher_information(dgp.support().probs(), model);
  require_nonsingular(info);
  const Eigen::MatrixXd G = detail::score_covariance(pop, sol, spec.scores, d);
  // c_t = G_t I^{-1}; I is symmetric positive definite.
  spec.c_tilde = info.matrix.ldlt().solve(G.transpose()).transpose() / pop.p_s_star;
  return spec;
}

inline InfluenceSpec influence_components(const Dgp& dgp, const Subpopulation& S,
                                          const MomentFamily& family, const PropensityModel& model,
                                          Regime regime, bool centered = true) {
  return influence_components(dgp, S, solve_beta(dgp, S, family), model, regime, centered);
}

/// E[F F'] by enumeration over (x, t) with the outcome integral done analytically.
inline Eigen::MatrixXd second_moment(const InfluenceSpec& spec) {
  const int T = spec.J() + 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, T);
  for (int m = 0; m < spec.M(); ++m) {
    for (int j = 0; j < T; ++j) {
      const double w = spec.pop.px(m) * spec.pop.probs(m, j);
      const Eigen::VectorXd a = spec.conditional_mean(m, j);
      out.noalias() += w * a * a.transpose();
      out(j, j) += w * spec.s_variance(m, j);
    }
  }
  return linalg::symmetrize(out);
}

/// E[F] by enumeration; zero at beta* when centered.
inline Eigen::VectorXd first_moment(const InfluenceSpec& spec) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.J() + 1);
  for (int m = 0; m < spec.M(); ++m) {
    for (int j = 0; j <= spec.J(); ++j) {
      out += spec.pop.px(m) * spec.pop.probs(m, j) * spec.conditional_mean(m, j);
    }
  }
  return out;
}

struct SecondMoments {
  MomentSolution moments;
  Eigen::MatrixXd M_k;
  Eigen::MatrixXd M_p;
  Eigen::MatrixXd M_uk;
};

inline SecondMoments second_moments(const Dgp& dgp, const Subpopulation& S,
                                    const MomentFamily& family, const PropensityModel& model) {
  SecondMoments out;
  out.moments = solve_beta(dgp, S, family);
  out.M_k = second_moment(influence_components(dgp, S, out.moments, model, Regime::Known));
  out.M_p = second_moment(influence_components(dgp, S, out.moments, model, Regime::Parametric));
  out.M_uk = second_moment(influence_components(dgp, S, out.moments, model, Regime::Unknown));
  return out;
}

struct EfficiencyBound {
  Eigen::MatrixXd V;
  /// True when E[F F'] vanishes identically and V is reported as zero.
  bool degenerate = false;
  double condition_number = 1.0;
  /// max |(J' M^{-1} J)^{-1} - J^{-1} M J^{-T}|, relative to max(1, |V|).
  double route_discrepancy = 0.0;
  std::optional<std::string> warning;
};

/// V = (J' M^{-1} J)^{-1}, cross-checked against J^{-1} M J^{-T}.
inline EfficiencyBound efficiency_bound(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& M) {
  EfficiencyBound out;
  const Eigen::Index n = jacobian.cols();
  if (linalg::max_abs(M) == 0.0) {
    out.V = Eigen::MatrixXd::Zero(n, n);
    out.degenerate = true;
    out.condition_number = std::numeric_limits<double>::infinity();
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(linalg::symmetrize(M), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(M.rows() - 1);
  if (!(lo > 1e-14 * hi)) {
    throw DegenerateBoundError("second moment of the influence function is singular (eigenvalues " +
                               std::to_string(lo) + " .. " + std::to_string(hi) + ")");
  }
  out.condition_number = hi / lo;
  if (out.condition_number > 1e12) {
    out.warning = "ill-conditioned second moment (condition number " +
                  std::to_string(out.condition_number) + ")";
  }
  const auto ldlt = linalg::symmetrize(M).ldlt();
  const Eigen::MatrixXd info = jacobian.transpose() * ldlt.solve(jacobian);
  out.V = linalg::symmetrize(linalg::symmetrize(info).ldlt().solve(Eigen::MatrixXd::Identity(n, n)));
  if (jacobian.rows() == jacobian.cols()) {
    const Eigen::MatrixXd jinv = jacobian.partialPivLu().inverse();
    const Eigen::MatrixXd direct = jinv * M * jinv.transpose();
    out.route_discrepancy = linalg::max_abs(out.V - direct) / std::max(1.0, linalg::max_abs(direct));
  }
  return out;
}

/// Linear map A with psi(w) = A F(w), A = -(J' M^{-1} J)^{-1} J' M^{-1}.
inline Eigen::MatrixXd eif_map(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& M) {
  const EfficiencyBound b = efficiency_bound(jacobian, M);
  if (b.degenerate) return Eigen::MatrixXd::Zero(jacobian.cols(), jacobian.rows());
  const Eigen::MatrixXd m_inv_j = linalg::symmetrize(M).ldlt().solve(jacobian);
  return -b.V * m_inv_j.transpose();
}

/// Efficient influence function at one observation.
inline Eigen::VectorXd eif_evaluate(const InfluenceSpec& spec, const Eigen::MatrixXd& jacobian,
                                    const Eigen::MatrixXd& M, const ObservationRecord& w) {
  return eif_map(jacobian, M) * spec.evaluate(w);
}

struct EifMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;
};

/// E[psi] and E[psi psi'] by exact enumeration.
inline EifMoments eif_population_moments(const InfluenceSpec& spec, const Eigen::MatrixXd& jacobian,
                                         const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd A = eif_map(jacobian, M);
  return {A * first_moment(spec), linalg::symmetrize(A * second_moment(spec) * A.transpose())};
}

struct ProjectionReport {
  Eigen::MatrixXd c_tilde;
  double huk_norm2 = 0.0;       // E|h^uk|^2
  double hp_norm2 = 0.0;        // E|h^p|^2
  double residual_norm2 = 0.0;  // E|h^uk - h^p|^2
  double pythagoras_residual = 0.0;
  /// max |E[(h^uk - h^p) (sum_j D_j S_j)']|; zero iff c~ solves the normal equations.
  double normal_equation_residual = 0.0;
  /// |E[h^uk h^uk'] - E[h^p h^p']|_F, bounded by residual_norm2.
  double frobenius_gap = 0.0;
};

/// Projection of h^uk onto the span of the stacked propensity scores. Passing
/// Regime::Known uses h^k = 0 in place of h^p.
inline ProjectionReport project_huk(const Dgp& dgp, const Subpopulation& S,
                                    const MomentSolution& sol, const PropensityModel& model,
                                    Regime regime = Regime::Parametric) {
  const InfluenceSpec uk = influence_components(dgp, S, sol, model, Regime::Unknown);
  const InfluenceSpec p = influence_components(dgp, S, sol, model, regime);
  std::vector<Eigen::MatrixXd> scores;
  for (int m = 0; m < uk.M(); ++m) scores.push_back(score(model, m));
  const int T = uk.J() + 1;
  const int d = model_dim(model);
  ProjectionReport out;
  out.c_tilde = p.c_tilde;
  Eigen::MatrixXd huk2 = Eigen::MatrixXd::Zero(T, T);
  Eigen::MatrixXd hp2 = Eigen::MatrixXd::Zero(T, T);
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(T, d);
  for (int m = 0; m < uk.M(); ++m) {
    for (int j = 0; j < T; ++j) {
      const double w = uk.pop.px(m) * uk.pop.probs(m, j);
      const Eigen::VectorXd a = uk.h(m, j);
      const Eigen::VectorXd b = p.h(m, j);
      out.huk_norm2 += w * a.squaredNorm();
      out.hp_norm2 += w * b.squaredNorm();
      out.residual_norm2 += w * (a - b).squaredNorm();
      huk2.noalias() += w * a * a.transpose();
      hp2.noalias() += w * b * b.transpose();
      normal.noalias() += w * (a - b) * scores[m].col(j).transpose();
    }
  }
  out.pythagoras_residual = std::abs(out.huk_norm2 - out.hp_norm2 - out.residual_norm2);
  out.normal_equation_residual = regime == Regime::Parametric ? linalg::max_abs(normal) : 0.0;
  out.frobenius_gap = (huk2 - hp2).norm();
  return out;
}

inline ProjectionReport project_huk(const Dgp& dgp, const Subpopulation& S,
                                    const MomentFamily& family, const PropensityModel& model,
                                    Regime regime = Regime::Parametric) {
  return project_huk(dgp, S, solve_beta(dgp, S, family), model, regime);
}

/// Per-stratum quantities of a K-stratified propensity.
struct StratumSummary {
  Eigen::VectorXd mass;    // P(X in X_k)
  Eigen::VectorXd p_s;     // p_{S,k}
  Eigen::MatrixXd e_mean;  // (J+1) x K, E[e_t | X in X_k]
  Eigen::MatrixXd e_second_sum;  // not normalized; internal
  double p_s_star = 0.0;
};

namespace detail {

inline StratumSummary summarize_strata(const Dgp& dgp, const Subpopulation& S,
                                       const MomentSolution& sol, const StratifiedModel& model) {
  const int K = model.K();
  const int T = dgp.J() + 1;
  StratumSummary out;
  out.mass = Eigen::VectorXd::Zero(K);
  out.p_s = Eigen::VectorXd::Zero(K);
  out.e_mean = Eigen::MatrixXd::Zero(T, K);
  for (int k = 0; k < K; ++k) {
    if (S.is_full()) {
      out.p_s(k) = 1.0;
    } else {
      for (int j : S.members()) out.p_s(k) += model.cell_prob(j, k);
    }
  }
  for (int m = 0; m < dgp.M(); ++m) {
    const int k = model.stratum(m);
    out.mass(k) += dgp.support().prob(m);
    out.e_mean.col(k) += dgp.support().prob(m) * sol.e.col(m);
  }
  for (int k = 0; k < K; ++k) out.e_mean.col(k) /= out.mass(k);
  out.p_s_star = S.is_full() ? 1.0 : out.p_s.dot(out.mass);
  return out;
}

}  // namespace detail

struct StratifiedClosedForm {
  Eigen::MatrixXd M_k;
  Eigen::MatrixXd M_p;
  Eigen::MatrixXd M_uk;
  StratumSummary strata;
};

/// Second moments of F^k, F^p, F^uk for a K-stratified propensity from the
/// closed-form influence function, in which the projection term reduces to
/// (D_S - p_{S,k}) E[e_t | X in X_k] / p_S* on stratum k. No matrix is inverted.
inline StratifiedClosedForm stratified_bound_closed_form(const Dgp& dgp, const Subpopulation& S,
                                                         const MomentSolution& sol,
                                                         const StratifiedModel& model) {
  if (model.support_size() != dgp.M() || model.J() != dgp.J()) {
    throw ValidationError("stratified model dimensions do not match the DGP");
  }
  StratifiedClosedForm out;
  out.strata = detail::summarize_strata(dgp, S, sol, model);
  const auto& st = out.strata;
  const int T = dgp.J() + 1;
  out.M_k = Eigen::MatrixXd::Zero(T, T);
  out.M_p = Eigen::MatrixXd::Zero(T, T);
  out.M_uk = Eigen::MatrixXd::Zero(T, T);
  for (int m = 0; m < dgp.M(); ++m) {
    const int k = model.stratum(m);
    const double psk = st.p_s(k);
    const Eigen::VectorXd e = sol.e.col(m);
    for (int j = 0; j < T; ++j) {
      const double pjk = model.cell_prob(j, k);
      const double w = dgp.support().prob(m) * pjk;
      const double d_s = (S.contains(j) ? 1.0 : 0.0) - psk;
      const Eigen::VectorXd base = psk * e / st.p_s_star;
      const Eigen::VectorXd a_k = base;
      const Eigen::VectorXd a_p = base + d_s * st.e_mean.col(k) / st.p_s_star;
      const Eigen::VectorXd a_uk = base + d_s * e / st.p_s_star;
      const double r = psk / pjk / st.p_s_star;
      const double v = w * r * r * sol.cond_var(j, m);
      out.M_k.noalias() += w * a_k * a_k.transpose();
      out.M_p.noalias() += w * a_p * a_p.transpose();
      out.M_uk.noalias() += w * a_uk * a_uk.transpose();
      out.M_k(j, j) += v;
      out.M_p(j, j) += v;
      out.M_uk(j, j) += v;
    }
  }
  out.M_k = linalg::symmetrize(out.M_k);
  out.M_p = linalg::symmetrize(out.M_p);
  out.M_uk = linalg::symmetrize(out.M_uk);
  return out;
}

struct DeltaDecomposition {
  /// In-class variance: E[F^uk F^uk'] - E[F^p F^p'].
  Eigen::MatrixXd delta0;
  /// Between-class bias: E[F^p F^p'] - E[F^k F^k'].
  Eigen::MatrixXd delta1;
};

/// Delta_K^0 = p_S*^{-2} sum_k p_{S,k}(1 - p_{S,k}) P(X_k) Var(e | X_k) and
/// Delta_K^1 = the same weights times E[e | X_k] E[e | X_k]'.
inline DeltaDecomposition delta_decomposition(const Dgp& dgp, const Subpopulation& S,
                                              const MomentSolution& sol,
                                              const StratifiedModel& model) {
  const StratumSummary st = detail::summarize_strata(dgp, S, sol, model);
  const int T = dgp.J() + 1;
  const int K = model.K();
  std::vector<Eigen::MatrixXd> cond_cov(K, Eigen::MatrixXd::Zero(T, T));
  for (int m = 0; m < dgp.M(); ++m) {
    const int k = model.stratum(m);
    const Eigen::VectorXd dev = sol.e.col(m) - st.e_mean.col(k);
    cond_cov[k].noalias() += dgp.support().prob(m) / st.mass(k) * dev * dev.transpose();
  }
  DeltaDecomposition out{Eigen::MatrixXd::Zero(T, T), Eigen::MatrixXd::Zero(T, T)};
  const double scale = 1.0 / (st.p_s_star * st.p_s_star);
  for (int k = 0; k < K; ++k) {
    const double w = scale * st.p_s(k) * (1.0 - st.p_s(k)) * st.mass(k);
    out.delta0 += w * cond_cov[k];
    out.delta1.noalias() += w * st.e_mean.col(k) * st.e_mean.col(k).transpose();
  }
  out.delta0 = linalg::symmetrize(out.delta0);
  out.delta1 = linalg::symmetrize(out.delta1);
  return out;
}

inline DeltaDecomposition delta_decomposition(const Dgp& dgp, const Subpopulation& S,
                                              const MomentFamily& family,
                                              const StratifiedModel& model) {
  return delta_decomposition(dgp, S, solve_beta(dgp, S, family), model);
}

/// Stratified propensity on `partition` matching `dgp`: the true cell value
/// where the propensity is constant on a cell, otherwise the P-weighted cell
/// average of the propensity.
inline StratifiedModel coarsen_to_partition(const Dgp& dgp, const std::vector<int>& partition) {
  if (static_cast<int>(partition.size()) != dgp.M()) {
    throw ValidationError("partition length does not match the support");
  }
  const int K = *std::max_element(partition.begin(), partition.end()) + 1;
  const int J = dgp.J();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(J, K);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
  std::vector<std::optional<Eigen::VectorXd>> first(K);
  std::vector<bool> constant(K, true);
  for (int m = 0; m < dgp.M(); ++m) {
    const int k = partition[m];
    const Eigen::VectorXd p = evaluate(dgp.propensity(), m).tail(J);
    if (!first[k]) first[k] = p;
    else if ((p - *first[k]).cwiseAbs().maxCoeff() > 1e-14) constant[k] = false;
    sum.col(k) += dgp.support().prob(m) * p;
    mass(k) += dgp.support().prob(m);
  }
  Eigen::MatrixXd cells(J, K);
  for (int k = 0; k < K; ++k) {
    if (!first[k]) throw ValidationError("partition has an empty stratum " + std::to_string(k));
    cells.col(k) = constant[k] ? *first[k] : Eigen::VectorXd(sum.col(k) / mass(k));
  }
  return StratifiedModel(partition, cells);
}

struct RefinementStep {
  int K = 0;
  double trace_delta0 = 0.0;
  double trace_delta1 = 0.0;
  /// True when the DGP propensity was not constant on this partition and was averaged.
  bool coarsened = false;
};

struct RefinementTrace {
  std::vector<RefinementStep> steps;
  bool nonincreasing = true;
  bool reaches_zero = false;
};

/// trace(Delta_K^0) along a sequence of refining partitions.
inline RefinementTrace delta0_refinement_limit(const Dgp& dgp, const Subpopulation& S,
                                               const MomentFamily& family,
                                               const std::vector<std::vector<int>>& partitions,
                                               double tol = 1e-10) {
  RefinementTrace out;
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const auto& part = partitions[i];
    if (static_cast<int>(part.size()) != dgp.M()) {
      throw ValidationError("partition " + std::to_string(i) + " has the wrong length");
    }
    if (i > 0) {
      // Each cell of the finer partition must sit inside one coarser cell.
      std::map<int, int> parent;
      for (int m = 0; m < dgp.M(); ++m) {
        auto [it, fresh] = parent.try_emplace(part[m], partitions[i - 1][m]);
        if (!fresh && it->second != partitions[i - 1][m]) {
          throw ValidationError("partition " + std::to_string(i) + " does not refine partition " +
                                std::to_string(i - 1));
        }
      }
    }
    const StratifiedModel model = coarsen_to_partition(dgp, part);
    const Dgp level = dgp.with_propensity(model);
    const DeltaDecomposition dd = delta_decomposition(level, S, family, model);
    RefinementStep step;
    step.K = model.K();
    step.trace_delta0 = dd.delta0.trace();
    step.trace_delta1 = dd.delta1.trace();
    step.coarsened = linalg::max_abs(probability_table(model) -
                                     probability_table(dgp.propensity())) > 0.0;
    if (!out.steps.empty() && step.trace_delta0 > out.steps.back().trace_delta0 + tol) {
      out.nonincreasing = false;
    }
    out.steps.push_back(step);
  }
  out.reaches_zero = !out.steps.empty() && std::abs(out.steps.back().trace_delta0) <= tol;
  return out;
}

/// (C + 1^J (x) D)^{-1} for C = sum c_jk E_jj (x) E_kk and D = diag(d), via the
/// Woodbury identity. `c` is J x K, `d` has length K; index (j, k) -> j*K + k.
inline Eigen::MatrixXd woodbury_inverse(const Eigen::MatrixXd& c, const Eigen::VectorXd& d) {
  const Eigen::Index J = c.rows();
  const Eigen::Index K = c.cols();
  if (d.size() != K) throw ValidationError("woodbury: d must have one entry per column of c");
  if ((c.array() == 0.0).any() || (d.array() == 0.0).any()) {
    throw ValidationError("woodbury: entries of c and d must be nonzero");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(J * K, J * K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double pk = 1.0;
    for (Eigen::Index j = 0; j < J; ++j) pk += d(k) / c(j, k);
    for (Eigen::Index i = 0; i < J; ++i) {
      out(i * K + k, i * K + k) += 1.0 / c(i, k);
      for (Eigen::Index j = 0; j < J; ++j) {
        out(i * K + k, j * K + k) -= d(k) / (c(i, k) * c(j, k) * pk);
      }
    }
  }
  return out;
}

/// Inverse score information of a stratified model, in closed form.
inline Eigen::MatrixXd stratified_information_inverse(const std::vector<double>& support_probs,
                                                      const StratifiedModel& model) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(model.K());
  for (int m = 0; m < model.support_size(); ++m) mass(model.stratum(m)) += support_probs.at(m);
  Eigen::MatrixXd c(model.J(), model.K());
  Eigen::VectorXd d(model.K());
  for (int k = 0; k < model.K(); ++k) {
    d(k) = mass(k) / model.cell_prob(0, k);
    for (int j = 1; j <= model.J(); ++j) c(j - 1, k) = mass(k) / model.cell_prob(j, k);
  }
  return woodbury_inverse(c, d);
}

struct ClosedFormBound {
  std::string name;  // "ATE", "ATT" or "QTT"
  double value = 0.0;
  /// a' V a from the generic route, with a = (-1, 1).
  double generic_contrast = 0.0;
};

/// Scalar bounds of the binary-treatment examples from their displayed formulas:
/// ATE (S = {0,1}, mean), ATT (S = {1}, mean) and QTT (S = {1}, quantile),
/// each for the given parametric propensity model.
inline ClosedFormBound closed_form_bound(const Dgp& dgp, const Subpopulation& S,
                                         const MomentFamily& family, const PropensityModel& model) {
  if (dgp.J() != 1) throw ValidationError("closed-form examples need a binary treatment");
  const bool full = S.is_full();
  const bool treated = S.members() == std::vector<int>{1};
  if (!full && !treated) {
    throw ValidationError("closed-form examples need S = {0,1} or S = {1}");
  }
  if (full && !family.is_mean()) {
    throw ValidationError("no closed form for the full-population quantile bound");
  }
  const MomentSolution sol = solve_beta(dgp, S, family);
  const Population pop = make_population(dgp, S);
  ClosedFormBound out;

  const SecondMoments sm = second_moments(dgp, S, family, model);
  const EfficiencyBound vb = efficiency_bound(jacobian_matrix(sol), sm.M_p);
  const Eigen::Vector2d a(-1.0, 1.0);
  out.generic_contrast = a.dot(vb.V * a);

  if (full) {
    out.name = "ATE";
    double v = 0.0;
    for (int m = 0; m < pop.M; ++m) {
      const double p1 = pop.probs(m, 1);
      const double p0 = pop.probs(m, 0);
      const double diff = sol.e(1, m) - sol.e(0, m);
      v += pop.px(m) * (sol.cond_var(1, m) / p1 + sol.cond_var(0, m) / p0 + diff * diff);
    }
    out.value = v;
    return out;
  }

  // c_bar_t = E[e_t(X) D_1 S_1(X)'] and the Fisher information of the model.
  const int d = model_dim(model);
  Eigen::MatrixXd cbar = Eigen::MatrixXd::Zero(2, d);
  for (int m = 0; m < pop.M; ++m) {
    const Eigen::VectorXd s1 = score(model, m).col(1);
    for (int t = 0; t < 2; ++t) cbar.row(t) += pop.px(m) * pop.probs(m, 1) * sol.e(t, m) * s1.transpose();
  }
  const Eigen::MatrixXd info_inv =
      fisher_information(dgp.support().probs(), model).matrix.inverse();
  const double p1s = pop.p_s_star;

  if (family.is_mean()) {
    out.name = "ATT";
    const Eigen::RowVectorXd dc = cbar.row(1) - cbar.row(0);
    double v = dc * info_inv * dc.transpose();
    for (int m = 0; m < pop.M; ++m) {
      const double p1 = pop.probs(m, 1);
      const double p0 = pop.probs(m, 0);
      const double diff = sol.e(1, m) - sol.e(0, m);
      v += pop.px(m) * (p1 * sol.cond_var(1, m) + p1 * p1 / p0 * sol.cond_var(0, m) + p1 * p1 * diff * diff);
    }
    out.value = v / (p1s * p1s);
    return out;
  }

  out.name = "QTT";
  const double f1 = (*sol.density)(1);
  const double f0 = (*sol.density)(0);
  const Eigen::RowVectorXd dc = cbar.row(1) / f1 - cbar.row(0) / f0;
  double v = dc * info_inv * dc.transpose();
  for (int m = 0; m < pop.M; ++m) {
    const double p1 = pop.probs(m, 1);
    const double p0 = pop.probs(m, 0);
    // Var(1{Y_t <= beta_t} / f_t | X) = F(1-F) / f_t^2.
    const double diff = sol.e(1, m) / f1 - sol.e(0, m) / f0;
    v += pop.px(m) * (p1 * sol.cond_var(1, m) / (f1 * f1) +
                      p1 * p1 / p0 * sol.cond_var(0, m) / (f0 * f0) + p1 * p1 * diff * diff);
  }
  out.value = v / (p1s * p1s);
  return out;
}

struct BoundReport {
  MomentSolution moments;
  Eigen::MatrixXd M_k, M_p, M_uk;
  Eigen::MatrixXd V_k, V_p, V_uk;
  std::optional<Eigen::MatrixXd> delta0;
  std::optional<Eigen::MatrixXd> delta1;
  double pythagoras_residual = 0.0;
  std::map<std::string, double> condition_numbers;
  bool degenerate = false;
  std::vector<std::string> warnings;
};

/// Full report: the three second moments and bounds, the projection identity,
/// and the Delta decomposition when the model is stratified. Throws
/// NumericAssertionError if the PSD ordering M^k <= M^p <= M^uk fails.
inline BoundReport compute_bounds(const Dgp& dgp, const Subpopulation& S,
                                  const MomentFamily& family, const PropensityModel& model) {
  BoundReport out;
  const SecondMoments sm = second_moments(dgp, S, family, model);
  out.moments = sm.moments;
  out.M_k = sm.M_k;
  out.M_p = sm.M_p;
  out.M_uk = sm.M_uk;
  const Eigen::MatrixXd jac = jacobian_matrix(sm.moments);
  const std::pair<const char*, const Eigen::MatrixXd*> items[] = {
      {"M_k", &out.M_k}, {"M_p", &out.M_p}, {"M_uk", &out.M_uk}};
  Eigen::MatrixXd* targets[] = {&out.V_k, &out.V_p, &out.V_uk};
  for (int i = 0; i < 3; ++i) {
    const EfficiencyBound b = efficiency_bound(jac, *items[i].second);
    *targets[i] = b.V;
    out.degenerate = out.degenerate || b.degenerate;
    out.condition_numbers[items[i].first] = b.condition_number;
    if (b.warning) out.warnings.push_back(std::string(items[i].first) + ": " + *b.warning);
  }
  const FisherInformation info = fisher_information(dgp.support().probs(), model);
  out.condition_numbers["fisher"] = info.condition_number();
  if (info.condition_number() > 1e12) {
    out.warnings.push_back("fisher: ill-conditioned score information");
  }
  out.pythagoras_residual = project_huk(dgp, S, sm.moments, model).pythagoras_residual;
  if (const auto* strat = std::get_if<StratifiedModel>(&model)) {
    const DeltaDecomposition dd = delta_decomposition(dgp, S, sm.moments, *strat);
    out.delta0 = dd.delta0;
    out.delta1 = dd.delta1;
  }
  if (!linalg::psd_leq(out.M_k, out.M_p) || !linalg::psd_leq(out.M_p, out.M_uk)) {
    throw NumericAssertionError("PSD ordering M^k <= M^p <= M^uk violated");
  }
  return out;
}

}  // namespace effbound
