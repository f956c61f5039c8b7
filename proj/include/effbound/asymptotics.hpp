#pragma once

// Nested parametric propensity sequences, the V^{p,n} curve and the
// approximation condition on the stacked scores that decides whether the
// parametric bounds reach the unknown-propensity bound.

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "effbound/bounds.hpp"
#include "effbound/parallel.hpp"

namespace effbound {

struct SequenceSpec {
  enum class Kind { StratifiedNested, LogisticFull, LogisticDegenerate };
  Kind kind = Kind::StratifiedNested;
  /// Required for StratifiedNested.
  std::shared_ptr<const NestedPartition> partition;

  static SequenceSpec stratified(std::shared_ptr<const NestedPartition> partition) {
    if (!partition) throw ValidationError("sequence: null partition");
    return {Kind::StratifiedNested, std::move(partition)};
  }
  static SequenceSpec logistic_full() { return {Kind::LogisticFull, nullptr}; }
  static SequenceSpec logistic_degenerate() { return {Kind::LogisticDegenerate, nullptr}; }
};

inline std::string to_string(SequenceSpec::Kind k) {
  switch (k) {
    case SequenceSpec::Kind::StratifiedNested: return "stratified_nested";
    case SequenceSpec::Kind::LogisticFull: return "logistic_full";
    case SequenceSpec::Kind::LogisticDegenerate: return "logistic_degenerate";
  }
  return "?";
}

struct SequenceLevel {
  int n = 0;
  int D = 0;
  PropensityModel model;
};

struct ModelSequence {
  SequenceSpec::Kind kind = SequenceSpec::Kind::StratifiedNested;
  /// Smallest level whose model contains the true propensity.
  int truth_level = 0;
  std::vector<SequenceLevel> levels;
};

namespace detail {

inline void require_same_table(const Eigen::MatrixXd& truth, const PropensityModel& model, int n) {
  const double diff = linalg::max_abs(probability_table(model) - truth);
  if (diff > 1e-12) {
    throw ModelError("sequence level " + std::to_string(n) +
                     " does not reproduce the true propensity (max difference " +
                     std::to_string(diff) + ")");
  }
}

inline int last_nonzero_row(const Eigen::MatrixXd& g) {
  for (Eigen::Index r = g.rows() - 1; r >= 0; --r) {
    if ((g.row(r).array() != 0.0).any()) return static_cast<int>(r);
  }
  return -1;
}

}  // namespace detail

/// Levels max(1, N*)..max_depth of a nested family, each reproducing the DGP's
/// propensity. For the logistic families a level is a prefix of the DGP's
/// dictionary, so `max_depth` counts dictionary columns; for the stratified
/// family it is a partition level.
inline ModelSequence build_sequence(const Dgp& dgp, const SequenceSpec& spec, int max_depth) {
  ModelSequence seq;
  seq.kind = spec.kind;
  const Eigen::MatrixXd truth = probability_table(dgp.propensity());
  const int J = dgp.J();

  switch (spec.kind) {
    case SequenceSpec::Kind::StratifiedNested: {
      const auto& part = *spec.partition;
      if (part.support_size() != dgp.M()) {
        throw ValidationError("sequence: partition covers " + std::to_string(part.support_size()) +
                              " points but the support has " + std::to_string(dgp.M()));
      }
      if (max_depth < 1 || max_depth > part.depth()) {
        throw ValidationError("sequence: max depth must lie in 1.." + std::to_string(part.depth()));
      }
      int nstar = -1;
      for (int n = 0; n <= max_depth && nstar < 0; ++n) {
        bool constant = true;
        std::vector<int> first(part.cell_count(n), -1);
        for (int m = 0; m < dgp.M() && constant; ++m) {
          int& f = first[part.cell_of(n, m)];
          if (f < 0) f = m;
          else constant = (truth.row(m) - truth.row(f)).cwiseAbs().maxCoeff() <= 1e-14;
        }
        if (constant) nstar = n;
      }
      if (nstar < 0) {
        throw ModelError("sequence: the true propensity is not constant on the cells of any level <= " +
                         std::to_string(max_depth));
      }
      seq.truth_level = nstar;
      for (int n = std::max(1, nstar); n <= max_depth; ++n) {
        Eigen::MatrixXd cells(J, part.cell_count(n));
        for (int m = 0; m < dgp.M(); ++m) cells.col(part.cell_of(n, m)) = truth.row(m).tail(J).transpose();
        NestedStratifiedModel model(spec.partition, n, gamma_from_cell_probs(part, n, cells), J);
        SequenceLevel level{n, model.dim(), model};
        detail::require_same_table(truth, level.model, n);
        seq.levels.push_back(std::move(level));
      }
      break;
    }
    case SequenceSpec::Kind::LogisticFull: {
      const auto* full = std::get_if<FullRankLogisticModel>(&dgp.propensity());
      if (!full) throw ModelError("sequence: logistic_full needs a full-rank logistic DGP propensity");
      const int nmax = full->n();
      if (max_depth < 1 || max_depth > nmax) {
        throw ValidationError("sequence: max depth must lie in 1.." + std::to_string(nmax));
      }
      seq.truth_level = std::max(1, detail::last_nonzero_row(full->gamma()) + 1);
      if (seq.truth_level > max_depth) {
        throw ModelError("sequence: the true coefficients need " + std::to_string(seq.truth_level) +
                         " dictionary terms but max depth is " + std::to_string(max_depth));
      }
      for (int n = seq.truth_level; n <= max_depth; ++n) {
        FullRankLogisticModel model(full->dictionary().leftCols(n), full->gamma().topRows(n));
        SequenceLevel level{n, model.dim(), model};
        detail::require_same_table(truth, level.model, n);
        seq.levels.push_back(std::move(level));
      }
      break;
    }
    case SequenceSpec::Kind::LogisticDegenerate: {
      const auto* deg = std::get_if<DegenerateLogisticModel>(&dgp.propensity());
      if (!deg) {
        throw ModelError("sequence: logistic_degenerate needs a degenerate logistic DGP propensity");
      }
      const int nmax = deg->n();
      if (max_depth < 1 || max_depth > nmax) {
        throw ValidationError("sequence: max depth must lie in 1.." + std::to_string(nmax));
      }
      seq.truth_level = std::max(1, detail::last_nonzero_row(deg->gamma()) + 1);
      if (seq.truth_level > max_depth) {
        throw ModelError("sequence: the true coefficients need " + std::to_string(seq.truth_level) +
                         " dictionary terms but max depth is " + std::to_string(max_depth));
      }
      for (int n = seq.truth_level; n <= max_depth; ++n) {
        DegenerateLogisticModel model(deg->dictionary().leftCols(n), deg->gamma().head(n), J);
        SequenceLevel level{n, model.dim(), model};
        detail::require_same_table(truth, level.model, n);
        seq.levels.push_back(std::move(level));
      }
      break;
    }
  }
  return seq;
}

/// Row m holds (1{j in S} - p_S(x_m)) e_t(x_m) for j = 1..J.
inline Eigen::MatrixXd epsilon_bar(const Population& pop, const MomentSolution& sol, int t) {
  Eigen::MatrixXd out(pop.M, pop.J);
  for (int m = 0; m < pop.M; ++m) {
    for (int j = 1; j <= pop.J; ++j) {
      out(m, j - 1) = ((pop.in_s[j] ? 1.0 : 0.0) - pop.p_s(m)) * sol.e(t, m);
    }
  }
  return out;
}

inline Eigen::MatrixXd epsilon_bar(const Dgp& dgp, const Subpopulation& S,
                                   const MomentFamily& family, int t) {
  return epsilon_bar(make_population(dgp, S), solve_beta(dgp, S, family), t);
}

struct ConditionFResult {
  /// min_c |c' S_bar - eps_bar_t| in (L2(F_X))^J, one entry per treatment t.
  Eigen::VectorXd residuals;
  /// Rank of the weighted stacked score matrix (M*J rows, D columns).
  int score_rank = 0;
};

/// Weighted least-squares residuals of the approximation condition for every t.
inline ConditionFResult condition_f_residual(const Population& pop, const MomentSolution& sol,
                                             const PropensityModel& model) {
  const int d = model_dim(model);
  const int rows = pop.M * pop.J;
  Eigen::MatrixXd A(rows, d);
  Eigen::MatrixXd B(rows, pop.J + 1);
  for (int m = 0; m < pop.M; ++m) {
    const double w = std::sqrt(pop.px(m));
    const Eigen::MatrixXd s = score(model, m);
    for (int j = 1; j <= pop.J; ++j) A.row(m * pop.J + j - 1) = w * s.col(j).transpose();
  }
  for (int t = 0; t <= pop.J; ++t) {
    const Eigen::MatrixXd eb = epsilon_bar(pop, sol, t);
    for (int m = 0; m < pop.M; ++m) {
      const double w = std::sqrt(pop.px(m));
      for (int j = 0; j < pop.J; ++j) B(m * pop.J + j, t) = w * eb(m, j);
    }
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  const Eigen::MatrixXd C = cod.solve(B);
  ConditionFResult out;
  out.residuals = (B - A * C).colwise().norm().transpose();
  out.score_rank = static_cast<int>(cod.rank());
  return out;
}

struct SequencePoint {
  int n = 0;
  int D = 0;
  Eigen::MatrixXd M_pn;
  Eigen::MatrixXd V_pn;
  Eigen::VectorXd residuals;
  double residual_max = 0.0;
  /// sqrt(E|h^uk - h^{p,n}|^2).
  double h_distance = 0.0;
  /// Largest eigenvalue of V^uk - V^{p,n}.
  double gap_eig = 0.0;
  /// |M^uk - M^{p,n}|_F.
  double frobenius_gap = 0.0;
  int score_rank = 0;
  double min_propensity = 0.0;
  bool overlap_ok = true;
};

struct BoundCurve {
  SequenceSpec::Kind kind = SequenceSpec::Kind::StratifiedNested;
  int truth_level = 0;
  bool s_is_full = false;
  Eigen::MatrixXd M_uk;
  Eigen::MatrixXd V_uk;
  std::vector<SequencePoint> points;
};

/// V^{p,n} and the approximation diagnostics at every level. Levels are
/// computed concurrently and assembled in level order. Throws
/// NumericAssertionError if the curve is not nondecreasing, exceeds V^uk, or
/// a residual grows along the sequence.
inline BoundCurve bound_curve(const Dgp& dgp, const Subpopulation& S, const MomentFamily& family,
                              const ModelSequence& seq, double p_min = kDefaultPMin,
                              int threads = 1) {
  constexpr double tol = 1e-10;
  BoundCurve curve;
  curve.kind = seq.kind;
  curve.truth_level = seq.truth_level;
  curve.s_is_full = S.is_full();
  const MomentSolution sol = solve_beta(dgp, S, family);
  const Population pop = make_population(dgp, S);
  const Eigen::MatrixXd jac = jacobian_matrix(sol);
  curve.M_uk = second_moment(influence_components(dgp, S, sol, dgp.propensity(), Regime::Unknown));
  curve.V_uk = efficiency_bound(jac, curve.M_uk).V;

  curve.points.resize(seq.levels.size());
  parallel_for(seq.levels.size(), threads, [&](std::size_t i) {
    const SequenceLevel& level = seq.levels[i];
    SequencePoint pt;
    pt.n = level.n;
    pt.D = level.D;
    pt.M_pn = second_moment(influence_components(dgp, S, sol, level.model, Regime::Parametric));
    pt.V_pn = efficiency_bound(jac, pt.M_pn).V;
    const ConditionFResult cf = condition_f_residual(pop, sol, level.model);
    pt.residuals = cf.residuals;
    pt.residual_max = cf.residuals.maxCoeff();
    pt.score_rank = cf.score_rank;
    const ProjectionReport proj = project_huk(dgp, S, sol, level.model);
    pt.h_distance = std::sqrt(proj.residual_norm2);
    pt.frobenius_gap = (curve.M_uk - pt.M_pn).norm();
    pt.gap_eig = linalg::max_eigenvalue(curve.V_uk - pt.V_pn);
    pt.min_propensity = probability_table(level.model).minCoeff();
    pt.overlap_ok = pt.min_propensity > p_min;
    curve.points[i] = std::move(pt);
  });

  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const SequencePoint& pt = curve.points[i];
    const std::string where = "level " + std::to_string(pt.n);
    if (linalg::min_eigenvalue(curve.V_uk - pt.V_pn) < -tol) {
      throw NumericAssertionError(where + ": V^{p,n} exceeds V^uk in the PSD order");
    }
    if (pt.frobenius_gap > pt.h_distance * pt.h_distance + tol) {
      throw NumericAssertionError(where + ": |M^uk - M^p|_F exceeds E|h^uk - h^p|^2");
    }
    if (i == 0) continue;
    const SequencePoint& prev = curve.points[i - 1];
    if (linalg::min_eigenvalue(pt.V_pn - prev.V_pn) < -tol) {
      throw NumericAssertionError(where + ": V^{p,n} decreased in the PSD order");
    }
    if ((pt.residuals - prev.residuals).maxCoeff() > tol) {
      throw NumericAssertionError(where + ": approximation residual increased");
    }
  }
  return curve;
}

struct LimitVerdict {
  enum class Kind { Attains, Gap };
  Kind kind = Kind::Attains;
  double residual_max = 0.0;
  double h_distance = 0.0;
  double gap_eig = 0.0;
  /// Per-level histories of the three equivalent criteria.
  std::vector<double> residual_history;
  std::vector<double> h_distance_history;
  std::vector<double> gap_history;

  bool attains() const { return kind == Kind::Attains; }
};

inline std::string to_string(LimitVerdict::Kind k) {
  return k == LimitVerdict::Kind::Attains ? "attains" : "gap";
}

/// Attains iff the final residual, h-distance and V-gap all vanish (<= tol);
/// Gap iff all three stay above tol. A split verdict throws NumericAssertionError.
inline LimitVerdict classify_limit(const BoundCurve& curve, double tol = 1e-8) {
  if (curve.points.empty()) throw ValidationError("classify_limit: empty curve");
  LimitVerdict v;
  for (const auto& pt : curve.points) {
    v.residual_history.push_back(pt.residual_max);
    v.h_distance_history.push_back(pt.h_distance);
    v.gap_history.push_back(pt.gap_eig);
  }
  const SequencePoint& last = curve.points.back();
  v.residual_max = last.residual_max;
  v.h_distance = last.h_distance;
  v.gap_eig = std::max(0.0, last.gap_eig);
  if (curve.s_is_full) return v;
  const bool a = v.residual_max <= tol;
  const bool b = v.h_distance <= tol;
  const bool c = v.gap_eig <= tol;
  if (a && b && c) return v;
  if (!a && !b && !c) {
    v.kind = LimitVerdict::Kind::Gap;
    return v;
  }
  throw NumericAssertionError("classify_limit: criteria disagree (residual " +
                              std::to_string(v.residual_max) + ", h distance " +
                              std::to_string(v.h_distance) + ", gap " + std::to_string(v.gap_eig) +
                              ")");
}

}  // namespace effbound
