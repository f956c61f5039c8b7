#pragma once

// Parametric propensity-score families: K-stratified, full-rank and
// degenerate multinomial logit, a free tabular model, and the nested
// stratified parameterization used to build growing model sequences.
//
// Every model is immutable and is evaluated on a finite support indexed
// 0..M-1. Parameter layouts follow a Kronecker convention: for stratified
// models coordinate (j, k) sits at (j-1)*K + k; for logistic and nested
// models basis coordinate q and treatment j sit at q*J + (j-1).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "effbound/core.hpp"

namespace effbound {

namespace detail {

inline void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + ": non-finite entries");
}

// Multinomial logit with the reference category 0 fixed at linear index 0.
inline Eigen::VectorXd softmax_with_reference(const Eigen::VectorXd& eta) {
  const double top = std::max(0.0, eta.maxCoeff());
  Eigen::VectorXd p(eta.size() + 1);
  p(0) = std::exp(-top);
  for (Eigen::Index j = 0; j < eta.size(); ++j) p(j + 1) = std::exp(eta(j) - top);
  return p / p.sum();
}

}  // namespace detail

/// Propensity constant on each of K strata: p_j(x) = p_{j,k} for x in stratum k.
class StratifiedModel {
 public:
  /// `partition[m]` is the 0-based stratum of support point m;
  /// `cell_probs` is J x K with rows j = 1..J.
  StratifiedModel(std::vector<int> partition, Eigen::MatrixXd cell_probs)
      : partition_(std::move(partition)), cell_probs_(std::move(cell_probs)) {
    if (partition_.empty()) throw ValidationError("stratified: empty partition");
    detail::check_finite(cell_probs_, "stratified cell_probs");
    const int K = static_cast<int>(cell_probs_.cols());
    if (cell_probs_.rows() < 1 || K < 1) throw ValidationError("stratified: cell_probs is empty");
    std::vector<int> hits(K, 0);
    for (int k : partition_) {
      if (k < 0 || k >= K) {
        throw ValidationError("stratified: stratum index " + std::to_string(k) + " out of range");
      }
      ++hits[k];
    }
    for (int k = 0; k < K; ++k) {
      if (hits[k] == 0) throw ValidationError("stratified: stratum " + std::to_string(k) + " is empty");
      const double treated = cell_probs_.col(k).sum();
      if ((cell_probs_.col(k).array() < 0.0).any() || treated > 1.0 + kInputProbTol) {
        throw ValidationError("stratified: cell probabilities of stratum " + std::to_string(k) +
                              " are not a sub-probability vector");
      }
    }
  }

  int J() const noexcept { return static_cast<int>(cell_probs_.rows()); }
  int K() const noexcept { return static_cast<int>(cell_probs_.cols()); }
  int support_size() const noexcept { return static_cast<int>(partition_.size()); }
  int dim() const noexcept { return J() * K(); }
  int stratum(int m) const { return partition_.at(m); }
  const std::vector<int>& partition() const noexcept { return partition_; }
  const Eigen::MatrixXd& cell_probs() const noexcept { return cell_probs_; }

  /// p_{j,k} for j in 0..J.
  double cell_prob(int j, int k) const {
    if (j == 0) return 1.0 - cell_probs_.col(k).sum();
    return cell_probs_(j - 1, k);
  }

  Eigen::VectorXd raw_probabilities(int m) const {
    const int k = stratum(m);
    Eigen::VectorXd p(J() + 1);
    p(0) = cell_prob(0, k);
    p.tail(J()) = cell_probs_.col(k);
    return p;
  }

  // p_j S_j = e_j (x) 1{x in X_k} for j >= 1 and -iota (x) 1{x in X_k} for j = 0.
  Eigen::MatrixXd score(int m) const {
    const int k = stratum(m);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim(), J() + 1);
    const double p0 = cell_prob(0, k);
    for (int j = 1; j <= J(); ++j) {
      s((j - 1) * K() + k, j) = 1.0 / cell_probs_(j - 1, k);
      s((j - 1) * K() + k, 0) = -1.0 / p0;
    }
    return s;
  }

 private:
  std::vector<int> partition_;
  Eigen::MatrixXd cell_probs_;
};

/// Multinomial logit p_j(x) proportional to exp(sum_k Gamma_{kj} b_k(x)), with
/// category 0 as reference. Dictionary values are stored as an M x n matrix.
class FullRankLogisticModel {
 public:
  FullRankLogisticModel(Eigen::MatrixXd dictionary, Eigen::MatrixXd gamma)
      : dictionary_(std::move(dictionary)), gamma_(std::move(gamma)) {
    detail::check_finite(dictionary_, "logistic_full dictionary");
    detail::check_finite(gamma_, "logistic_full Gamma");
    if (dictionary_.rows() < 1 || dictionary_.cols() < 1) {
      throw ValidationError("logistic_full: dictionary is empty");
    }
    if (gamma_.rows() != dictionary_.cols() || gamma_.cols() < 1) {
      throw ValidationError("logistic_full: Gamma must be n x J with n = dictionary columns");
    }
  }

  int J() const noexcept { return static_cast<int>(gamma_.cols()); }
  int n() const noexcept { return static_cast<int>(dictionary_.cols()); }
  int support_size() const noexcept { return static_cast<int>(dictionary_.rows()); }
  int dim() const noexcept { return n() * J(); }
  const Eigen::MatrixXd& dictionary() const noexcept { return dictionary_; }
  const Eigen::MatrixXd& gamma() const noexcept { return gamma_; }

  Eigen::VectorXd raw_probabilities(int m) const {
    const Eigen::VectorXd eta = gamma_.transpose() * dictionary_.row(m).transpose();
    return detail::softmax_with_reference(eta);
  }

  // d log p_j / d Gamma_{ki} = b_k (1{i=j} - p_i), and -b_k p_i for j = 0.
  Eigen::MatrixXd score(int m) const {
    const Eigen::VectorXd p = raw_probabilities(m);
    Eigen::MatrixXd s(dim(), J() + 1);
    for (int k = 0; k < n(); ++k) {
      const double b = dictionary_(m, k);
      for (int i = 1; i <= J(); ++i) {
        const int row = k * J() + (i - 1);
        s(row, 0) = -b * p(i);
        for (int j = 1; j <= J(); ++j) s(row, j) = b * ((i == j ? 1.0 : 0.0) - p(i));
      }
    }
    return s;
  }

 private:
  Eigen::MatrixXd dictionary_;
  Eigen::MatrixXd gamma_;
};

/// Logit with one coefficient vector shared by treatments 1..J, so
/// p_1(x) = ... = p_J(x) = exp(eta) / (1 + J exp(eta)).
class DegenerateLogisticModel {
 public:
  DegenerateLogisticModel(Eigen::MatrixXd dictionary, Eigen::VectorXd gamma, int J)
      : dictionary_(std::move(dictionary)), gamma_(std::move(gamma)), J_(J) {
    detail::check_finite(dictionary_, "logistic_degenerate dictionary");
    detail::check_finite(gamma_, "logistic_degenerate gamma");
    if (J_ < 1) throw ValidationError("logistic_degenerate: J must be >= 1");
    if (dictionary_.rows() < 1 || dictionary_.cols() < 1) {
      throw ValidationError("logistic_degenerate: dictionary is empty");
    }
    if (gamma_.size() != dictionary_.cols()) {
      throw ValidationError("logistic_degenerate: gamma length must equal dictionary columns");
    }
  }

  int J() const noexcept { return J_; }
  int n() const noexcept { return static_cast<int>(dictionary_.cols()); }
  int support_size() const noexcept { return static_cast<int>(dictionary_.rows()); }
  int dim() const noexcept { return n(); }
  const Eigen::MatrixXd& dictionary() const noexcept { return dictionary_; }
  const Eigen::VectorXd& gamma() const noexcept { return gamma_; }

  Eigen::VectorXd raw_probabilities(int m) const {
    const double eta = dictionary_.row(m).dot(gamma_);
    return detail::softmax_with_reference(Eigen::VectorXd::Constant(J_, eta));
  }

  Eigen::MatrixXd score(int m) const {
    const Eigen::VectorXd p = raw_probabilities(m);
    const double shared = J_ * p(1);
    Eigen::MatrixXd s(dim(), J_ + 1);
    for (int k = 0; k < n(); ++k) {
      const double b = dictionary_(m, k);
      s(k, 0) = -shared * b;
      for (int j = 1; j <= J_; ++j) s(k, j) = b * (1.0 - shared);
    }
    return s;
  }

 private:
  Eigen::MatrixXd dictionary_;
  Eigen::VectorXd gamma_;
  int J_;
};

/// Free propensity: one probability vector per support point. Equivalent to a
/// stratified model whose strata are singletons.
class TabularModel {
 public:
  /// `probs` is M x (J+1); each row sums to one.
  explicit TabularModel(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
    detail::check_finite(probs_, "tabular probs");
    if (probs_.rows() < 1 || probs_.cols() < 2) {
      throw ValidationError("tabular: probs must be M x (J+1) with J >= 1");
    }
    for (Eigen::Index m = 0; m < probs_.rows(); ++m) {
      if ((probs_.row(m).array() < 0.0).any() ||
          std::abs(probs_.row(m).sum() - 1.0) > kInputProbTol) {
        throw ValidationError("tabular: row " + std::to_string(m) + " is not a probability vector");
      }
    }
  }

  int J() const noexcept { return static_cast<int>(probs_.cols()) - 1; }
  int support_size() const noexcept { return static_cast<int>(probs_.rows()); }
  int dim() const noexcept { return support_size() * J(); }
  const Eigen::MatrixXd& probs() const noexcept { return probs_; }

  Eigen::VectorXd raw_probabilities(int m) const { return probs_.row(m).transpose(); }

  Eigen::MatrixXd score(int m) const {
    const int M = support_size();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim(), J() + 1);
    for (int j = 1; j <= J(); ++j) {
      s((j - 1) * M + m, j) = 1.0 / probs_(m, j);
      s((j - 1) * M + m, 0) = -1.0 / probs_(m, 0);
    }
    return s;
  }

 private:
  Eigen::MatrixXd probs_;
};

/// A tree of covariate cells. Level 0 is the whole support; the cells of level
/// n+1 partition each level-n cell. Within a level, cells are numbered in order
/// of their first support point, and siblings are ranked the same way; the
/// sibling of rank 0 carries no parameter of its own.
class NestedPartition {
 public:
  /// `levels[n-1][m]` labels the level-n cell containing support point m.
  /// Labels are arbitrary integers and are renumbered canonically.
  explicit NestedPartition(const std::vector<std::vector<int>>& levels) {
    if (levels.empty()) throw ValidationError("nested partition: needs at least one level");
    M_ = static_cast<int>(levels.front().size());
    if (M_ < 1) throw ValidationError("nested partition: empty support");
    cells_.push_back(std::vector<int>(M_, 0));
    counts_.push_back(1);
    for (std::size_t n = 0; n < levels.size(); ++n) {
      if (static_cast<int>(levels[n].size()) != M_) {
        throw ValidationError("nested partition: level " + std::to_string(n + 1) +
                              " has the wrong number of points");
      }
      std::map<int, int> relabel;
      std::vector<int> canon(M_);
      for (int m = 0; m < M_; ++m) {
        auto [it, fresh] = relabel.try_emplace(levels[n][m], static_cast<int>(relabel.size()));
        canon[m] = it->second;
      }
      cells_.push_back(std::move(canon));
      counts_.push_back(static_cast<int>(relabel.size()));
    }
    parents_.resize(cells_.size());
    ranks_.resize(cells_.size());
    ranks_[0] = {0};
    parents_[0] = {-1};
    for (int n = 1; n <= depth(); ++n) {
      std::vector<int> parent(counts_[n], -1);
      for (int m = 0; m < M_; ++m) {
        int& p = parent[cells_[n][m]];
        const int up = cells_[n - 1][m];
        if (p == -1) {
          p = up;
        } else if (p != up) {
          throw ValidationError("nested partition: level " + std::to_string(n) +
                                " cell straddles two level-" + std::to_string(n - 1) + " cells");
        }
      }
      std::vector<int> rank(counts_[n], 0);
      std::vector<int> seen(counts_[n - 1], 0);
      for (int c = 0; c < counts_[n]; ++c) rank[c] = seen[parent[c]]++;
      parents_[n] = std::move(parent);
      ranks_[n] = std::move(rank);
    }
  }

  /// Splits the support order into 2^n contiguous blocks at level n.
  static NestedPartition dyadic(int M, int depth) {
    if (M < 1 || depth < 1) throw ValidationError("dyadic partition: M and depth must be >= 1");
    std::vector<std::vector<int>> levels(depth, std::vector<int>(M));
    for (int n = 1; n <= depth; ++n) {
      const long blocks = 1L << n;
      for (int m = 0; m < M; ++m) levels[n - 1][m] = static_cast<int>((m * blocks) / M);
    }
    return NestedPartition(levels);
  }

  int depth() const noexcept { return static_cast<int>(cells_.size()) - 1; }
  int support_size() const noexcept { return M_; }
  int cell_count(int n) const { return counts_.at(n); }
  int cell_of(int n, int m) const { return cells_.at(n).at(m); }
  const std::vector<int>& partition_at(int n) const { return cells_.at(n); }
  int parent(int n, int c) const { return parents_.at(n).at(c); }
  int sibling_rank(int n, int c) const { return ranks_.at(n).at(c); }
  bool carries_parameter(int n, int c) const { return n >= 1 && sibling_rank(n, c) != 0; }

  /// (level, cell) pairs carrying parameters at levels 1..n, in parameter order.
  std::vector<std::pair<int, int>> parameter_cells(int n) const {
    std::vector<std::pair<int, int>> out;
    for (int l = 1; l <= n; ++l) {
      for (int c = 0; c < cell_count(l); ++c) {
        if (carries_parameter(l, c)) out.emplace_back(l, c);
      }
    }
    return out;
  }

  /// Number of basis functions (constant plus cell indicators) through level n.
  int basis_size(int n) const { return 1 + static_cast<int>(parameter_cells(n).size()); }

  /// The level-`to` cell reached from (from, c) by always descending to rank 0.
  int base_descendant(int from, int c, int to) const {
    for (int l = from + 1; l <= to; ++l) {
      int next = -1;
      for (int d = 0; d < cell_count(l); ++d) {
        if (parent(l, d) == c && sibling_rank(l, d) == 0) {
          next = d;
          break;
        }
      }
      c = next;
    }
    return c;
  }

  /// Ancestor of level-n cell c at level l <= n.
  int ancestor(int n, int c, int l) const {
    for (int k = n; k > l; --k) c = parent(k, c);
    return c;
  }

  /// True iff `coarse` is constant on every level-n cell of this partition.
  bool refines(int n, const std::vector<int>& coarse) const {
    if (static_cast<int>(coarse.size()) != M_) return false;
    std::vector<int> seen(cell_count(n), -1);
    for (int m = 0; m < M_; ++m) {
      int& s = seen[cell_of(n, m)];
      if (s == -1) s = coarse[m];
      else if (s != coarse[m]) return false;
    }
    return true;
  }

 private:
  int M_ = 0;
  std::vector<std::vector<int>> cells_;
  std::vector<int> counts_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> ranks_;
};

/// Telescoping coefficients (gamma_bar, gamma_i) reproducing the level-n cell
/// probabilities. `cell_probs` is J x cell_count(n); output has length
/// basis_size(n) * J with gamma_bar first.
inline Eigen::VectorXd gamma_from_cell_probs(const NestedPartition& part, int n,
                                             const Eigen::MatrixXd& cell_probs) {
  if (n < 0 || n > part.depth()) throw ValidationError("nested partition: level out of range");
  if (cell_probs.cols() != part.cell_count(n) || cell_probs.rows() < 1) {
    throw ValidationError("nested partition: cell_probs must have one column per level-n cell");
  }
  const int J = static_cast<int>(cell_probs.rows());
  const auto params = part.parameter_cells(n);
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(params.size() + 1) * J);
  auto base_value = [&](int level, int c) {
    return cell_probs.col(part.base_descendant(level, c, n));
  };
  gamma.head(J) = base_value(0, 0);
  for (std::size_t q = 0; q < params.size(); ++q) {
    const auto [level, c] = params[q];
    gamma.segment(static_cast<Eigen::Index>(q + 1) * J, J) =
        base_value(level, c) - base_value(level - 1, part.parent(level, c));
  }
  return gamma;
}

/// Inverse of gamma_from_cell_probs: J x cell_count(n) cell probabilities.
inline Eigen::MatrixXd cell_probs_from_gamma(const NestedPartition& part, int n,
                                             const Eigen::VectorXd& gamma, int J) {
  if (n < 0 || n > part.depth()) throw ValidationError("nested partition: level out of range");
  const auto params = part.parameter_cells(n);
  if (gamma.size() != static_cast<Eigen::Index>(params.size() + 1) * J) {
    throw ValidationError("nested partition: gamma has the wrong length for level " +
                          std::to_string(n));
  }
  Eigen::MatrixXd out(J, part.cell_count(n));
  for (int c = 0; c < part.cell_count(n); ++c) {
    Eigen::VectorXd v = gamma.head(J);
    for (std::size_t q = 0; q < params.size(); ++q) {
      const auto [level, a] = params[q];
      if (part.ancestor(n, c, level) == a) v += gamma.segment(static_cast<Eigen::Index>(q + 1) * J, J);
    }
    out.col(c) = v;
  }
  return out;
}

/// Stratified propensity in the nested parameterization truncated at level n:
/// p_j(x) = gamma_bar^j + sum over parameter cells containing x of gamma_i^j.
class NestedStratifiedModel {
 public:
  NestedStratifiedModel(std::shared_ptr<const NestedPartition> partition, int level,
                        Eigen::VectorXd gamma, int J)
      : partition_(std::move(partition)), level_(level), gamma_(std::move(gamma)), J_(J) {
    if (!partition_) throw ValidationError("nested stratified: null partition");
    if (level_ < 0 || level_ > partition_->depth()) {
      throw ValidationError("nested stratified: level out of range");
    }
    if (J_ < 1) throw ValidationError("nested stratified: J must be >= 1");
    const auto params = partition_->parameter_cells(level_);
    const int Q = static_cast<int>(params.size()) + 1;
    if (gamma_.size() != Q * J_) throw ValidationError("nested stratified: gamma has wrong length");
    detail::check_finite(gamma_, "nested stratified gamma");
    const int M = partition_->support_size();
    basis_ = Eigen::MatrixXd::Zero(M, Q);
    for (int m = 0; m < M; ++m) {
      basis_(m, 0) = 1.0;
      for (int q = 1; q < Q; ++q) {
        const auto [l, c] = params[q - 1];
        if (partition_->cell_of(l, m) == c) basis_(m, q) = 1.0;
      }
    }
  }

  int J() const noexcept { return J_; }
  int level() const noexcept { return level_; }
  int support_size() const noexcept { return static_cast<int>(basis_.rows()); }
  int dim() const noexcept { return static_cast<int>(basis_.cols()) * J_; }
  const NestedPartition& partition() const noexcept { return *partition_; }
  std::shared_ptr<const NestedPartition> partition_ptr() const noexcept { return partition_; }
  const Eigen::VectorXd& gamma() const noexcept { return gamma_; }
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }

  Eigen::VectorXd raw_probabilities(int m) const {
    Eigen::VectorXd p(J_ + 1);
    for (int j = 1; j <= J_; ++j) {
      double s = 0.0;
      for (Eigen::Index q = 0; q < basis_.cols(); ++q) s += basis_(m, q) * gamma_(q * J_ + j - 1);
      p(j) = s;
    }
    p(0) = 1.0 - p.tail(J_).sum();
    return p;
  }

  Eigen::MatrixXd score(int m) const {
    const Eigen::VectorXd p = raw_probabilities(m);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim(), J_ + 1);
    for (Eigen::Index q = 0; q < basis_.cols(); ++q) {
      const double b = basis_(m, q);
      if (b == 0.0) continue;
      for (int j = 1; j <= J_; ++j) {
        s(q * J_ + j - 1, j) = b / p(j);
        s(q * J_ + j - 1, 0) = -b / p(0);
      }
    }
    return s;
  }

 private:
  std::shared_ptr<const NestedPartition> partition_;
  int level_;
  Eigen::VectorXd gamma_;
  int J_;
  Eigen::MatrixXd basis_;
};

using PropensityModel = std::variant<StratifiedModel, FullRankLogisticModel,
                                     DegenerateLogisticModel, TabularModel, NestedStratifiedModel>;

inline int model_J(const PropensityModel& model) {
  return std::visit([](const auto& m) { return m.J(); }, model);
}

inline int model_dim(const PropensityModel& model) {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

inline int model_support_size(const PropensityModel& model) {
  return std::visit([](const auto& m) { return m.support_size(); }, model);
}

inline std::string model_name(const PropensityModel& model) {
  struct Name {
    std::string operator()(const StratifiedModel&) const { return "stratified"; }
    std::string operator()(const FullRankLogisticModel&) const { return "logistic_full"; }
    std::string operator()(const DegenerateLogisticModel&) const { return "logistic_degenerate"; }
    std::string operator()(const TabularModel&) const { return "tabular"; }
    std::string operator()(const NestedStratifiedModel&) const { return "stratified_nested"; }
  };
  return std::visit(Name{}, model);
}

/// Probability vector over {0..J} without the open-interval check.
inline Eigen::VectorXd raw_probabilities(const PropensityModel& model, int m) {
  if (m < 0 || m >= model_support_size(model)) {
    throw ValidationError("propensity: support index " + std::to_string(m) + " out of range");
  }
  return std::visit([m](const auto& mod) { return mod.raw_probabilities(m); }, model);
}

/// Probability vector over {0..J}; every entry must lie in (0, 1) and the
/// entries must sum to one within kModelProbTol.
inline Eigen::VectorXd evaluate(const PropensityModel& model, int m) {
  Eigen::VectorXd p = raw_probabilities(model, m);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p(j) > 0.0 && p(j) < 1.0)) {
      throw ModelError(model_name(model) + ": p_" + std::to_string(j) + "(x" + std::to_string(m) +
                       ") = " + std::to_string(p(j)) + " outside (0,1)");
    }
  }
  if (std::abs(p.sum() - 1.0) > kModelProbTol) {
    throw ModelError(model_name(model) + ": probabilities at x" + std::to_string(m) +
                     " do not sum to one");
  }
  return p;
}

/// d_gamma x (J+1) matrix whose column j is d log p_j(x) / d gamma.
inline Eigen::MatrixXd score(const PropensityModel& model, int m) {
  evaluate(model, m);
  return std::visit([m](const auto& mod) { return mod.score(m); }, model);
}

/// M x (J+1) table of validated probabilities.
inline Eigen::MatrixXd probability_table(const PropensityModel& model) {
  const int M = model_support_size(model);
  Eigen::MatrixXd table(M, model_J(model) + 1);
  for (int m = 0; m < M; ++m) table.row(m) = evaluate(model, m).transpose();
  return table;
}

struct FisherInformation {
  Eigen::MatrixXd matrix;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  /// Eigenvector of the smallest eigenvalue.
  Eigen::VectorXd weakest_direction;

  double condition_number() const {
    return min_eigenvalue > 0.0 ? max_eigenvalue / min_eigenvalue
                                : std::numeric_limits<double>::infinity();
  }
  bool nonsingular() const { return min_eigenvalue > 1e-10 * std::max(1.0, max_eigenvalue); }
};

/// E[sum_j D_j S_j(X) S_j(X)'] = sum_x P(x) sum_j p_j(x) S_j(x) S_j(x)'.
inline FisherInformation fisher_information(const std::vector<double>& support_probs,
                                            const PropensityModel& model) {
  const int M = model_support_size(model);
  if (static_cast<int>(support_probs.size()) != M) {
    throw ValidationError("fisher information: support size does not match the model");
  }
  const int d = model_dim(model);
  FisherInformation info;
  info.matrix = Eigen::MatrixXd::Zero(d, d);
  for (int m = 0; m < M; ++m) {
    const Eigen::VectorXd p = evaluate(model, m);
    const Eigen::MatrixXd s = score(model, m);
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      info.matrix.noalias() += support_probs[m] * p(j) * s.col(j) * s.col(j).transpose();
    }
  }
  info.matrix = 0.5 * (info.matrix + info.matrix.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info.matrix);
  info.min_eigenvalue = eig.eigenvalues()(0);
  info.max_eigenvalue = eig.eigenvalues()(d - 1);
  info.weakest_direction = eig.eigenvectors().col(0);
  return info;
}

/// Throws AssumptionError(3) naming the null direction if the information is singular.
inline void require_nonsingular(const FisherInformation& info) {
  if (info.nonsingular()) return;
  std::string dir;
  for (Eigen::Index i = 0; i < info.weakest_direction.size(); ++i) {
    if (std::abs(info.weakest_direction(i)) > 1e-8) {
      if (!dir.empty()) dir += ", ";
      dir += "gamma[" + std::to_string(i) + "]*" + std::to_string(info.weakest_direction(i));
    }
  }
  throw AssumptionError(3, "score information is singular (min eigenvalue " +
                               std::to_string(info.min_eigenvalue) + "); null direction: " + dir);
}

}  // namespace effbound
