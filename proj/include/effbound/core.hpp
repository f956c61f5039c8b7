#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "effbound/errors.hpp"

namespace effbound {

/// Tolerance on user-supplied probability vectors.
inline constexpr double kInputProbTol = 1e-12;
/// Tolerance on probability vectors produced by evaluating a model.
inline constexpr double kModelProbTol = 1e-10;
/// Default overlap threshold used by validation.
inline constexpr double kDefaultPMin = 1e-3;

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Standard normal density.
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// A nonempty subset S of the treatment labels {0, ..., J}.
class Subpopulation {
 public:
  Subpopulation(int J, std::vector<int> members) : J_(J) {
    if (J < 1) throw ValidationError("subpopulation: treatment count J must be >= 1");
    std::set<int> uniq(members.begin(), members.end());
    if (uniq.empty()) throw ValidationError("subpopulation: S must be nonempty");
    for (int t : uniq) {
      if (t < 0 || t > J) {
        throw ValidationError("subpopulation: label " + std::to_string(t) +
                              " outside {0.." + std::to_string(J) + "}");
      }
    }
    members_.assign(uniq.begin(), uniq.end());
    mask_.assign(J + 1, false);
    for (int t : members_) mask_[t] = true;
  }

  static Subpopulation full(int J) {
    std::vector<int> all(J + 1);
    for (int t = 0; t <= J; ++t) all[t] = t;
    return Subpopulation(J, std::move(all));
  }

  int J() const noexcept { return J_; }
  bool contains(int t) const { return t >= 0 && t <= J_ && mask_[t]; }
  const std::vector<int>& members() const noexcept { return members_; }
  bool is_full() const noexcept { return static_cast<int>(members_.size()) == J_ + 1; }
  bool is_proper() const noexcept { return !is_full(); }

  friend bool operator==(const Subpopulation& a, const Subpopulation& b) {
    return a.J_ == b.J_ && a.members_ == b.members_;
  }

 private:
  int J_;
  std::vector<int> members_;
  std::vector<bool> mask_;
};

/// Treatments are labelled 0..J; S is the conditioning subpopulation.
class TreatmentSet {
 public:
  TreatmentSet(int J, std::vector<int> S) : S_(J, std::move(S)) {}
  explicit TreatmentSet(Subpopulation S) : S_(std::move(S)) {}

  int J() const noexcept { return S_.J(); }
  int count() const noexcept { return S_.J() + 1; }
  const Subpopulation& subpopulation() const noexcept { return S_; }
  bool s_is_proper() const noexcept { return S_.is_proper(); }

 private:
  Subpopulation S_;
};

/// Finite covariate support with strictly positive point masses.
class DiscreteSupport {
 public:
  DiscreteSupport(std::vector<std::string> labels, std::vector<double> probs,
                  std::vector<std::vector<double>> embeddings = {})
      : labels_(std::move(labels)), probs_(std::move(probs)), embeddings_(std::move(embeddings)) {
    if (labels_.empty()) throw ValidationError("support: must contain at least one point");
    if (labels_.size() != probs_.size()) {
      throw ValidationError("support: labels and probs differ in length");
    }
    if (!embeddings_.empty() && embeddings_.size() != labels_.size()) {
      throw ValidationError("support: embeddings must be given for every point or none");
    }
    std::set<std::string> seen;
    double total = 0.0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!seen.insert(labels_[i]).second) {
        throw ValidationError("support: duplicate label '" + labels_[i] + "'");
      }
      if (!(probs_[i] > 0.0) || !std::isfinite(probs_[i])) {
        throw ValidationError("support: probability of '" + labels_[i] + "' must be > 0");
      }
      total += probs_[i];
    }
    if (std::abs(total - 1.0) > kInputProbTol) {
      throw ValidationError("support: probabilities sum to " + std::to_string(total) + ", not 1");
    }
  }

  int size() const noexcept { return static_cast<int>(labels_.size()); }
  double prob(int m) const { return probs_.at(m); }
  const std::vector<double>& probs() const noexcept { return probs_; }
  const std::string& label(int m) const { return labels_.at(m); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool has_embeddings() const noexcept { return !embeddings_.empty(); }
  const std::vector<double>& embedding(int m) const { return embeddings_.at(m); }

  int index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw ValidationError("support: unknown label '" + label + "'");
    return static_cast<int>(it - labels_.begin());
  }

 private:
  std::vector<std::string> labels_;
  std::vector<double> probs_;
  std::vector<std::vector<double>> embeddings_;
};

struct GaussianLaw {
  double mean;
  double sd;
};

struct DiscreteLaw {
  /// (value, probability) pairs.
  std::vector<std::pair<double, double>> atoms;
};

/// Conditional law of a potential outcome given the covariate.
/// Only finite-variance laws are representable.
class OutcomeLaw {
 public:
  static OutcomeLaw gaussian(double mean, double sd) {
    if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
      throw ValidationError("outcome law: Gaussian requires finite mean and sd > 0");
    }
    return OutcomeLaw(GaussianLaw{mean, sd});
  }

  static OutcomeLaw discrete(std::vector<std::pair<double, double>> atoms) {
    if (atoms.empty()) throw ValidationError("outcome law: discrete law needs at least one atom");
    double total = 0.0;
    for (const auto& [v, p] : atoms) {
      if (!(p > 0.0) || !std::isfinite(v)) {
        throw ValidationError("outcome law: discrete atoms need finite values and p > 0");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > kInputProbTol) {
      throw ValidationError("outcome law: discrete probabilities sum to " + std::to_string(total));
    }
    return OutcomeLaw(DiscreteLaw{std::move(atoms)});
  }

  bool is_gaussian() const noexcept { return std::holds_alternative<GaussianLaw>(law_); }
  const GaussianLaw& as_gaussian() const { return std::get<GaussianLaw>(law_); }
  const DiscreteLaw& as_discrete() const { return std::get<DiscreteLaw>(law_); }

  double mean() const {
    if (is_gaussian()) return as_gaussian().mean;
    double s = 0.0;
    for (const auto& [v, p] : as_discrete().atoms) s += v * p;
    return s;
  }

  double variance() const {
    if (is_gaussian()) return as_gaussian().sd * as_gaussian().sd;
    const double mu = mean();
    double s = 0.0;
    for (const auto& [v, p] : as_discrete().atoms) s += (v - mu) * (v - mu) * p;
    return s;
  }

  /// P(Y <= y).
  double cdf(double y) const {
    if (is_gaussian()) {
      const auto& g = as_gaussian();
      return normal_cdf((y - g.mean) / g.sd);
    }
    double s = 0.0;
    for (const auto& [v, p] : as_discrete().atoms) {
      if (v <= y) s += p;
    }
    return s;
  }

  /// Density; only defined for Gaussian laws.
  double pdf(double y) const {
    const auto& g = as_gaussian();
    return normal_pdf((y - g.mean) / g.sd) / g.sd;
  }

  /// Maps a uniform and a standard normal draw to an outcome draw.
  double sample(double uniform, double standard_normal) const {
    if (is_gaussian()) {
      const auto& g = as_gaussian();
      return g.mean + g.sd * standard_normal;
    }
    double acc = 0.0;
    const auto& atoms = as_discrete().atoms;
    for (const auto& [v, p] : atoms) {
      acc += p;
      if (uniform < acc) return v;
    }
    return atoms.back().first;
  }

 private:
  explicit OutcomeLaw(std::variant<GaussianLaw, DiscreteLaw> law) : law_(std::move(law)) {}
  std::variant<GaussianLaw, DiscreteLaw> law_;
};

/// One observation W = (Y, T, X); x is a 0-based support index.
struct ObservationRecord {
  double y = 0.0;
  int t = 0;
  int x = 0;

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

}  // namespace effbound
