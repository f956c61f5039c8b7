#pragma once

// Sampling from a Dgp, Monte Carlo checks of the efficient influence function,
// and the stratified plug-in estimator used for replication studies.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "effbound/bounds.hpp"
#include "effbound/parallel.hpp"

namespace effbound {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: draw i of record r under seed s depends on (s, r, i)
/// only, so samples do not depend on the thread schedule.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t record)
      : key_(splitmix64(splitmix64(seed) ^ (record * 0xd1342543de82ef95ULL + 1))) {}

  std::uint64_t next_bits() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_bits() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; consumes two uniforms.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

namespace detail {

inline int draw_index(const Eigen::VectorXd& cumulative, double u) {
  for (Eigen::Index i = 0; i + 1 < cumulative.size(); ++i) {
    if (u < cumulative(i)) return static_cast<int>(i);
  }
  return static_cast<int>(cumulative.size()) - 1;
}

/// Cumulative covariate and treatment probabilities for sampling.
struct Sampler {
  const Dgp* dgp;
  Eigen::VectorXd x_cum;
  Eigen::MatrixXd t_cum;  // M x (J+1)
  std::uint64_t seed;

  Sampler(const Dgp& d, std::uint64_t s) : dgp(&d), seed(s) {
    const int M = d.M();
    x_cum.resize(M);
    double acc = 0.0;
    for (int m = 0; m < M; ++m) x_cum(m) = (acc += d.support().prob(m));
    t_cum = probability_table(d.propensity());
    for (int m = 0; m < M; ++m) {
      for (Eigen::Index j = 1; j < t_cum.cols(); ++j) t_cum(m, j) += t_cum(m, j - 1);
    }
  }

  ObservationRecord draw(std::uint64_t i) const {
    CounterStream rng(seed, i);
    ObservationRecord w;
    w.x = draw_index(x_cum, rng.uniform());
    w.t = draw_index(t_cum.row(w.x).transpose(), rng.uniform());
    const double u = rng.uniform();
    w.y = dgp->outcome(w.t, w.x).sample(u, rng.normal());
    return w;
  }
};

}  // namespace detail

/// n i.i.d. observations; record i depends only on (dgp, seed, i).
inline std::vector<ObservationRecord> draw_sample(const Dgp& dgp, std::size_t n, std::uint64_t seed,
                                                  int threads = 1) {
  const detail::Sampler sampler(dgp, seed);
  std::vector<ObservationRecord> out(n);
  parallel_for(n, threads, [&](std::size_t i) { out[i] = sampler.draw(i); });
  return out;
}

struct McReport {
  Regime regime = Regime::Known;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd mean_standard_errors;
  Eigen::MatrixXd empirical_second_moment;
  Eigen::MatrixXd standard_errors;
  Eigen::MatrixXd exact;
  /// max |empirical - exact| / sqrt(exact_aa exact_bb) over entries.
  double max_abs_rel_err = 0.0;
  bool mean_ok = false;
  bool second_moment_ok = false;
  /// The tolerance band is too wide for the check to be informative.
  bool low_power = false;

  bool pass() const { return mean_ok && second_moment_ok; }
};

/// Sample mean and second moment of psi(W_i) against the exact bound. The
/// mean must lie within 4 SE of zero and each second-moment entry within
/// max(4 SE, 3% of the exact entry). Sums are accumulated over a fixed set of
/// blocks so the report does not depend on the thread count.
inline McReport mc_verify_bound(const Dgp& dgp, const Subpopulation& S, const MomentFamily& family,
                                const PropensityModel& model, Regime regime, std::size_t n,
                                std::uint64_t seed, int threads = 1) {
  if (n < 2) throw ValidationError("mc_verify_bound: need at least 2 samples");
  const InfluenceSpec spec = influence_components(dgp, S, family, model, regime);
  const Eigen::MatrixXd M = second_moment(spec);
  const Eigen::MatrixXd jac = jacobian_matrix(spec.moments);
  const Eigen::MatrixXd A = eif_map(jac, M);
  const Eigen::Index p = A.rows();

  struct Block {
    Eigen::VectorXd s1;
    Eigen::MatrixXd s2;
    Eigen::MatrixXd s4;  // sums of (psi_a psi_b)^2
  };
  constexpr std::size_t kBlocks = 64;
  std::vector<Block> blocks(kBlocks);
  const detail::Sampler sampler(dgp, seed);
  parallel_for(kBlocks, threads, [&](std::size_t b) {
    Block blk{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p)};
    for (std::size_t i = n * b / kBlocks; i < n * (b + 1) / kBlocks; ++i) {
      const Eigen::VectorXd psi = A * spec.evaluate(sampler.draw(i));
      const Eigen::MatrixXd outer = psi * psi.transpose();
      blk.s1 += psi;
      blk.s2 += outer;
      blk.s4 += outer.cwiseProduct(outer);
    }
    blocks[b] = std::move(blk);
  });
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd s4 = Eigen::MatrixXd::Zero(p, p);
  for (const auto& blk : blocks) {
    s1 += blk.s1;
    s2 += blk.s2;
    s4 += blk.s4;
  }
  const double nd = static_cast<double>(n);

  McReport r;
  r.regime = regime;
  r.n_samples = n;
  r.seed = seed;
  r.exact = efficiency_bound(jac, M).V;
  r.mean = s1 / nd;
  r.empirical_second_moment = linalg::symmetrize(s2 / nd);
  const Eigen::VectorXd var1 =
      ((s2.diagonal() / nd).array() - r.mean.array().square()).cwiseMax(0.0) * nd / (nd - 1.0);
  r.mean_standard_errors = (var1 / nd).cwiseSqrt();
  const Eigen::MatrixXd var2 =
      ((s4 / nd).array() - r.empirical_second_moment.array().square()).cwiseMax(0.0) * nd / (nd - 1.0);
  r.standard_errors = (var2 / nd).cwiseSqrt();

  r.mean_ok = true;
  for (Eigen::Index a = 0; a < p; ++a) {
    if (std::abs(r.mean(a)) > 4.0 * r.mean_standard_errors(a) + 1e-12) r.mean_ok = false;
  }
  r.second_moment_ok = true;
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b) {
      const double diff = std::abs(r.empirical_second_moment(a, b) - r.exact(a, b));
      const double tol = std::max(4.0 * r.standard_errors(a, b), 0.03 * std::abs(r.exact(a, b)));
      if (diff > tol + 1e-12) r.second_moment_ok = false;
      const double scale = std::sqrt(r.exact(a, a) * r.exact(b, b));
      if (scale > 0.0) r.max_abs_rel_err = std::max(r.max_abs_rel_err, diff / scale);
    }
  }
  for (Eigen::Index a = 0; a < p; ++a) {
    if (r.exact(a, a) > 0.0 && 4.0 * r.standard_errors(a, a) > 0.25 * r.exact(a, a)) {
      r.low_power = true;
    }
  }
  return r;
}

/// Plug-in estimate of beta_t = E[Y_t | T in S] from a sample, pooling within
/// the strata of `partition`. Within-stratum means of Y among T = t are
/// aggregated with weights p_{S,k} n_k when `known_cell_probs` (J x K, rows
/// j = 1..J) is given, and with weights n_{S,k} otherwise.
inline Eigen::VectorXd stratified_plugin_estimator(
    const std::vector<ObservationRecord>& records, const std::vector<int>& partition,
    const Subpopulation& S, const MomentFamily& family,
    const std::optional<Eigen::MatrixXd>& known_cell_probs = std::nullopt) {
  if (!family.is_mean()) throw ValidationError("plug-in estimator supports the mean family only");
  const int J = S.J();
  const int K = partition.empty() ? 0 : *std::max_element(partition.begin(), partition.end()) + 1;
  if (K == 0) throw ValidationError("plug-in estimator: empty partition");
  if (known_cell_probs && (known_cell_probs->rows() != J || known_cell_probs->cols() != K)) {
    throw ValidationError("plug-in estimator: known cell probabilities must be J x K");
  }
  Eigen::MatrixXd count = Eigen::MatrixXd::Zero(J + 1, K);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(J + 1, K);
  for (const auto& w : records) {
    if (w.x < 0 || w.x >= static_cast<int>(partition.size()) || w.t < 0 || w.t > J) {
      throw ValidationError("plug-in estimator: record outside the support or treatment set");
    }
    const int k = partition[w.x];
    count(w.t, k) += 1.0;
    total(w.t, k) += w.y;
  }
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t <= J; ++t) {
      if (count(t, k) == 0.0) throw EmptyCellError(k, t);
    }
  }
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    if (known_cell_probs) {
      double ps = 0.0;
      for (int j : S.members()) {
        ps += j == 0 ? 1.0 - known_cell_probs->col(k).sum() : (*known_cell_probs)(j - 1, k);
      }
      weight(k) = ps * count.col(k).sum();
    } else {
      for (int j : S.members()) weight(k) += count(j, k);
    }
  }
  weight /= weight.sum();
  const Eigen::MatrixXd cell_mean = total.cwiseQuotient(count);
  return cell_mean * weight;
}

struct StudyConfig {
  std::vector<int> partition;
  /// Known cell probabilities (J x K); unknown-probability weights when empty.
  std::optional<Eigen::MatrixXd> known_cell_probs;
  std::size_t replications = 1000;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  /// Contrast a; defaults to (-1, 1, 0, ...).
  std::optional<Eigen::VectorXd> contrast;
  std::size_t bootstrap = 200;
  int threads = 1;
};

struct StudyReport {
  std::size_t replications = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool known_probs = false;
  Eigen::VectorXd contrast;
  Eigen::VectorXd beta_star;
  Eigen::VectorXd mean_estimate;
  /// n Var(beta_hat_t) across replications.
  Eigen::VectorXd scaled_variance;
  double contrast_scaled_variance = 0.0;
  double contrast_bootstrap_se = 0.0;
  double contrast_mean_abs_error = 0.0;
  /// a' V a under the known, parametric and unknown regimes.
  double bound_k = 0.0;
  double bound_p = 0.0;
  double bound_uk = 0.0;
};

/// Replicates the plug-in estimator and reports n Var(a' beta_hat) next to the
/// three bounds. Report only; nothing is asserted.
inline StudyReport variance_study(const Dgp& dgp, const Subpopulation& S, const MomentFamily& family,
                                  const StudyConfig& cfg) {
  if (cfg.replications < 2) throw ValidationError("variance study: need at least 2 replications");
  StudyReport rep;
  rep.replications = cfg.replications;
  rep.n = cfg.n;
  rep.seed = cfg.seed;
  rep.known_probs = cfg.known_cell_probs.has_value();
  const int T = dgp.J() + 1;
  if (cfg.contrast) {
    if (cfg.contrast->size() != T) throw ValidationError("variance study: contrast has wrong length");
    rep.contrast = *cfg.contrast;
  } else {
    rep.contrast = Eigen::VectorXd::Zero(T);
    rep.contrast(0) = -1.0;
    rep.contrast(1) = 1.0;
  }
  const SecondMoments sm = second_moments(dgp, S, family, dgp.propensity());
  rep.beta_star = sm.moments.beta;
  const Eigen::MatrixXd jac = jacobian_matrix(sm.moments);
  const auto& a = rep.contrast;
  rep.bound_k = a.dot(efficiency_bound(jac, sm.M_k).V * a);
  rep.bound_p = a.dot(efficiency_bound(jac, sm.M_p).V * a);
  rep.bound_uk = a.dot(efficiency_bound(jac, sm.M_uk).V * a);

  Eigen::MatrixXd est(T, cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    const auto sample = draw_sample(dgp, cfg.n, splitmix64(cfg.seed ^ (0xa5a5a5a5ULL + r)));
    est.col(static_cast<Eigen::Index>(r)) =
        stratified_plugin_estimator(sample, cfg.partition, S, family, cfg.known_cell_probs);
  });
  const double R = static_cast<double>(cfg.replications);
  const double nd = static_cast<double>(cfg.n);
  rep.mean_estimate = est.rowwise().mean();
  const Eigen::MatrixXd centered = est.colwise() - rep.mean_estimate;
  rep.scaled_variance = nd * centered.rowwise().squaredNorm().transpose() / (R - 1.0);
  const Eigen::RowVectorXd c = a.transpose() * est;
  auto sample_var = [](const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / (static_cast<double>(v.size()) - 1.0);
  };
  std::vector<double> cv(c.data(), c.data() + c.size());
  rep.contrast_scaled_variance = nd * sample_var(cv);
  const double truth = a.dot(rep.beta_star);
  for (double x : cv) rep.contrast_mean_abs_error += std::abs(x - truth) / R;

  // Nonparametric bootstrap over replications for the SE of the scaled variance.
  if (cfg.bootstrap >= 2) {
    std::vector<double> boot(cfg.bootstrap);
    for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
      CounterStream rng(cfg.seed ^ 0xb007b007ULL, b);
      std::vector<double> resample(cv.size());
      for (auto& x : resample) {
        const auto idx = static_cast<std::size_t>(rng.uniform() * R);
        x = cv[std::min(idx, cv.size() - 1)];
      }
      boot[b] = nd * sample_var(resample);
    }
    rep.contrast_bootstrap_se = std::sqrt(sample_var(boot));
  }
  return rep;
}

}  // namespace effbound
