// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "battery.hpp"
#include "effbound/effbound.hpp"
#include "effbound/fixtures.hpp"

namespace {

using namespace effbound;

struct Verdict {
  bool pass = true;
  std::string detail;
};

constexpr int kBatterySize = 200;
constexpr std::uint64_t kBatterySeed = 900000;
constexpr std::uint64_t kMcSeed = 20261015;

double max_abs(const Eigen::MatrixXd& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

std::string fmt(const char* f, double a) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

const std::vector<Dgp>& battery_dgps() {
  static const std::vector<Dgp> dgps = [] {
    std::vector<Dgp> out;
    for (int i = 0; i < kBatterySize; ++i) out.push_back(battery::random_stratified_dgp(kBatterySeed + i));
    return out;
  }();
  return dgps;
}

Verdict psd_ordering() {
  double worst_m = 0.0, worst_v = 0.0;
  for (const Dgp& d : battery_dgps()) {
    const SecondMoments sm = second_moments(d, d.subpopulation(), MomentFamily::mean(), d.propensity());
    const Eigen::MatrixXd jac = jacobian_matrix(sm.moments);
    const Eigen::MatrixXd vk = efficiency_bound(jac, sm.M_k).V;
    const Eigen::MatrixXd vp = efficiency_bound(jac, sm.M_p).V;
    const Eigen::MatrixXd vuk = efficiency_bound(jac, sm.M_uk).V;
    worst_m = std::min({worst_m, linalg::min_eigenvalue(sm.M_p - sm.M_k), linalg::min_eigenvalue(sm.M_uk - sm.M_p)});
    worst_v = std::min({worst_v, linalg::min_eigenvalue(vp - vk), linalg::min_eigenvalue(vuk - vp)});
  }
  return {worst_m >= -1e-10 && worst_v >= -1e-10,
          std::to_string(kBatterySize) + " DGPs, min eig M gaps " + fmt("%.2e", worst_m) + ", V gaps " + fmt("%.2e", worst_v)};
}

Verdict full_population_ancillarity() {
  double worst = 0.0, worst_delta = 0.0;
  for (const Dgp& base : battery_dgps()) {
    std::vector<int> all(base.J() + 1);
    for (int t = 0; t <= base.J(); ++t) all[t] = t;
    const Dgp d = base.with_subpopulation(all);
    const auto& model = std::get<StratifiedModel>(d.propensity());
    const SecondMoments sm = second_moments(d, d.subpopulation(), MomentFamily::mean(), model);
    worst = std::max({worst, max_abs(sm.M_uk - sm.M_k), max_abs(sm.M_p - sm.M_k)});
    const DeltaDecomposition dd = delta_decomposition(d, d.subpopulation(), sm.moments, model);
    worst_delta = std::max({worst_delta, max_abs(dd.delta0), max_abs(dd.delta1)});
  }
  return {worst <= 1e-12 && worst_delta == 0.0,
          fmt("max |M^uk - M^k| %.2e, max |Delta| %.2e", worst, worst_delta)};
}

Verdict two_route_agreement() {
  double worst = 0.0;
  for (const Dgp& d : battery_dgps()) {
    const auto& model = std::get<StratifiedModel>(d.propensity());
    const SecondMoments sm = second_moments(d, d.subpopulation(), MomentFamily::mean(), model);
    const StratifiedClosedForm cf = stratified_bound_closed_form(d, d.subpopulation(), sm.moments, model);
    worst = std::max(worst, max_abs(cf.M_p - sm.M_p));
  }
  return {worst <= 1e-10, fmt("max |closed form M^p - generic M^p| %.2e", worst)};
}

Verdict decomposition_closure() {
  double worst = 0.0;
  for (const Dgp& d : battery_dgps()) {
    const auto& model = std::get<StratifiedModel>(d.propensity());
    const SecondMoments sm = second_moments(d, d.subpopulation(), MomentFamily::mean(), model);
    const DeltaDecomposition dd = delta_decomposition(d, d.subpopulation(), sm.moments, model);
    worst = std::max(worst, max_abs(dd.delta0 + dd.delta1 - (sm.M_uk - sm.M_k)));
  }
  const Dgp d1 = fixtures::d1();
  const auto& m1 = std::get<StratifiedModel>(d1.propensity());
  const DeltaDecomposition dd1 = delta_decomposition(d1, d1.subpopulation(), MomentFamily::mean(), m1);
  const double oracle1 = battery::h_second_moment(d1, d1.subpopulation(), Regime::Unknown, m1)(1, 1);
  const Dgp d2 = fixtures::d2();
  const auto& m2 = std::get<StratifiedModel>(d2.propensity());
  const DeltaDecomposition dd2 = delta_decomposition(d2, d2.subpopulation(), MomentFamily::mean(), m2);
  const double oracle2 = battery::h_second_moment(d2, d2.subpopulation(), Regime::Unknown, m2)(1, 1);
  const bool ok = worst <= 1e-10 && max_abs(dd1.delta0) <= 1e-10 && std::abs(oracle1 - 0.2496) <= 1e-10 &&
                  std::abs(dd1.delta1(1, 1) - oracle1) <= 1e-10 && max_abs(dd2.delta1) == 0.0 &&
                  std::abs(oracle2 - 0.25) <= 1e-10 && std::abs(dd2.delta0(1, 1) - oracle2) <= 1e-10;
  return {ok, fmt("closure %.2e; D1 Delta1(1,1) = %.12g", worst, dd1.delta1(1, 1)) +
                  fmt(", D2 Delta0(1,1) = %.12g, |D2 Delta1| = %g", dd2.delta0(1, 1), max_abs(dd2.delta1))};
}

Verdict projection_geometry() {
  double worst = 0.0;
  double known_hp = 0.0;
  for (const Dgp& d : battery_dgps()) {
    const MomentSolution sol = solve_beta(d, d.subpopulation(), MomentFamily::mean());
    worst = std::max(worst, project_huk(d, d.subpopulation(), sol, d.propensity()).pythagoras_residual);
    known_hp = std::max(known_hp, project_huk(d, d.subpopulation(), sol, d.propensity(), Regime::Known).hp_norm2);
  }
  return {worst <= 1e-10 && known_hp == 0.0, fmt("max Pythagoras residual %.2e, known-regime E|h|^2 = %g", worst, known_hp)};
}

Verdict woodbury_lemma() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  std::uniform_int_distribution<int> dim(1, 4);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int J = dim(rng), K = dim(rng);
    Eigen::MatrixXd c(J, K);
    Eigen::VectorXd dv(K);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < dv.size(); ++i) dv(i) = u(rng);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(J * K, J * K);
    for (int i = 0; i < J; ++i) {
      for (int k = 0; k < K; ++k) {
        A(i * K + k, i * K + k) += c(i, k);
        for (int j = 0; j < J; ++j) A(i * K + k, j * K + k) += dv(k);
      }
    }
    worst = std::max(worst, max_abs(woodbury_inverse(c, dv) - A.fullPivLu().inverse()));
  }
  return {worst <= 1e-10, fmt("100 instances, max |formula - dense| %.2e", worst)};
}

Verdict closed_form_examples() {
  double worst = 0.0;
  std::string names;
  auto check = [&](const Dgp& d, const MomentFamily& fam) {
    const ClosedFormBound cf = closed_form_bound(d, d.subpopulation(), fam, d.propensity());
    worst = std::max(worst, std::abs(cf.value - cf.generic_contrast));
  };
  for (const Dgp& d : {fixtures::d1(), fixtures::d2()}) {
    check(d.with_subpopulation({0, 1}), MomentFamily::mean());
    check(d, MomentFamily::mean());
  }
  for (double tau : {0.25, 0.5, 0.75}) check(fixtures::d1(), MomentFamily::quantile(tau));
  return {worst <= 1e-10, fmt("ATE/ATT on D1, D2 and QTT on D1: max |closed form - contrast| %.2e", worst)};
}

LimitVerdict curve_verdict(const Dgp& d, const SequenceSpec& spec, int depth, BoundCurve* out = nullptr) {
  const BoundCurve c = bound_curve(d, d.subpopulation(), MomentFamily::mean(), build_sequence(d, spec, depth),
                                   kDefaultPMin, resolve_threads());
  if (out) *out = c;
  return classify_limit(c);
}

Verdict asymptotic_attainment() {
  const LimitVerdict a = curve_verdict(fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_dyadic_partition()), 4);
  const LimitVerdict b = curve_verdict(fixtures::d3_logistic_full(), SequenceSpec::logistic_full(), 16);
  const bool ok = a.attains() && b.attains() && a.residual_max <= 1e-10 && a.gap_eig <= 1e-10 &&
                  b.residual_max <= 1e-10 && b.gap_eig <= 1e-10;
  return {ok, fmt("dyadic residual %.2e gap %.2e", a.residual_max, a.gap_eig) +
                  fmt("; logistic residual %.2e gap %.2e", b.residual_max, b.gap_eig)};
}

Verdict asymptotic_non_attainment() {
  constexpr double tol = 1e-8;
  bool ok = true;
  std::string detail;
  const std::pair<const char*, std::function<LimitVerdict()>> cases[] = {
      {"degenerate", [] { return curve_verdict(fixtures::d3_logistic_degenerate(), SequenceSpec::logistic_degenerate(), 16); }},
      {"frozen", [] { return curve_verdict(fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_frozen_partition()), 4); }}};
  for (const auto& [name, run] : cases) {
    try {
      const LimitVerdict v = run();
      double floor = std::numeric_limits<double>::infinity();
      bool agree = true;
      for (std::size_t i = 0; i < v.residual_history.size(); ++i) {
        floor = std::min(floor, v.residual_history[i]);
        agree = agree && v.residual_history[i] > tol && v.h_distance_history[i] > tol && v.gap_history[i] > tol;
      }
      ok = ok && v.kind == LimitVerdict::Kind::Gap && v.gap_eig >= 1e-4 && floor >= 1e-4 && agree;
      detail += std::string(detail.empty() ? "" : "; ") + name + fmt(" gap %.3g, residual floor %.3g", v.gap_eig, floor);
    } catch (const NumericAssertionError& e) {
      ok = false;
      detail += std::string(name) + ": " + e.what();
    }
  }
  return {ok, detail};
}

Verdict monotone_curve() {
  double worst = 0.0;
  const std::vector<std::pair<Dgp, SequenceSpec>> cases = {
      {fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_dyadic_partition())},
      {fixtures::d3_stratified(), SequenceSpec::stratified(fixtures::d3_frozen_partition())},
      {fixtures::d3_logistic_full(), SequenceSpec::logistic_full()},
      {fixtures::d3_logistic_degenerate(), SequenceSpec::logistic_degenerate()}};
  for (const auto& [d, spec] : cases) {
    BoundCurve c;
    curve_verdict(d, spec, spec.partition ? 4 : 16, &c);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      worst = std::min(worst, linalg::min_eigenvalue(c.points[i].V_pn - c.points[i - 1].V_pn));
    }
  }
  const Dgp d3 = fixtures::d3_stratified();
  const auto part = fixtures::d3_dyadic_partition();
  std::vector<std::vector<int>> levels;
  for (int n = 0; n <= part->depth(); ++n) levels.push_back(part->partition_at(n));
  const RefinementTrace tr = delta0_refinement_limit(d3, d3.subpopulation(), MomentFamily::mean(), levels);
  std::string traces;
  for (const auto& s : tr.steps) traces += fmt(traces.empty() ? "%.3g" : " -> %.3g", s.trace_delta0);
  return {worst >= -1e-10 && tr.nonincreasing && tr.reaches_zero,
          fmt("min eig of V^{p,n+1} - V^{p,n} %.2e; trace Delta0 ", worst) + traces};
}

Verdict monte_carlo() {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  double worst = 0.0;
  int runs = 0;
  for (const Dgp& d : {fixtures::d1(), fixtures::d2()}) {
    for (const MomentFamily& fam : {MomentFamily::mean(), MomentFamily::quantile(0.5)}) {
      for (Regime r : {Regime::Known, Regime::Parametric, Regime::Unknown}) {
        const McReport rep = mc_verify_bound(d, d.subpopulation(), fam, d.propensity(), r, 100000, kMcSeed, resolve_threads());
        ok = ok && rep.pass();
        worst = std::max(worst, rep.max_abs_rel_err);
        ++runs;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok && secs <= 60.0, std::to_string(runs) + " runs, max normalized error " + fmt("%.4f, %.1f s", worst, secs)};
}

Verdict estimator_sanity() {
  const auto start = std::chrono::steady_clock::now();
  const Dgp d = fixtures::d1();
  StudyConfig cfg;
  cfg.partition = {0, 1};
  Eigen::MatrixXd cells(1, 2);
  cells << 0.4, 0.6;
  cfg.known_cell_probs = cells;
  cfg.replications = 1000;
  cfg.n = 2000;
  cfg.seed = kMcSeed;
  cfg.threads = resolve_threads();
  const StudyReport rep = variance_study(d, d.subpopulation(), MomentFamily::mean(), cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double rel = std::abs(rep.contrast_scaled_variance - rep.bound_k) / rep.bound_k;
  return {rel <= 0.10 && secs <= 120.0,
          fmt("n Var = %.4f vs a'V^k a = %.4f", rep.contrast_scaled_variance, rep.bound_k) +
              fmt(" (%.1f%% off, %.1f s)", 100.0 * rel, secs)};
}

}  // namespace

int main() {
  const std::pair<const char*, Verdict (*)()> criteria[] = {
      {"1 PSD ordering", psd_ordering},
      {"2 full-population ancillarity", full_population_ancillarity},
      {"3 two-route agreement", two_route_agreement},
      {"4 decomposition closure", decomposition_closure},
      {"5 projection geometry", projection_geometry},
      {"6 Woodbury inverse", woodbury_lemma},
      {"7 closed-form examples", closed_form_examples},
      {"8 asymptotic attainment", asymptotic_attainment},
      {"9 asymptotic non-attainment", asymptotic_non_attainment},
      {"10 monotone curve", monotone_curve},
      {"11 Monte Carlo verification", monte_carlo},
      {"12 estimator sanity", estimator_sanity}};
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
