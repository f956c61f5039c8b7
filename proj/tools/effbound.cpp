// Batch front end: reads a DGP/task config, runs one task and writes a report.
//
// Exit codes: 0 success, 1 malformed input, 2 validation failure,
// 3 numeric assertion failure, 4 Monte Carlo verification failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "effbound/effbound.hpp"

namespace {

using namespace effbound;

enum ExitCode { kOk = 0, kMalformed = 1, kInvalid = 2, kNumeric = 3, kMcFailure = 4 };

struct Flags {
  std::string config;
  std::string out;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_depth;
  double p_min = kDefaultPMin;
  int threads = 0;
};

void emit(const Flags& f, const std::string& content) {
  if (f.out.empty()) {
    std::cout << content;
  } else {
    write_atomic(f.out, content);
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string matrices_csv(const std::vector<std::pair<std::string, Eigen::MatrixXd>>& items) {
  std::string out = "matrix,row,col,value\n";
  for (const auto& [name, m] : items) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out += name + "," + std::to_string(r) + "," + std::to_string(c) + "," +
               io_detail::format_double(m(r, c)) + "\n";
      }
    }
  }
  return out;
}

int run_validate(const Flags& f, const TaskConfig& cfg) {
  const ValidationReport rep = validate_dgp(cfg.dgp, f.p_min);
  emit(f, dump(validation_report_to_json(rep)));
  return rep.pass() ? kOk : kInvalid;
}

int run_bound(const Flags& f, const TaskConfig& cfg) {
  const auto& S = cfg.dgp.subpopulation();
  const BoundReport rep = compute_bounds(cfg.dgp, S, cfg.family, cfg.parametric_model());
  if (f.format == "csv") {
    emit(f, bound_report_to_csv(rep));
    return kOk;
  }
  json j = bound_report_to_json(rep);
  j["model"] = model_name(cfg.parametric_model());
  if (cfg.dgp.J() == 1) {
    try {
      const ClosedFormBound cf = closed_form_bound(cfg.dgp, S, cfg.family, cfg.parametric_model());
      j["closed_form"] = {{"name", cf.name}, {"value", cf.value}, {"generic_contrast", cf.generic_contrast}};
    } catch (const ValidationError&) {
      // No displayed closed form for this (S, moment) pair.
    }
  }
  emit(f, dump(j));
  return kOk;
}

int run_decompose(const Flags& f, const TaskConfig& cfg) {
  const auto* strat = std::get_if<StratifiedModel>(&cfg.parametric_model());
  if (!strat) throw ValidationError("decompose needs a stratified propensity model");
  const auto& S = cfg.dgp.subpopulation();
  const MomentSolution sol = solve_beta(cfg.dgp, S, cfg.family);
  const DeltaDecomposition dd = delta_decomposition(cfg.dgp, S, sol, *strat);
  const StratifiedClosedForm cf = stratified_bound_closed_form(cfg.dgp, S, sol, *strat);
  const SecondMoments sm = second_moments(cfg.dgp, S, cfg.family, cfg.parametric_model());
  const double closure = linalg::max_abs(sm.M_uk - sm.M_k - dd.delta0 - dd.delta1);
  const double two_route = linalg::max_abs(cf.M_p - sm.M_p);
  if (closure > 1e-10) throw NumericAssertionError("decomposition does not close M^uk - M^k");
  if (two_route > 1e-10) throw NumericAssertionError("stratified closed form disagrees with M^p");
  std::optional<RefinementTrace> trace;
  if (!cfg.refinement.empty()) {
    trace = delta0_refinement_limit(cfg.dgp, S, cfg.family, cfg.refinement);
    if (!trace->nonincreasing) throw NumericAssertionError("trace of Delta^0 increased under refinement");
  }
  if (f.format == "csv") {
    emit(f, matrices_csv({{"delta0", dd.delta0}, {"delta1", dd.delta1}, {"M_k", cf.M_k},
                          {"M_p", cf.M_p}, {"M_uk", cf.M_uk}}));
    return kOk;
  }
  json j = {{"K", strat->K()},
            {"delta0", to_json(dd.delta0)},
            {"delta1", to_json(dd.delta1)},
            {"closed_form_M_k", to_json(cf.M_k)},
            {"closed_form_M_p", to_json(cf.M_p)},
            {"closed_form_M_uk", to_json(cf.M_uk)},
            {"closure_residual", closure},
            {"two_route_residual", two_route}};
  if (trace) j["refinement"] = refinement_to_json(*trace);
  emit(f, dump(j));
  return kOk;
}

int run_sequence(const Flags& f, const TaskConfig& cfg) {
  if (!cfg.sequence) throw SchemaError("/sequence", "missing required key");
  const SequenceConfig& sc = *cfg.sequence;
  int depth = f.max_depth.value_or(sc.max_depth);
  if (depth <= 0) {
    if (sc.spec.partition) {
      depth = sc.spec.partition->depth();
    } else if (const auto* m = std::get_if<FullRankLogisticModel>(&cfg.dgp.propensity())) {
      depth = m->n();
    } else if (const auto* m = std::get_if<DegenerateLogisticModel>(&cfg.dgp.propensity())) {
      depth = m->n();
    }
  }
  const ModelSequence seq = build_sequence(cfg.dgp, sc.spec, depth);
  const BoundCurve curve = bound_curve(cfg.dgp, cfg.dgp.subpopulation(), cfg.family, seq, f.p_min,
                                       resolve_threads(f.threads));
  const LimitVerdict verdict = classify_limit(curve);
  emit(f, f.format == "csv" ? curve_to_csv(curve) : dump(curve_to_json(curve, verdict)));
  return kOk;
}

int run_simulate(const Flags& f, const TaskConfig& cfg) {
  const auto& S = cfg.dgp.subpopulation();
  const std::uint64_t seed = f.seed.value_or(cfg.simulate.seed);
  const int threads = resolve_threads(f.threads);
  std::vector<McReport> reports;
  bool ok = true;
  for (Regime r : cfg.simulate.regimes) {
    reports.push_back(mc_verify_bound(cfg.dgp, S, cfg.family, cfg.parametric_model(), r,
                                      cfg.simulate.n, seed, threads));
    ok = ok && reports.back().pass();
  }
  std::optional<StudyReport> study;
  if (cfg.simulate.study) {
    StudyConfig sc = *cfg.simulate.study;
    sc.seed = seed;
    sc.threads = threads;
    study = variance_study(cfg.dgp, S, cfg.family, sc);
  }
  if (f.format == "csv") {
    emit(f, mc_reports_to_csv(reports));
    if (study) {
      if (f.out.empty()) std::cout << "\n" << study_report_to_csv(*study);
      else write_atomic(f.out + ".study.csv", study_report_to_csv(*study));
    }
  } else {
    json j = {{"n", cfg.simulate.n}, {"seed", seed}, {"pass", ok}, {"reports", json::array()}};
    for (const auto& r : reports) j["reports"].push_back(mc_report_to_json(r));
    if (study) j["study"] = study_report_to_json(*study);
    emit(f, dump(j));
  }
  return ok ? kOk : kMcFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric efficiency bounds on finite-support DGPs"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "DGP or task config (JSON)")->required();
    sub->add_option("--out", flags.out, "Output path (default: stdout)");
    sub->add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", flags.seed, "Monte Carlo seed (overrides the config)");
    sub->add_option("--max-depth", flags.max_depth, "Deepest sequence level");
    sub->add_option("--p-min", flags.p_min, "Overlap threshold")->check(CLI::PositiveNumber);
    sub->add_option("--threads", flags.threads, "Worker threads (default: EFFBOUND_THREADS or 1)")
        ->check(CLI::NonNegativeNumber);
  };
  std::string command;
  for (const auto& [name, help] :
       std::vector<std::pair<std::string, std::string>>{
           {"validate", "Check probabilities and overlap"},
           {"bound", "Second moments and bounds under the three regimes"},
           {"decompose", "Delta decomposition for a stratified propensity"},
           {"sequence", "Bound curve along a nested model sequence"},
           {"simulate", "Monte Carlo check of the efficient influence function"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    sub->callback([&command, name = name] { command = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const TaskConfig cfg = task_config_from_json(read_json_file(flags.config));
    if (command == "validate") return run_validate(flags, cfg);
    const ValidationReport rep = validate_dgp(cfg.dgp, flags.p_min);
    if (!rep.pass()) {
      std::cerr << dump(validation_report_to_json(rep));
      return kInvalid;
    }
    if (command == "bound") return run_bound(flags, cfg);
    if (command == "decompose") return run_decompose(flags, cfg);
    if (command == "sequence") return run_sequence(flags, cfg);
    return run_simulate(flags, cfg);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMalformed;
  } catch (const NumericAssertionError& e) {
    std::cerr << "numeric assertion failed: " << e.what() << "\n";
    return kNumeric;
  } catch (const DegenerateBoundError& e) {
    std::cerr << "degenerate bound: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMalformed;
  }
}
