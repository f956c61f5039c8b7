#pragma once

// JSON schema for DGPs and task configs, and JSON/CSV serialization of reports.
// Parse errors carry the JSON pointer of the offending key.

#include <Eigen/Dense>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "effbound/asymptotics.hpp"
#include "effbound/bounds.hpp"
#include "effbound/simulate.hpp"

namespace effbound {

using json = nlohmann::json;

/// Malformed or schema-violating input; `path()` is a JSON pointer.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error((path.empty() ? std::string("/") : path) + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

namespace io_detail {

// A JSON value together with its pointer, for error reporting.
class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& value() const { return *j_; }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node at(const std::string& key) const {
    if (!j_->is_object()) throw SchemaError(path_, "expected an object");
    auto it = j_->find(key);
    if (it == j_->end()) throw SchemaError(path_ + "/" + key, "missing required key");
    return Node(*it, path_ + "/" + key);
  }

  std::optional<Node> find(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return at(key);
  }

  std::size_t size() const {
    if (!j_->is_array()) throw SchemaError(path_, "expected an array");
    return j_->size();
  }

  Node operator[](std::size_t i) const {
    size();
    return Node((*j_)[i], path_ + "/" + std::to_string(i));
  }

  double number() const {
    if (!j_->is_number()) throw SchemaError(path_, "expected a number");
    return j_->get<double>();
  }

  int integer() const {
    if (!j_->is_number_integer()) throw SchemaError(path_, "expected an integer");
    return j_->get<int>();
  }

  std::string string() const {
    if (!j_->is_string()) throw SchemaError(path_, "expected a string");
    return j_->get<std::string>();
  }

  std::vector<int> int_array() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)[i].integer();
    return out;
  }

  std::vector<double> number_array() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)[i].number();
    return out;
  }

  Eigen::VectorXd vector() const {
    const auto v = number_array();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  /// Row-major array of equal-length number arrays.
  Eigen::MatrixXd matrix() const {
    const std::size_t rows = size();
    if (rows == 0) throw SchemaError(path_, "expected a nonempty matrix");
    const std::size_t cols = (*this)[0].size();
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const Node row = (*this)[r];
      if (row.size() != cols) throw SchemaError(row.path(), "ragged matrix row");
      for (std::size_t c = 0; c < cols; ++c) out(r, c) = row[c].number();
    }
    return out;
  }

 private:
  const json* j_;
  std::string path_;
};

// Runs `make`, rethrowing library validation errors as schema errors at `path`.
template <class F>
auto at_path(const std::string& path, F&& make) -> decltype(make()) {
  try {
    return make();
  } catch (const ValidationError& e) {
    throw SchemaError(path, e.what());
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io_detail

// ---------------------------------------------------------------- parsing

inline PropensityModel propensity_from_json(const io_detail::Node& node, int M, int J) {
  const std::string type = node.at("type").string();
  return io_detail::at_path(node.path(), [&]() -> PropensityModel {
    if (type == "stratified") {
      const auto part = node.at("partition").int_array();
      if (static_cast<int>(part.size()) != M) {
        throw SchemaError(node.path() + "/partition", "expected one stratum per support point");
      }
      const Eigen::MatrixXd cells = node.at("cell_probs").matrix();
      if (cells.rows() != J) {
        throw SchemaError(node.path() + "/cell_probs", "expected J = " + std::to_string(J) + " rows");
      }
      return StratifiedModel(part, cells);
    }
    if (type == "logistic_full") {
      const Eigen::MatrixXd dict = node.at("dictionary").matrix();
      if (dict.rows() != M) {
        throw SchemaError(node.path() + "/dictionary", "expected one row per support point");
      }
      return FullRankLogisticModel(dict, node.at("Gamma").matrix());
    }
    if (type == "logistic_degenerate") {
      const Eigen::MatrixXd dict = node.at("dictionary").matrix();
      if (dict.rows() != M) {
        throw SchemaError(node.path() + "/dictionary", "expected one row per support point");
      }
      return DegenerateLogisticModel(dict, node.at("gamma").vector(), J);
    }
    if (type == "tabular") {
      return TabularModel(node.at("probs").matrix());
    }
    throw SchemaError(node.path() + "/type", "unknown propensity type '" + type + "'");
  });
}

inline OutcomeLaw outcome_law_from_json(const io_detail::Node& node) {
  const std::string kind = node.at("kind").string();
  const io_detail::Node params = node.at("params");
  return io_detail::at_path(node.path(), [&] {
    if (kind == "gaussian") {
      return OutcomeLaw::gaussian(params.at("mean").number(), params.at("sd").number());
    }
    if (kind == "discrete") {
      const io_detail::Node atoms = params.at("atoms");
      std::vector<std::pair<double, double>> out;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const io_detail::Node a = atoms[i];
        if (a.size() != 2) throw SchemaError(a.path(), "atom must be [value, prob]");
        out.emplace_back(a[0].number(), a[1].number());
      }
      return OutcomeLaw::discrete(std::move(out));
    }
    throw SchemaError(node.path() + "/kind", "unknown outcome kind '" + kind + "'");
  });
}

inline Dgp dgp_from_json(const io_detail::Node& node) {
  const int J = node.at("treatments").integer();
  if (J < 1) throw SchemaError(node.path() + "/treatments", "J must be >= 1");
  const io_detail::Node s_node = node.at("subpopulation");
  TreatmentSet treatments =
      io_detail::at_path(s_node.path(), [&] { return TreatmentSet(J, s_node.int_array()); });

  const io_detail::Node sup = node.at("support");
  std::vector<std::string> labels;
  std::vector<double> probs;
  std::vector<std::vector<double>> embeddings;
  for (std::size_t i = 0; i < sup.size(); ++i) {
    const io_detail::Node p = sup[i];
    labels.push_back(p.at("label").string());
    probs.push_back(p.at("prob").number());
    if (auto e = p.find("embedding")) embeddings.push_back(e->number_array());
  }
  if (!embeddings.empty() && embeddings.size() != labels.size()) {
    throw SchemaError(sup.path(), "embedding must be given for every point or none");
  }
  DiscreteSupport support = io_detail::at_path(
      sup.path(), [&] { return DiscreteSupport(labels, probs, embeddings); });
  const int M = support.size();

  const io_detail::Node outs = node.at("outcomes");
  std::vector<std::optional<OutcomeLaw>> laws(static_cast<std::size_t>(J + 1) * M);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const io_detail::Node o = outs[i];
    const int t = o.at("t").integer();
    if (t < 0 || t > J) throw SchemaError(o.path() + "/t", "treatment outside 0..J");
    const io_detail::Node xn = o.at("x");
    int x = 0;
    if (xn.value().is_string()) {
      x = io_detail::at_path(xn.path(), [&] { return support.index_of(xn.string()); });
    } else {
      x = xn.integer();
      if (x < 0 || x >= M) throw SchemaError(xn.path(), "support index out of range");
    }
    auto& slot = laws[static_cast<std::size_t>(t) * M + x];
    if (slot) throw SchemaError(o.path(), "duplicate outcome law");
    slot = outcome_law_from_json(o);
  }
  std::vector<OutcomeLaw> outcomes;
  outcomes.reserve(laws.size());
  for (int t = 0; t <= J; ++t) {
    for (int m = 0; m < M; ++m) {
      const auto& slot = laws[static_cast<std::size_t>(t) * M + m];
      if (!slot) {
        throw SchemaError(outs.path(), "missing outcome law for t=" + std::to_string(t) + ", x=" +
                                           support.label(m));
      }
      outcomes.push_back(*slot);
    }
  }
  PropensityModel prop = propensity_from_json(node.at("propensity"), M, J);
  return io_detail::at_path(node.path(), [&] {
    return Dgp(std::move(treatments), std::move(support), std::move(outcomes), std::move(prop));
  });
}

inline Dgp dgp_from_json(const json& j) { return dgp_from_json(io_detail::Node(j, "")); }

inline MomentFamily moment_from_json(const io_detail::Node& node) {
  const std::string kind = node.at("kind").string();
  if (kind == "mean") return MomentFamily::mean();
  if (kind == "quantile") {
    const io_detail::Node tau = node.at("tau");
    return io_detail::at_path(tau.path(), [&] { return MomentFamily::quantile(tau.number()); });
  }
  throw SchemaError(node.path() + "/kind", "unknown moment kind '" + kind + "'");
}

/// Reads a file and parses it as JSON; syntax errors become SchemaError.
inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
}

struct SequenceConfig {
  SequenceSpec spec;
  int max_depth = 0;
};

struct SimulateConfig {
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  std::vector<Regime> regimes{Regime::Known, Regime::Parametric, Regime::Unknown};
  std::optional<StudyConfig> study;
};

/// Everything a CLI invocation needs besides its flags.
struct TaskConfig {
  explicit TaskConfig(Dgp d) : dgp(std::move(d)) {}

  Dgp dgp;
  MomentFamily family = MomentFamily::mean();
  /// Parametric propensity model used for the bound; the DGP's own model when absent.
  std::optional<PropensityModel> model;
  std::optional<SequenceConfig> sequence;
  /// Refining partitions for the trace of Delta^0.
  std::vector<std::vector<int>> refinement;
  SimulateConfig simulate;

  const PropensityModel& parametric_model() const { return model ? *model : dgp.propensity(); }
};

namespace io_detail {

inline std::shared_ptr<const NestedPartition> partition_from_json(const Node& node, int M) {
  return at_path(node.path(), [&] {
    if (auto d = node.find("dyadic_depth")) {
      return std::make_shared<const NestedPartition>(NestedPartition::dyadic(M, d->integer()));
    }
    const Node levels = node.at("levels");
    std::vector<std::vector<int>> lv;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      lv.push_back(levels[i].int_array());
      if (static_cast<int>(lv.back().size()) != M) {
        throw SchemaError(levels[i].path(), "expected one cell label per support point");
      }
    }
    return std::make_shared<const NestedPartition>(lv);
  });
}

}  // namespace io_detail

/// Task config: {"dgp": {...}, "moment": {...}, "model": {...}, "sequence": {...},
/// "decompose": {...}, "simulate": {...}}. A document without "dgp" is read as a bare DGP.
inline TaskConfig task_config_from_json(const json& j) {
  const io_detail::Node root(j, "");
  if (!j.is_object()) throw SchemaError("", "expected an object");
  const bool bare = !root.has("dgp");
  TaskConfig cfg(bare ? dgp_from_json(root) : dgp_from_json(root.at("dgp")));
  if (bare) return cfg;
  const int M = cfg.dgp.M();
  const int J = cfg.dgp.J();
  if (auto m = root.find("moment")) cfg.family = moment_from_json(*m);
  if (auto m = root.find("model")) cfg.model = propensity_from_json(*m, M, J);
  if (auto s = root.find("sequence")) {
    SequenceConfig sc;
    const std::string fam = s->at("family").string();
    if (fam == "stratified_nested") {
      sc.spec = SequenceSpec::stratified(io_detail::partition_from_json(s->at("partition"), M));
    } else if (fam == "logistic_full") {
      sc.spec = SequenceSpec::logistic_full();
    } else if (fam == "logistic_degenerate") {
      sc.spec = SequenceSpec::logistic_degenerate();
    } else {
      throw SchemaError(s->path() + "/family", "unknown sequence family '" + fam + "'");
    }
    if (auto d = s->find("max_depth")) sc.max_depth = d->integer();
    cfg.sequence = sc;
  }
  if (auto d = root.find("decompose")) {
    if (auto p = d->find("partitions")) {
      for (std::size_t i = 0; i < p->size(); ++i) cfg.refinement.push_back((*p)[i].int_array());
    }
  }
  if (auto s = root.find("simulate")) {
    if (auto n = s->find("n")) {
      const int v = n->integer();
      if (v < 2) throw SchemaError(n->path(), "n must be >= 2");
      cfg.simulate.n = static_cast<std::size_t>(v);
    }
    if (auto seed = s->find("seed")) {
      if (!seed->value().is_number_unsigned()) throw SchemaError(seed->path(), "expected a u64");
      cfg.simulate.seed = seed->value().get<std::uint64_t>();
    }
    if (auto r = s->find("regimes")) {
      cfg.simulate.regimes.clear();
      for (std::size_t i = 0; i < r->size(); ++i) {
        const io_detail::Node e = (*r)[i];
        cfg.simulate.regimes.push_back(
            io_detail::at_path(e.path(), [&] { return regime_from_string(e.string()); }));
      }
    }
    if (auto st = s->find("study")) {
      StudyConfig sc;
      sc.seed = cfg.simulate.seed;
      sc.partition = st->at("partition").int_array();
      if (static_cast<int>(sc.partition.size()) != M) {
        throw SchemaError(st->path() + "/partition", "expected one stratum per support point");
      }
      const std::string probs = st->at("probs").string();
      if (probs == "known") {
        const StratifiedModel coarse = io_detail::at_path(
            st->path() + "/partition", [&] { return coarsen_to_partition(cfg.dgp, sc.partition); });
        sc.known_cell_probs = coarse.cell_probs();
      } else if (probs != "unknown") {
        throw SchemaError(st->path() + "/probs", "expected 'known' or 'unknown'");
      }
      if (auto r = st->find("replications")) sc.replications = static_cast<std::size_t>(r->integer());
      if (auto n = st->find("n")) sc.n = static_cast<std::size_t>(n->integer());
      if (sc.replications < 2) throw SchemaError(st->path() + "/replications", "must be >= 2");
      if (sc.n < 1) throw SchemaError(st->path() + "/n", "must be >= 1");
      if (auto c = st->find("contrast")) {
        sc.contrast = c->vector();
        if (sc.contrast->size() != J + 1) throw SchemaError(c->path(), "expected J+1 entries");
      }
      cfg.simulate.study = sc;
    }
  }
  return cfg;
}

// ---------------------------------------------------------------- writing

inline json to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// Non-finite doubles are written as strings so they survive a round trip.
inline json number_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

inline json propensity_to_json(const PropensityModel& model) {
  if (const auto* s = std::get_if<StratifiedModel>(&model)) {
    return {{"type", "stratified"}, {"partition", s->partition()}, {"cell_probs", to_json(s->cell_probs())}};
  }
  if (const auto* f = std::get_if<FullRankLogisticModel>(&model)) {
    return {{"type", "logistic_full"}, {"dictionary", to_json(f->dictionary())}, {"Gamma", to_json(f->gamma())}};
  }
  if (const auto* d = std::get_if<DegenerateLogisticModel>(&model)) {
    return {{"type", "logistic_degenerate"}, {"dictionary", to_json(d->dictionary())},
            {"gamma", to_json(d->gamma())}};
  }
  return {{"type", "tabular"}, {"probs", to_json(probability_table(model))}};
}

inline json dgp_to_json(const Dgp& dgp) {
  json out;
  out["treatments"] = dgp.J();
  out["subpopulation"] = dgp.subpopulation().members();
  json support = json::array();
  for (int m = 0; m < dgp.M(); ++m) {
    json p = {{"label", dgp.support().label(m)}, {"prob", dgp.support().prob(m)}};
    if (dgp.support().has_embeddings()) p["embedding"] = dgp.support().embedding(m);
    support.push_back(std::move(p));
  }
  out["support"] = std::move(support);
  json outcomes = json::array();
  for (int t = 0; t <= dgp.J(); ++t) {
    for (int m = 0; m < dgp.M(); ++m) {
      const OutcomeLaw& law = dgp.outcome(t, m);
      json o = {{"t", t}, {"x", m}};
      if (law.is_gaussian()) {
        o["kind"] = "gaussian";
        o["params"] = {{"mean", law.as_gaussian().mean}, {"sd", law.as_gaussian().sd}};
      } else {
        json atoms = json::array();
        for (const auto& [v, p] : law.as_discrete().atoms) atoms.push_back({v, p});
        o["kind"] = "discrete";
        o["params"] = {{"atoms", std::move(atoms)}};
      }
      outcomes.push_back(std::move(o));
    }
  }
  out["outcomes"] = std::move(outcomes);
  out["propensity"] = propensity_to_json(dgp.propensity());
  return out;
}

inline json validation_report_to_json(const ValidationReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"x", p.x}, {"label", p.label}, {"min_prob", p.min_prob},
                      {"prob_sum", p.prob_sum}, {"overlap_ok", p.overlap_ok}});
  }
  return {{"pass", r.pass()},
          {"p_min", r.p_min},
          {"p_S_star", r.p_S_star},
          {"points", std::move(points)},
          {"structural_errors", r.structural_errors},
          {"overlap_failures", r.overlap_failures}};
}

inline json bound_report_to_json(const BoundReport& r) {
  json out;
  out["moment"] = r.moments.family.name();
  out["beta_star"] = to_json(r.moments.beta);
  out["p_S_star"] = r.moments.p_s_star;
  out["M_k"] = to_json(r.M_k);
  out["M_p"] = to_json(r.M_p);
  out["M_uk"] = to_json(r.M_uk);
  out["V_k"] = to_json(r.V_k);
  out["V_p"] = to_json(r.V_p);
  out["V_uk"] = to_json(r.V_uk);
  out["delta0"] = r.delta0 ? to_json(*r.delta0) : json(nullptr);
  out["delta1"] = r.delta1 ? to_json(*r.delta1) : json(nullptr);
  out["pythagoras_residual"] = r.pythagoras_residual;
  json cond = json::object();
  for (const auto& [k, v] : r.condition_numbers) cond[k] = number_json(v);
  out["condition_numbers"] = std::move(cond);
  out["degenerate"] = r.degenerate;
  out["warnings"] = r.warnings;
  return out;
}

/// Matrices and scalars of a BoundReport as written by bound_report_to_json.
/// The moment solution is not serialized beyond beta*.
inline BoundReport bound_report_from_json(const json& j) {
  const io_detail::Node root(j, "");
  BoundReport r;
  r.moments.beta = root.at("beta_star").vector();
  r.moments.p_s_star = root.at("p_S_star").number();
  r.M_k = root.at("M_k").matrix();
  r.M_p = root.at("M_p").matrix();
  r.M_uk = root.at("M_uk").matrix();
  r.V_k = root.at("V_k").matrix();
  r.V_p = root.at("V_p").matrix();
  r.V_uk = root.at("V_uk").matrix();
  if (!j.at("delta0").is_null()) r.delta0 = root.at("delta0").matrix();
  if (!j.at("delta1").is_null()) r.delta1 = root.at("delta1").matrix();
  r.pythagoras_residual = root.at("pythagoras_residual").number();
  for (const auto& [k, v] : j.at("condition_numbers").items()) r.condition_numbers[k] = number_from_json(v);
  r.degenerate = j.at("degenerate").get<bool>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

namespace io_detail {

inline void matrix_rows(std::ostringstream& os, const std::string& name, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << name << ',' << r << ',' << c << ',' << format_double(m(r, c)) << '\n';
    }
  }
}

}  // namespace io_detail

/// One row per matrix entry: matrix,row,col,value.
inline std::string bound_report_to_csv(const BoundReport& r) {
  std::ostringstream os;
  os << "matrix,row,col,value\n";
  io_detail::matrix_rows(os, "M_k", r.M_k);
  io_detail::matrix_rows(os, "M_p", r.M_p);
  io_detail::matrix_rows(os, "M_uk", r.M_uk);
  io_detail::matrix_rows(os, "V_k", r.V_k);
  io_detail::matrix_rows(os, "V_p", r.V_p);
  io_detail::matrix_rows(os, "V_uk", r.V_uk);
  if (r.delta0) io_detail::matrix_rows(os, "delta0", *r.delta0);
  if (r.delta1) io_detail::matrix_rows(os, "delta1", *r.delta1);
  os << "pythagoras_residual,0,0," << io_detail::format_double(r.pythagoras_residual) << '\n';
  return os.str();
}

inline json refinement_to_json(const RefinementTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"K", s.K}, {"trace_delta0", s.trace_delta0}, {"trace_delta1", s.trace_delta1},
                     {"coarsened", s.coarsened}});
  }
  return {{"steps", std::move(steps)}, {"nonincreasing", t.nonincreasing}, {"reaches_zero", t.reaches_zero}};
}

inline json curve_to_json(const BoundCurve& c, const LimitVerdict& v) {
  json levels = json::array();
  for (const auto& p : c.points) {
    levels.push_back({{"n", p.n},
                      {"D_n", p.D},
                      {"residual_max", p.residual_max},
                      {"residuals", to_json(p.residuals)},
                      {"h_distance", p.h_distance},
                      {"gap_eig", p.gap_eig},
                      {"frobenius_gap", p.frobenius_gap},
                      {"score_rank", p.score_rank},
                      {"min_propensity", p.min_propensity},
                      {"overlap_ok", p.overlap_ok},
                      {"V_pn", to_json(p.V_pn)}});
  }
  return {{"family", to_string(c.kind)},
          {"truth_level", c.truth_level},
          {"V_uk", to_json(c.V_uk)},
          {"levels", std::move(levels)},
          {"verdict", to_string(v.kind)},
          {"final_residual", v.residual_max},
          {"final_h_distance", v.h_distance},
          {"final_gap_eig", v.gap_eig}};
}

/// Long format: one row per level and V^{p,n} entry.
inline std::string curve_to_csv(const BoundCurve& c) {
  std::ostringstream os;
  os << "n,D_n,residual_max,h_distance,gap_eig,score_rank,row,col,V_pn\n";
  for (const auto& p : c.points) {
    for (Eigen::Index r = 0; r < p.V_pn.rows(); ++r) {
      for (Eigen::Index col = 0; col < p.V_pn.cols(); ++col) {
        os << p.n << ',' << p.D << ',' << io_detail::format_double(p.residual_max) << ','
           << io_detail::format_double(p.h_distance) << ',' << io_detail::format_double(p.gap_eig)
           << ',' << p.score_rank << ',' << r << ',' << col << ','
           << io_detail::format_double(p.V_pn(r, col)) << '\n';
      }
    }
  }
  return os.str();
}

inline json mc_report_to_json(const McReport& r) {
  return {{"regime", to_string(r.regime)},
          {"n_samples", r.n_samples},
          {"seed", r.seed},
          {"pass", r.pass()},
          {"mean_ok", r.mean_ok},
          {"second_moment_ok", r.second_moment_ok},
          {"low_power", r.low_power},
          {"max_abs_rel_err", r.max_abs_rel_err},
          {"mean", to_json(r.mean)},
          {"mean_standard_errors", to_json(r.mean_standard_errors)},
          {"empirical_second_moment", to_json(r.empirical_second_moment)},
          {"standard_errors", to_json(r.standard_errors)},
          {"exact", to_json(r.exact)}};
}

inline std::string mc_reports_to_csv(const std::vector<McReport>& reports) {
  std::ostringstream os;
  os << "regime,n_samples,seed,row,col,empirical,standard_error,exact,pass\n";
  for (const auto& r : reports) {
    for (Eigen::Index a = 0; a < r.exact.rows(); ++a) {
      for (Eigen::Index b = 0; b < r.exact.cols(); ++b) {
        os << to_string(r.regime) << ',' << r.n_samples << ',' << r.seed << ',' << a << ',' << b
           << ',' << io_detail::format_double(r.empirical_second_moment(a, b)) << ','
           << io_detail::format_double(r.standard_errors(a, b)) << ','
           << io_detail::format_double(r.exact(a, b)) << ',' << (r.pass() ? 1 : 0) << '\n';
      }
    }
  }
  return os.str();
}

inline json study_report_to_json(const StudyReport& r) {
  return {{"replications", r.replications},
          {"n", r.n},
          {"seed", r.seed},
          {"known_probs", r.known_probs},
          {"contrast", to_json(r.contrast)},
          {"beta_star", to_json(r.beta_star)},
          {"mean_estimate", to_json(r.mean_estimate)},
          {"scaled_variance", to_json(r.scaled_variance)},
          {"contrast_scaled_variance", r.contrast_scaled_variance},
          {"contrast_bootstrap_se", r.contrast_bootstrap_se},
          {"contrast_mean_abs_error", r.contrast_mean_abs_error},
          {"bound_k", r.bound_k},
          {"bound_p", r.bound_p},
          {"bound_uk", r.bound_uk}};
}

inline std::string study_report_to_csv(const StudyReport& r) {
  std::ostringstream os;
  os << "replications,n,seed,known_probs,contrast_scaled_variance,contrast_bootstrap_se,bound_k,"
        "bound_p,bound_uk\n";
  os << r.replications << ',' << r.n << ',' << r.seed << ',' << (r.known_probs ? 1 : 0) << ','
     << io_detail::format_double(r.contrast_scaled_variance) << ','
     << io_detail::format_double(r.contrast_bootstrap_se) << ','
     << io_detail::format_double(r.bound_k) << ',' << io_detail::format_double(r.bound_p) << ','
     << io_detail::format_double(r.bound_uk) << '\n';
  return os.str();
}

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace effbound
