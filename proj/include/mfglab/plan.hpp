#pragma once

// Experiment plan: a versioned JSON schema with strict key checking (typos
// are rejected, not ignored), defaults filled in at parse time, and a fully
// resolved echo so every run directory is self-describing.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mfglab/expr.hpp"
#include "mfglab/lab.hpp"
#include "mfglab/solvers.hpp"

namespace mfg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Action {
  SolveFinite,
  SolveErgodic,
  SolveDiscounted,
  Turnpike,
  HorizonLimit,
  VanishingDiscount,
  Commutation,
  Multiplicity,
  Lemmas,
};

inline const std::vector<std::pair<std::string, Action>>& action_names() {
  static const std::vector<std::pair<std::string, Action>> names = {
      {"solve-finite", Action::SolveFinite},
      {"solve-ergodic", Action::SolveErgodic},
      {"solve-discounted", Action::SolveDiscounted},
      {"turnpike", Action::Turnpike},
      {"horizon-limit", Action::HorizonLimit},
      {"vanishing-discount", Action::VanishingDiscount},
      {"commutation", Action::Commutation},
      {"multiplicity", Action::Multiplicity},
      {"lemmas", Action::Lemmas},
  };
  return names;
}

struct LemmaCasePlan {
  std::string name;
  double kappa = 1.0;
  double T = 0.2;
  int Nt = 2000;
  Expr drift_x, drift_y, data;
  double p_prime = 2.0;
};

struct ExperimentPlan {
  Action action = Action::SolveFinite;
  std::string action_name;

  int n = 64, d = 1;
  double kappa = 1.0;
  std::string family = "quadratic";
  Expr potential;
  Expr f0;
  double c1 = 0.0, gamma = 0.0, alpha = 1.0, cF = 0.0;
  Expr terminal;
  Expr m0;
  bool m0_normalize = true;

  SolverConfig solver;

  // action parameters
  double T = 1.0;
  std::vector<double> T_list;
  double t_probe = 2.0;
  double delta = 0.1;
  std::vector<double> delta_list;
  double T_trunc = 0.0;
  double tolerance = 1e-3;
  std::string method = "newton";
  std::vector<Expr> seeds;
  std::pair<double, double> fit_window{0.05, 0.95};
  bool with_evolution = true;
  double cluster_threshold = 1e-3;
  std::vector<LemmaCasePlan> lemma_cases;

  MFGProblem to_problem() const {
    Grid g = build_grid(n, d);
    MFGProblem pb;
    pb.grid = g;
    pb.kappa = kappa;
    if (family == "quadratic") {
      pb.hamiltonian.family = HamiltonianFamily::Quadratic;
    } else if (family == "lipschitz-convex") {
      pb.hamiltonian.family = HamiltonianFamily::LipschitzConvex;
    } else if (family == "quadratic-potential") {
      pb.hamiltonian.family = HamiltonianFamily::QuadraticPotential;
      pb.hamiltonian.potential = eval_expr(potential, g);
    } else {
      throw ConfigError("problem.hamiltonian.family: unknown family '" + family + "'");
    }
    pb.coupling.f0 = eval_expr(f0, g);
    pb.coupling.c1 = c1;
    pb.coupling.gamma = gamma;
    pb.coupling.alpha = alpha;
    pb.coupling.cF = cF;
    pb.terminal.u_T = eval_expr(terminal, g);
    if (m0.empty()) {
      pb.m0 = Field(g, 1.0);
    } else {
      pb.m0 = eval_expr(m0, g);
      if (m0_normalize) {
        double mass = integrate(pb.m0);
        if (!(mass > 0)) throw ConfigError("problem.m0: non-positive mass, cannot normalize");
        for (double& v : pb.m0.values) v /= mass;
      }
    }
    if (min_value(pb.m0) < 0) throw ConfigError("problem.m0: negative density");
    return pb;
  }

  nlohmann::json resolved_json() const;
};

// ---------------------------------------------------------------------------
// JSON parsing with strict keys
// ---------------------------------------------------------------------------

namespace detail_plan {

using nlohmann::json;

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError(path + ": unknown key \"" + key + "\"");
}

inline double num_or(const json& obj, const char* key, double dflt, const std::string& path) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return obj[key].get<double>();
}

inline int int_or(const json& obj, const char* key, int dflt, const std::string& path) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
  return obj[key].get<int>();
}

inline bool bool_or(const json& obj, const char* key, bool dflt, const std::string& path) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_boolean()) throw ConfigError(path + "." + key + ": expected a bool");
  return obj[key].get<bool>();
}

inline std::string str_or(const json& obj, const char* key, const std::string& dflt,
                          const std::string& path) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_string()) throw ConfigError(path + "." + key + ": expected a string");
  return obj[key].get<std::string>();
}

inline Expr parse_expr(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of terms");
  Expr e;
  for (size_t i = 0; i < j.size(); ++i) {
    const json& t = j[i];
    std::string tpath = path + "[" + std::to_string(i) + "]";
    std::string kind = str_or(t, "kind", "", tpath);
    ExprTerm term;
    if (kind == "const") {
      require_keys(t, {"kind", "a"}, tpath);
      term.kind = ExprTerm::Kind::Const;
    } else if (kind == "sin" || kind == "cos") {
      require_keys(t, {"kind", "a", "k", "axis"}, tpath);
      term.kind = kind == "sin" ? ExprTerm::Kind::Sin : ExprTerm::Kind::Cos;
      term.k = int_or(t, "k", 1, tpath);
      term.axis = int_or(t, "axis", 0, tpath);
    } else if (kind == "gauss") {
      require_keys(t, {"kind", "a", "center", "width"}, tpath);
      term.kind = ExprTerm::Kind::Gauss;
      term.width = num_or(t, "width", 0.1, tpath);
      if (t.contains("center")) {
        if (t["center"].is_number()) {
          term.center = {t["center"].get<double>(), 0.5};
        } else if (t["center"].is_array() && t["center"].size() <= 2) {
          for (size_t c = 0; c < t["center"].size(); ++c)
            term.center[c] = t["center"][c].get<double>();
        } else {
          throw ConfigError(tpath + ".center: expected a number or [x, y]");
        }
      }
    } else {
      throw ConfigError(tpath + ".kind: expected const|sin|cos|gauss, got \"" + kind + "\"");
    }
    term.a = num_or(t, "a", 0.0, tpath);
    e.push_back(term);
  }
  validate_expr(e, path);
  return e;
}

inline json expr_to_json(const Expr& e) {
  json arr = json::array();
  for (const auto& t : e) {
    json jt;
    switch (t.kind) {
      case ExprTerm::Kind::Const:
        jt["kind"] = "const";
        break;
      case ExprTerm::Kind::Sin:
        jt["kind"] = "sin";
        jt["k"] = t.k;
        jt["axis"] = t.axis;
        break;
      case ExprTerm::Kind::Cos:
        jt["kind"] = "cos";
        jt["k"] = t.k;
        jt["axis"] = t.axis;
        break;
      case ExprTerm::Kind::Gauss:
        jt["kind"] = "gauss";
        jt["center"] = {t.center[0], t.center[1]};
        jt["width"] = t.width;
        break;
    }
    jt["a"] = t.a;
    arr.push_back(jt);
  }
  return arr;
}

inline std::vector<double> num_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigError(path + ": expected numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace detail_plan

inline ExperimentPlan parse_plan_json(const nlohmann::json& j) {
  using namespace detail_plan;
  ExperimentPlan plan;
  require_keys(j, {"schema_version", "action", "grid", "problem", "solver", "params"}, "$");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != 1)
    throw ConfigError("schema_version: must be the integer 1");
  plan.action_name = str_or(j, "action", "", "$");
  bool found = false;
  for (const auto& [name, a] : action_names())
    if (name == plan.action_name) {
      plan.action = a;
      found = true;
    }
  if (!found) throw ConfigError("action: unknown action \"" + plan.action_name + "\"");

  if (!j.contains("grid")) throw ConfigError("grid: required");
  const auto& jg = j["grid"];
  require_keys(jg, {"n", "d"}, "grid");
  plan.n = int_or(jg, "n", 64, "grid");
  plan.d = int_or(jg, "d", 1, "grid");
  if (plan.n < 4) throw ConfigError("grid.n: must be >= 4");
  if (plan.d != 1 && plan.d != 2) throw ConfigError("grid.d: must be 1 or 2");

  if (j.contains("problem")) {
    const auto& jp = j["problem"];
    require_keys(jp, {"kappa", "hamiltonian", "coupling", "terminal", "m0"}, "problem");
    plan.kappa = num_or(jp, "kappa", 1.0, "problem");
    if (!(plan.kappa > 0)) throw ConfigError("problem.kappa: must be > 0");
    if (jp.contains("hamiltonian")) {
      const auto& jh = jp["hamiltonian"];
      require_keys(jh, {"family", "potential"}, "problem.hamiltonian");
      plan.family = str_or(jh, "family", "quadratic", "problem.hamiltonian");
      if (jh.contains("potential"))
        plan.potential = parse_expr(jh["potential"], "problem.hamiltonian.potential");
    }
    if (jp.contains("coupling")) {
      const auto& jc = jp["coupling"];
      require_keys(jc, {"f0", "c1", "gamma", "alpha", "cF"}, "problem.coupling");
      if (jc.contains("f0")) plan.f0 = parse_expr(jc["f0"], "problem.coupling.f0");
      plan.c1 = num_or(jc, "c1", 0.0, "problem.coupling");
      plan.gamma = num_or(jc, "gamma", 0.0, "problem.coupling");
      plan.alpha = num_or(jc, "alpha", 1.0, "problem.coupling");
      plan.cF = num_or(jc, "cF", 0.0, "problem.coupling");
      if (plan.c1 < 0) throw ConfigError("problem.coupling.c1: must be >= 0");
      if (plan.gamma < 0) throw ConfigError("problem.coupling.gamma: must be >= 0");
      if (!(plan.alpha > 0)) throw ConfigError("problem.coupling.alpha: must be > 0");
    }
    if (jp.contains("terminal")) plan.terminal = parse_expr(jp["terminal"], "problem.terminal");
    if (jp.contains("m0")) {
      const auto& jm = jp["m0"];
      require_keys(jm, {"expr", "normalize"}, "problem.m0");
      if (jm.contains("expr")) plan.m0 = parse_expr(jm["expr"], "problem.m0.expr");
      plan.m0_normalize = bool_or(jm, "normalize", true, "problem.m0");
    }
  }

  if (j.contains("solver")) {
    const auto& js = j["solver"];
    require_keys(js,
                 {"damping", "tol", "max_iters", "time_scheme", "adaptive_damping",
                  "fictitious_play", "cfl_grad_bound", "steps_per_unit", "newton_tol",
                  "newton_max_iters", "longtime_T"},
                 "solver");
    plan.solver.damping = num_or(js, "damping", plan.solver.damping, "solver");
    if (!(plan.solver.damping > 0 && plan.solver.damping <= 1))
      throw ConfigError("solver.damping: must be in (0, 1]");
    plan.solver.tol = num_or(js, "tol", plan.solver.tol, "solver");
    if (!(plan.solver.tol > 0)) throw ConfigError("solver.tol: must be > 0");
    plan.solver.max_iters = int_or(js, "max_iters", plan.solver.max_iters, "solver");
    std::string scheme = str_or(js, "time_scheme", "semi-implicit", "solver");
    if (scheme == "semi-implicit") {
      plan.solver.implicit_scheme = false;
    } else if (scheme == "implicit") {
      plan.solver.implicit_scheme = true;
    } else {
      throw ConfigError("solver.time_scheme: expected semi-implicit|implicit");
    }
    plan.solver.adaptive_damping =
        bool_or(js, "adaptive_damping", plan.solver.adaptive_damping, "solver");
    plan.solver.fictitious_play =
        bool_or(js, "fictitious_play", plan.solver.fictitious_play, "solver");
    plan.solver.cfl_grad_bound =
        num_or(js, "cfl_grad_bound", plan.solver.cfl_grad_bound, "solver");
    plan.solver.steps_per_unit = int_or(js, "steps_per_unit", 0, "solver");
    plan.solver.newton_tol = num_or(js, "newton_tol", plan.solver.newton_tol, "solver");
    plan.solver.newton_max_iters =
        int_or(js, "newton_max_iters", plan.solver.newton_max_iters, "solver");
    plan.solver.longtime_T = num_or(js, "longtime_T", 0.0, "solver");
  }

  const nlohmann::json empty = nlohmann::json::object();
  const auto& jq = j.contains("params") ? j["params"] : empty;
  require_keys(jq,
               {"T", "T_list", "t_probe", "delta", "delta_list", "T_trunc", "tolerance",
                "method", "seeds", "fit_window", "with_evolution", "cluster_threshold",
                "lemma_cases"},
               "params");
  plan.T = num_or(jq, "T", plan.T, "params");
  if (jq.contains("T_list")) plan.T_list = num_list(jq["T_list"], "params.T_list");
  plan.t_probe = num_or(jq, "t_probe", plan.t_probe, "params");
  plan.delta = num_or(jq, "delta", plan.delta, "params");
  if (jq.contains("delta_list")) plan.delta_list = num_list(jq["delta_list"], "params.delta_list");
  plan.T_trunc = num_or(jq, "T_trunc", plan.T_trunc, "params");
  plan.tolerance = num_or(jq, "tolerance", plan.tolerance, "params");
  plan.method = str_or(jq, "method", plan.method, "params");
  if (plan.method != "newton" && plan.method != "longtime" && plan.method != "cross-validate")
    throw ConfigError("params.method: expected newton|longtime|cross-validate");
  if (jq.contains("seeds")) {
    if (!jq["seeds"].is_array()) throw ConfigError("params.seeds: expected an array");
    for (size_t i = 0; i < jq["seeds"].size(); ++i)
      plan.seeds.push_back(
          detail_plan::parse_expr(jq["seeds"][i], "params.seeds[" + std::to_string(i) + "]"));
  }
  if (jq.contains("fit_window")) {
    auto w = num_list(jq["fit_window"], "params.fit_window");
    if (w.size() != 2 || !(0 <= w[0] && w[0] < w[1] && w[1] <= 1))
      throw ConfigError("params.fit_window: expected [lo, hi] with 0 <= lo < hi <= 1");
    plan.fit_window = {w[0], w[1]};
  }
  plan.with_evolution = bool_or(jq, "with_evolution", plan.with_evolution, "params");
  plan.cluster_threshold = num_or(jq, "cluster_threshold", plan.cluster_threshold, "params");
  if (jq.contains("lemma_cases")) {
    if (!jq["lemma_cases"].is_array()) throw ConfigError("params.lemma_cases: expected an array");
    for (size_t i = 0; i < jq["lemma_cases"].size(); ++i) {
      const auto& jc = jq["lemma_cases"][i];
      std::string path = "params.lemma_cases[" + std::to_string(i) + "]";
      require_keys(jc, {"name", "kappa", "T", "Nt", "drift_x", "drift_y", "data", "p_prime"},
                   path);
      LemmaCasePlan cp;
      cp.name = str_or(jc, "name", "case-" + std::to_string(i), path);
      cp.kappa = num_or(jc, "kappa", 1.0, path);
      cp.T = num_or(jc, "T", 0.2, path);
      cp.Nt = int_or(jc, "Nt", 2000, path);
      if (jc.contains("drift_x")) cp.drift_x = detail_plan::parse_expr(jc["drift_x"], path + ".drift_x");
      if (jc.contains("drift_y")) cp.drift_y = detail_plan::parse_expr(jc["drift_y"], path + ".drift_y");
      if (jc.contains("data")) cp.data = detail_plan::parse_expr(jc["data"], path + ".data");
      cp.p_prime = num_or(jc, "p_prime", 2.0, path);
      if (!(cp.T > 0) || cp.Nt < 8) throw ConfigError(path + ": need T > 0 and Nt >= 8");
      plan.lemma_cases.push_back(std::move(cp));
    }
  }

  // per-action requirements
  switch (plan.action) {
    case Action::SolveFinite:
    case Action::Turnpike:
      if (!(plan.T > 0)) throw ConfigError("params.T: must be > 0");
      break;
    case Action::HorizonLimit:
      if (plan.T_list.size() < 2) throw ConfigError("params.T_list: need at least two horizons");
      break;
    case Action::VanishingDiscount:
      if (plan.delta_list.empty()) throw ConfigError("params.delta_list: required");
      break;
    case Action::SolveDiscounted:
      if (!(plan.delta > 0)) throw ConfigError("params.delta: must be > 0");
      break;
    case Action::Multiplicity:
      if (plan.seeds.empty()) throw ConfigError("params.seeds: need at least one seed");
      if (!(plan.T > 0)) throw ConfigError("params.T: must be > 0");
      break;
    case Action::Lemmas:
      if (plan.lemma_cases.empty()) throw ConfigError("params.lemma_cases: required");
      break;
    default:
      break;
  }
  return plan;
}

inline ExperimentPlan parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_plan_json(j);
}

inline nlohmann::json ExperimentPlan::resolved_json() const {
  using detail_plan::expr_to_json;
  nlohmann::json j;
  j["schema_version"] = 1;
  j["action"] = action_name;
  j["grid"] = {{"n", n}, {"d", d}};
  j["problem"] = {
      {"kappa", kappa},
      {"hamiltonian", {{"family", family}, {"potential", expr_to_json(potential)}}},
      {"coupling",
       {{"f0", expr_to_json(f0)}, {"c1", c1}, {"gamma", gamma}, {"alpha", alpha}, {"cF", cF}}},
      {"terminal", expr_to_json(terminal)},
      {"m0", {{"expr", expr_to_json(m0)}, {"normalize", m0_normalize}}},
  };
  j["solver"] = {
      {"damping", solver.damping},
      {"tol", solver.tol},
      {"max_iters", solver.max_iters},
      {"time_scheme", solver.implicit_scheme ? "implicit" : "semi-implicit"},
      {"adaptive_damping", solver.adaptive_damping},
      {"fictitious_play", solver.fictitious_play},
      {"cfl_grad_bound", solver.cfl_grad_bound},
      {"steps_per_unit", solver.steps_per_unit},
      {"newton_tol", solver.newton_tol},
      {"newton_max_iters", solver.newton_max_iters},
      {"longtime_T", solver.longtime_T},
  };
  nlohmann::json seeds_json = nlohmann::json::array();
  for (const auto& s : seeds) seeds_json.push_back(expr_to_json(s));
  nlohmann::json cases_json = nlohmann::json::array();
  for (const auto& c : lemma_cases)
    cases_json.push_back({{"name", c.name},
                          {"kappa", c.kappa},
                          {"T", c.T},
                          {"Nt", c.Nt},
                          {"drift_x", expr_to_json(c.drift_x)},
                          {"drift_y", expr_to_json(c.drift_y)},
                          {"data", expr_to_json(c.data)},
                          {"p_prime", c.p_prime}});
  j["params"] = {
      {"T", T},
      {"T_list", T_list},
      {"t_probe", t_probe},
      {"delta", delta},
      {"delta_list", delta_list},
      {"T_trunc", T_trunc},
      {"tolerance", tolerance},
      {"method", method},
      {"seeds", seeds_json},
      {"fit_window", {fit_window.first, fit_window.second}},
      {"with_evolution", with_evolution},
      {"cluster_threshold", cluster_threshold},
      {"lemma_cases", cases_json},
  };
  return j;
}

}  // namespace mfg
