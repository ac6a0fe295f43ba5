#pragma once

// Plan execution: builds the problem, dispatches the action, emits series
// (CSV by default, JSON mirror on request) and writes the run manifest.
// Identical plan + seed produces byte-identical numeric payloads; sweep rows
// may run in parallel but results are assembled in row order.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "mfglab/io.hpp"
#include "mfglab/lab.hpp"
#include "mfglab/plan.hpp"

namespace mfg {

inline const char* kToolVersion = "mfglab 1.0.0";

struct RunOptions {
  std::filesystem::path out_dir;
  int jobs = 1;
  uint64_t seed = 0;
  std::string format = "csv";  // csv | json
};

namespace detail_run {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline nlohmann::json table_json(const CsvTable& t) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["columns"] = t.columns;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) rows.push_back(r);
  j["rows"] = rows;
  return j;
}

struct Emitter {
  std::filesystem::path dir;
  std::string format;
  RunManifest* man;

  void series(const std::string& name, const CsvTable& t) const {
    if (format == "json") {
      auto p = dir / (name + ".json");
      write_text(p, table_json(t).dump(2) + "\n");
      manifest_add(*man, dir, p);
    } else {
      auto p = dir / (name + ".csv");
      write_csv(p, t);
      manifest_add(*man, dir, p);
    }
  }

  void report(const std::string& name, const nlohmann::json& j) const {
    auto p = dir / (name + ".json");
    write_text(p, j.dump(2) + "\n");
    manifest_add(*man, dir, p);
  }
};

inline CsvTable study_table(const StudyReport& rep) {
  CsvTable t;
  t.columns = rep.columns;
  for (const auto& row : rep.rows) {
    std::vector<double> r{row.param};
    r.insert(r.end(), row.values.begin(), row.values.end());
    r.resize(t.columns.size(), 0.0);
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline nlohmann::json study_json(const StudyReport& rep) {
  nlohmann::json j;
  j["action"] = rep.action;
  j["verdict"] = rep.verdict;
  j["diagnostics"] = rep.diagnostics;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : rep.rows)
    rows.push_back({{"param", row.param}, {"values", row.values}, {"ok", row.ok},
                    {"note", row.note}});
  j["rows"] = rows;
  return j;
}

inline bool any_row_failed(const StudyReport& rep) {
  for (const auto& row : rep.rows)
    if (!row.ok) return true;
  return false;
}

inline CsvTable fields_table(const Grid& g, const std::vector<std::string>& names,
                             const std::vector<const Field*>& fields) {
  CsvTable t;
  t.columns = g.d == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
  t.columns.insert(t.columns.end(), names.begin(), names.end());
  for (int i = 0; i < g.size; ++i) {
    std::vector<double> row;
    row.push_back(g.coord(i % g.n));
    if (g.d == 2) row.push_back(g.coord(i / g.n));
    for (const Field* f : fields) row.push_back((*f)[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace detail_run

inline RunManifest run_plan(const ExperimentPlan& plan, const RunOptions& opt) {
  namespace fs = std::filesystem;
  using detail_run::Emitter;
  using detail_run::Stopwatch;

  fs::create_directories(opt.out_dir);
  RunManifest man;
  man.tool_version = kToolVersion;
  nlohmann::json resolved = plan.resolved_json();
  resolved["seed"] = opt.seed;
  std::string resolved_text = resolved.dump(2) + "\n";
  man.plan_hash = digest_hex(resolved_text);
  write_text(opt.out_dir / "plan.resolved.json", resolved_text);
  manifest_add(man, opt.out_dir, opt.out_dir / "plan.resolved.json");

  Emitter emit{opt.out_dir, opt.format, &man};
  Stopwatch total;
  try {
    MFGProblem pb = plan.to_problem();
    SolverConfig cfg = plan.solver;

    switch (plan.action) {
      case Action::SolveFinite: {
        FiniteHorizonSolution sol = solve_finite_horizon(pb, plan.T, cfg);
        const TimeGrid& tg = sol.u_path.tg;
        CsvTable series;
        series.columns = {"t", "int_u", "mass", "min_m", "max_m"};
        for (int k = 0; k <= tg.Nt; ++k)
          series.rows.push_back({sol.u_path.time(k), integrate(sol.u_path[k]),
                                 integrate(sol.m_path[k]), min_value(sol.m_path[k]),
                                 max_value(sol.m_path[k])});
        emit.series("series", series);
        emit.series("fields",
                    detail_run::fields_table(pb.grid, {"u_t0", "u_T", "m_t0", "m_T"},
                                             {&sol.u_path[0], &sol.u_path[tg.Nt],
                                              &sol.m_path[0], &sol.m_path[tg.Nt]}));
        emit.report("report", {{"converged", sol.converged},
                               {"iterations", sol.iterations},
                               {"residual", sol.residual},
                               {"hjb_residual", sol.hjb_residual},
                               {"fp_residual", sol.fp_residual},
                               {"sup_m", sol.M_bound},
                               {"sup_Du", sol.U_bound},
                               {"T", tg.T},
                               {"Nt", tg.Nt}});
        if (!sol.converged) {
          man.exit_status = 3;
          man.notes.push_back("finite-horizon solve did not converge");
        }
        break;
      }
      case Action::SolveErgodic: {
        ErgodicMethod method = plan.method == "longtime"        ? ErgodicMethod::Longtime
                               : plan.method == "cross-validate" ? ErgodicMethod::CrossValidate
                                                                 : ErgodicMethod::Newton;
        ErgodicSolution erg = solve_ergodic(pb, method, cfg);
        emit.series("fields", detail_run::fields_table(pb.grid, {"u", "m"}, {&erg.u, &erg.m}));
        nlohmann::json rep{{"lambda", erg.lambda},
                           {"res_hjb", erg.res_hjb},
                           {"res_fp", erg.res_fp},
                           {"method", erg.method},
                           {"newton_iterations", erg.newton_iterations}};
        if (std::isfinite(erg.cross_check)) rep["cross_check"] = erg.cross_check;
        emit.report("report", rep);
        break;
      }
      case Action::SolveDiscounted: {
        DiscountedSolution ds = solve_discounted_stationary(pb, plan.delta, cfg);
        emit.series("fields", detail_run::fields_table(pb.grid, {"u", "m"}, {&ds.u, &ds.m}));
        emit.report("report", {{"delta", ds.delta},
                               {"res_hjb", ds.res_hjb},
                               {"res_fp", ds.res_fp},
                               {"newton_iterations", ds.newton_iterations}});
        break;
      }
      case Action::Turnpike: {
        ErgodicSolution erg = solve_ergodic(pb, ErgodicMethod::Newton, cfg);
        FiniteHorizonSolution sol = solve_finite_horizon(pb, plan.T, cfg);
        TurnpikeReport rep = turnpike_report(sol, erg, plan.fit_window);
        CsvTable profile;
        profile.columns = {"t", "d", "model_d"};
        for (size_t k = 0; k < rep.times.size(); ++k)
          profile.rows.push_back({rep.times[k], rep.d[k], rep.model[k]});
        emit.series("profile", profile);
        emit.report("report", {{"M", rep.M},
                               {"omega", rep.omega},
                               {"residual", rep.residual},
                               {"points_used", rep.points_used},
                               {"degenerate", rep.degenerate},
                               {"fit_ok", rep.fit_ok},
                               {"window", {rep.window.first, rep.window.second}},
                               {"note", rep.note},
                               {"lambda", erg.lambda}});
        if (!sol.converged) man.exit_status = 3;
        break;
      }
      case Action::HorizonLimit: {
        HorizonStudyOptions hopt;
        hopt.t_probe = plan.t_probe;
        hopt.jobs = opt.jobs;
        StudyReport rep = horizon_limit_study(pb, plan.T_list, cfg, hopt);
        emit.series("study", detail_run::study_table(rep));
        emit.report("report", detail_run::study_json(rep));
        if (detail_run::any_row_failed(rep)) man.exit_status = 3;
        break;
      }
      case Action::VanishingDiscount: {
        DiscountStudyOptions dopt;
        dopt.with_evolution = plan.with_evolution;
        dopt.t_probe = std::min(plan.t_probe, 0.5);
        dopt.jobs = opt.jobs;
        StudyReport rep = vanishing_discount_study(pb, plan.delta_list, cfg, dopt);
        emit.series("study", detail_run::study_table(rep));
        emit.report("report", detail_run::study_json(rep));
        if (detail_run::any_row_failed(rep)) man.exit_status = 3;
        break;
      }
      case Action::Commutation: {
        ErgodicSolution erg = solve_ergodic(pb, ErgodicMethod::Newton, cfg);
        ThetaSolution th = solve_theta(pb, erg, cfg);
        CommutationOptions copt;
        copt.tolerance = plan.tolerance;
        copt.T_trunc = plan.T_trunc;
        StudyReport rep = commutation_check(pb, erg, th, cfg, copt);
        emit.series("study", detail_run::study_table(rep));
        nlohmann::json jrep = detail_run::study_json(rep);
        jrep["theta"] = th.theta;
        jrep["lambda"] = erg.lambda;
        emit.report("report", jrep);
        if (detail_run::any_row_failed(rep)) man.exit_status = 3;
        break;
      }
      case Action::Multiplicity: {
        std::vector<Field> seeds;
        for (const auto& e : plan.seeds) {
          Field s = eval_expr(e, pb.grid);
          double mass = integrate(s);
          if (!(mass > 0)) throw ConfigError("multiplicity seed has non-positive mass");
          for (double& v : s.values) v /= mass;
          seeds.push_back(std::move(s));
        }
        MultiplicityOptions mopt;
        mopt.cluster_threshold = plan.cluster_threshold;
        mopt.jobs = opt.jobs;
        StudyReport rep = multiplicity_probe(pb, plan.T, seeds, cfg, mopt);
        emit.series("study", detail_run::study_table(rep));
        emit.report("report", detail_run::study_json(rep));
        break;  // non-convergence is probe data, not a failure
      }
      case Action::Lemmas: {
        std::vector<LemmaCase> cases;
        for (const auto& cp : plan.lemma_cases) {
          LemmaCase cs;
          cs.name = cp.name;
          cs.kappa = cp.kappa;
          cs.T = cp.T;
          cs.Nt = cp.Nt;
          Grid g = pb.grid;
          cs.V = VectorField(g);
          Field vx = eval_expr(cp.drift_x, g);
          cs.V.comp[0] = vx.values;
          if (g.d == 2) {
            Field vy = eval_expr(cp.drift_y, g);
            cs.V.comp[1] = vy.values;
          }
          cs.data = eval_expr(cp.data, g);
          cs.p_prime = cp.p_prime;
          cases.push_back(std::move(cs));
        }
        auto reports = lemma_decay_suite(cases, opt.jobs);
        CsvTable t;
        t.columns = {"case", "lemma", "param", "nu", "C", "ratio", "residual", "pass"};
        auto lemma_code = [](const std::string& name) {
          if (name == "hj-decay") return 0.0;
          if (name == "fp-decay") return 1.0;
          if (name == "weighted-l2") return 2.0;
          if (name == "l1lp") return 3.0;
          return -1.0;
        };
        nlohmann::json jrows = nlohmann::json::array();
        for (const auto& r : reports) {
          int ci = 0;
          for (size_t k = 0; k < cases.size(); ++k)
            if (cases[k].name == r.case_name) ci = (int)k;
          t.rows.push_back({(double)ci, lemma_code(r.lemma), r.param, r.nu, r.C, r.ratio,
                            r.residual, r.pass ? 1.0 : 0.0});
          jrows.push_back({{"case", r.case_name},
                           {"lemma", r.lemma},
                           {"param", r.param},
                           {"nu", r.nu},
                           {"C", r.C},
                           {"ratio", r.ratio},
                           {"residual", r.residual},
                           {"pass", r.pass},
                           {"note", r.note}});
          if (r.lemma == "error") man.exit_status = 3;
        }
        emit.series("lemmas", t);
        emit.report("report", {{"rows", jrows}});
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;  // configuration problems surface as exit code 2 at the CLI
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    man.exit_status = 3;
    man.notes.push_back(e.what());
  }
  man.timings_ms.push_back({"total", total.ms()});
  write_text(opt.out_dir / "manifest.json", man.to_json().dump(2) + "\n");
  return man;
}

}  // namespace mfg
