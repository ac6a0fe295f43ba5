// Acceptance suite: one pass/fail line per criterion, exit code equals the
// number of failures. Heavy solves are shared between criteria where the
// inputs coincide (same problem, same grids).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mfglab/io.hpp"
#include "mfglab/lab.hpp"
#include "mfglab/plan.hpp"
#include "mfglab/runner.hpp"

using namespace mfg;

namespace {

constexpr double kPi = 3.14159265358979323846;

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

MFGProblem make_p0(int n, double c1 = 0.0) {
  MFGProblem pb;
  pb.grid = build_grid(n, 1);
  pb.kappa = 1.0;
  pb.coupling.c1 = c1;
  pb.terminal.u_T = Field(pb.grid, 0.0);
  pb.m0 = Field(pb.grid, 1.0);
  return pb;
}

MFGProblem make_p1(int n) {
  MFGProblem pb = make_p0(n, 1.0);
  pb.coupling.f0 = Field(pb.grid);
  for (int i = 0; i < n; ++i)
    pb.coupling.f0[i] = 0.5 * std::sin(2.0 * kPi * pb.grid.coord(i));
  return pb;
}

struct PathStats {
  double worst_mass = 0.0;
  double worst_min = 0.0;
  long frames = 0;

  void absorb(const PathField& m) {
    for (const auto& f : m.frames) {
      worst_mass = std::max(worst_mass, std::abs(integrate(f) - 1.0));
      worst_min = std::min(worst_min, min_value(f));
      ++frames;
    }
  }
};

struct Criterion {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Criterion> results;

void record(int id, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  results.push_back({id, pass, detail});
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

}  // namespace

int main() {
  PathStats fp_stats;
  SolverConfig cfg;
  cfg.tol = 1e-9;
  cfg.cfl_grad_bound = 2.0;

  // --- 1. trivial stationarity -------------------------------------------
  {
    double t0 = now_s();
    MFGProblem p0 = make_p0(64);
    FiniteHorizonSolution sol = solve_finite_horizon(p0, 1.0, cfg);
    double elapsed = now_s() - t0;
    double u_sup = 0.0, m_dev = 0.0;
    Field ones(p0.grid, 1.0);
    for (const auto& f : sol.u_path.frames) u_sup = std::max(u_sup, norm(f, Norm::Sup));
    for (const auto& f : sol.m_path.frames) m_dev = std::max(m_dev, sup_dist(f, ones));
    fp_stats.absorb(sol.m_path);
    bool ok = sol.converged && u_sup <= 1e-10 && m_dev <= 1e-10 && elapsed < 1.0;
    record(1, ok,
           "trivial stationarity: |u|=" + fmt(u_sup) + " |m-1|=" + fmt(m_dev) +
               " runtime=" + fmt(elapsed) + "s");
  }

  // --- 3. discrete duality / adjointness ---------------------------------
  {
    Rng rng(20260809);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      Grid g = build_grid(128, 1);
      VectorField b(g);
      for (int i = 0; i < g.n; ++i) b.comp[0][i] = rng.uniform(-2.0, 2.0);
      worst = std::max(worst, adjointness_check(b, 1, rng.next_u64()));
    }
    Grid g2 = build_grid(24, 2);
    VectorField b2(g2);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < g2.size; ++i) b2.comp[c][i] = rng.uniform(-2.0, 2.0);
    worst = std::max(worst, adjointness_check(b2, 5, 99));
    record(3, worst <= 1e-12, "adjointness over random drifts: worst rel. defect " + fmt(worst));
  }

  // --- 4. heat-mode oracles ----------------------------------------------
  {
    Grid g = build_grid(256, 1);
    bool ok = true;
    std::string detail = "heat rates:";
    for (double kappa : {1.0, 0.5}) {
      TimeGrid tg = make_time_grid(0.2 / kappa, (int)std::llround(0.2 / kappa / 1e-4));
      Field c0(g);
      for (int i = 0; i < g.n; ++i) c0[i] = std::cos(2.0 * kPi * g.coord(i));
      VectorField V0(g);
      double rate = 4.0 * kPi * kPi * kappa;

      PathField v = linear_parabolic_backward(kappa, V0, nullptr, c0, tg);
      std::vector<double> tau, y;
      for (int k = tg.Nt; k >= 0; --k) {
        tau.push_back(tg.T - v.time(k));
        y.push_back(norm(v[k], Norm::L2));
      }
      double nu_b = fit_exponential(tau, y, ExpModel::OneSided).rate;

      PathField r = linear_fp_forward(kappa, V0, nullptr, c0, tg);
      std::vector<double> ts, yr;
      for (int k = 0; k <= tg.Nt; ++k) {
        ts.push_back(r.time(k));
        yr.push_back(norm(r[k], Norm::L2));
      }
      double nu_f = fit_exponential(ts, yr, ExpModel::OneSided).rate;

      ok = ok && std::abs(nu_b - rate) / rate <= 0.02 && std::abs(nu_f - rate) / rate <= 0.02;
      detail += " kappa=" + fmt(kappa) + " (backward " + fmt(nu_b) + ", forward " +
                fmt(nu_f) + ", target " + fmt(rate) + ")";
    }
    record(4, ok, detail);
  }

  // --- 5 + 7. turnpike and horizon limit on P1, n=128, T in {10,20,40} ----
  {
    MFGProblem p1 = make_p1(128);
    ErgodicSolution erg = solve_ergodic(p1, ErgodicMethod::Newton, cfg);

    std::vector<double> T_list{10.0, 20.0, 40.0};
    std::vector<FiniteHorizonSolution> sols;
    std::vector<double> omegas, solve_seconds;
    bool solves_ok = true;
    for (double T : T_list) {
      double t0 = now_s();
      sols.push_back(solve_finite_horizon(p1, T, cfg));
      solve_seconds.push_back(now_s() - t0);
      solves_ok = solves_ok && sols.back().converged;
      fp_stats.absorb(sols.back().m_path);
    }

    bool fit_ok = true;
    for (const auto& s : sols) {
      TurnpikeReport rep = turnpike_report(s, erg);
      fit_ok = fit_ok && rep.fit_ok && rep.omega > 0;
      omegas.push_back(rep.omega);
    }
    bool omega_consistent =
        fit_ok && std::abs(omegas[0] - omegas[2]) / omegas[2] <= 0.15 &&
        std::abs(omegas[1] - omegas[2]) / omegas[2] <= 0.15;

    const auto& s40 = sols[2];
    std::vector<double> d = distance_profile(s40.u_path, s40.m_path, erg.u, erg.m);
    double d_mid = d[s40.u_path.tg.Nt / 2];
    bool decay_ok = d_mid <= 1e-3 * d[0];
    bool time_ok = true;
    for (double s : solve_seconds) time_ok = time_ok && s < 120.0;

    record(5, solves_ok && omega_consistent && decay_ok && time_ok,
           "turnpike: omega(T)={" + fmt(omegas.size() > 0 ? omegas[0] : 0) + ", " +
               fmt(omegas.size() > 1 ? omegas[1] : 0) + ", " +
               fmt(omegas.size() > 2 ? omegas[2] : 0) + "}, d(T/2)/d(0)=" +
               fmt(d_mid / d[0]) + ", slowest solve " +
               fmt(*std::max_element(solve_seconds.begin(), solve_seconds.end())) + "s");

    // criterion 7 reuses the same horizons
    const double t_probe = 2.0;
    auto shifted_slice = [&](const FiniteHorizonSolution& s, double T) {
      int kp = (int)std::llround(t_probe / s.u_path.tg.dt);
      Field slice = s.u_path[kp];
      double shift = erg.lambda * (T - t_probe);
      for (double& x : slice.values) x -= shift;
      return slice;
    };
    std::vector<double> sups;
    for (size_t r = 0; r < T_list.size(); ++r) {
      double sup = 0.0;
      for (int k = 0; k <= sols[r].u_path.tg.Nt; ++k) {
        double shift = erg.lambda * (T_list[r] - sols[r].u_path.time(k));
        for (int i = 0; i < p1.grid.size; ++i)
          sup = std::max(sup, std::abs(sols[r].u_path[k][i] - shift));
      }
      sups.push_back(sup);
    }
    Field sl10 = shifted_slice(sols[0], 10.0);
    Field sl20 = shifted_slice(sols[1], 20.0);
    Field sl40 = shifted_slice(sols[2], 40.0);
    double d1 = sup_dist(sl20, sl10), d2 = sup_dist(sl40, sl20);
    double floor = 20.0 * cfg.tol;
    bool cauchy_ok = d2 <= 0.7 * d1 + floor;
    double spread = (*std::max_element(sups.begin(), sups.end()) -
                     *std::min_element(sups.begin(), sups.end())) /
                    *std::max_element(sups.begin(), sups.end());
    bool bounded_ok = spread <= 0.05;
    record(7, solves_ok && cauchy_ok && bounded_ok,
           "horizon limit: Delta(10,20)=" + fmt(d1) + " Delta(20,40)=" + fmt(d2) +
               " (floor " + fmt(floor) + "), sup-bound spread " + fmt(spread));
  }

  // --- 6. mild anti-monotonicity uniqueness -------------------------------
  {
    MFGProblem pg = make_p1(128);
    pg.coupling.gamma = 0.05;
    pg.coupling.alpha = 1.0;
    std::vector<Field> seeds;
    seeds.push_back(Field(pg.grid, 1.0));
    Field s2(pg.grid), s3(pg.grid);
    for (int i = 0; i < pg.grid.n; ++i) {
      double x = pg.grid.coord(i);
      s2[i] = 1.0 + 0.3 * std::cos(2.0 * kPi * x);
      double y = x - 0.3;
      s3[i] = std::exp(-30.0 * y * y);
    }
    double mass = integrate(s3);
    for (auto& v : s3.values) v /= mass;
    seeds.push_back(s2);
    seeds.push_back(s3);

    StudyReport rep = multiplicity_probe(pg, 10.0, seeds, cfg);
    int clusters = 0;
    double worst_dist = 0.0;
    bool all_conv = true;
    for (const auto& row : rep.rows) {
      clusters = std::max(clusters, (int)row.values[1] + 1);
      worst_dist = std::max(worst_dist, row.values[2]);
      all_conv = all_conv && row.values[0] == 1.0;
    }
    ErgodicSolution erg_g = solve_ergodic(pg, ErgodicMethod::Newton, cfg);
    FiniteHorizonSolution fh = solve_finite_horizon(pg, 10.0, cfg);
    fp_stats.absorb(fh.m_path);
    TurnpikeReport tp = turnpike_report(fh, erg_g);
    bool ok = all_conv && clusters == 1 && worst_dist <= 1e-6 && tp.fit_ok && tp.omega > 0;
    record(6, ok,
           "anti-monotone uniqueness: clusters=" + std::to_string(clusters) +
               " max pairwise dist=" + fmt(worst_dist) + " omega=" + fmt(tp.omega));
  }

  // --- 8. vanishing discount ----------------------------------------------
  {
    MFGProblem p1 = make_p1(128);
    DiscountStudyOptions opt;
    opt.with_evolution = false;
    StudyReport rep = vanishing_discount_study(p1, {0.2, 0.1, 0.05, 0.025}, cfg, opt);
    std::vector<double> e;
    for (const auto& row : rep.rows) e.push_back(row.values[0]);
    bool decreasing = true, ratios = true;
    for (size_t i = 1; i < e.size(); ++i) {
      decreasing = decreasing && e[i] < e[i - 1];
      ratios = ratios && e[i] <= 0.7 * e[i - 1];
    }

    MFGProblem ph = make_p0(128, 1.0);
    StudyReport reph = vanishing_discount_study(ph, {0.2, 0.1, 0.05, 0.025}, cfg, opt);
    double homog_worst = 0.0;
    for (const auto& row : reph.rows) homog_worst = std::max(homog_worst, row.values[0]);

    bool ok = decreasing && ratios && homog_worst <= 1e-9;
    std::string es;
    for (double x : e) es += fmt(x) + " ";
    record(8, ok, "vanishing discount: e_delta = { " + es + "}, homogeneous worst " +
                      fmt(homog_worst));
  }

  // --- 9. commutation -------------------------------------------------------
  {
    MFGProblem p1 = make_p1(128);
    ErgodicSolution erg = solve_ergodic(p1, ErgodicMethod::Newton, cfg);
    ThetaSolution th = solve_theta(p1, erg, cfg);
    StudyReport rep = commutation_check(p1, erg, th, cfg);
    double v_err = rep.rows[0].values[0], mu_err = rep.rows[0].values[1];
    record(9, rep.verdict,
           "commutation: |v(tail)-u-theta|=" + fmt(v_err) + " |mu(tail)-m|=" + fmt(mu_err) +
               " theta=" + fmt(th.theta));
  }

  // --- 10. ergodic cross-validation ---------------------------------------
  {
    MFGProblem p1 = make_p1(128);
    ErgodicSolution ncv = solve_ergodic(p1, ErgodicMethod::CrossValidate, cfg);
    MFGProblem ph = make_p0(128, 1.0);
    ErgodicSolution eh = solve_ergodic(ph, ErgodicMethod::Newton, cfg);
    bool ok = ncv.cross_check <= 1e-4 && std::abs(eh.lambda - 1.0) <= 1e-10;
    record(10, ok,
           "ergodic cross-validation: |dlambda|=" + fmt(ncv.cross_check) +
               ", homogeneous lambda err " + fmt(std::abs(eh.lambda - 1.0)));
  }

  // --- 11. grid convergence -------------------------------------------------
  {
    std::vector<int> ns{64, 128, 256};
    std::vector<Field> ms;
    for (int n : ns) ms.push_back(solve_ergodic(make_p1(n), ErgodicMethod::Newton, cfg).m);
    auto cross = [](const Field& coarse, const Field& fine) {
      int ratio = fine.grid.n / coarse.grid.n;
      double d = 0.0;
      for (int i = 0; i < coarse.grid.n; ++i)
        d = std::max(d, std::abs(coarse[i] - fine[i * ratio]));
      return d;
    };
    double d01 = cross(ms[0], ms[1]);
    double d12 = cross(ms[1], ms[2]);
    record(11, d01 >= 1.8 * d12,
           "grid convergence: dist(64,128)=" + fmt(d01) + " dist(128,256)=" + fmt(d12) +
               " ratio=" + fmt(d01 / d12));
  }

  // --- 12. determinism -------------------------------------------------------
  {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["action"] = "turnpike";
    j["grid"] = {{"n", 64}, {"d", 1}};
    j["problem"] = {{"kappa", 1.0},
                    {"coupling",
                     {{"c1", 1.0}, {"f0", {{{"kind", "sin"}, {"a", 0.5}, {"k", 1}}}}}}};
    j["params"] = {{"T", 4.0}};
    ExperimentPlan plan = parse_plan_json(j);
    namespace fs = std::filesystem;
    RunOptions a, b;
    a.out_dir = fs::temp_directory_path() / "mfglab_acc_det_a";
    b.out_dir = fs::temp_directory_path() / "mfglab_acc_det_b";
    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);
    a.seed = b.seed = 7;
    RunManifest ma = run_plan(plan, a);
    RunManifest mb = run_plan(plan, b);
    bool ok = ma.exit_status == 0 && mb.exit_status == 0 && ma.files.size() == mb.files.size();
    for (size_t i = 0; ok && i < ma.files.size(); ++i)
      ok = ma.files[i].path == mb.files[i].path && ma.files[i].digest == mb.files[i].digest;
    record(12, ok, "determinism: " + std::to_string(ma.files.size()) + " payloads byte-identical");
  }

  // --- 2. conservation / positivity across the suite's FP paths ------------
  {
    bool ok = fp_stats.worst_mass <= 1e-12 && fp_stats.worst_min >= -1e-12;
    record(2, ok,
           "conservation/positivity over " + std::to_string(fp_stats.frames) +
               " frames: worst |mass-1| " + fmt(fp_stats.worst_mass) + ", worst min " +
               fmt(fp_stats.worst_min));
  }

  int failures = 0;
  for (const auto& c : results) failures += c.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", (int)results.size() - failures, results.size());
  return failures;
}
