// End-to-end acceptance checks. Each numbered criterion prints one PASS or
// FAIL line with the measured quantity and its pinned tolerance; the exit
// code is the number of failures. Everything runs at desk scale.

#include <cmath>
#include <cstdio>
#include <string>

#include "adjoint_geo/adjoint_geo.hpp"

using namespace adjoint_geo;

namespace {

int failures = 0;

void report(int idx, const std::string& label, bool ok, double value, double bound) {
  std::printf("[%s] %2d %s: %.3e (bound %.1e)\n", ok ? "PASS" : "FAIL", idx, label.c_str(), value,
              bound);
  if (!ok) ++failures;
}

void report_error(int idx, const std::string& label, const std::string& what) {
  std::printf("[FAIL] %2d %s: exception: %s\n", idx, label.c_str(), what.c_str());
  ++failures;
}

// Shared grid for the conservation criteria.
struct ConservationGrid {
  std::string problem;
  std::string tableau;
};

const std::vector<ConservationGrid> kGrid = {
    {"exp-dae", "midpoint"},  {"exp-dae", "gauss2"},  {"exp-dae", "radauIIA2"},
    {"nl-dae", "midpoint"},   {"nl-dae", "gauss2"},   {"nl-dae", "radauIIA2"},
    {"hess2", "midpoint"},    {"hess2", "gauss2"},    {"hess2", "radauIIA2"},
};

// Max over the grid of the telescoped pairing defect; augmented adds the
// quadratic running cost to both sweeps.
double grid_max_defect(bool augmented, double tol) {
  double worst = 0;
  for (const auto& g : kGrid) {
    Problem prob = builtin_problem(g.problem);
    SemiExplicitDAE dae = problem_dae(prob);
    Tableau tab = builtin_tableau(g.tableau);
    const int N = 100;
    const double h = prob.tf / N;
    std::optional<RunningCost> L;
    if (augmented) L = quadratic_running();

    RunOptions topts;
    topts.newton.tol = tol;
    topts.mode = RunMode::forward_tangent;
    topts.dq0 = Vector::Ones(dae.dim_q);
    topts.cost = L;
    Trajectory tangent = integrate_trajectory(dae, tab, prob.q0, h, N, topts);

    RunOptions aopts;
    aopts.newton.tol = tol;
    if (augmented) {
      aopts.mode = RunMode::adjoint_running;
      aopts.cost = L;
    } else {
      aopts.mode = RunMode::adjoint_terminal;
      aopts.p_terminal = Vector::Ones(dae.dim_q);
    }
    Trajectory adjoint = integrate_trajectory(dae, tab, prob.q0, h, N, aopts);

    AuditReport rep = audit_invariants(tangent, adjoint, dae, L);
    worst = std::max(worst, rep.max_defect);
  }
  return worst;
}

void criterion_1_conservation(double& defect_at_tight) {
  const double bound = 1e-9;
  try {
    defect_at_tight = grid_max_defect(false, 1e-12);
    report(1, "pairing conservation over 9 problem/tableau pairs", defect_at_tight <= bound,
           defect_at_tight, bound);
  } catch (const std::exception& e) {
    report_error(1, "pairing conservation", e.what());
  }
}

void criterion_2_augmented() {
  const double bound = 1e-9;
  try {
    const double worst = grid_max_defect(true, 1e-12);
    report(2, "augmented identity with quadratic running cost", worst <= bound, worst, bound);
  } catch (const std::exception& e) {
    report_error(2, "augmented identity", e.what());
  }
}

void criterion_3_duality() {
  // Every built-in whose forward problem is well-posed; the control problem
  // is only integrable through its extremality system and is covered by
  // criterion 9.
  const double bound = 1e-9;
  try {
    double worst = 0;
    Rng rng(20240817);
    for (const auto& name : builtin_problem_names()) {
      Problem prob = builtin_problem(name);
      if (prob.kind == ProblemKind::ocp) continue;
      SemiExplicitDAE dae = problem_dae(prob);
      Tableau tab = builtin_tableau("radauIIA2");
      const int n = dae.dim_q, N = 100;
      SensitivityConfig cfg;
      cfg.probe = false;
      TerminalCost C = sum_terminal(n);
      RunningCost L = quadratic_running();
      SensitivityReport term = terminal_sensitivity(dae, tab, prob.q0, prob.tf, N, C, cfg);
      SensitivityReport run = running_sensitivity(dae, tab, prob.q0, prob.tf, N, L, cfg);
      for (int k = 0; k < 5; ++k) {
        const Vector d = rng.vec(n, -1.0, 1.0);
        const double tan_t = tangent_sensitivity(dae, tab, prob.q0, d, prob.tf, N, C, cfg);
        const double tan_r = tangent_sensitivity(dae, tab, prob.q0, d, prob.tf, N, L, cfg);
        worst = std::max(worst, std::abs(term.adjoint_p0.dot(d) - tan_t));
        worst = std::max(worst, std::abs(run.adjoint_p0.dot(d) - tan_r));
      }
    }
    report(3, "adjoint/tangent duality, 5 directions, both cost modes", worst <= bound, worst,
           bound);
  } catch (const std::exception& e) {
    report_error(3, "adjoint/tangent duality", e.what());
  }
}

void criterion_4_oracles() {
  try {
    Tableau tab = builtin_tableau("radauIIA2");
    SensitivityConfig cfg;
    cfg.probe = false;

    Problem expd = builtin_problem("exp-dae");
    SemiExplicitDAE dae = problem_dae(expd);
    SensitivityReport term =
        terminal_sensitivity(dae, tab, expd.q0, expd.tf, 200, sum_terminal(1), cfg);
    const double e1 = std::abs(term.adjoint_p0[0] - std::exp(1.0));
    report(4, "exp growth terminal gradient vs e", e1 <= 1e-6, e1, 1e-6);

    SensitivityReport run =
        running_sensitivity(dae, tab, expd.q0, expd.tf, 200, state_running(dae.dim_u), cfg);
    const double ref = (std::exp(2.0) - 1.0) / 2.0;
    const double e2 = std::abs(run.adjoint_p0[0] - ref);
    report(4, "exp growth running gradient vs (e^2-1)/2", e2 <= 1e-5, e2, 1e-5);

    Problem nld = builtin_problem("nl-dae");
    SemiExplicitDAE nldae = problem_dae(nld);
    const int n = nldae.dim_q;
    SensitivityReport nterm =
        terminal_sensitivity(nldae, tab, nld.q0, nld.tf, 200, sum_terminal(n), cfg);
    const Vector ref_grad =
        nld.solution->dq_dq0(nld.tf, nld.q0).transpose() * Vector::Ones(n);
    const double e3 = inf_norm((nterm.adjoint_p0 - ref_grad).eval());
    report(4, "closed-form gradient of the nonlinear system", e3 <= 1e-6, e3, 1e-6);
  } catch (const std::exception& e) {
    report_error(4, "analytic sensitivity oracles", e.what());
  }
}

void criterion_5_naturality() {
  const double bound = 1e-10;
  try {
    double worst = 0;
    for (const char* name : {"nl-dae", "hess2"}) {
      Problem prob = builtin_problem(name);
      SemiExplicitDAE dae = problem_dae(prob);
      const int N = 50;
      CubeReport rep = naturality_check(dae, builtin_tableau("radauIIA2"), prob.q0,
                                        Vector::Ones(dae.dim_q), prob.tf / N, N);
      worst = std::max(worst, rep.max_discrepancy);
    }
    report(5, "four naturality paths agree at every node", worst <= bound, worst, bound);
  } catch (const std::exception& e) {
    report_error(5, "naturality cube", e.what());
  }
}

void criterion_6_orders() {
  try {
    Problem prob = builtin_problem("nl-dae");
    const std::vector<double> hs = {0.2, 0.1, 0.05, 0.025};
    struct Band {
      const char* tableau;
      double lo, hi;
    };
    for (const Band& bd : {Band{"gauss2", 3.7, 4.3}, Band{"midpoint", 1.8, 2.2},
                           Band{"radauIIA2", 2.7, 3.3}}) {
      ConvergenceReport rep = convergence_order(prob, builtin_tableau(bd.tableau), hs, prob.tf);
      const bool ok = rep.reliable && rep.order_q >= bd.lo && rep.order_q <= bd.hi;
      report(6, std::string(bd.tableau) + " fitted order", ok, rep.order_q, bd.hi);
      if (std::string(bd.tableau) == "radauIIA2") {
        // Stiffly accurate pair: the algebraic variable keeps the full order.
        const bool uok = rep.reliable && rep.order_u >= bd.lo && rep.order_u <= bd.hi;
        report(6, "radauIIA2 algebraic-variable order", uok, rep.order_u, bd.hi);
      }
    }
  } catch (const std::exception& e) {
    report_error(6, "convergence orders", e.what());
  }
}

void criterion_7_pca() {
  const double bound = 1e-10;
  try {
    double worst = 0;
    bool all_one_step = true;
    Rng rng(77);
    for (const char* name : {"exp-dae", "nl-dae"}) {
      Problem prob = builtin_problem(name);
      SemiExplicitDAE dae = problem_dae(prob);
      AdjointDAESystem adj = lift_dae(dae);
      const int n = dae.dim_q;
      for (int k = 0; k < 10; ++k) {
        const Vector q = prob.q0 + 0.3 * rng.vec(n, -1.0, 1.0);
        const Vector p = rng.vec(n, -1.0, 1.0);
        PcaReport rep = pca_check(adj, q, p);
        all_one_step = all_one_step && rep.nu_p == 1 && rep.determined;
        for (double r : rep.residuals) worst = std::max(worst, r);
      }
    }
    report(7, "constraint algorithm terminates in one step at 20 points",
           all_one_step && worst <= bound, worst, bound);
  } catch (const std::exception& e) {
    report_error(7, "constraint algorithm certificate", e.what());
  }
}

void criterion_8_tolerance_scaling(double defect_at_tight) {
  try {
    const double loose = grid_max_defect(false, 1e-10);
    // The pairing is conserved at linear-solve precision, so both runs sit at
    // roundoff and their ratio is noise; the absolute guard only gives way
    // when loosening produces a real degradation.
    const double bound = std::max(100.0 * defect_at_tight, 1e-12);
    report(8, "defect grows at most 100x when tol drops to 1e-10", loose <= bound, loose, bound);
  } catch (const std::exception& e) {
    report_error(8, "tolerance scaling", e.what());
  }
}

void criterion_9_ocp() {
  try {
    OCProblem ocp = builtin_ocp("lqr-ocp");
    Tableau tab = builtin_tableau("radauIIA2");
    ExtremalTrajectory ext = shoot_extremal(ocp, tab, 200, Vector::Zero(1));
    const double e1 = std::abs(ext.traj.p[0][0] - std::tanh(1.0));
    report(9, "extremal boundary momentum vs tanh(1)", ext.converged && e1 <= 1e-6, e1, 1e-6);
    const double der = discrete_extremality_residual(ocp, tab, ext);
    report(9, "discrete action gradient at the extremal", der <= 1e-9, der, 1e-9);
  } catch (const std::exception& e) {
    report_error(9, "control extremal", e.what());
  }
}

void criterion_10_symmetry() {
  const double bound = 1e-10;
  try {
    Problem prob = builtin_problem("linear-ode");
    SemiExplicitDAE dae = problem_dae(prob);
    const int N = 100;
    RunOptions opts;
    opts.mode = RunMode::adjoint_terminal;
    opts.p_terminal = Vector::Ones(dae.dim_q);
    Trajectory traj = integrate_trajectory(dae, builtin_tableau("midpoint"), prob.q0,
                                           prob.tf / N, N, opts);
    // The field generates its own symmetry; <p, f(q)> is the momentum map.
    auto g = [&](const Vector& q) { return dae.f(q, Vector(0)); };
    const double base = symmetry_momentum(g, traj.q[0], traj.p[0]);
    double drift = 0;
    for (int k = 0; k <= N; ++k)
      drift = std::max(drift, std::abs(symmetry_momentum(g, traj.q[k], traj.p[k]) - base));
    report(10, "momentum map drift under the rotation symmetry", drift <= bound, drift, bound);
  } catch (const std::exception& e) {
    report_error(10, "symmetry momentum", e.what());
  }
}

}  // namespace

int main() {
  double defect_at_tight = 0;
  criterion_1_conservation(defect_at_tight);
  criterion_2_augmented();
  criterion_3_duality();
  criterion_4_oracles();
  criterion_5_naturality();
  criterion_6_orders();
  criterion_7_pca();
  criterion_8_tolerance_scaling(defect_at_tight);
  criterion_9_ocp();
  criterion_10_symmetry();
  std::printf("%s: %d failure%s\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures,
              failures == 1 ? "" : "s");
  return failures;
}
