#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "adjoint_geo/integrate.hpp"
#include "adjoint_geo/parallel.hpp"

namespace adjoint_geo {

// ---------------------------------------------------------------------------
// Conservation audit
// ---------------------------------------------------------------------------

struct AuditRow {
  int step = 0;
  double t = 0;
  double pairing = 0;        // <p_k, dq_k>
  double pairing_defect = 0; // deviation from the telescoped prediction
  double constraint_res = 0;
  double momentum_res = 0;
  double hamiltonian = 0;
  double dynamical_hamiltonian = 0;
  double symmetry = 0;       // meaningful when the report carries a symmetry field
};

struct AuditReport {
  std::vector<AuditRow> rows;
  double max_defect = 0;
  double max_constraint = 0;
  double max_momentum = 0;
  bool has_symmetry = false;
};

// Per-node invariant audit over a completed run. The tangent and adjoint data
// may live in one trajectory or two; either way they must come from the same
// forward sweep, and an augmented audit needs the tangent run to have carried
// the same running cost.
inline AuditReport audit_invariants(const Trajectory& tangent_traj,
                                    const Trajectory& adjoint_traj, const SemiExplicitDAE& dae,
                                    const std::optional<RunningCost>& L = {},
                                    const std::function<Vector(const Vector&)>& g = {}) {
  if (!tangent_traj.has_tangent)
    throw input_error("audit_invariants: first trajectory carries no tangent sweep");
  if (!adjoint_traj.has_adjoint)
    throw input_error("audit_invariants: second trajectory carries no momentum sweep");
  const int N = tangent_traj.steps();
  if (adjoint_traj.steps() != N || tangent_traj.h != adjoint_traj.h)
    throw input_error("audit_invariants: trajectories use different grids");
  for (int k = 0; k <= N; ++k)
    if (inf_norm(tangent_traj.q[k] - adjoint_traj.q[k]) >
        1e-13 * std::max(1.0, inf_norm(tangent_traj.q[k])))
      throw input_error("audit_invariants: trajectories do not share a forward sweep");
  if (L && tangent_traj.step_tangent_cost.empty() && N > 0)
    throw input_error("audit_invariants: augmented audit needs a tangent run carrying the cost");

  const AdjointDAESystem adj = lift_dae(dae, L);
  AuditReport rep;
  rep.has_symmetry = static_cast<bool>(g);
  rep.rows.resize(N + 1);

  double base = adjoint_traj.p[0].dot(tangent_traj.dq[0]);
  double accumulated_cost = 0;
  for (int k = 0; k <= N; ++k) {
    AuditRow& row = rep.rows[k];
    row.step = k;
    row.t = tangent_traj.times[k];
    const Vector& q = adjoint_traj.q[k];
    const Vector& u = adjoint_traj.u[k];
    const Vector& p = adjoint_traj.p[k];
    const Vector& lam = adjoint_traj.lam[k];
    row.pairing = p.dot(tangent_traj.dq[k]);
    if (k > 0 && L) accumulated_cost += tangent_traj.step_tangent_cost[k - 1];
    row.pairing_defect = row.pairing - base + accumulated_cost;
    if (dae.dim_u > 0) {
      row.constraint_res = inf_norm(dae.phi(q, u));
      row.momentum_res = inf_norm(adj.momentum_constraint(q, u, p, lam));
    }
    row.hamiltonian = adj.hamiltonian(q, u, p, lam);
    row.dynamical_hamiltonian = adj.dynamical_hamiltonian(q, u, p);
    if (g) row.symmetry = symmetry_momentum(g, q, p);
    rep.max_defect = std::max(rep.max_defect, std::abs(row.pairing_defect));
    rep.max_constraint = std::max(rep.max_constraint, row.constraint_res);
    rep.max_momentum = std::max(rep.max_momentum, row.momentum_res);
  }
  return rep;
}

inline AuditReport audit_invariants(const Trajectory& traj, const SemiExplicitDAE& dae,
                                    const std::optional<RunningCost>& L = {},
                                    const std::function<Vector(const Vector&)>& g = {}) {
  return audit_invariants(traj, traj, dae, L, g);
}

inline void write_audit_csv(std::ostream& os, const AuditReport& rep) {
  std::vector<std::string> cols = {"step", "t",            "pairing", "defect",
                                   "constraint_res", "momentum_res", "H",       "Hd"};
  if (rep.has_symmetry) cols.push_back("symmetry");
  csv_header(os, cols);
  for (const AuditRow& r : rep.rows) {
    std::vector<std::string> row = {std::to_string(r.step),
                                    format_double(r.t),
                                    format_double(r.pairing),
                                    format_double(r.pairing_defect),
                                    format_double(r.constraint_res),
                                    format_double(r.momentum_res),
                                    format_double(r.hamiltonian),
                                    format_double(r.dynamical_hamiltonian)};
    if (rep.has_symmetry) row.push_back(format_double(r.symmetry));
    csv_row(os, row);
  }
}

// ---------------------------------------------------------------------------
// Naturality cube
// ---------------------------------------------------------------------------

// p0 = (dq1/dq0)^T p1 from the transposed stage system: the "discretize the
// flow, then transpose the discrete map" construction. Deliberately built from
// the forward stage matrix rather than the momentum sweep so the two routes
// stay independent pieces of evidence.
inline Vector discrete_adjoint_step(const SemiExplicitDAE& dae, const Tableau& tab,
                                    const StageSet& st, const Vector& p1, double h) {
  const int n = dae.dim_q, na = dae.dim_u, m = dae.dim_phi, s = tab.s;
  if (na != m)
    throw index_error("discrete_adjoint_step: constraint block is " + std::to_string(m) + "x" +
                      std::to_string(na) + "; index-1 stepping needs it square");
  const auto ev = detail::eval_stages(dae, st.Q, st.U);
  const Matrix M = detail::stage_system_matrix(tab, h, n, na, m, ev);
  // dq1 = dq0 + R x with M x = S dq0, S stacking the identity on stage rows.
  Matrix R = Matrix::Zero(n, s * (n + na));
  for (int i = 0; i < s; ++i) {
    R.block(0, i * n, n, n) = h * tab.b[i] * ev.Dqf[i];
    if (na > 0) R.block(0, s * n + i * na, n, na) = h * tab.b[i] * ev.Duf[i];
  }
  const Vector y = lu_solve(M.transpose(), (R.transpose() * p1).eval(), "discrete_adjoint_step");
  Vector p0 = p1;
  for (int i = 0; i < s; ++i) p0 += y.segment(i * n, n);
  return p0;
}

struct CubePath {
  std::string label;
  std::vector<Vector> q, p;
};

struct CubePair {
  std::string path_a, path_b;
  double max_dq = 0, max_dp = 0;
};

struct CubeReport {
  std::vector<CubePath> paths;  // four routes, fixed order
  std::vector<CubePair> pairs;  // all six comparisons
  double max_discrepancy = 0;
};

// Runs the four routes from an index-1 system to a discrete costate sequence:
//   0 reduce the system, lift it, discretize the lifted pair
//   1 lift the full system, discretize with the partitioned pair
//   2 discretize the full system, transpose the discrete flow
//   3 reduce the system, discretize, transpose the discrete flow
// and compares every pair of (q, p) node sequences. Paths run in parallel;
// each owns its reduction state.
inline CubeReport naturality_check(const SemiExplicitDAE& dae, const Tableau& tab,
                                   const Vector& q0, const Vector& p_terminal, double h, int N,
                                   const NewtonConfig& cfg = {}) {
  if (p_terminal.size() != dae.dim_q)
    throw input_error("naturality_check: p_terminal has wrong dimension");
  CubeReport rep;
  rep.paths.resize(4);

  parallel_for(4, [&](int idx) {
    switch (idx) {
      case 0: {
        ReducedODE red = reduce_index1(dae, cfg);
        const SemiExplicitDAE rode = as_dae(red.as_vector_field());
        RunOptions o;
        o.mode = RunMode::adjoint_terminal;
        o.p_terminal = p_terminal;
        o.newton = cfg;
        auto t = integrate_trajectory(rode, tab, q0, h, N, o);
        rep.paths[0] = {"reduced-ode-adjoint", std::move(t.q), std::move(t.p)};
        break;
      }
      case 1: {
        RunOptions o;
        o.mode = RunMode::adjoint_terminal;
        o.p_terminal = p_terminal;
        o.newton = cfg;
        auto t = integrate_trajectory(dae, tab, q0, h, N, o);
        rep.paths[1] = {"dae-adjoint-staged", std::move(t.q), std::move(t.p)};
        break;
      }
      case 2: {
        RunOptions o;
        o.newton = cfg;
        auto t = integrate_trajectory(dae, tab, q0, h, N, o);
        std::vector<Vector> p(N + 1);
        p[N] = p_terminal;
        for (int k = N - 1; k >= 0; --k)
          p[k] = discrete_adjoint_step(dae, tab, t.stages[k], p[k + 1], h);
        rep.paths[2] = {"dae-discrete-adjoint", std::move(t.q), std::move(p)};
        break;
      }
      case 3: {
        ReducedODE red = reduce_index1(dae, cfg);
        const SemiExplicitDAE rode = as_dae(red.as_vector_field());
        RunOptions o;
        o.newton = cfg;
        auto t = integrate_trajectory(rode, tab, q0, h, N, o);
        std::vector<Vector> p(N + 1);
        p[N] = p_terminal;
        for (int k = N - 1; k >= 0; --k)
          p[k] = discrete_adjoint_step(rode, tab, t.stages[k], p[k + 1], h);
        rep.paths[3] = {"reduced-discrete-adjoint", std::move(t.q), std::move(p)};
        break;
      }
    }
  });

  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      CubePair pr;
      pr.path_a = rep.paths[a].label;
      pr.path_b = rep.paths[b].label;
      for (int k = 0; k <= N; ++k) {
        pr.max_dq = std::max(pr.max_dq, inf_norm(rep.paths[a].q[k] - rep.paths[b].q[k]));
        pr.max_dp = std::max(pr.max_dp, inf_norm(rep.paths[a].p[k] - rep.paths[b].p[k]));
      }
      rep.max_discrepancy = std::max({rep.max_discrepancy, pr.max_dq, pr.max_dp});
      rep.pairs.push_back(std::move(pr));
    }
  }
  return rep;
}

inline void write_cube_csv(std::ostream& os, const CubeReport& rep) {
  csv_header(os, {"path_a", "path_b", "max_dq", "max_dp"});
  for (const CubePair& pr : rep.pairs)
    csv_row(os, {pr.path_a, pr.path_b, format_double(pr.max_dq), format_double(pr.max_dp)});
}

// ---------------------------------------------------------------------------
// Convergence order
// ---------------------------------------------------------------------------

struct ConvergencePoint {
  double h = 0;
  double err_q = 0;
  double err_p = 0;
  double err_u = 0;
};

struct ConvergenceReport {
  std::vector<ConvergencePoint> points;
  double order_q = 0, order_p = 0, order_u = 0;
  bool reliable = true;     // monotone errors above the roundoff floor
  bool richardson = false;  // no analytic reference; compared against h/2 runs
};

namespace detail {

inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& e,
                           bool& reliable) {
  const int n = static_cast<int>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    if (!(e[i] > 1e-13)) {
      reliable = false;
      return 0;
    }
    const double x = std::log(h[i]), y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  for (int i = 0; i + 1 < n; ++i)
    if (e[i] <= e[i + 1]) reliable = false;  // h is sorted descending
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

// Measures q-, p- and (when present) u-errors at t = tf over a geometric step
// ladder and fits log-log slopes. The costate error is measured through the
// terminal-seeded backward sweep against the transposed flow linearization.
inline ConvergenceReport convergence_order(const Problem& prob, const Tableau& tab,
                                           std::vector<double> h_list, double tf,
                                           const NewtonConfig& cfg = {}) {
  if (h_list.size() < 4)
    throw input_error("convergence_order: need at least four step sizes");
  std::sort(h_list.begin(), h_list.end(), std::greater<double>());
  const double ratio = h_list[0] / h_list[1];
  for (std::size_t i = 0; i + 1 < h_list.size(); ++i)
    if (std::abs(h_list[i] / h_list[i + 1] - ratio) > 0.01 * ratio)
      throw input_error("convergence_order: step sizes must form a geometric ladder");
  if (!(tf > 0)) throw input_error("convergence_order: final time must be positive");

  const SemiExplicitDAE dae = problem_dae(prob);
  const int n = dae.dim_q;
  const Vector p_term = Vector::Ones(n);

  ConvergenceReport rep;
  rep.richardson = !prob.solution.has_value();
  rep.points.resize(h_list.size());

  parallel_for(static_cast<int>(h_list.size()), [&](int i) {
    const int N = std::max(1, static_cast<int>(std::llround(tf / h_list[i])));
    const double h = tf / N;
    RunOptions o;
    o.mode = RunMode::adjoint_terminal;
    o.p_terminal = p_term;
    o.newton = cfg;
    const auto t = integrate_trajectory(dae, tab, prob.q0, h, N, o);
    ConvergencePoint pt;
    pt.h = h;
    if (!rep.richardson) {
      const auto& sol = *prob.solution;
      pt.err_q = inf_norm(t.q[N] - sol.q(tf, prob.q0));
      pt.err_p = inf_norm(t.p[0] - sol.dq_dq0(tf, prob.q0).transpose() * p_term);
      if (dae.dim_u > 0 && sol.u) pt.err_u = inf_norm(t.u[N] - sol.u(tf, prob.q0));
    } else {
      const auto r = integrate_trajectory(dae, tab, prob.q0, h / 2, 2 * N, o);
      pt.err_q = inf_norm(t.q[N] - r.q[2 * N]);
      pt.err_p = inf_norm(t.p[0] - r.p[0]);
      if (dae.dim_u > 0) pt.err_u = inf_norm(t.u[N] - r.u[2 * N]);
    }
    rep.points[i] = pt;
  });

  std::vector<double> hs, eq, ep, eu;
  for (const auto& pt : rep.points) {
    hs.push_back(pt.h);
    eq.push_back(pt.err_q);
    ep.push_back(pt.err_p);
    eu.push_back(pt.err_u);
  }
  rep.order_q = detail::loglog_slope(hs, eq, rep.reliable);
  rep.order_p = detail::loglog_slope(hs, ep, rep.reliable);
  if (dae.dim_u > 0) rep.order_u = detail::loglog_slope(hs, eu, rep.reliable);
  return rep;
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceReport& rep) {
  csv_header(os, {"h", "err_q", "err_p"});
  for (const auto& pt : rep.points)
    csv_row(os, {format_double(pt.h), format_double(pt.err_q), format_double(pt.err_p)});
}

// ---------------------------------------------------------------------------
// Constraint-algorithm termination certificate
// ---------------------------------------------------------------------------

struct PcaConfig {
  NewtonConfig newton;
  double eps = 1e-6;          // forward-difference step along the flow direction
  double tangency_tol = 1e-4; // bound on constraint drift per unit step
  Vector u_guess;
};

struct PcaReport {
  int nu_p = -1;  // 1 when certified; -1 when undetermined
  bool determined = false;
  Vector u, lambda;
  std::vector<double> residuals;  // primary and momentum constraint residuals
  std::vector<double> tangency;   // drift rates of both constraints along the flow
  std::string note;
};

// Certifies at one point (q, p) that solving the two primary constraints
// closes the system: the flow direction they induce leaves both constraints
// stationary to first order, so no secondary constraints appear. Tangency is
// measured by a forward difference, not second derivatives; this is a
// numerical certificate at a point, not a proof.
inline PcaReport pca_check(const AdjointDAESystem& adj, const Vector& q, const Vector& p,
                           const PcaConfig& cfg = {}) {
  const SemiExplicitDAE& dae = adj.base;
  if (dae.dim_u == 0) throw input_error("pca_check: system has no algebraic part");
  PcaReport rep;

  const Vector ug = cfg.u_guess.size() == dae.dim_u ? cfg.u_guess : Vector::Zero(dae.dim_u).eval();
  NewtonResult nr = newton_solve([&](const Vector& u) { return dae.phi(q, u); },
                                 [&](const Vector& u) { return dae.Duphi(q, u); }, ug, cfg.newton);
  if (!nr.converged) {
    rep.note = "primary constraint solve did not converge (best residual " +
               std::to_string(nr.residual_norm) + ")";
    return rep;
  }
  rep.u = nr.x;

  const RunningCost* cost = adj.cost ? &*adj.cost : nullptr;
  try {
    rep.lambda = solve_multiplier(dae, q, rep.u, p, cost);
  } catch (const index_error& e) {
    rep.note = e.what();
    return rep;
  }
  rep.residuals = {inf_norm(dae.phi(q, rep.u)),
                   inf_norm(adj.momentum_constraint(q, rep.u, p, rep.lambda))};

  // Flow direction from the closed system; algebraic rates by the implicit
  // function theorem (u) and by re-solving at the stepped point (lambda).
  const Vector qdot = dae.f(q, rep.u);
  Vector udot;
  try {
    udot = tangent_system(dae).solve_du(q, rep.u, qdot);
  } catch (const index_error& e) {
    rep.note = e.what();
    return rep;
  }
  const Vector pdot = adj.p_rhs(q, rep.u, p, rep.lambda);

  const double eps = cfg.eps;
  const Vector q2 = q + eps * qdot;
  const Vector u2 = rep.u + eps * udot;
  const Vector p2 = p + eps * pdot;
  Vector lam2;
  try {
    NewtonConfig ncfg = cfg.newton;
    NewtonResult nr2 = newton_solve([&](const Vector& u) { return dae.phi(q2, u); },
                                    [&](const Vector& u) { return dae.Duphi(q2, u); }, rep.u, ncfg);
    if (!nr2.converged) {
      rep.note = "constraint re-solve at the stepped point did not converge";
      return rep;
    }
    lam2 = solve_multiplier(dae, q2, nr2.x, p2, cost);
  } catch (const index_error& e) {
    rep.note = e.what();
    return rep;
  }

  rep.tangency = {inf_norm(dae.phi(q2, u2)) / eps,
                  inf_norm(adj.momentum_constraint(q2, u2, p2, lam2)) / eps};
  rep.determined = true;
  const double rtol = 100.0 * cfg.newton.tol;
  if (rep.residuals[0] <= rtol && rep.residuals[1] <= rtol &&
      rep.tangency[0] <= cfg.tangency_tol && rep.tangency[1] <= cfg.tangency_tol) {
    rep.nu_p = 1;
  } else {
    rep.note = "constraint drift along the flow exceeds the certificate tolerance";
  }
  return rep;
}

}  // namespace adjoint_geo
