#pragma once

#include <algorithm>
#include <cmath>

#include "adjoint_geo/integrate.hpp"
#include "adjoint_geo/parallel.hpp"

namespace adjoint_geo {

// Control problem over a semi-explicit system. The algebraic vector w of the
// dynamics stacks constrained variables first (dim_y of them, matched by the
// phi rows) and free controls after; the phi block is rectangular on purpose
// and only the assembled extremality system squares it out.
struct OCProblem {
  std::string name;
  SemiExplicitDAE dae;
  int dim_y = 0;
  RunningCost L;
  std::optional<TerminalCost> C;
  std::function<Vector(const Vector&)> phi_f;   // terminal constraint, optional
  std::function<Matrix(const Vector&)> Dphi_f;
  Vector q0;
  double tf = 1.0;

  int dim_controls() const { return dae.dim_u - dim_y; }
  int dim_terminal() const { return phi_f ? static_cast<int>(phi_f(q0).size()) : 0; }
};

inline std::vector<std::string> builtin_ocp_names() { return {"lqr-ocp"}; }

inline OCProblem builtin_ocp(const std::string& name) {
  if (name == "lqr-ocp") {
    Problem p = builtin_problem("lqr-ocp");
    OCProblem ocp;
    ocp.name = p.name;
    ocp.dae = *p.dae;
    ocp.dim_y = 0;
    ocp.L = *p.cost;
    ocp.q0 = p.q0;
    ocp.tf = p.tf;
    return ocp;
  }
  std::string msg = "unknown control problem '" + name + "'; known:";
  for (const auto& n : builtin_ocp_names()) msg += " " + n;
  throw lookup_error(msg);
}

// First-order conditions as a momentum-lifted system: the stationarity rows
// over the whole algebraic vector are exactly the lift's momentum constraint,
// so assembly is the lift of the dynamics with the running cost attached.
inline AdjointDAESystem assemble_extremality(const OCProblem& ocp) {
  return lift_dae(ocp.dae, ocp.L);
}

struct OcpStepResult {
  Vector q1, p1;
  StageSet st;
  double stage_residual = 0;
};

namespace detail {

// E_j = gradL_q + Dqf^T P + Dqphi^T Lam at one stage: the momentum slope.
inline Vector momentum_slope(const AdjointDAESystem& sys, const Vector& Q, const Vector& W,
                             const Vector& P, const Vector& Lam) {
  return (sys.base.Dqf(Q, W).transpose() * P + sys.base.Dqphi(Q, W).transpose() * Lam +
          sys.gLq(Q, W))
      .eval();
}

}  // namespace detail

// One step of the coupled extremality system: state and momentum stages, the
// dynamics constraint and the stationarity rows are solved as one Newton
// system. The momentum rows involve derivatives of jacobian-vector products,
// which the callback types cannot supply, so the Newton matrix is built by
// central differences of the full residual.
inline OcpStepResult ocp_step(const AdjointDAESystem& sys, const Tableau& tab,
                              const AdjointTableau& atab, const Vector& q0, const Vector& p0,
                              double h, const StageSet* warm = nullptr,
                              const NewtonConfig& cfg = {}) {
  const int n = sys.base.dim_q, nw = sys.base.dim_u, m0 = sys.base.dim_phi, s = tab.s;
  const int sz = s * (2 * n + nw + m0);

  const auto unpack = [&](const Vector& x, std::vector<Vector>& Q, std::vector<Vector>& W,
                          std::vector<Vector>& P, std::vector<Vector>& Lam) {
    Q.resize(s);
    W.resize(s);
    P.resize(s);
    Lam.resize(s);
    for (int i = 0; i < s; ++i) {
      Q[i] = x.segment(i * n, n);
      W[i] = x.segment(s * n + i * nw, nw);
      P[i] = x.segment(s * (n + nw) + i * n, n);
      Lam[i] = x.segment(s * (2 * n + nw) + i * m0, m0);
    }
  };

  Vector x0(sz);
  for (int i = 0; i < s; ++i) {
    x0.segment(i * n, n) = warm ? warm->Q[i] : q0;
    x0.segment(s * n + i * nw, nw) =
        warm ? warm->U[i] : Vector::Zero(nw).eval();
    x0.segment(s * (n + nw) + i * n, n) = warm ? warm->P[i] : p0;
    x0.segment(s * (2 * n + nw) + i * m0, m0) =
        warm ? warm->Lam[i] : Vector::Zero(m0).eval();
  }

  auto residual = [&](const Vector& x) {
    std::vector<Vector> Q, W, P, Lam;
    unpack(x, Q, W, P, Lam);
    std::vector<Vector> fv(s), Ev(s);
    for (int i = 0; i < s; ++i) {
      fv[i] = sys.base.f(Q[i], W[i]);
      Ev[i] = detail::momentum_slope(sys, Q[i], W[i], P[i], Lam[i]);
    }
    Vector r(sz);
    for (int i = 0; i < s; ++i) {
      Vector rq = Q[i] - q0;
      Vector rp = P[i] - p0;
      for (int j = 0; j < s; ++j) {
        rq -= h * tab.a(i, j) * fv[j];
        rp += h * atab.a(i, j) * Ev[j];
      }
      r.segment(i * n, n) = rq;
      r.segment(s * (n + nw) + i * n, n) = rp;
      r.segment(s * n + i * nw, nw) = sys.momentum_constraint(Q[i], W[i], P[i], Lam[i]);
      if (m0 > 0) r.segment(s * (2 * n + nw) + i * m0, m0) = sys.base.phi(Q[i], W[i]);
    }
    return r;
  };

  auto jacobian = [&](const Vector& x) {
    Matrix J(sz, sz);
    for (int j = 0; j < sz; ++j) {
      const double eps = 1e-7 * std::max(1.0, std::abs(x[j]));
      Vector xp = x, xm = x;
      xp[j] += eps;
      xm[j] -= eps;
      J.col(j) = (residual(xp) - residual(xm)) / (2.0 * eps);
    }
    return J;
  };

  NewtonResult nr = newton_solve(residual, jacobian, x0, cfg);
  if (!nr.converged)
    throw solve_error("ocp_step: coupled stage solve did not converge (best residual " +
                      std::to_string(nr.residual_norm) + ")");

  OcpStepResult out;
  out.stage_residual = nr.residual_norm;
  std::vector<Vector> Q, W, P, Lam;
  unpack(nr.x, Q, W, P, Lam);
  out.st.Q = Q;
  out.st.U = W;
  out.st.P = P;
  out.st.Lam = Lam;
  out.st.V.resize(s);
  for (int i = 0; i < s; ++i) out.st.V[i] = sys.base.f(Q[i], W[i]);

  Vector q1b = q0;
  Vector p1 = p0;
  for (int i = 0; i < s; ++i) {
    q1b += h * tab.b[i] * out.st.V[i];
    p1 -= h * tab.b[i] * detail::momentum_slope(sys, Q[i], W[i], P[i], Lam[i]);
  }
  if (has_cs_eq_1(tab)) {
    const double gap = inf_norm((q1b - Q[s - 1]).eval());
    if (gap > 1e-12 * std::max(1.0, inf_norm(Q[s - 1])))
      throw solve_error("ocp_step: endpoint stage and weighted update disagree by " +
                        std::to_string(gap));
    out.q1 = Q[s - 1];
  } else {
    out.q1 = q1b;
  }
  out.p1 = p1;
  return out;
}

namespace detail {

// Node values of (w, lambda) given (q, p): the two algebraic rows solved
// jointly by Newton with a difference jacobian.
inline void solve_node_algebraic(const AdjointDAESystem& sys, const Vector& q, const Vector& p,
                                 Vector& w, Vector& lam, const NewtonConfig& cfg) {
  const int nw = sys.base.dim_u, m0 = sys.base.dim_phi;
  if (nw + m0 == 0) {
    w = Vector(0);
    lam = Vector(0);
    return;
  }
  Vector z0(nw + m0);
  z0.head(nw) = w.size() == nw ? w : Vector::Zero(nw).eval();
  z0.tail(m0) = lam.size() == m0 ? lam : Vector::Zero(m0).eval();
  auto residual = [&](const Vector& z) {
    Vector r(nw + m0);
    r.head(nw) = sys.momentum_constraint(q, z.head(nw), p, z.tail(m0));
    if (m0 > 0) r.tail(m0) = sys.base.phi(q, z.head(nw));
    return r;
  };
  auto jacobian = [&](const Vector& z) {
    const int sz = nw + m0;
    Matrix J(sz, sz);
    for (int j = 0; j < sz; ++j) {
      const double eps = 1e-7 * std::max(1.0, std::abs(z[j]));
      Vector zp = z, zm = z;
      zp[j] += eps;
      zm[j] -= eps;
      J.col(j) = (residual(zp) - residual(zm)) / (2.0 * eps);
    }
    return J;
  };
  NewtonResult nr = newton_solve(residual, jacobian, z0, cfg);
  if (!nr.converged)
    throw solve_error("node algebraic solve of the extremality system did not converge");
  w = nr.x.head(nw);
  lam = nr.x.tail(m0);
}

}  // namespace detail

// Integrates the extremality system forward from (q0, p0). The result reuses
// the trajectory container: u holds the combined algebraic vector, lam the
// dynamics multiplier, and the stages carry momenta for the extremality audit.
inline Trajectory integrate_extremal(const OCProblem& ocp, const Tableau& tab, const Vector& p0,
                                     double h, int N, const NewtonConfig& cfg = {}) {
  if (N < 0) throw input_error("integrate_extremal: negative step count");
  if (N > 0 && !(h > 0)) throw input_error("integrate_extremal: step size must be positive");
  const AdjointDAESystem sys = assemble_extremality(ocp);
  const AdjointTableau atab = symplectic_adjoint(tab);
  const int n = sys.base.dim_q;
  if (ocp.q0.size() != n || p0.size() != n)
    throw input_error("integrate_extremal: state or momentum has wrong dimension");

  Trajectory traj;
  traj.h = h;
  traj.has_adjoint = true;
  traj.times.resize(N + 1);
  for (int k = 0; k <= N; ++k) traj.times[k] = k * h;
  traj.q.resize(N + 1);
  traj.p.resize(N + 1);
  traj.u.resize(N + 1);
  traj.lam.resize(N + 1);
  traj.stages.resize(N);
  traj.step_cost.resize(N, 0.0);
  traj.q[0] = ocp.q0;
  traj.p[0] = p0;
  traj.u[0] = Vector(0);
  traj.lam[0] = Vector(0);
  detail::solve_node_algebraic(sys, traj.q[0], traj.p[0], traj.u[0], traj.lam[0], cfg);

  const StageSet* warm = nullptr;
  for (int k = 0; k < N; ++k) {
    OcpStepResult sr;
    try {
      sr = ocp_step(sys, tab, atab, traj.q[k], traj.p[k], h, warm, cfg);
    } catch (const solve_error& e) {
      throw solve_error("step " + std::to_string(k) + " (t = " + std::to_string(traj.times[k]) +
                        "): " + e.what());
    }
    traj.stages[k] = std::move(sr.st);
    warm = &traj.stages[k];
    traj.q[k + 1] = sr.q1;
    traj.p[k + 1] = sr.p1;
    // Node (w, lambda) always comes from the node pair (q, p). Even when the
    // last state stage sits at the endpoint the last momentum stage is not
    // p_{k+1}, so copying stage values would leave an O(h^order) gap in the
    // node stationarity.
    traj.u[k + 1] = traj.stages[k].U[tab.s - 1];
    traj.lam[k + 1] = traj.stages[k].Lam[tab.s - 1];
    detail::solve_node_algebraic(sys, traj.q[k + 1], traj.p[k + 1], traj.u[k + 1],
                                 traj.lam[k + 1], cfg);
    double sc = 0;
    for (int i = 0; i < tab.s; ++i)
      sc += tab.b[i] * ocp.L.L(traj.stages[k].Q[i], traj.stages[k].U[i]);
    traj.step_cost[k] = h * sc;
    traj.cost_quadrature += traj.step_cost[k];
  }
  return traj;
}

struct ShootConfig {
  NewtonConfig stage_newton;
  double tol = 1e-9;
  int max_iter = 30;
  double fd_eps = 1e-7;
};

struct ExtremalTrajectory {
  Trajectory traj;
  bool converged = false;
  double shooting_residual = 0;
  std::vector<double> residual_history;
  Vector lambda_f;  // sized only when the problem has a terminal constraint
  double cost = 0;  // running quadrature plus terminal cost
  int iterations = 0;
};

// Single shooting on the extremality boundary problem. The unknown is p(0),
// stacked with the terminal multiplier when a terminal constraint exists; each
// residual evaluation is one forward integration of the coupled system, and
// difference-jacobian columns run in parallel.
inline ExtremalTrajectory shoot_extremal(const OCProblem& ocp, const Tableau& tab, int N,
                                         const Vector& p0_guess, const ShootConfig& cfg = {}) {
  if (N < 1) throw input_error("shoot_extremal: need at least one step");
  if (!(ocp.tf > 0)) throw input_error("shoot_extremal: horizon must be positive");
  const int n = ocp.dae.dim_q;
  const int mf = ocp.dim_terminal();
  if (mf > 0 && !ocp.Dphi_f)
    throw input_error("shoot_extremal: terminal constraint needs its jacobian");
  const double h = ocp.tf / N;

  auto boundary_residual = [&](const Vector& z, Trajectory* keep) {
    const Vector p0 = z.head(n);
    Trajectory traj = integrate_extremal(ocp, tab, p0, h, N, cfg.stage_newton);
    Vector target = Vector::Zero(n);
    if (ocp.C) target += ocp.C->gradC(traj.q[N]);
    if (mf > 0) target += ocp.Dphi_f(traj.q[N]).transpose() * z.tail(mf);
    Vector r(n + mf);
    r.head(n) = traj.p[N] - target;
    if (mf > 0) r.tail(mf) = ocp.phi_f(traj.q[N]);
    if (keep) *keep = std::move(traj);
    return r;
  };

  Vector z = Vector::Zero(n + mf);
  if (p0_guess.size() == n) z.head(n) = p0_guess;

  ExtremalTrajectory out;
  Trajectory current;
  Vector r = boundary_residual(z, &current);
  double rnorm = inf_norm(r);
  out.residual_history.push_back(rnorm);

  int it = 0;
  while (rnorm > cfg.tol && it < cfg.max_iter) {
    Matrix J(n + mf, n + mf);
    parallel_for(n + mf, [&](int j) {
      const double eps = cfg.fd_eps * std::max(1.0, std::abs(z[j]));
      Vector zp = z;
      zp[j] += eps;
      J.col(j) = (boundary_residual(zp, nullptr) - r) / eps;
    });
    Vector step;
    try {
      step = lu_solve(J, (-r).eval(), "shoot_extremal");
    } catch (const solve_error& e) {
      throw solve_error(std::string("shoot_extremal: singular shooting jacobian (") + e.what() +
                        ")");
    }
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-4) {
      Trajectory cand;
      Vector rc;
      try {
        rc = boundary_residual(z + alpha * step, &cand);
      } catch (const solve_error&) {
        alpha *= 0.5;  // integration blew up; shorten the step
        continue;
      }
      if (inf_norm(rc) < rnorm) {
        z += alpha * step;
        r = rc;
        rnorm = inf_norm(r);
        current = std::move(cand);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++it;
    out.residual_history.push_back(rnorm);
    if (!accepted) break;
  }

  if (rnorm > cfg.tol) {
    std::string hist;
    for (double v : out.residual_history) hist += " " + format_double(v);
    throw solve_error("shoot_extremal: no convergence after " + std::to_string(it) +
                      " iterations; residual history:" + hist);
  }

  out.converged = true;
  out.shooting_residual = rnorm;
  out.iterations = it;
  out.traj = std::move(current);
  if (mf > 0) out.lambda_f = z.tail(mf);
  out.cost = out.traj.cost_quadrature + (ocp.C ? ocp.C->C(out.traj.q[N]) : 0.0);
  return out;
}

// Infinity norm of the discrete-action gradient at the integrator's solution,
// rows normalized by the h*b_i quadrature factor so a stage perturbation of
// size d shows up as a residual of size about d. Zero at a true discrete
// extremal up to the stage tolerance.
inline double discrete_extremality_residual(const OCProblem& ocp, const Tableau& tab,
                                            const ExtremalTrajectory& ext) {
  const AdjointDAESystem sys = assemble_extremality(ocp);
  const AdjointTableau atab = symplectic_adjoint(tab);
  const Trajectory& traj = ext.traj;
  const int N = traj.steps();
  const int n = sys.base.dim_q, m0 = sys.base.dim_phi, s = tab.s;
  const double h = traj.h;
  double worst = 0;

  for (int k = 0; k < N; ++k) {
    const StageSet& st = traj.stages[k];
    std::vector<Vector> E(s);
    for (int i = 0; i < s; ++i)
      E[i] = detail::momentum_slope(sys, st.Q[i], st.U[i], st.P[i], st.Lam[i]);

    for (int i = 0; i < s; ++i) {
      // d/dV: stage-momentum consistency in its p_{k+1} form.
      Vector rv = traj.p[k + 1] - st.P[i];
      for (int j = 0; j < s; ++j) rv += h * (tab.b[j] - atab.a(i, j)) * E[j];
      worst = std::max(worst, inf_norm(rv));
      // d/dW: stationarity over the whole algebraic vector.
      worst = std::max(worst,
                       inf_norm(sys.momentum_constraint(st.Q[i], st.U[i], st.P[i], st.Lam[i])));
      // d/dP: the velocity definition.
      worst = std::max(worst, inf_norm(sys.base.f(st.Q[i], st.U[i]) - st.V[i]));
      // d/dLam: the dynamics constraint.
      if (m0 > 0) worst = std::max(worst, inf_norm(sys.base.phi(st.Q[i], st.U[i])));
    }
    // d/dq_k for interior nodes: the momentum update itself.
    if (k > 0) {
      Vector rq = traj.p[k + 1] - traj.p[k];
      for (int i = 0; i < s; ++i) rq += h * tab.b[i] * E[i];
      worst = std::max(worst, inf_norm(rq));
    }
  }

  // d/dq_N: transversality.
  Vector target = Vector::Zero(n);
  if (ocp.C) target += ocp.C->gradC(traj.q[N]);
  if (ocp.dim_terminal() > 0) target += ocp.Dphi_f(traj.q[N]).transpose() * ext.lambda_f;
  worst = std::max(worst, inf_norm(traj.p[N] - target));
  if (ocp.dim_terminal() > 0) worst = std::max(worst, inf_norm(ocp.phi_f(traj.q[N])));
  return worst;
}

}  // namespace adjoint_geo
