#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "adjoint_geo/adjoint.hpp"
#include "adjoint_geo/csv.hpp"
#include "adjoint_geo/newton.hpp"
#include "adjoint_geo/systems.hpp"
#include "adjoint_geo/tableau.hpp"

namespace adjoint_geo {

inline SemiExplicitDAE as_dae(const VectorField& vf) {
  SemiExplicitDAE d;
  d.dim_q = vf.dim_q;
  d.dim_u = 0;
  d.dim_phi = 0;
  d.f = [f = vf.f](const Vector& q, const Vector&) { return f(q); };
  d.phi = [](const Vector&, const Vector&) { return Vector(0); };
  d.Dqf = [J = vf.Df](const Vector& q, const Vector&) { return J(q); };
  d.Duf = [n = vf.dim_q](const Vector&, const Vector&) { return Matrix(n, 0).eval(); };
  d.Dqphi = [n = vf.dim_q](const Vector&, const Vector&) { return Matrix(0, n).eval(); };
  d.Duphi = [](const Vector&, const Vector&) { return Matrix(0, 0).eval(); };
  return d;
}

// One step's internal data. Q, U, V are filled by the forward solve; P and
// Lam stay empty until a momentum sweep visits the step.
struct StageSet {
  std::vector<Vector> Q, U, V;
  std::vector<Vector> P, Lam;
};

struct TangentStages {
  std::vector<Vector> dQ, dU;
};

namespace detail {

// Per-stage values and Jacobians at fixed stage states; shared by the Newton
// Jacobian, the tangent solve and the momentum solves.
struct StageEval {
  std::vector<Vector> f;
  std::vector<Matrix> Dqf, Duf, Dqphi, Duphi;
};

inline StageEval eval_stages(const SemiExplicitDAE& dae, const std::vector<Vector>& Q,
                             const std::vector<Vector>& U) {
  StageEval ev;
  const int s = static_cast<int>(Q.size());
  ev.f.resize(s);
  ev.Dqf.resize(s);
  ev.Duf.resize(s);
  ev.Dqphi.resize(s);
  ev.Duphi.resize(s);
  for (int i = 0; i < s; ++i) {
    ev.f[i] = dae.f(Q[i], U[i]);
    ev.Dqf[i] = dae.Dqf(Q[i], U[i]);
    ev.Duf[i] = dae.Duf(Q[i], U[i]);
    ev.Dqphi[i] = dae.Dqphi(Q[i], U[i]);
    ev.Duphi[i] = dae.Duphi(Q[i], U[i]);
  }
  return ev;
}

// Jacobian of the forward stage system, also the matrix of the tangent solve:
//   [ I - h a_ij Dqf_j   -h a_ij Duf_j ]
//   [ diag(Dqphi_i)       diag(Duphi_i) ]
inline Matrix stage_system_matrix(const Tableau& tab, double h, int n, int na, int m,
                                  const StageEval& ev) {
  const int s = tab.s;
  Matrix M = Matrix::Zero(s * (n + m), s * (n + na));
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      M.block(i * n, j * n, n, n) = -h * tab.a(i, j) * ev.Dqf[j];
      if (na > 0) M.block(i * n, s * n + j * na, n, na) = -h * tab.a(i, j) * ev.Duf[j];
    }
    M.block(i * n, i * n, n, n) += Matrix::Identity(n, n);
    if (m > 0) {
      M.block(s * n + i * m, i * n, m, n) = ev.Dqphi[i];
      M.block(s * n + i * m, s * n + i * na, m, na) = ev.Duphi[i];
    }
  }
  return M;
}

}  // namespace detail

struct StepResult {
  Vector q1;
  StageSet st;
  double stage_residual = 0;  // final Newton residual of the stage solve
};

// Solves the coupled stage system
//   Q_i = q0 + h sum_j a_ij f(Q_j, U_j),  0 = phi(Q_i, U_i)
// by Newton with the analytic block Jacobian. When c_s = 1 the endpoint stage
// is the node value and the b-weighted update must agree with it to 1e-13;
// otherwise the b-weighted update is the node value.
inline StepResult rk_step_dae(const SemiExplicitDAE& dae, const Tableau& tab, const Vector& q0,
                              const Vector& u_warm, double h, const NewtonConfig& cfg = {}) {
  const int n = dae.dim_q, na = dae.dim_u, m = dae.dim_phi, s = tab.s;
  if (na != m)
    throw index_error("rk_step_dae: constraint block is " + std::to_string(m) + "x" +
                      std::to_string(na) + "; index-1 stepping needs it square");
  if (q0.size() != n) throw input_error("rk_step_dae: q0 has wrong dimension");

  const Vector uw = u_warm.size() == na ? u_warm : Vector::Zero(na).eval();
  Vector x0(s * (n + na));
  for (int i = 0; i < s; ++i) {
    x0.segment(i * n, n) = q0;
    x0.segment(s * n + i * na, na) = uw;
  }

  auto unpack = [&](const Vector& x, std::vector<Vector>& Q, std::vector<Vector>& U) {
    Q.resize(s);
    U.resize(s);
    for (int i = 0; i < s; ++i) {
      Q[i] = x.segment(i * n, n);
      U[i] = x.segment(s * n + i * na, na);
    }
  };

  auto residual = [&](const Vector& x) {
    std::vector<Vector> Q, U;
    unpack(x, Q, U);
    std::vector<Vector> fv(s);
    for (int i = 0; i < s; ++i) fv[i] = dae.f(Q[i], U[i]);
    Vector r(s * (n + m));
    for (int i = 0; i < s; ++i) {
      Vector acc = Q[i] - q0;
      for (int j = 0; j < s; ++j) acc -= h * tab.a(i, j) * fv[j];
      r.segment(i * n, n) = acc;
      if (m > 0) r.segment(s * n + i * m, m) = dae.phi(Q[i], U[i]);
    }
    return r;
  };

  auto jacobian = [&](const Vector& x) {
    std::vector<Vector> Q, U;
    unpack(x, Q, U);
    return detail::stage_system_matrix(tab, h, n, na, m, detail::eval_stages(dae, Q, U));
  };

  NewtonResult nr = newton_solve(residual, jacobian, x0, cfg);
  if (!nr.converged)
    throw solve_error("rk_step_dae: stage solve did not converge (best residual " +
                      std::to_string(nr.residual_norm) + " after " +
                      std::to_string(nr.iterations) + " iterations)");

  StepResult out;
  out.stage_residual = nr.residual_norm;
  unpack(nr.x, out.st.Q, out.st.U);
  out.st.V.resize(s);
  for (int i = 0; i < s; ++i) out.st.V[i] = dae.f(out.st.Q[i], out.st.U[i]);

  Vector q1b = q0;
  for (int i = 0; i < s; ++i) q1b += h * tab.b[i] * out.st.V[i];
  if (has_cs_eq_1(tab)) {
    const Vector& qs = out.st.Q[s - 1];
    const double gap = inf_norm((q1b - qs).eval());
    if (gap > 1e-13 * std::max(1.0, inf_norm(qs)))
      throw solve_error("rk_step_dae: endpoint stage and weighted update disagree by " +
                        std::to_string(gap));
    out.q1 = qs;
  } else {
    out.q1 = q1b;
  }
  return out;
}

inline StepResult rk_step_ode(const VectorField& vf, const Tableau& tab, const Vector& q0,
                              double h, const NewtonConfig& cfg = {}) {
  return rk_step_dae(as_dae(vf), tab, q0, Vector(0), h, cfg);
}

struct TangentStepResult {
  Vector dq1;
  TangentStages ts;
};

// Linearization of the converged stage system: one linear solve with the same
// matrix the last Newton iteration used.
inline TangentStepResult tangent_step(const SemiExplicitDAE& dae, const Tableau& tab,
                                      const StageSet& st, const Vector& dq0, double h) {
  const int n = dae.dim_q, na = dae.dim_u, m = dae.dim_phi, s = tab.s;
  if (na != m)
    throw index_error("tangent_step: constraint block is " + std::to_string(m) + "x" +
                      std::to_string(na) + "; index-1 stepping needs it square");
  const auto ev = detail::eval_stages(dae, st.Q, st.U);
  Matrix M = detail::stage_system_matrix(tab, h, n, na, m, ev);
  Vector rhs = Vector::Zero(s * (n + m));
  for (int i = 0; i < s; ++i) rhs.segment(i * n, n) = dq0;
  Vector sol = lu_solve(M, rhs, "tangent_step");

  TangentStepResult out;
  out.ts.dQ.resize(s);
  out.ts.dU.resize(s);
  for (int i = 0; i < s; ++i) {
    out.ts.dQ[i] = sol.segment(i * n, n);
    out.ts.dU[i] = sol.segment(s * n + i * na, na);
  }
  out.dq1 = dq0;
  for (int i = 0; i < s; ++i)
    out.dq1 += h * tab.b[i] * (ev.Dqf[i] * out.ts.dQ[i] + ev.Duf[i] * out.ts.dU[i]);
  return out;
}

struct AdjointStepResult {
  Vector p0;  // filled by the type II orientation
  Vector p1;  // filled by the forward orientation
  std::vector<Vector> P, Lam;
};

namespace detail {

struct MomentumData {
  StageEval ev;
  std::vector<Vector> gLq, gLu;
};

inline MomentumData momentum_data(const AdjointDAESystem& adj, const StageSet& st) {
  MomentumData md;
  md.ev = eval_stages(adj.base, st.Q, st.U);
  const int s = static_cast<int>(st.Q.size());
  md.gLq.resize(s);
  md.gLu.resize(s);
  for (int i = 0; i < s; ++i) {
    md.gLq[i] = adj.gLq(st.Q[i], st.U[i]);
    md.gLu[i] = adj.gLu(st.Q[i], st.U[i]);
  }
  return md;
}

// Fills the s(n+m) x s(n+m) block common to both momentum orientations:
//   stage rows:      P_i + h sum_j w_ij (Dqf_j^T P_j + Dqphi_j^T Lam_j)
//   constraint rows: Duf_i^T P_i + Duphi_i^T Lam_i
// with w = atab for the standard sweep; callers add extra rows/columns.
inline void fill_momentum_blocks(Matrix& M, const Matrix& w, double h, int n, int na, int m,
                                 const StageEval& ev) {
  const int s = static_cast<int>(ev.f.size());
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      M.block(i * n, j * n, n, n) = h * w(i, j) * ev.Dqf[j].transpose();
      if (m > 0) M.block(i * n, s * n + j * m, n, m) = h * w(i, j) * ev.Dqphi[j].transpose();
    }
    M.block(i * n, i * n, n, n) += Matrix::Identity(n, n);
    if (m > 0) {
      M.block(s * n + i * na, i * n, na, n) = ev.Duf[i].transpose();
      M.block(s * n + i * na, s * n + i * m, na, m) = ev.Duphi[i].transpose();
    }
  }
}

}  // namespace detail

// Momentum sweep with p0 given: one linear solve for the stage momenta and
// multipliers, then the explicit update
//   p1 = p0 - h sum_i b_i (Dqf_i^T P_i + Dqphi_i^T Lam_i + gradL_q,i).
inline AdjointStepResult adjoint_step_forward(const AdjointDAESystem& adj, const Tableau& tab,
                                              const AdjointTableau& atab, const StageSet& st,
                                              const Vector& p0, double h) {
  const int n = adj.base.dim_q, na = adj.base.dim_u, m = adj.base.dim_phi, s = tab.s;
  if (na != m)
    throw index_error("adjoint_step_forward: constraint block is " + std::to_string(m) + "x" +
                      std::to_string(na) + "; index-1 stepping needs it square");
  const auto md = detail::momentum_data(adj, st);
  Matrix M = Matrix::Zero(s * (n + m), s * (n + m));
  detail::fill_momentum_blocks(M, atab.a, h, n, na, m, md.ev);
  Vector rhs(s * (n + m));
  for (int i = 0; i < s; ++i) {
    Vector r = p0;
    for (int j = 0; j < s; ++j) r -= h * atab.a(i, j) * md.gLq[j];
    rhs.segment(i * n, n) = r;
    if (m > 0) rhs.segment(s * n + i * na, na) = -md.gLu[i];
  }
  Vector sol = lu_solve(M, rhs, "adjoint_step_forward");

  AdjointStepResult out;
  out.P.resize(s);
  out.Lam.resize(s);
  for (int i = 0; i < s; ++i) {
    out.P[i] = sol.segment(i * n, n);
    out.Lam[i] = sol.segment(s * n + i * m, m);
  }
  out.p1 = p0;
  for (int i = 0; i < s; ++i)
    out.p1 -= h * tab.b[i] *
              (md.ev.Dqf[i].transpose() * out.P[i] + md.ev.Dqphi[i].transpose() * out.Lam[i] +
               md.gLq[i]).eval();
  out.p0 = p0;
  return out;
}

// Momentum sweep with p1 given and p0 unknown: stage equations, momentum
// constraints and the node update are solved together as one linear system in
// (P, Lam, p0).
inline AdjointStepResult adjoint_step_typeII(const AdjointDAESystem& adj, const Tableau& tab,
                                             const AdjointTableau& atab, const StageSet& st,
                                             const Vector& p1, double h) {
  const int n = adj.base.dim_q, na = adj.base.dim_u, m = adj.base.dim_phi, s = tab.s;
  if (na != m)
    throw index_error("adjoint_step_typeII: constraint block is " + std::to_string(m) + "x" +
                      std::to_string(na) + "; index-1 stepping needs it square");
  const auto md = detail::momentum_data(adj, st);
  const int core = s * (n + m);
  Matrix M = Matrix::Zero(core + n, core + n);
  detail::fill_momentum_blocks(M, atab.a, h, n, na, m, md.ev);
  for (int i = 0; i < s; ++i)
    M.block(i * n, core, n, n) = -Matrix::Identity(n, n);  // the -p0 term of each stage row
  for (int j = 0; j < s; ++j) {
    M.block(core, j * n, n, n) = -h * tab.b[j] * md.ev.Dqf[j].transpose();
    if (m > 0) M.block(core, s * n + j * m, n, m) = -h * tab.b[j] * md.ev.Dqphi[j].transpose();
  }
  M.block(core, core, n, n) = Matrix::Identity(n, n);

  Vector rhs = Vector::Zero(core + n);
  for (int i = 0; i < s; ++i) {
    Vector r = Vector::Zero(n);
    for (int j = 0; j < s; ++j) r -= h * atab.a(i, j) * md.gLq[j];
    rhs.segment(i * n, n) = r;
    if (m > 0) rhs.segment(s * n + i * na, na) = -md.gLu[i];
  }
  Vector tail = p1;
  for (int j = 0; j < s; ++j) tail += h * tab.b[j] * md.gLq[j];
  rhs.segment(core, n) = tail;

  Vector sol = lu_solve(M, rhs, "adjoint_step_typeII");

  AdjointStepResult out;
  out.P.resize(s);
  out.Lam.resize(s);
  for (int i = 0; i < s; ++i) {
    out.P[i] = sol.segment(i * n, n);
    out.Lam[i] = sol.segment(s * n + i * m, m);
  }
  out.p0 = sol.segment(core, n);
  out.p1 = p1;
  return out;
}

enum class RunMode { forward, forward_tangent, adjoint_terminal, adjoint_running };

struct RunOptions {
  RunMode mode = RunMode::forward;
  Vector dq0;                       // enables the tangent sweep when sized
  Vector p_terminal;                // seed for adjoint_terminal
  std::optional<RunningCost> cost;  // required for adjoint_running; augments any sweep if set
  NewtonConfig newton;
  Vector u0;                        // initial guess for the algebraic solve at t = 0
};

struct Trajectory {
  double h = 0;
  std::vector<double> times;
  std::vector<Vector> q, u, p, lam, dq, du;
  std::vector<StageSet> stages;
  std::vector<TangentStages> tstages;
  std::vector<double> step_cost;          // h sum_i b_i L(Q_i, U_i) per step
  std::vector<double> step_tangent_cost;  // h sum_i b_i <dL_i, (dQ_i, dU_i)> per step
  double cost_quadrature = 0;
  double tangent_quadrature = 0;
  bool has_adjoint = false;
  bool has_tangent = false;
  int steps() const { return static_cast<int>(stages.size()); }
};

namespace detail {

inline Vector solve_node_u(const SemiExplicitDAE& dae, const Vector& q, const Vector& guess,
                           const NewtonConfig& cfg) {
  if (dae.dim_u == 0) return Vector(0);
  const Vector g = guess.size() == dae.dim_u ? guess : Vector::Zero(dae.dim_u).eval();
  NewtonResult res = newton_solve([&](const Vector& u) { return dae.phi(q, u); },
                                  [&](const Vector& u) { return dae.Duphi(q, u); }, g, cfg);
  if (!res.converged)
    throw solve_error("node algebraic solve did not converge (best residual " +
                      std::to_string(res.residual_norm) + ")");
  return res.x;
}

}  // namespace detail

// Backward momentum sweep over an already-integrated trajectory. Seeds
// p_N = p_terminal and recurses with the Type II step; stage momenta and
// multipliers land back in the checkpointed stages.
inline void attach_adjoint_sweep(const SemiExplicitDAE& dae, const Tableau& tab, Trajectory& traj,
                                 const Vector& p_terminal,
                                 const std::optional<RunningCost>& cost = {}) {
  const int N = traj.steps();
  const int n = dae.dim_q, na = dae.dim_u;
  if (p_terminal.size() != n)
    throw input_error("attach_adjoint_sweep: p_terminal has wrong dimension");
  traj.has_adjoint = true;
  traj.p.resize(N + 1);
  traj.lam.resize(N + 1);
  const AdjointDAESystem adj = lift_dae(dae, cost);
  const AdjointTableau atab = symplectic_adjoint(tab);
  traj.p[N] = p_terminal;
  for (int k = N - 1; k >= 0; --k) {
    AdjointStepResult ar =
        adjoint_step_typeII(adj, tab, atab, traj.stages[k], traj.p[k + 1], traj.h);
    traj.stages[k].P = std::move(ar.P);
    traj.stages[k].Lam = std::move(ar.Lam);
    traj.p[k] = std::move(ar.p0);
  }
  const RunningCost* c = cost ? &*cost : nullptr;
  for (int k = 0; k <= N; ++k)
    traj.lam[k] = na > 0 ? solve_multiplier(dae, traj.q[k], traj.u[k], traj.p[k], c) : Vector(0);
}

// Fixed-step driver with full checkpointing: every step keeps its stages so
// the backward sweep revisits exact forward data instead of re-solving.
inline Trajectory integrate_trajectory(const SemiExplicitDAE& dae, const Tableau& tab,
                                       const Vector& q0, double h, int N,
                                       const RunOptions& opts = {}) {
  const int n = dae.dim_q, na = dae.dim_u;
  if (q0.size() != n) throw input_error("integrate_trajectory: q0 has wrong dimension");
  if (N < 0) throw input_error("integrate_trajectory: negative step count");
  if (N > 0 && !(h > 0)) throw input_error("integrate_trajectory: step size must be positive");
  if (na > 0 && dae.dim_phi != na)
    throw index_error("integrate_trajectory: constraint block is " +
                      std::to_string(dae.dim_phi) + "x" + std::to_string(na) +
                      "; index-1 stepping needs it square");

  const bool adjoint_mode =
      opts.mode == RunMode::adjoint_terminal || opts.mode == RunMode::adjoint_running;
  const bool want_tangent = opts.mode == RunMode::forward_tangent || opts.dq0.size() > 0;
  if (opts.mode == RunMode::forward_tangent && opts.dq0.size() != n)
    throw input_error("integrate_trajectory: tangent mode needs dq0 of the state dimension");
  if (want_tangent && opts.dq0.size() != n)
    throw input_error("integrate_trajectory: dq0 has wrong dimension");
  if (opts.mode == RunMode::adjoint_terminal && opts.p_terminal.size() != n)
    throw input_error("integrate_trajectory: adjoint_terminal needs p_terminal of the state "
                      "dimension");
  if (opts.mode == RunMode::adjoint_running && !opts.cost)
    throw input_error("integrate_trajectory: adjoint_running needs a running cost");

  Trajectory traj;
  traj.h = h;
  traj.times.resize(N + 1);
  for (int k = 0; k <= N; ++k) traj.times[k] = k * h;
  traj.q.resize(N + 1);
  traj.u.resize(N + 1);
  traj.q[0] = q0;
  traj.u[0] = detail::solve_node_u(dae, q0, opts.u0, opts.newton);
  traj.stages.resize(N);

  const RunningCost* cost = opts.cost ? &*opts.cost : nullptr;
  if (cost) traj.step_cost.resize(N, 0.0);

  // Forward sweep.
  for (int k = 0; k < N; ++k) {
    StepResult sr;
    try {
      sr = rk_step_dae(dae, tab, traj.q[k], traj.u[k], h, opts.newton);
    } catch (const solve_error& e) {
      throw solve_error("step " + std::to_string(k) + " (t = " + std::to_string(traj.times[k]) +
                        "): " + e.what());
    }
    traj.stages[k] = std::move(sr.st);
    traj.q[k + 1] = sr.q1;
    if (na > 0) {
      const Vector& us = traj.stages[k].U[tab.s - 1];
      traj.u[k + 1] =
          has_cs_eq_1(tab) ? us : detail::solve_node_u(dae, traj.q[k + 1], us, opts.newton);
    } else {
      traj.u[k + 1] = Vector(0);
    }
    if (cost) {
      double sc = 0;
      for (int i = 0; i < tab.s; ++i)
        sc += tab.b[i] * cost->L(traj.stages[k].Q[i], traj.stages[k].U[i]);
      traj.step_cost[k] = h * sc;
      traj.cost_quadrature += traj.step_cost[k];
    }
  }

  // Tangent sweep.
  if (want_tangent) {
    traj.has_tangent = true;
    traj.dq.resize(N + 1);
    traj.du.resize(N + 1);
    traj.tstages.resize(N);
    if (cost) traj.step_tangent_cost.resize(N, 0.0);
    traj.dq[0] = opts.dq0;
    const TangentDAESystem tsys = tangent_system(dae);
    for (int k = 0; k < N; ++k) {
      TangentStepResult tr = tangent_step(dae, tab, traj.stages[k], traj.dq[k], h);
      traj.tstages[k] = std::move(tr.ts);
      traj.dq[k + 1] = tr.dq1;
      if (cost) {
        double sc = 0;
        for (int i = 0; i < tab.s; ++i) {
          const auto& st = traj.stages[k];
          const auto& ts = traj.tstages[k];
          sc += tab.b[i] * (cost->gradL_q(st.Q[i], st.U[i]).dot(ts.dQ[i]) +
                            cost->gradL_u(st.Q[i], st.U[i]).dot(ts.dU[i]));
        }
        traj.step_tangent_cost[k] = h * sc;
        traj.tangent_quadrature += traj.step_tangent_cost[k];
      }
    }
    for (int k = 0; k <= N; ++k)
      traj.du[k] = na > 0 ? tsys.solve_du(traj.q[k], traj.u[k], traj.dq[k]) : Vector(0);
  }

  // Backward momentum sweep.
  if (adjoint_mode) {
    const Vector seed =
        opts.mode == RunMode::adjoint_terminal ? opts.p_terminal : Vector::Zero(n).eval();
    attach_adjoint_sweep(dae, tab, traj, seed, opts.cost);
  }

  return traj;
}

// Forward-integrable face of a problem: ODEs embed with an empty algebraic
// block, position-constrained systems differentiate their constraint once.
inline SemiExplicitDAE problem_dae(const Problem& p) {
  switch (p.kind) {
    case ProblemKind::ode:
      return as_dae(*p.ode);
    case ProblemKind::dae:
      return *p.dae;
    case ProblemKind::hessenberg:
      return hessenberg_reduce(*p.hess);
    case ProblemKind::ocp:
      throw input_error("problem_dae: '" + p.name +
                        "' is an optimal-control problem; its dynamics alone are "
                        "underdetermined, use the ocp driver");
  }
  throw input_error("problem_dae: unknown problem kind");
}

inline double stage_constraint_residual_max(const SemiExplicitDAE& dae, const StageSet& st) {
  double worst = 0;
  for (std::size_t i = 0; i < st.Q.size(); ++i)
    worst = std::max(worst, inf_norm(dae.phi(st.Q[i], st.U[i])));
  return worst;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int n = traj.q.empty() ? 0 : static_cast<int>(traj.q[0].size());
  const int na = traj.u.empty() ? 0 : static_cast<int>(traj.u[0].size());
  // The multiplier can be narrower than the algebraic vector (extremal
  // trajectories carry controls in u with no matching constraint rows).
  const int nl = (traj.has_adjoint && !traj.lam.empty()) ? static_cast<int>(traj.lam[0].size()) : 0;
  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < n; ++i) cols.push_back("q" + std::to_string(i));
  for (int i = 0; i < na; ++i) cols.push_back("u" + std::to_string(i));
  if (traj.has_adjoint) {
    for (int i = 0; i < n; ++i) cols.push_back("p" + std::to_string(i));
    for (int i = 0; i < nl; ++i) cols.push_back("lambda" + std::to_string(i));
  }
  csv_header(os, cols);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::vector<std::string> row = {format_double(traj.times[k])};
    for (int i = 0; i < n; ++i) row.push_back(format_double(traj.q[k][i]));
    for (int i = 0; i < na; ++i) row.push_back(format_double(traj.u[k][i]));
    if (traj.has_adjoint) {
      for (int i = 0; i < n; ++i) row.push_back(format_double(traj.p[k][i]));
      for (int i = 0; i < nl; ++i) row.push_back(format_double(traj.lam[k][i]));
    }
    csv_row(os, row);
  }
}

inline void write_stages_csv(std::ostream& os, const Trajectory& traj, const Tableau& tab) {
  if (traj.stages.empty()) return;
  const int n = static_cast<int>(traj.q[0].size());
  const int na = static_cast<int>(traj.u[0].size());
  const bool with_p = traj.has_adjoint;
  const int nl = (with_p && !traj.stages[0].Lam.empty())
                     ? static_cast<int>(traj.stages[0].Lam[0].size())
                     : 0;
  std::vector<std::string> cols = {"step", "stage", "t_stage"};
  for (int i = 0; i < n; ++i) cols.push_back("Q" + std::to_string(i));
  for (int i = 0; i < na; ++i) cols.push_back("U" + std::to_string(i));
  for (int i = 0; i < n; ++i) cols.push_back("V" + std::to_string(i));
  if (with_p) {
    for (int i = 0; i < n; ++i) cols.push_back("P" + std::to_string(i));
    for (int i = 0; i < nl; ++i) cols.push_back("Lambda" + std::to_string(i));
  }
  csv_header(os, cols);
  for (int k = 0; k < traj.steps(); ++k) {
    const StageSet& st = traj.stages[k];
    for (int i = 0; i < tab.s; ++i) {
      std::vector<std::string> row = {std::to_string(k), std::to_string(i),
                                      format_double(traj.times[k] + tab.c[i] * traj.h)};
      for (int j = 0; j < n; ++j) row.push_back(format_double(st.Q[i][j]));
      for (int j = 0; j < na; ++j) row.push_back(format_double(st.U[i][j]));
      for (int j = 0; j < n; ++j) row.push_back(format_double(st.V[i][j]));
      if (with_p) {
        for (int j = 0; j < n; ++j) row.push_back(format_double(st.P[i][j]));
        for (int j = 0; j < nl; ++j) row.push_back(format_double(st.Lam[i][j]));
      }
      csv_row(os, row);
    }
  }
}

}  // namespace adjoint_geo
