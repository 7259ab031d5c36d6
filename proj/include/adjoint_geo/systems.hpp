#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adjoint_geo/types.hpp"

namespace adjoint_geo {

// All states are flat real vectors. Jacobians are supplied analytically by
// every problem; check_jacobians_fd exists to audit them, not to replace them.

struct VectorField {
  int dim_q = 0;
  std::function<Vector(const Vector&)> f;
  std::function<Matrix(const Vector&)> Df;
};

// Semi-explicit form: qdot = f(q, u), 0 = phi(q, u). The constraint block is
// square (dim_phi == dim_u) for every index-1 solve; rectangular phi is legal
// at the type level and rejected by the stepping code.
struct SemiExplicitDAE {
  int dim_q = 0;
  int dim_u = 0;
  int dim_phi = 0;
  std::function<Vector(const Vector&, const Vector&)> f;
  std::function<Vector(const Vector&, const Vector&)> phi;
  std::function<Matrix(const Vector&, const Vector&)> Dqf;
  std::function<Matrix(const Vector&, const Vector&)> Duf;
  std::function<Matrix(const Vector&, const Vector&)> Dqphi;
  std::function<Matrix(const Vector&, const Vector&)> Duphi;
};

struct RunningCost {
  std::function<double(const Vector&, const Vector&)> L;
  std::function<Vector(const Vector&, const Vector&)> gradL_q;
  std::function<Vector(const Vector&, const Vector&)> gradL_u;
};

struct TerminalCost {
  std::function<double(const Vector&)> C;
  std::function<Vector(const Vector&)> gradC;
};

// qdot = f(q, u), 0 = g(q) with g independent of u. Hg_apply(q, v) returns
// the dim_u x dim_q matrix with entries sum_i d2g^A/(dq^j dq^i) v^i, the
// curvature term needed when the hidden constraint Dg(q) f(q,u) is formed.
struct HessenbergDAE {
  int dim_q = 0;
  int dim_u = 0;
  std::function<Vector(const Vector&, const Vector&)> f;
  std::function<Matrix(const Vector&, const Vector&)> Dqf;
  std::function<Matrix(const Vector&, const Vector&)> Duf;
  std::function<Vector(const Vector&)> g;
  std::function<Matrix(const Vector&)> Dg;
  std::function<Matrix(const Vector&, const Vector&)> Hg_apply;
};

struct DaeValue {
  Vector f;
  Vector phi;
};

struct DaeJacobians {
  Matrix Dqf, Duf, Dqphi, Duphi;
};

inline DaeValue eval_dae(const SemiExplicitDAE& dae, const Vector& q, const Vector& u) {
  return {dae.f(q, u), dae.phi(q, u)};
}

inline DaeJacobians eval_jacobians(const SemiExplicitDAE& dae, const Vector& q, const Vector& u) {
  return {dae.Dqf(q, u), dae.Duf(q, u), dae.Dqphi(q, u), dae.Duphi(q, u)};
}

namespace detail {

// Central-difference Jacobian of fn at x; rows are the output dimension.
template <class F>
inline Matrix central_jacobian(F&& fn, const Vector& x, double eps, int rows) {
  Matrix J(rows, x.size());
  Vector xp = x, xm = x;
  for (int j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + eps;
    xm[j] = x[j] - eps;
    J.col(j) = (fn(xp) - fn(xm)) / (2.0 * eps);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

inline double worst_relative_entry(const Matrix& analytic, const Matrix& fd) {
  double worst = 0;
  for (int i = 0; i < analytic.rows(); ++i)
    for (int j = 0; j < analytic.cols(); ++j) {
      const double denom =
          std::max({1.0, std::abs(analytic(i, j)), std::abs(fd(i, j))});
      worst = std::max(worst, std::abs(analytic(i, j) - fd(i, j)) / denom);
    }
  return worst;
}

}  // namespace detail

struct JacobianCheck {
  double Dqf = 0, Duf = 0, Dqphi = 0, Duphi = 0;
  double worst = 0;
};

// Central differences against the analytic Jacobians; returns the worst
// relative entry error per block.
inline JacobianCheck check_jacobians_fd(const SemiExplicitDAE& dae, const Vector& q,
                                        const Vector& u, double eps) {
  if (!(eps > 0)) throw input_error("check_jacobians_fd: eps must be positive");
  JacobianCheck out;
  const auto jac = eval_jacobians(dae, q, u);
  out.Dqf = detail::worst_relative_entry(
      jac.Dqf,
      detail::central_jacobian([&](const Vector& x) { return dae.f(x, u); }, q, eps, dae.dim_q));
  out.Duf = detail::worst_relative_entry(
      jac.Duf,
      detail::central_jacobian([&](const Vector& x) { return dae.f(q, x); }, u, eps, dae.dim_q));
  out.Dqphi = detail::worst_relative_entry(
      jac.Dqphi, detail::central_jacobian([&](const Vector& x) { return dae.phi(x, u); }, q, eps,
                                          dae.dim_phi));
  out.Duphi = detail::worst_relative_entry(
      jac.Duphi, detail::central_jacobian([&](const Vector& x) { return dae.phi(q, x); }, u, eps,
                                          dae.dim_phi));
  out.worst = std::max({out.Dqf, out.Duf, out.Dqphi, out.Duphi});
  return out;
}

inline double check_jacobian_fd(const VectorField& vf, const Vector& q, double eps) {
  if (!(eps > 0)) throw input_error("check_jacobian_fd: eps must be positive");
  return detail::worst_relative_entry(
      vf.Df(q), detail::central_jacobian([&](const Vector& x) { return vf.f(x); }, q, eps,
                                         vf.dim_q));
}

// Exact flow data for problems that have it; used as the reference in
// convergence studies and sensitivity oracles.
struct FlowSolution {
  std::function<Vector(double, const Vector&)> q;
  std::function<Vector(double, const Vector&)> qdot;
  std::function<Matrix(double, const Vector&)> dq_dq0;
  std::function<Vector(double, const Vector&)> u;  // empty function for pure ODEs
};

enum class ProblemKind { ode, dae, hessenberg, ocp };

struct Problem {
  std::string name;
  ProblemKind kind = ProblemKind::ode;
  std::optional<VectorField> ode;
  std::optional<SemiExplicitDAE> dae;  // set for dae and ocp kinds
  std::optional<HessenbergDAE> hess;
  std::optional<RunningCost> cost;     // running cost shipped with the problem (ocp)
  Vector q0;
  double tf = 1.0;
  std::optional<FlowSolution> solution;
};

inline std::vector<std::string> builtin_problem_names() {
  return {"linear-ode", "exp-dae", "nl-dae", "hess2", "lqr-ocp"};
}

// Default costs used by the CLI and several tests: a linear terminal readout
// and a quadratic running cost.
inline TerminalCost sum_terminal(int n) {
  TerminalCost c;
  c.C = [](const Vector& q) { return q.sum(); };
  c.gradC = [n](const Vector&) { return Vector::Ones(n).eval(); };
  return c;
}

inline RunningCost quadratic_running() {
  RunningCost c;
  c.L = [](const Vector& q, const Vector& u) {
    return 0.5 * (q.squaredNorm() + u.squaredNorm());
  };
  c.gradL_q = [](const Vector& q, const Vector&) { return q; };
  c.gradL_u = [](const Vector&, const Vector& u) { return u; };
  return c;
}

// L = |q|^2 / 2, no control cost.
inline RunningCost state_running(int dim_u) {
  RunningCost c;
  c.L = [](const Vector& q, const Vector&) { return 0.5 * q.squaredNorm(); };
  c.gradL_q = [](const Vector& q, const Vector&) { return q; };
  c.gradL_u = [dim_u](const Vector&, const Vector&) { return Vector::Zero(dim_u).eval(); };
  return c;
}

inline Problem builtin_problem(const std::string& name) {
  Problem p;
  p.name = name;
  if (name == "linear-ode") {
    // Planar rotation: qdot = A q, A = [[0, 1], [-1, 0]].
    p.kind = ProblemKind::ode;
    Matrix A(2, 2);
    A << 0, 1, -1, 0;
    VectorField vf;
    vf.dim_q = 2;
    vf.f = [A](const Vector& q) { return (A * q).eval(); };
    vf.Df = [A](const Vector&) { return A; };
    p.ode = vf;
    p.q0 = Vector(2);
    p.q0 << 1, 0;
    FlowSolution sol;
    sol.q = [](double t, const Vector& q0) {
      Vector q(2);
      q << std::cos(t) * q0[0] + std::sin(t) * q0[1],
          -std::sin(t) * q0[0] + std::cos(t) * q0[1];
      return q;
    };
    sol.qdot = [A, sol_q = sol.q](double t, const Vector& q0) { return (A * sol_q(t, q0)).eval(); };
    sol.dq_dq0 = [](double t, const Vector&) {
      Matrix M(2, 2);
      M << std::cos(t), std::sin(t), -std::sin(t), std::cos(t);
      return M;
    };
    p.solution = sol;
  } else if (name == "exp-dae") {
    // qdot = u, 0 = u - q; the constrained flow is plain exponential growth.
    p.kind = ProblemKind::dae;
    SemiExplicitDAE d;
    d.dim_q = d.dim_u = d.dim_phi = 1;
    d.f = [](const Vector&, const Vector& u) { return u; };
    d.phi = [](const Vector& q, const Vector& u) { return (u - q).eval(); };
    d.Dqf = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1).eval(); };
    d.Duf = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
    d.Dqphi = [](const Vector&, const Vector&) { return (-Matrix::Identity(1, 1)).eval(); };
    d.Duphi = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
    p.dae = d;
    p.q0 = Vector::Constant(1, 1.0);
    FlowSolution sol;
    sol.q = [](double t, const Vector& q0) { return (q0 * std::exp(t)).eval(); };
    sol.qdot = sol.q;
    sol.dq_dq0 = [](double t, const Vector&) {
      return Matrix::Constant(1, 1, std::exp(t)).eval();
    };
    sol.u = sol.q;
    p.solution = sol;
  } else if (name == "nl-dae") {
    // qdot = -q + u, 0 = u - q^2; reduced flow qdot = q^2 - q with the
    // logistic-type closed form q(t) = q0 / (q0 + (1 - q0) e^t).
    p.kind = ProblemKind::dae;
    SemiExplicitDAE d;
    d.dim_q = d.dim_u = d.dim_phi = 1;
    d.f = [](const Vector& q, const Vector& u) { return (u - q).eval(); };
    d.phi = [](const Vector& q, const Vector& u) { return (u - q.cwiseProduct(q)).eval(); };
    d.Dqf = [](const Vector&, const Vector&) { return (-Matrix::Identity(1, 1)).eval(); };
    d.Duf = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
    d.Dqphi = [](const Vector& q, const Vector&) {
      return Matrix::Constant(1, 1, -2.0 * q[0]).eval();
    };
    d.Duphi = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
    p.dae = d;
    p.q0 = Vector::Constant(1, 0.5);
    FlowSolution sol;
    sol.q = [](double t, const Vector& q0) {
      const double den = q0[0] + (1.0 - q0[0]) * std::exp(t);
      return Vector::Constant(1, q0[0] / den).eval();
    };
    sol.qdot = [sol_q = sol.q](double t, const Vector& q0) {
      const double v = sol_q(t, q0)[0];
      return Vector::Constant(1, v * v - v).eval();
    };
    sol.dq_dq0 = [](double t, const Vector& q0) {
      const double den = q0[0] + (1.0 - q0[0]) * std::exp(t);
      return Matrix::Constant(1, 1, std::exp(t) / (den * den)).eval();
    };
    sol.u = [sol_q = sol.q](double t, const Vector& q0) {
      const double v = sol_q(t, q0)[0];
      return Vector::Constant(1, v * v).eval();
    };
    p.solution = sol;
  } else if (name == "hess2") {
    // qdot = (q2 + u, -q1), 0 = g(q) = q1. The hidden constraint is
    // q2 + u = 0, so the reduced motion is qdot = (0, -q1).
    p.kind = ProblemKind::hessenberg;
    HessenbergDAE h;
    h.dim_q = 2;
    h.dim_u = 1;
    h.f = [](const Vector& q, const Vector& u) {
      Vector v(2);
      v << q[1] + u[0], -q[0];
      return v;
    };
    h.Dqf = [](const Vector&, const Vector&) {
      Matrix M(2, 2);
      M << 0, 1, -1, 0;
      return M;
    };
    h.Duf = [](const Vector&, const Vector&) {
      Matrix M(2, 1);
      M << 1, 0;
      return M;
    };
    h.g = [](const Vector& q) { return Vector::Constant(1, q[0]).eval(); };
    h.Dg = [](const Vector&) {
      Matrix M(1, 2);
      M << 1, 0;
      return M;
    };
    h.Hg_apply = [](const Vector&, const Vector&) { return Matrix::Zero(1, 2).eval(); };
    p.hess = h;
    p.q0 = Vector(2);
    p.q0 << 0.4, 1.0;
    FlowSolution sol;
    sol.q = [](double t, const Vector& q0) {
      Vector q(2);
      q << q0[0], q0[1] - q0[0] * t;
      return q;
    };
    sol.qdot = [](double, const Vector& q0) {
      Vector v(2);
      v << 0.0, -q0[0];
      return v;
    };
    sol.dq_dq0 = [](double t, const Vector&) {
      Matrix M(2, 2);
      M << 1, 0, -t, 1;
      return M;
    };
    sol.u = [sol_q = sol.q](double t, const Vector& q0) {
      return Vector::Constant(1, -sol_q(t, q0)[1]).eval();
    };
    p.solution = sol;
  } else if (name == "lqr-ocp") {
    // Scalar control problem: minimize the integral of (q^2 + u^2)/2 subject
    // to qdot = u. The algebraic slot carries the control; there is no
    // pointwise constraint, so the forward problem is closed only once the
    // stationarity condition joins the system.
    p.kind = ProblemKind::ocp;
    SemiExplicitDAE d;
    d.dim_q = 1;
    d.dim_u = 1;
    d.dim_phi = 0;
    d.f = [](const Vector&, const Vector& u) { return u; };
    d.phi = [](const Vector&, const Vector&) { return Vector(0); };
    d.Dqf = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1).eval(); };
    d.Duf = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
    d.Dqphi = [](const Vector&, const Vector&) { return Matrix::Zero(0, 1).eval(); };
    d.Duphi = [](const Vector&, const Vector&) { return Matrix::Zero(0, 1).eval(); };
    p.dae = d;
    p.cost = quadratic_running();
    p.q0 = Vector::Constant(1, 1.0);
    p.tf = 1.0;
  } else {
    std::string known;
    for (const auto& n : builtin_problem_names()) known += (known.empty() ? "" : ", ") + n;
    throw lookup_error("builtin_problem: unknown name '" + name + "' (known: " + known + ")");
  }
  return p;
}

}  // namespace adjoint_geo
