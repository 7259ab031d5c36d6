#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "adjoint_geo/newton.hpp"
#include "adjoint_geo/systems.hpp"
#include "adjoint_geo/types.hpp"

namespace adjoint_geo {

// Momentum lift of an ODE: pdot = -Df(q)^T p, minus the running-cost gradient
// when a cost augments the system. H(q, p) = <p, f(q)> (+ L).
struct AdjointODESystem {
  VectorField base;
  std::optional<RunningCost> cost;

  Vector f(const Vector& q) const { return base.f(q); }
  Matrix Df(const Vector& q) const { return base.Df(q); }

  Vector p_rhs(const Vector& q, const Vector& p) const {
    Vector r = -base.Df(q).transpose() * p;
    if (cost) r -= cost->gradL_q(q, Vector(0));
    return r;
  }

  double hamiltonian(const Vector& q, const Vector& p) const {
    double H = p.dot(base.f(q));
    if (cost) H += cost->L(q, Vector(0));
    return H;
  }
};

inline AdjointODESystem lift_ode(VectorField vf, std::optional<RunningCost> cost = {}) {
  return {std::move(vf), std::move(cost)};
}

// Momentum lift of a semi-explicit DAE. Besides the evolution equations the
// lift carries one algebraic constraint per algebraic direction: the momentum
// constraint Duf^T p + Duphi^T lambda (+ gradL_u) = 0 is what closes the
// system at index 1.
struct AdjointDAESystem {
  SemiExplicitDAE base;
  std::optional<RunningCost> cost;

  Vector f(const Vector& q, const Vector& u) const { return base.f(q, u); }
  Vector phi(const Vector& q, const Vector& u) const { return base.phi(q, u); }

  Vector gLq(const Vector& q, const Vector& u) const {
    return cost ? cost->gradL_q(q, u) : Vector::Zero(base.dim_q).eval();
  }
  Vector gLu(const Vector& q, const Vector& u) const {
    return cost ? cost->gradL_u(q, u) : Vector::Zero(base.dim_u).eval();
  }

  Vector p_rhs(const Vector& q, const Vector& u, const Vector& p, const Vector& lam) const {
    Vector r = -base.Dqf(q, u).transpose() * p - base.Dqphi(q, u).transpose() * lam;
    if (cost) r -= cost->gradL_q(q, u);
    return r;
  }

  Vector momentum_constraint(const Vector& q, const Vector& u, const Vector& p,
                             const Vector& lam) const {
    Vector r = base.Duf(q, u).transpose() * p + base.Duphi(q, u).transpose() * lam;
    if (cost) r += cost->gradL_u(q, u);
    return r;
  }

  double hamiltonian(const Vector& q, const Vector& u, const Vector& p,
                     const Vector& lam) const {
    double H = p.dot(base.f(q, u)) + lam.dot(base.phi(q, u));
    if (cost) H += cost->L(q, u);
    return H;
  }

  // <p, f> alone. Along a solution its change matches the change of the full
  // Hamiltonian because the u- and lambda-derivatives vanish on the
  // constraints; the audit records both so the difference stays observable.
  double dynamical_hamiltonian(const Vector& q, const Vector& u, const Vector& p) const {
    return p.dot(base.f(q, u));
  }
};

inline AdjointDAESystem lift_dae(SemiExplicitDAE dae, std::optional<RunningCost> cost = {}) {
  return {std::move(dae), std::move(cost)};
}

// Variational equations along a DAE trajectory: d(dq)/dt = Dqf dq + Duf du
// with the linearized constraint 0 = Dqphi dq + Duphi du.
struct TangentDAESystem {
  SemiExplicitDAE base;

  Vector dq_rhs(const Vector& q, const Vector& u, const Vector& dq, const Vector& du) const {
    return base.Dqf(q, u) * dq + base.Duf(q, u) * du;
  }

  Vector constraint(const Vector& q, const Vector& u, const Vector& dq, const Vector& du) const {
    return base.Dqphi(q, u) * dq + base.Duphi(q, u) * du;
  }

  // du = -Duphi^{-1} Dqphi dq; requires the square invertible constraint block.
  Vector solve_du(const Vector& q, const Vector& u, const Vector& dq) const {
    if (base.dim_phi != base.dim_u)
      throw index_error("tangent solve_du: constraint block is " + std::to_string(base.dim_phi) +
                        "x" + std::to_string(base.dim_u) + ", needs to be square");
    try {
      return lu_solve(base.Duphi(q, u), -(base.Dqphi(q, u) * dq).eval(), "tangent solve_du");
    } catch (const solve_error& e) {
      throw index_error(std::string("tangent solve_du: ") + e.what());
    }
  }
};

struct TangentODESystem {
  VectorField base;
  Vector dq_rhs(const Vector& q, const Vector& dq) const { return base.Df(q) * dq; }
};

inline TangentDAESystem tangent_system(const SemiExplicitDAE& dae) { return {dae}; }
inline TangentODESystem tangent_system(const VectorField& vf) { return {vf}; }

struct TangentState {
  Vector dq;
  Vector du;
};

// lambda = -(Duphi^T)^{-1} (Duf^T p + gradL_u): a direct linear solve, never
// an iteration. Singularity of the constraint block means the index exceeds 1
// at this point.
inline Vector solve_multiplier(const SemiExplicitDAE& dae, const Vector& q, const Vector& u,
                               const Vector& p, const RunningCost* cost = nullptr) {
  if (dae.dim_phi != dae.dim_u)
    throw index_error("solve_multiplier: constraint block is " + std::to_string(dae.dim_phi) +
                      "x" + std::to_string(dae.dim_u) + ", needs to be square");
  Vector rhs = -(dae.Duf(q, u).transpose() * p).eval();
  if (cost) rhs -= cost->gradL_u(q, u);
  try {
    return lu_solve(dae.Duphi(q, u).transpose(), rhs, "solve_multiplier");
  } catch (const solve_error& e) {
    throw index_error(std::string("solve_multiplier: constraint block singular, index exceeds 1 "
                                  "at this point (") +
                      e.what() + ")");
  }
}

struct ReducedEval {
  Vector u;   // algebraic value solving phi(q, u) = 0
  Vector f;   // f(q, u)
  Matrix Df;  // Dqf + Duf Du with Du = -Duphi^{-1} Dqphi
  Matrix Du;  // du/dq from the implicit function theorem
};

// Index-1 reduction to an ODE on the constraint manifold. Keeps the last
// algebraic solution as the warm start for the next solve; that cache is the
// branch-selection policy for constraints with several roots, and it makes
// instances single-thread objects. Use clone() to hand one to each worker.
class ReducedODE {
 public:
  explicit ReducedODE(SemiExplicitDAE dae, NewtonConfig cfg = {}, Vector u_start = {})
      : dae_(std::move(dae)), cfg_(cfg) {
    if (dae_.dim_phi != dae_.dim_u)
      throw index_error("ReducedODE: constraint block is " + std::to_string(dae_.dim_phi) + "x" +
                        std::to_string(dae_.dim_u) + ", needs to be square");
    u_ = u_start.size() == dae_.dim_u ? u_start : Vector::Zero(dae_.dim_u).eval();
  }

  ReducedEval eval(const Vector& q) const {
    Vector u = solve_u(q);
    ReducedEval out;
    out.u = u;
    out.f = dae_.f(q, u);
    Matrix Duphi = dae_.Duphi(q, u);
    Matrix Dqphi = dae_.Dqphi(q, u);
    Eigen::PartialPivLU<Matrix> lu(Duphi);
    if (dae_.dim_u > 0 && !(lu.rcond() > 1e-14))
      throw index_error("ReducedODE: Duphi numerically singular, index exceeds 1 at this point");
    out.Du = dae_.dim_u > 0 ? (-lu.solve(Dqphi)).eval() : Matrix(0, dae_.dim_q);
    out.Df = dae_.Dqf(q, u) + dae_.Duf(q, u) * out.Du;
    return out;
  }

  Vector f(const Vector& q) const { return eval(q).f; }
  Matrix Df(const Vector& q) const { return eval(q).Df; }

  const SemiExplicitDAE& base() const { return dae_; }
  const Vector& warm_start() const { return u_; }

  ReducedODE clone() const { return ReducedODE(dae_, cfg_, u_); }

  // View as a plain vector field. The view shares one warm-start cache, so it
  // inherits the single-thread restriction of the object it came from.
  VectorField as_vector_field() const {
    auto self = std::make_shared<ReducedODE>(clone());
    VectorField vf;
    vf.dim_q = dae_.dim_q;
    vf.f = [self](const Vector& q) { return self->f(q); };
    vf.Df = [self](const Vector& q) { return self->Df(q); };
    return vf;
  }

 private:
  Vector solve_u(const Vector& q) const {
    if (dae_.dim_u == 0) return Vector(0);
    NewtonResult res = newton_solve(
        [&](const Vector& u) { return dae_.phi(q, u); },
        [&](const Vector& u) { return dae_.Duphi(q, u); }, u_, cfg_);
    if (!res.converged)
      throw solve_error("ReducedODE: constraint solve did not converge (best residual " +
                        std::to_string(res.residual_norm) + " after " +
                        std::to_string(res.iterations) + " iterations)");
    u_ = res.x;
    return res.x;
  }

  SemiExplicitDAE dae_;
  NewtonConfig cfg_;
  mutable Vector u_;
};

inline ReducedODE reduce_index1(SemiExplicitDAE dae, NewtonConfig cfg = {}, Vector u_start = {}) {
  return ReducedODE(std::move(dae), cfg, std::move(u_start));
}

// Differentiates the position constraint once: phi(q, u) = Dg(q) f(q, u).
// The result is index 1 exactly when Dg Duf is invertible.
inline SemiExplicitDAE hessenberg_reduce(const HessenbergDAE& h) {
  SemiExplicitDAE d;
  d.dim_q = h.dim_q;
  d.dim_u = h.dim_u;
  d.dim_phi = h.dim_u;
  d.f = h.f;
  d.Dqf = h.Dqf;
  d.Duf = h.Duf;
  d.phi = [g = h.Dg, f = h.f](const Vector& q, const Vector& u) {
    return (g(q) * f(q, u)).eval();
  };
  d.Dqphi = [h](const Vector& q, const Vector& u) {
    return (h.Hg_apply(q, h.f(q, u)) + h.Dg(q) * h.Dqf(q, u)).eval();
  };
  d.Duphi = [h](const Vector& q, const Vector& u) {
    return (h.Dg(q) * h.Duf(q, u)).eval();
  };
  return d;
}

// <p, g(q)>: conserved along the lifted flow whenever g commutes with the
// dynamics; the audit tracks it per node.
inline double symmetry_momentum(const std::function<Vector(const Vector&)>& g, const Vector& q,
                                const Vector& p) {
  return p.dot(g(q));
}

}  // namespace adjoint_geo
