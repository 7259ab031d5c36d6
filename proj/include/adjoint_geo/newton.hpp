#pragma once

#include <functional>
#include <string>

#include "adjoint_geo/types.hpp"

namespace adjoint_geo {

struct NewtonConfig {
  double tol = 1e-12;     // infinity norm of the residual
  int max_iter = 50;
  double damping = 0.5;   // backtracking shrink factor
  double min_step = 1e-4; // smallest step fraction the line search will try
};

struct NewtonResult {
  Vector x;
  double residual_norm = 0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton with simple backtracking: the full step is tried first and
// halved until the residual norm decreases, so accepted steps never increase
// the residual. Non-convergence returns the best iterate with
// converged = false; only a singular Jacobian throws.
inline NewtonResult newton_solve(const std::function<Vector(const Vector&)>& residual,
                                 const std::function<Matrix(const Vector&)>& jacobian,
                                 const Vector& x0, const NewtonConfig& cfg = {}) {
  NewtonResult res;
  res.x = x0;
  Vector r = residual(res.x);
  res.residual_norm = inf_norm(r);

  Vector best_x = res.x;
  double best_norm = res.residual_norm;

  while (res.residual_norm > cfg.tol && res.iterations < cfg.max_iter) {
    Matrix J = jacobian(res.x);
    Vector dx;
    try {
      dx = lu_solve(J, -r, "newton_solve");
    } catch (const solve_error& e) {
      throw solve_error("newton_solve: singular jacobian at iterate " +
                        std::to_string(res.iterations) + " (" + e.what() + ")");
    }

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= cfg.min_step) {
      Vector xt = res.x + alpha * dx;
      Vector rt = residual(xt);
      const double nt = inf_norm(rt);
      if (nt < res.residual_norm) {
        res.x = xt;
        r = rt;
        res.residual_norm = nt;
        accepted = true;
        break;
      }
      alpha *= cfg.damping;
    }
    if (!accepted) break;  // line search stalled; report the best point seen

    ++res.iterations;
    if (res.residual_norm < best_norm) {
      best_x = res.x;
      best_norm = res.residual_norm;
    }
  }

  if (res.residual_norm > best_norm) {
    res.x = best_x;
    res.residual_norm = best_norm;
  }
  res.converged = res.residual_norm <= cfg.tol;
  return res;
}

}  // namespace adjoint_geo
