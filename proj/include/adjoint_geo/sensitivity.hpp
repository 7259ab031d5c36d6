#pragma once

#include "adjoint_geo/integrate.hpp"
#include "adjoint_geo/parallel.hpp"

namespace adjoint_geo {

struct SensitivityConfig {
  NewtonConfig newton;
  bool probe = true;      // also run tangent and central-difference oracles
  double fd_eps = 1e-5;   // probe step for the difference oracle
};

// Gradient of a scalar objective with respect to q0. The backward sweep gives
// the whole gradient at once; tangent and difference probes recompute each
// component independently so the three columns stay separate evidence.
struct SensitivityReport {
  Vector adjoint_p0;
  Vector tangent_values;  // directional derivatives along each basis direction
  Vector fd_values;       // central differences of the discrete objective
  double max_adjoint_vs_tangent = 0;
  double max_adjoint_vs_fd = 0;
  double cost_value = 0;
  int backward_sweeps = 0;
  int forward_integrations = 0;
};

namespace detail {

inline void check_grid(double tf, int N, const char* who) {
  if (N < 1) throw input_error(std::string(who) + ": need at least one step");
  if (!(tf > 0)) throw input_error(std::string(who) + ": final time must be positive");
}

}  // namespace detail

// Directional derivative of the discrete objective via the linearized stage
// equations (one forward pass per direction).
inline double tangent_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab, const Vector& q0,
                                  const Vector& direction, double tf, int N,
                                  const TerminalCost& C, const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "tangent_sensitivity");
  RunOptions opts;
  opts.mode = RunMode::forward_tangent;
  opts.dq0 = direction;
  opts.newton = cfg.newton;
  const Trajectory traj = integrate_trajectory(dae, tab, q0, tf / N, N, opts);
  return C.gradC(traj.q[N]).dot(traj.dq[N]);
}

inline double tangent_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab, const Vector& q0,
                                  const Vector& direction, double tf, int N,
                                  const RunningCost& L, const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "tangent_sensitivity");
  RunOptions opts;
  opts.mode = RunMode::forward_tangent;
  opts.dq0 = direction;
  opts.cost = L;
  opts.newton = cfg.newton;
  const Trajectory traj = integrate_trajectory(dae, tab, q0, tf / N, N, opts);
  return traj.tangent_quadrature;
}

// Central difference of the discrete objective. Same tableau and grid as the
// run under test, so the comparison isolates the derivative machinery.
inline double fd_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab, const Vector& q0,
                             const Vector& direction, double tf, int N, double eps,
                             const TerminalCost& C, const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "fd_sensitivity");
  if (!(eps > 0)) throw input_error("fd_sensitivity: probe step must be positive");
  RunOptions opts;
  opts.newton = cfg.newton;
  const Trajectory up = integrate_trajectory(dae, tab, q0 + eps * direction, tf / N, N, opts);
  const Trajectory dn = integrate_trajectory(dae, tab, q0 - eps * direction, tf / N, N, opts);
  return (C.C(up.q[N]) - C.C(dn.q[N])) / (2.0 * eps);
}

inline double fd_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab, const Vector& q0,
                             const Vector& direction, double tf, int N, double eps,
                             const RunningCost& L, const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "fd_sensitivity");
  if (!(eps > 0)) throw input_error("fd_sensitivity: probe step must be positive");
  RunOptions opts;
  opts.cost = L;
  opts.newton = cfg.newton;
  const Trajectory up = integrate_trajectory(dae, tab, q0 + eps * direction, tf / N, N, opts);
  const Trajectory dn = integrate_trajectory(dae, tab, q0 - eps * direction, tf / N, N, opts);
  return (up.cost_quadrature - dn.cost_quadrature) / (2.0 * eps);
}

namespace detail {

// Basis-direction probes. Each worker integrates independently, so the
// system's callbacks must be reentrant (every registry system is).
template <typename Cost>
void probe_report(SensitivityReport& rep, const SemiExplicitDAE& dae, const Tableau& tab,
                  const Vector& q0, double tf, int N, const Cost& cost,
                  const SensitivityConfig& cfg) {
  const int n = dae.dim_q;
  rep.tangent_values = Vector::Zero(n);
  rep.fd_values = Vector::Zero(n);
  parallel_for(n, [&](int j) {
    const Vector ej = Vector::Unit(n, j);
    rep.tangent_values[j] = tangent_sensitivity(dae, tab, q0, ej, tf, N, cost, cfg);
    rep.fd_values[j] = fd_sensitivity(dae, tab, q0, ej, tf, N, cfg.fd_eps, cost, cfg);
  });
  rep.forward_integrations += 3 * n;  // one tangent run and two difference legs per direction
  rep.max_adjoint_vs_tangent = inf_norm(rep.adjoint_p0 - rep.tangent_values);
  rep.max_adjoint_vs_fd = inf_norm(rep.adjoint_p0 - rep.fd_values);
}

}  // namespace detail

// Gradient of C(q_N): forward sweep, seed the momentum with the terminal-cost
// gradient, sweep back without augmentation. One backward pass covers every
// component of the gradient; the counters make that visible.
inline SensitivityReport terminal_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab,
                                              const Vector& q0, double tf, int N,
                                              const TerminalCost& C,
                                              const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "terminal_sensitivity");
  RunOptions opts;
  opts.newton = cfg.newton;
  Trajectory traj = integrate_trajectory(dae, tab, q0, tf / N, N, opts);
  attach_adjoint_sweep(dae, tab, traj, C.gradC(traj.q[N]));

  SensitivityReport rep;
  rep.adjoint_p0 = traj.p[0];
  rep.cost_value = C.C(traj.q[N]);
  rep.backward_sweeps = 1;
  rep.forward_integrations = 1;
  if (cfg.probe) detail::probe_report(rep, dae, tab, q0, tf, N, C, cfg);
  return rep;
}

// Gradient of the quadrature of L along the discrete trajectory: augmented
// backward sweep from p_N = 0.
inline SensitivityReport running_sensitivity(const SemiExplicitDAE& dae, const Tableau& tab,
                                             const Vector& q0, double tf, int N,
                                             const RunningCost& L,
                                             const SensitivityConfig& cfg = {}) {
  detail::check_grid(tf, N, "running_sensitivity");
  RunOptions opts;
  opts.cost = L;
  opts.newton = cfg.newton;
  Trajectory traj = integrate_trajectory(dae, tab, q0, tf / N, N, opts);
  attach_adjoint_sweep(dae, tab, traj, Vector::Zero(dae.dim_q), L);

  SensitivityReport rep;
  rep.adjoint_p0 = traj.p[0];
  rep.cost_value = traj.cost_quadrature;
  rep.backward_sweeps = 1;
  rep.forward_integrations = 1;
  if (cfg.probe) detail::probe_report(rep, dae, tab, q0, tf, N, L, cfg);
  return rep;
}

inline void write_sensitivity_csv(std::ostream& os, const SensitivityReport& rep,
                                  const std::vector<Vector>& directions,
                                  const std::vector<double>& tangent,
                                  const std::vector<double>& fd) {
  csv_header(os, {"direction_index", "adjoint", "tangent", "fd", "err_adj_tan", "err_adj_fd"});
  for (std::size_t k = 0; k < directions.size(); ++k) {
    const double adj = rep.adjoint_p0.dot(directions[k]);
    csv_row(os, {std::to_string(k), format_double(adj), format_double(tangent[k]),
                 format_double(fd[k]), format_double(std::abs(adj - tangent[k])),
                 format_double(std::abs(adj - fd[k]))});
  }
}

}  // namespace adjoint_geo
