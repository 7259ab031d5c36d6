#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "adjoint_geo/integrate.hpp"

using namespace adjoint_geo;

namespace {

Vector v1(double x) {
  Vector v(1);
  v[0] = x;
  return v;
}

}  // namespace

TEST_CASE("explicit euler step is the textbook update") {
  Problem p = builtin_problem("linear-ode");
  const auto sr = rk_step_ode(*p.ode, builtin_tableau("euler-explicit"), p.q0, 0.1);
  REQUIRE(sr.q1[0] == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(sr.q1[1] == Catch::Approx(-0.1).margin(1e-15));
  REQUIRE(sr.stage_residual <= 1e-12);
}

TEST_CASE("gauss2 step hits the rotation to its local order") {
  Problem p = builtin_problem("linear-ode");
  const double h = 0.1;
  const auto sr = rk_step_ode(*p.ode, builtin_tableau("gauss2"), p.q0, h);
  Vector exact(2);
  exact << std::cos(h), -std::sin(h);
  // Leading error of the 2-stage Gauss pair is h^5/720 = 1.39e-8 here.
  REQUIRE(inf_norm(sr.q1 - exact) <= 3e-8);
  REQUIRE(inf_norm(sr.q1 - exact) >= 1e-12);  // not exact: the method is order 4
}

TEST_CASE("radau step on the exponential dae") {
  Problem p = builtin_problem("exp-dae");
  const double h = 0.1;
  const auto sr = rk_step_dae(*p.dae, builtin_tableau("radauIIA2"), p.q0, p.q0, h);
  // Stability function error of the 2-stage Radau pair is h^4/72 to leading
  // order; at h = 0.1 that is about 1.4e-6.
  REQUIRE(std::abs(sr.q1[0] - std::exp(h)) <= 5e-6);
  REQUIRE(std::abs(sr.q1[0] - std::exp(h)) >= 1e-7);
  // c_s = 1 makes the last algebraic stage the node value, and u = q there.
  REQUIRE(std::abs(sr.st.U[1][0] - sr.q1[0]) <= 1e-11);
  REQUIRE(stage_constraint_residual_max(*p.dae, sr.st) <= 1e-11);
}

TEST_CASE("trajectory tracks the logistic closed form") {
  Problem p = builtin_problem("nl-dae");
  const int N = 64;
  const double h = 1.0 / N;
  const auto traj = integrate_trajectory(*p.dae, builtin_tableau("radauIIA2"), p.q0, h, N);
  REQUIRE(traj.steps() == N);
  const Vector qf = p.solution->q(1.0, p.q0);
  REQUIRE(inf_norm(traj.q[N] - qf) <= 1e-6);
  for (int k = 0; k <= N; ++k)
    REQUIRE(std::abs(traj.u[k][0] - traj.q[k][0] * traj.q[k][0]) <= 1e-10);
}

TEST_CASE("gauss on a dae resolves node algebraic values separately") {
  // c_s != 1: node u is not a stage value and has to be recovered from the
  // constraint at the node.
  Problem p = builtin_problem("nl-dae");
  const auto traj = integrate_trajectory(*p.dae, builtin_tableau("gauss2"), p.q0, 0.05, 20);
  for (int k = 0; k <= 20; ++k)
    REQUIRE(inf_norm(p.dae->phi(traj.q[k], traj.u[k])) <= 1e-11);
}

TEST_CASE("tangent of a linear dae is the flow map itself") {
  Problem p = builtin_problem("exp-dae");
  RunOptions opts;
  opts.mode = RunMode::forward_tangent;
  opts.dq0 = v1(1.0);
  const auto traj = integrate_trajectory(*p.dae, builtin_tableau("radauIIA2"), p.q0, 0.05, 20, opts);
  REQUIRE(traj.has_tangent);
  // Everything is linear, so dq_N/dq0 equals q_N/q0 to roundoff.
  REQUIRE(std::abs(traj.dq[20][0] - traj.q[20][0] / p.q0[0]) <= 1e-12);
  // du = dq on u = q.
  REQUIRE(std::abs(traj.du[20][0] - traj.dq[20][0]) <= 1e-12);
}

TEST_CASE("tangent sweep against a rerun finite difference") {
  Problem p = builtin_problem("nl-dae");
  const Tableau tab = builtin_tableau("radauIIA2");
  RunOptions opts;
  opts.mode = RunMode::forward_tangent;
  opts.dq0 = v1(1.0);
  const int N = 20;
  const double h = 0.025;
  const auto traj = integrate_trajectory(*p.dae, tab, p.q0, h, N, opts);

  const double eps = 1e-7;
  const auto bumped = integrate_trajectory(*p.dae, tab, v1(p.q0[0] + eps), h, N);
  const double fd = (bumped.q[N][0] - traj.q[N][0]) / eps;
  REQUIRE(std::abs(traj.dq[N][0] - fd) <= 1e-5);

  // The linearized constraint holds at every node.
  const auto tsys = tangent_system(*p.dae);
  for (int k = 0; k <= N; ++k)
    REQUIRE(inf_norm(tsys.constraint(traj.q[k], traj.u[k], traj.dq[k], traj.du[k])) <= 1e-11);
}

TEST_CASE("momentum sweeps are inverse orientations of each other") {
  Problem p = builtin_problem("nl-dae");
  const Tableau tab = builtin_tableau("radauIIA2");
  const auto atab = symplectic_adjoint(tab);
  const auto adj = lift_dae(*p.dae);
  const double h = 0.2;
  const auto sr = rk_step_dae(*p.dae, tab, p.q0, p.q0, h);

  const Vector p1 = v1(1.7);
  const auto back = adjoint_step_typeII(adj, tab, atab, sr.st, p1, h);
  const auto fwd = adjoint_step_forward(adj, tab, atab, sr.st, back.p0, h);
  REQUIRE(inf_norm(fwd.p1 - p1) <= 1e-12);
  for (int i = 0; i < tab.s; ++i) {
    REQUIRE(inf_norm(fwd.P[i] - back.P[i]) <= 1e-12);
    REQUIRE(inf_norm(fwd.Lam[i] - back.Lam[i]) <= 1e-12);
  }
}

TEST_CASE("single-step pairing conservation across the catalogue") {
  Problem p = builtin_problem("nl-dae");
  Rng rng(17);
  for (const auto& name : builtin_tableau_names()) {
    const Tableau tab = builtin_tableau(name);
    const auto atab = symplectic_adjoint(tab);
    const auto adj = lift_dae(*p.dae);
    const double h = 0.2;
    const auto sr = rk_step_dae(*p.dae, tab, p.q0, p.q0, h);
    const Vector dq0 = rng.vec(1, -1.0, 1.0);
    const Vector p1 = rng.vec(1, -1.0, 1.0);
    const auto tr = tangent_step(*p.dae, tab, sr.st, dq0, h);
    const auto ar = adjoint_step_typeII(adj, tab, atab, sr.st, p1, h);
    const double defect = p1.dot(tr.dq1) - ar.p0.dot(dq0);
    INFO(name);
    REQUIRE(std::abs(defect) <= 1e-13);
  }
}

TEST_CASE("augmented pairing identity and discrete duality") {
  Problem p = builtin_problem("nl-dae");
  const Tableau tab = builtin_tableau("radauIIA2");
  RunOptions opts;
  opts.mode = RunMode::adjoint_running;
  opts.cost = quadratic_running();
  opts.dq0 = v1(1.0);
  const int N = 10;
  const double h = 0.1;
  const auto traj = integrate_trajectory(*p.dae, tab, p.q0, h, N, opts);
  REQUIRE(traj.has_adjoint);
  REQUIRE(traj.has_tangent);

  // Per step: <p_{k+1}, dq_{k+1}> - <p_k, dq_k> + (tangent cost quadrature of
  // the step) = 0.
  for (int k = 0; k < N; ++k) {
    const double defect = traj.p[k + 1].dot(traj.dq[k + 1]) - traj.p[k].dot(traj.dq[k]) +
                          traj.step_tangent_cost[k];
    REQUIRE(std::abs(defect) <= 1e-12);
  }

  // Seeding p_N = 0 makes p_0 the exact gradient of the discrete cost: the
  // pairing at t = 0 reproduces the directional derivative of the quadrature.
  REQUIRE(std::abs(traj.p[0].dot(opts.dq0) - traj.tangent_quadrature) <= 1e-12);

  // Cross-check the tangent quadrature against a finite difference of the
  // discrete cost itself.
  const double eps = 1e-6;
  RunOptions fwd;
  fwd.cost = opts.cost;
  const auto up = integrate_trajectory(*p.dae, tab, v1(p.q0[0] + eps), h, N, fwd);
  const auto dn = integrate_trajectory(*p.dae, tab, v1(p.q0[0] - eps), h, N, fwd);
  const double fd = (up.cost_quadrature - dn.cost_quadrature) / (2.0 * eps);
  REQUIRE(std::abs(fd - traj.tangent_quadrature) <= 1e-8);
}

TEST_CASE("terminal adjoint on the linear ode rotates with the flow") {
  Problem p = builtin_problem("linear-ode");
  RunOptions opts;
  opts.mode = RunMode::adjoint_terminal;
  opts.p_terminal = Vector::Ones(2);
  const int N = 50;
  const auto traj =
      integrate_trajectory(as_dae(*p.ode), builtin_tableau("gauss2"), p.q0, 0.02, N, opts);
  // dq/dq0 is the rotation R(t); p_0 = R^T p_N. With R = [[c, s], [-s, c]] at
  // t = 1: p_0 = (cos 1 - sin 1, sin 1 + cos 1).
  const double c = std::cos(1.0), s = std::sin(1.0);
  REQUIRE(traj.p[0][0] == Catch::Approx(c - s).margin(1e-8));
  REQUIRE(traj.p[0][1] == Catch::Approx(s + c).margin(1e-8));
}

TEST_CASE("driver validates its inputs") {
  Problem p = builtin_problem("exp-dae");
  const Tableau tab = builtin_tableau("radauIIA2");
  REQUIRE_THROWS_AS(integrate_trajectory(*p.dae, tab, p.q0, 0.1, -1), input_error);
  REQUIRE_THROWS_AS(integrate_trajectory(*p.dae, tab, p.q0, 0.0, 5), input_error);
  REQUIRE_THROWS_AS(integrate_trajectory(*p.dae, tab, Vector::Ones(3), 0.1, 5), input_error);

  RunOptions noseed;
  noseed.mode = RunMode::adjoint_terminal;
  REQUIRE_THROWS_AS(integrate_trajectory(*p.dae, tab, p.q0, 0.1, 5, noseed), input_error);

  RunOptions nocost;
  nocost.mode = RunMode::adjoint_running;
  REQUIRE_THROWS_AS(integrate_trajectory(*p.dae, tab, p.q0, 0.1, 5, nocost), input_error);

  Problem lqr = builtin_problem("lqr-ocp");
  REQUIRE_THROWS_AS(integrate_trajectory(*lqr.dae, tab, lqr.q0, 0.1, 5), index_error);
}

TEST_CASE("failed stage solves carry the step location") {
  // The logistic field blows up backward from q0 > 1; a huge step makes the
  // stage solve fail somewhere mid-trajectory rather than at step 0.
  SemiExplicitDAE stiff = *builtin_problem("nl-dae").dae;
  stiff.f = [](const Vector& q, const Vector&) {
    return Vector((q.array() * q.array()).matrix());  // qdot = q^2 blows up in finite time
  };
  stiff.Dqf = [](const Vector& q, const Vector&) { return Matrix(2.0 * q.asDiagonal()); };
  stiff.Duf = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1).eval(); };
  stiff.phi = [](const Vector&, const Vector& u) { return u; };
  stiff.Dqphi = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1).eval(); };
  stiff.Duphi = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1).eval(); };
  try {
    integrate_trajectory(stiff, builtin_tableau("radauIIA2"), v1(1.0), 1.2, 10);
    FAIL("expected solve_error");
  } catch (const solve_error& e) {
    REQUIRE(std::string(e.what()).find("step ") != std::string::npos);
    REQUIRE(std::string(e.what()).find("t = ") != std::string::npos);
  }
}

TEST_CASE("csv writers are deterministic and complete") {
  Problem p = builtin_problem("exp-dae");
  RunOptions opts;
  opts.mode = RunMode::adjoint_terminal;
  opts.p_terminal = v1(1.0);
  const Tableau tab = builtin_tableau("radauIIA2");
  const auto traj = integrate_trajectory(*p.dae, tab, p.q0, 0.25, 4, opts);

  std::ostringstream a, b;
  write_trajectory_csv(a, traj);
  write_trajectory_csv(b, traj);
  REQUIRE(a.str() == b.str());
  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  REQUIRE(header == "t,q0,u0,p0,lambda0");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  REQUIRE(rows == 5);

  std::ostringstream sa;
  write_stages_csv(sa, traj, tab);
  std::istringstream slines(sa.str());
  std::getline(slines, header);
  REQUIRE(header.rfind("step,stage,t_stage,Q0,U0,V0,P0,Lambda0", 0) == 0);
  rows = 0;
  for (std::string line; std::getline(slines, line);) ++rows;
  REQUIRE(rows == 4 * tab.s);
}
