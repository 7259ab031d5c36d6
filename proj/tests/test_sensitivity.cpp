#include <catch2/catch_amalgamated.hpp>

#include "adjoint_geo/sensitivity.hpp"

using namespace adjoint_geo;

namespace {

Vector v1(double x) {
  Vector v(1);
  v[0] = x;
  return v;
}

const double kE = std::exp(1.0);

}  // namespace

TEST_CASE("terminal gradient of the exponential flow") {
  Problem p = builtin_problem("exp-dae");
  const auto rep = terminal_sensitivity(*p.dae, builtin_tableau("radauIIA2"), p.q0, 1.0, 200,
                                        sum_terminal(1));
  // q(tf) = q0 e, so the gradient is e.
  REQUIRE(std::abs(rep.adjoint_p0[0] - kE) <= 1e-6);
  REQUIRE(rep.cost_value == Catch::Approx(kE).margin(1e-6));
  REQUIRE(rep.backward_sweeps == 1);
  REQUIRE(rep.forward_integrations == 1 + 3);
  // All three evidence columns agree far below the discretization error.
  REQUIRE(rep.max_adjoint_vs_tangent <= 1e-10);
  REQUIRE(rep.max_adjoint_vs_fd <= 1e-9);  // linear problem: differences are exact
}

TEST_CASE("constant terminal cost has zero gradient") {
  Problem p = builtin_problem("nl-dae");
  TerminalCost C;
  C.C = [](const Vector&) { return 42.0; };
  C.gradC = [](const Vector& q) { return Vector::Zero(q.size()).eval(); };
  const auto rep = terminal_sensitivity(*p.dae, builtin_tableau("gauss2"), p.q0, 1.0, 20, C);
  REQUIRE(inf_norm(rep.adjoint_p0) == 0.0);
  REQUIRE(rep.cost_value == 42.0);
}

TEST_CASE("terminal gradient of the logistic flow") {
  Problem p = builtin_problem("nl-dae");
  const auto rep = terminal_sensitivity(*p.dae, builtin_tableau("radauIIA2"), p.q0, 1.0, 200,
                                        sum_terminal(1));
  // d/da [a / (a + (1-a)e)] at a = 1/2 is 4e/(1+e)^2.
  const double oracle = 4.0 * kE / ((1.0 + kE) * (1.0 + kE));
  REQUIRE(std::abs(rep.adjoint_p0[0] - oracle) <= 1e-6);
}

TEST_CASE("running gradient of the exponential flow") {
  Problem p = builtin_problem("exp-dae");
  const auto rep = running_sensitivity(*p.dae, builtin_tableau("radauIIA2"), p.q0, 1.0, 200,
                                       state_running(1));
  // J(a) = a^2 (e^2 - 1)/4, so dJ/da at 1 is (e^2 - 1)/2.
  const double oracle = (kE * kE - 1.0) / 2.0;
  REQUIRE(std::abs(rep.adjoint_p0[0] - oracle) <= 1e-5);
  REQUIRE(std::abs(rep.cost_value - (kE * kE - 1.0) / 4.0) <= 1e-5);
}

TEST_CASE("zero running cost has zero gradient") {
  Problem p = builtin_problem("exp-dae");
  RunningCost L;
  L.L = [](const Vector&, const Vector&) { return 0.0; };
  L.gradL_q = [](const Vector& q, const Vector&) { return Vector::Zero(q.size()).eval(); };
  L.gradL_u = [](const Vector&, const Vector& u) { return Vector::Zero(u.size()).eval(); };
  const auto rep = running_sensitivity(*p.dae, builtin_tableau("radauIIA2"), p.q0, 1.0, 10, L);
  REQUIRE(inf_norm(rep.adjoint_p0) == 0.0);
  REQUIRE(rep.cost_value == 0.0);
}

TEST_CASE("discrete duality across problems, tableaus and grids") {
  // The theorem under test: the backward-sweep gradient and the linearized
  // forward run compute the same number, step for step, at solver precision.
  Rng rng(91);
  SensitivityConfig cfg;
  cfg.probe = false;
  for (const auto& pname : {"linear-ode", "exp-dae", "nl-dae", "hess2"}) {
    Problem p = builtin_problem(pname);
    const SemiExplicitDAE dae = problem_dae(p);
    const int n = dae.dim_q;
    for (const auto& tname : {"euler-explicit", "midpoint", "gauss2", "radauIIA2"}) {
      const Tableau tab = builtin_tableau(tname);
      for (int N : {1, 7, 50}) {
        const auto trep = terminal_sensitivity(dae, tab, p.q0, 1.0, N, sum_terminal(n), cfg);
        const auto rrep =
            running_sensitivity(dae, tab, p.q0, 1.0, N, state_running(dae.dim_u), cfg);
        for (int k = 0; k < 5; ++k) {
          const Vector d = rng.vec(n, -1.0, 1.0);
          const double tan_t =
              tangent_sensitivity(dae, tab, p.q0, d, 1.0, N, sum_terminal(n), cfg);
          const double tan_r =
              tangent_sensitivity(dae, tab, p.q0, d, 1.0, N, state_running(dae.dim_u), cfg);
          INFO(pname << " " << tname << " N=" << N << " probe " << k);
          REQUIRE(std::abs(trep.adjoint_p0.dot(d) - tan_t) <= 100.0 * 1e-12 * N);
          REQUIRE(std::abs(rrep.adjoint_p0.dot(d) - tan_r) <= 100.0 * 1e-12 * N);
        }
      }
    }
  }
}

TEST_CASE("difference oracle closes the triangle") {
  Problem p = builtin_problem("nl-dae");
  const Tableau tab = builtin_tableau("radauIIA2");
  SensitivityConfig cfg;
  cfg.probe = false;
  const Vector d = v1(1.0);
  const double tan = tangent_sensitivity(*p.dae, tab, p.q0, d, 1.0, 25, sum_terminal(1), cfg);
  const double fd =
      fd_sensitivity(*p.dae, tab, p.q0, d, 1.0, 25, 1e-5, sum_terminal(1), cfg);
  REQUIRE(std::abs(tan - fd) <= 1e-7);

  REQUIRE_THROWS_AS(fd_sensitivity(*p.dae, tab, p.q0, d, 1.0, 25, 0.0, sum_terminal(1), cfg),
                    input_error);
  REQUIRE(tangent_sensitivity(*p.dae, tab, p.q0, v1(0.0), 1.0, 25, sum_terminal(1), cfg) == 0.0);
}

TEST_CASE("grid validation") {
  Problem p = builtin_problem("exp-dae");
  const Tableau tab = builtin_tableau("midpoint");
  REQUIRE_THROWS_AS(terminal_sensitivity(*p.dae, tab, p.q0, 1.0, 0, sum_terminal(1)),
                    input_error);
  REQUIRE_THROWS_AS(running_sensitivity(*p.dae, tab, p.q0, -1.0, 10, state_running(1)),
                    input_error);
}

TEST_CASE("ocp problems are rejected by the forward face") {
  Problem p = builtin_problem("lqr-ocp");
  REQUIRE_THROWS_AS(problem_dae(p), input_error);
}
