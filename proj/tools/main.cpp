// Command-line front end. Every subcommand writes CSV results (stdout by
// default, a file with --out) followed by a one-line JSON summary on stdout.
// Exit codes: 0 clean, 2 when a checked tolerance is violated (the offending
// row is printed), 1 for usage or solver failures.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "adjoint_geo/adjoint_geo.hpp"

using namespace adjoint_geo;
using nlohmann::json;

namespace {

struct Common {
  std::string problem = "nl-dae";
  std::string tableau = "radauIIA2";
  double tf = -1;  // negative means: use the problem's own horizon
  double h = 0;
  int steps = 0;
  double tol = 1e-12;
  std::string out;
  std::string dump_stages;
  std::uint64_t seed = 12345;
};

void add_grid(CLI::App* cmd, Common& c) {
  // --h claims the short help name, so help is long-form only.
  cmd->set_help_flag("--help", "print help");
  cmd->add_option("--tf", c.tf, "horizon (default: the problem's)");
  cmd->add_option("--h", c.h, "step size");
  cmd->add_option("--steps", c.steps, "step count");
}

void add_common(CLI::App* cmd, Common& c, bool grid = true) {
  cmd->add_option("--problem", c.problem, "problem name (see `list`)");
  cmd->add_option("--tableau", c.tableau, "tableau name (see `list`)");
  if (grid) add_grid(cmd, c);
  cmd->add_option("--tol", c.tol, "stage Newton tolerance");
  cmd->add_option("--out", c.out, "CSV output path (default: stdout)");
  cmd->add_option("--dump-stages", c.dump_stages, "also write internal stages to this path");
  cmd->add_option("--seed", c.seed, "seed for random directions");
}

struct Grid {
  double tf, h;
  int N;
};

Grid resolve_grid(const Common& c, double problem_tf) {
  Grid g;
  g.tf = c.tf < 0 ? problem_tf : c.tf;
  if (!(g.tf > 0)) throw input_error("horizon must be positive");
  const bool have_h = c.h > 0, have_n = c.steps > 0;
  if (have_h == have_n) throw input_error("give exactly one of --h or --steps");
  if (have_n) {
    g.N = c.steps;
  } else {
    g.N = std::max(1, static_cast<int>(std::llround(g.tf / c.h)));
  }
  g.h = g.tf / g.N;
  return g;
}

Vector parse_vector(const std::string& s, const char* what) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      vals.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw input_error(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (vals.empty()) throw input_error(std::string(what) + ": empty list");
  Vector v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

void emit_csv(const std::string& path, const std::function<void(std::ostream&)>& writer) {
  if (path.empty()) {
    writer(std::cout);
    return;
  }
  std::ofstream f(path);
  if (!f) throw input_error("cannot open output path '" + path + "'");
  writer(f);
}

void summarize(json j) {
  std::cout << j.dump() << "\n";
}

int cmd_list() {
  std::cout << "problems:";
  for (const auto& n : builtin_problem_names()) std::cout << " " << n;
  std::cout << "\ntableaus:";
  for (const auto& n : builtin_tableau_names()) std::cout << " " << n;
  std::cout << "\ncontrol problems:";
  for (const auto& n : builtin_ocp_names()) std::cout << " " << n;
  std::cout << "\n";
  return 0;
}

int cmd_integrate(const Common& c, const std::string& mode, const std::string& dq0_s,
                  const std::string& pterm_s) {
  Problem prob = builtin_problem(c.problem);
  Tableau tab = builtin_tableau(c.tableau);
  SemiExplicitDAE dae = problem_dae(prob);
  Grid g = resolve_grid(c, prob.tf);

  RunOptions opts;
  opts.newton.tol = c.tol;
  const int n = dae.dim_q;
  if (mode == "forward") {
    opts.mode = RunMode::forward;
  } else if (mode == "tangent") {
    opts.mode = RunMode::forward_tangent;
    opts.dq0 = dq0_s.empty() ? Vector::Ones(n).eval() : parse_vector(dq0_s, "--dq0");
  } else if (mode == "adjoint") {
    opts.mode = RunMode::adjoint_terminal;
    opts.p_terminal = pterm_s.empty() ? Vector::Ones(n).eval() : parse_vector(pterm_s, "--p-terminal");
  } else if (mode == "adjoint-running") {
    opts.mode = RunMode::adjoint_running;
    opts.cost = quadratic_running();
  } else {
    throw input_error("unknown --mode '" + mode +
                      "' (forward | tangent | adjoint | adjoint-running)");
  }

  Trajectory traj = integrate_trajectory(dae, tab, prob.q0, g.h, g.N, opts);
  emit_csv(c.out, [&](std::ostream& os) { write_trajectory_csv(os, traj); });
  if (!c.dump_stages.empty())
    emit_csv(c.dump_stages, [&](std::ostream& os) { write_stages_csv(os, traj, tab); });

  double residual = 0;
  for (const auto& st : traj.stages)
    residual = std::max(residual, stage_constraint_residual_max(dae, st));
  summarize({{"subcommand", "integrate"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"mode", mode},
             {"residual", residual}});
  return 0;
}

int cmd_sensitivity(const Common& c, const std::string& mode, int directions, double assert_tol) {
  Problem prob = builtin_problem(c.problem);
  Tableau tab = builtin_tableau(c.tableau);
  SemiExplicitDAE dae = problem_dae(prob);
  Grid g = resolve_grid(c, prob.tf);
  const int n = dae.dim_q;

  SensitivityConfig cfg;
  cfg.newton.tol = c.tol;
  cfg.probe = false;

  TerminalCost C = sum_terminal(n);
  RunningCost L = quadratic_running();
  SensitivityReport rep = mode == "running"
                              ? running_sensitivity(dae, tab, prob.q0, g.tf, g.N, L, cfg)
                              : terminal_sensitivity(dae, tab, prob.q0, g.tf, g.N, C, cfg);

  Rng rng(c.seed);
  std::vector<Vector> dirs(directions);
  for (auto& d : dirs) d = rng.vec(n, -1.0, 1.0);
  std::vector<double> tan(directions), fd(directions);
  parallel_for(directions, [&](int k) {
    if (mode == "running") {
      tan[k] = tangent_sensitivity(dae, tab, prob.q0, dirs[k], g.tf, g.N, L, cfg);
      fd[k] = fd_sensitivity(dae, tab, prob.q0, dirs[k], g.tf, g.N, cfg.fd_eps, L, cfg);
    } else {
      tan[k] = tangent_sensitivity(dae, tab, prob.q0, dirs[k], g.tf, g.N, C, cfg);
      fd[k] = fd_sensitivity(dae, tab, prob.q0, dirs[k], g.tf, g.N, cfg.fd_eps, C, cfg);
    }
  });

  emit_csv(c.out, [&](std::ostream& os) { write_sensitivity_csv(os, rep, dirs, tan, fd); });

  double worst = 0;
  int worst_k = -1;
  for (int k = 0; k < directions; ++k) {
    const double err = std::abs(rep.adjoint_p0.dot(dirs[k]) - tan[k]);
    if (err > worst) {
      worst = err;
      worst_k = k;
    }
  }
  summarize({{"subcommand", "sensitivity"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"mode", mode},
             {"residual", worst}});
  if (worst > assert_tol) {
    std::cout << "violation: direction " << worst_k << " adjoint "
              << format_double(rep.adjoint_p0.dot(dirs[worst_k])) << " tangent "
              << format_double(tan[worst_k]) << " differ by " << format_double(worst) << " > "
              << format_double(assert_tol) << "\n";
    return 2;
  }
  return 0;
}

int cmd_verify(const Common& c, bool augmented, const std::string& dq0_s,
               const std::string& pterm_s, double assert_tol) {
  Problem prob = builtin_problem(c.problem);
  Tableau tab = builtin_tableau(c.tableau);
  SemiExplicitDAE dae = problem_dae(prob);
  Grid g = resolve_grid(c, prob.tf);
  const int n = dae.dim_q;

  RunOptions topts;
  topts.newton.tol = c.tol;
  topts.mode = RunMode::forward_tangent;
  topts.dq0 = dq0_s.empty() ? Vector::Ones(n).eval() : parse_vector(dq0_s, "--dq0");
  std::optional<RunningCost> L;
  if (augmented) {
    L = quadratic_running();
    topts.cost = L;
  }
  Trajectory tangent = integrate_trajectory(dae, tab, prob.q0, g.h, g.N, topts);

  RunOptions aopts;
  aopts.newton.tol = c.tol;
  if (augmented) {
    aopts.mode = RunMode::adjoint_running;
    aopts.cost = L;
  } else {
    aopts.mode = RunMode::adjoint_terminal;
    aopts.p_terminal =
        pterm_s.empty() ? Vector::Ones(n).eval() : parse_vector(pterm_s, "--p-terminal");
  }
  Trajectory adjoint = integrate_trajectory(dae, tab, prob.q0, g.h, g.N, aopts);

  AuditReport rep = audit_invariants(tangent, adjoint, dae, L);
  emit_csv(c.out, [&](std::ostream& os) { write_audit_csv(os, rep); });

  summarize({{"subcommand", "verify-invariants"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"augmented", augmented},
             {"max_defect", rep.max_defect}});
  if (rep.max_defect > assert_tol) {
    for (const auto& row : rep.rows) {
      if (std::abs(row.pairing_defect) == rep.max_defect) {
        std::cout << "violation: step " << row.step << " t " << format_double(row.t)
                  << " pairing defect " << format_double(row.pairing_defect) << " > "
                  << format_double(assert_tol) << "\n";
        break;
      }
    }
    return 2;
  }
  return 0;
}

int cmd_naturality(const Common& c, const std::string& pterm_s, double assert_tol) {
  Problem prob = builtin_problem(c.problem);
  Tableau tab = builtin_tableau(c.tableau);
  SemiExplicitDAE dae = problem_dae(prob);
  Grid g = resolve_grid(c, prob.tf);

  NewtonConfig cfg;
  cfg.tol = c.tol;
  Vector pterm = pterm_s.empty() ? Vector::Ones(dae.dim_q).eval()
                                 : parse_vector(pterm_s, "--p-terminal");
  CubeReport rep = naturality_check(dae, tab, prob.q0, pterm, g.h, g.N, cfg);
  emit_csv(c.out, [&](std::ostream& os) { write_cube_csv(os, rep); });

  summarize({{"subcommand", "naturality"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"residual", rep.max_discrepancy}});
  if (rep.max_discrepancy > assert_tol) {
    for (const auto& pr : rep.pairs) {
      if (std::max(pr.max_dq, pr.max_dp) == rep.max_discrepancy) {
        std::cout << "violation: paths " << pr.path_a << " and " << pr.path_b << " differ by "
                  << format_double(std::max(pr.max_dq, pr.max_dp)) << " > "
                  << format_double(assert_tol) << "\n";
        break;
      }
    }
    return 2;
  }
  return 0;
}

int cmd_convergence(const Common& c, const std::string& h_list_s) {
  Problem prob = builtin_problem(c.problem);
  Tableau tab = builtin_tableau(c.tableau);
  const double tf = c.tf < 0 ? prob.tf : c.tf;

  Vector hv = parse_vector(h_list_s, "--h");
  std::vector<double> hs(hv.data(), hv.data() + hv.size());
  NewtonConfig cfg;
  cfg.tol = c.tol;
  ConvergenceReport rep = convergence_order(prob, tab, hs, tf, cfg);
  emit_csv(c.out, [&](std::ostream& os) { write_convergence_csv(os, rep); });

  summarize({{"subcommand", "convergence"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"order", rep.order_q},
             {"order_p", rep.order_p},
             {"order_u", rep.order_u},
             {"reliable", rep.reliable},
             {"richardson", rep.richardson}});
  return 0;
}

int cmd_ocp(const Common& c, const std::string& p0_s, double assert_tol) {
  OCProblem ocp = builtin_ocp(c.problem);
  if (c.tf > 0) ocp.tf = c.tf;
  Tableau tab = builtin_tableau(c.tableau);
  const int N = c.steps > 0 ? c.steps : 200;

  ShootConfig cfg;
  cfg.stage_newton.tol = c.tol;
  Vector guess = p0_s.empty() ? Vector::Zero(ocp.dae.dim_q).eval()
                              : parse_vector(p0_s, "--p0-guess");
  ExtremalTrajectory ext = shoot_extremal(ocp, tab, N, guess, cfg);

  emit_csv(c.out, [&](std::ostream& os) { write_trajectory_csv(os, ext.traj); });
  if (!c.dump_stages.empty())
    emit_csv(c.dump_stages, [&](std::ostream& os) { write_stages_csv(os, ext.traj, tab); });

  const double extremality = discrete_extremality_residual(ocp, tab, ext);
  summarize({{"subcommand", "ocp"},
             {"problem", c.problem},
             {"tableau", c.tableau},
             {"residual", ext.shooting_residual},
             {"extremality", extremality},
             {"cost", ext.cost},
             {"p0", ext.traj.p[0][0]}});
  if (extremality > assert_tol) {
    std::cout << "violation: discrete extremality residual " << format_double(extremality)
              << " > " << format_double(assert_tol) << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"structure-preserving adjoint integration toolkit"};
  app.require_subcommand(1);

  Common c;
  std::string mode = "forward", dq0_s, pterm_s, h_list_s = "0.2,0.1,0.05,0.025", p0_s;
  std::string sens_mode = "terminal";
  int directions = 5;
  bool augmented = false;
  double assert_tol_sens = 1e-9, assert_tol_verify = 1e-9, assert_tol_nat = 1e-10,
         assert_tol_ocp = 1e-9;

  CLI::App* integrate = app.add_subcommand("integrate", "run one trajectory");
  add_common(integrate, c);
  integrate->add_option("--mode", mode, "forward | tangent | adjoint | adjoint-running");
  integrate->add_option("--dq0", dq0_s, "tangent seed, comma separated");
  integrate->add_option("--p-terminal", pterm_s, "adjoint seed, comma separated");

  CLI::App* sens = app.add_subcommand("sensitivity", "gradient with cross checks");
  add_common(sens, c);
  sens->add_option("--mode", sens_mode, "terminal | running");
  sens->add_option("--directions", directions, "number of random probe directions");
  sens->add_option("--assert-tol", assert_tol_sens, "duality tolerance gating exit 2");

  CLI::App* verify = app.add_subcommand("verify-invariants", "pairing conservation audit");
  add_common(verify, c);
  verify->add_flag("--augmented", augmented, "include a running cost in the identity");
  verify->add_option("--dq0", dq0_s, "tangent seed, comma separated");
  verify->add_option("--p-terminal", pterm_s, "adjoint seed, comma separated");
  verify->add_option("--assert-tol", assert_tol_verify, "defect tolerance gating exit 2");

  CLI::App* nat = app.add_subcommand("naturality", "reduction/adjoint/discretization cube");
  add_common(nat, c);
  nat->add_option("--p-terminal", pterm_s, "adjoint seed, comma separated");
  nat->add_option("--assert-tol", assert_tol_nat, "path agreement tolerance gating exit 2");

  CLI::App* conv = app.add_subcommand("convergence", "order measurement on a step ladder");
  conv->set_help_flag("--help", "print help");
  conv->add_option("--problem", c.problem, "problem name");
  conv->add_option("--tableau", c.tableau, "tableau name");
  conv->add_option("--tf", c.tf, "horizon (default: the problem's)");
  conv->add_option("--h", h_list_s, "comma-separated step sizes, largest first");
  conv->add_option("--tol", c.tol, "stage Newton tolerance");
  conv->add_option("--out", c.out, "CSV output path (default: stdout)");

  CLI::App* ocp = app.add_subcommand("ocp", "extremal boundary problem by shooting");
  ocp->add_option("--problem", c.problem, "control problem name")->default_val("lqr-ocp");
  ocp->add_option("--tableau", c.tableau, "tableau name");
  ocp->add_option("--tf", c.tf, "horizon (default: the problem's)");
  ocp->add_option("--steps", c.steps, "step count (default 200)");
  ocp->add_option("--tol", c.tol, "stage Newton tolerance");
  ocp->add_option("--p0-guess", p0_s, "initial momentum guess, comma separated");
  ocp->add_option("--out", c.out, "CSV output path (default: stdout)");
  ocp->add_option("--dump-stages", c.dump_stages, "also write internal stages to this path");
  ocp->add_option("--assert-tol", assert_tol_ocp, "extremality tolerance gating exit 2");

  CLI::App* list = app.add_subcommand("list", "print the registries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (list->parsed()) return cmd_list();
  if (integrate->parsed()) return cmd_integrate(c, mode, dq0_s, pterm_s);
  if (sens->parsed()) return cmd_sensitivity(c, sens_mode, directions, assert_tol_sens);
  if (verify->parsed()) return cmd_verify(c, augmented, dq0_s, pterm_s, assert_tol_verify);
  if (nat->parsed()) return cmd_naturality(c, pterm_s, assert_tol_nat);
  if (conv->parsed()) return cmd_convergence(c, h_list_s);
  if (ocp->parsed()) return cmd_ocp(c, p0_s, assert_tol_ocp);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const lookup_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
