#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adjoint_geo/types.hpp"

namespace adjoint_geo {

struct Tableau {
  std::string name;
  int s = 0;   // stage count
  Matrix a;    // s x s
  Vector b;    // weights, all > 0 for the methods shipped here
  Vector c;    // abscissae, c_i = sum_j a_ij
  int order = 0;
};

// Coefficients driving the momentum stages. Shares b and c with the base
// tableau; only the stage matrix differs.
struct AdjointTableau {
  Matrix a;
  Vector b;
  Vector c;
};

struct TableauChecks {
  bool b_positive = false;
  double row_sum_err = 0;  // max_i |c_i - sum_j a_ij|
  bool has_cs_eq_1 = false;
};

inline TableauChecks validate(const Tableau& t) {
  TableauChecks ch;
  ch.b_positive = true;
  for (int i = 0; i < t.s; ++i)
    if (!(t.b[i] > 0)) ch.b_positive = false;
  double err = 0;
  for (int i = 0; i < t.s; ++i) err = std::max(err, std::abs(t.c[i] - t.a.row(i).sum()));
  ch.row_sum_err = err;
  ch.has_cs_eq_1 = t.s > 0 && std::abs(t.c[t.s - 1] - 1.0) <= 1e-14;
  return ch;
}

// a~_ij = (b_i b_j - b_j a_ji) / b_i. Applying the transform twice returns
// the original matrix, and b_i a~_ij + b_j a_ji = b_i b_j by construction;
// that identity is what makes the paired stage sweeps conserve bilinear
// quantities exactly.
inline AdjointTableau symplectic_adjoint(const Tableau& t) {
  for (int i = 0; i < t.s; ++i)
    if (!(t.b[i] > 0))
      throw input_error("symplectic_adjoint: requires b_i > 0 (tableau '" + t.name + "', b[" +
                        std::to_string(i) + "] = " + std::to_string(t.b[i]) + ")");
  AdjointTableau at;
  at.b = t.b;
  at.a.resize(t.s, t.s);
  for (int i = 0; i < t.s; ++i)
    for (int j = 0; j < t.s; ++j) at.a(i, j) = (t.b[i] * t.b[j] - t.b[j] * t.a(j, i)) / t.b[i];
  // Induced abscissae; these equal t.c whenever sum_j b_j a_ji = b_i (1 - c_i).
  at.c.resize(t.s);
  for (int i = 0; i < t.s; ++i) at.c[i] = at.a.row(i).sum();
  return at;
}

inline std::vector<std::string> builtin_tableau_names() {
  return {"midpoint", "gauss2", "gauss3", "radauIIA2", "radauIIA3", "euler-explicit"};
}

inline Tableau builtin_tableau(const std::string& name) {
  Tableau t;
  t.name = name;
  if (name == "midpoint") {
    t.s = 1;
    t.order = 2;
    t.a = Matrix::Constant(1, 1, 0.5);
    t.b = Vector::Constant(1, 1.0);
    t.c = Vector::Constant(1, 0.5);
  } else if (name == "gauss2") {
    const double r = std::sqrt(3.0) / 6.0;
    t.s = 2;
    t.order = 4;
    t.a.resize(2, 2);
    t.a << 0.25, 0.25 - r, 0.25 + r, 0.25;
    t.b.resize(2);
    t.b << 0.5, 0.5;
    t.c.resize(2);
    t.c << 0.5 - r, 0.5 + r;
  } else if (name == "gauss3") {
    const double r = std::sqrt(15.0);
    t.s = 3;
    t.order = 6;
    t.a.resize(3, 3);
    t.a << 5.0 / 36.0, 2.0 / 9.0 - r / 15.0, 5.0 / 36.0 - r / 30.0,
        5.0 / 36.0 + r / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r / 24.0,
        5.0 / 36.0 + r / 30.0, 2.0 / 9.0 + r / 15.0, 5.0 / 36.0;
    t.b.resize(3);
    t.b << 5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0;
    t.c.resize(3);
    t.c << 0.5 - r / 10.0, 0.5, 0.5 + r / 10.0;
  } else if (name == "radauIIA2") {
    t.s = 2;
    t.order = 3;
    t.a.resize(2, 2);
    t.a << 5.0 / 12.0, -1.0 / 12.0, 3.0 / 4.0, 1.0 / 4.0;
    t.b.resize(2);
    t.b << 3.0 / 4.0, 1.0 / 4.0;
    t.c.resize(2);
    t.c << 1.0 / 3.0, 1.0;
  } else if (name == "radauIIA3") {
    const double r = std::sqrt(6.0);
    t.s = 3;
    t.order = 5;
    t.a.resize(3, 3);
    t.a << (88.0 - 7.0 * r) / 360.0, (296.0 - 169.0 * r) / 1800.0, (-2.0 + 3.0 * r) / 225.0,
        (296.0 + 169.0 * r) / 1800.0, (88.0 + 7.0 * r) / 360.0, (-2.0 - 3.0 * r) / 225.0,
        (16.0 - r) / 36.0, (16.0 + r) / 36.0, 1.0 / 9.0;
    t.b.resize(3);
    t.b << (16.0 - r) / 36.0, (16.0 + r) / 36.0, 1.0 / 9.0;
    t.c.resize(3);
    t.c << (4.0 - r) / 10.0, (4.0 + r) / 10.0, 1.0;
  } else if (name == "euler-explicit") {
    t.s = 1;
    t.order = 1;
    t.a = Matrix::Zero(1, 1);
    t.b = Vector::Constant(1, 1.0);
    t.c = Vector::Zero(1);
  } else {
    std::string known;
    for (const auto& n : builtin_tableau_names()) known += (known.empty() ? "" : ", ") + n;
    throw lookup_error("builtin_tableau: unknown name '" + name + "' (known: " + known + ")");
  }
  return t;
}

inline bool has_cs_eq_1(const Tableau& t) { return validate(t).has_cs_eq_1; }

}  // namespace adjoint_geo
