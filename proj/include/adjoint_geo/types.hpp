#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace adjoint_geo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy.
//   input_error:  malformed arguments or configuration.
//   lookup_error: unknown registry name.
//   solve_error:  a linear or Newton solve failed.
//   index_error:  a constraint block is structurally singular, i.e. the
//                 problem is not index 1 at the point in question.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct lookup_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct solve_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct index_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Dense LU with partial pivoting. Numerically singular systems are rejected
// here so the caller's context string ends up in the error message instead of
// NaNs propagating downstream.
inline Vector lu_solve(const Matrix& A, const Vector& rhs, const std::string& context) {
  if (A.rows() != A.cols() || A.rows() != rhs.size())
    throw input_error(context + ": linear system is not square (" + std::to_string(A.rows()) +
                      "x" + std::to_string(A.cols()) + ", rhs " + std::to_string(rhs.size()) +
                      ")");
  if (A.rows() == 0) return Vector(0);
  Eigen::PartialPivLU<Matrix> lu(A);
  const double rc = lu.rcond();
  if (!(rc > 1e-14))
    throw solve_error(context + ": matrix numerically singular (rcond " + std::to_string(rc) +
                      ")");
  return lu.solve(rhs);
}

// Uniform draws built from the top 53 bits of mt19937_64 output, so a fixed
// seed reproduces the same stream independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0,1)

  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

  Vector vec(int n, double lo, double hi) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = range(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace adjoint_geo
