#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>

namespace fpv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(int pivot, double magnitude)
      : Error("matrix is singular: pivot " + std::to_string(pivot) +
              " has magnitude " + std::to_string(magnitude)),
        pivot_index(pivot) {}
  int pivot_index;
};

namespace detail {
inline constexpr double kPivotTol = 1e-12;
}

/// Solves M * Btilde = B for a square nonsingular M, converting an implicit
/// affine step into its explicit form.
inline Matrix solve_for_explicit(const Matrix& M, const Matrix& B) {
  if (M.rows() != M.cols())
    throw Error("solve_for_explicit: M must be square");
  if (M.rows() != B.rows())
    throw Error("solve_for_explicit: row mismatch between M and B");
  Eigen::PartialPivLU<Matrix> lu(M);
  const auto& U = lu.matrixLU();
  for (int i = 0; i < M.rows(); ++i) {
    if (std::abs(U(i, i)) <= detail::kPivotTol)
      throw SingularMatrixError(i, std::abs(U(i, i)));
  }
  return lu.solve(B);
}

/// Spectral norm via power iteration on M^T M.
inline double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  const Matrix G = M.transpose() * M;
  const int n = static_cast<int>(G.rows());
  if (G.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double prev = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector u = G * v;
    double nrm = u.norm();
    if (nrm == 0.0) return 0.0;
    v = u / nrm;
    if (it > 0 && std::abs(nrm - prev) <= 1e-10 * std::max(1.0, nrm)) {
      prev = nrm;
      break;
    }
    prev = nrm;
  }
  return std::sqrt(prev);
}

/// Tight interval image of w = Btilde * y over the box [ylo, yhi].
/// Both bounds are attained at sign-pattern vertices of the box.
inline std::pair<Vector, Vector> interval_affine(const Matrix& Btilde,
                                                 const Vector& ylo,
                                                 const Vector& yhi) {
  if (Btilde.cols() != ylo.size() || ylo.size() != yhi.size())
    throw Error("interval_affine: dimension mismatch");
  for (int j = 0; j < ylo.size(); ++j)
    if (ylo(j) > yhi(j)) throw Error("interval_affine: ylo > yhi");
  const Vector mid = 0.5 * (yhi + ylo);
  const Vector rad = 0.5 * (yhi - ylo);
  const Vector center = Btilde * mid;
  const Vector halfwidth = Btilde.cwiseAbs() * rad;
  return {center - halfwidth, center + halfwidth};
}

}  // namespace fpv
