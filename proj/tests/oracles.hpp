#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fpv/linalg.hpp"

namespace fpv::testing {

/// All vertices of the H-polytope { z : A z <= b }, found by enumerating
/// square subsystems. Intended for dimensions <= 5.
inline std::vector<Vector> enumerate_vertices(const Matrix& A, const Vector& b,
                                              double feas_tol = 1e-7) {
  const int dim = static_cast<int>(A.cols());
  const int m = static_cast<int>(A.rows());
  std::vector<Vector> verts;
  if (m < dim) return verts;
  std::vector<int> idx(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) idx[static_cast<size_t>(i)] = i;
  auto advance = [&]() {
    int i = dim - 1;
    while (i >= 0 && idx[static_cast<size_t>(i)] == m - dim + i) --i;
    if (i < 0) return false;
    ++idx[static_cast<size_t>(i)];
    for (int j = i + 1; j < dim; ++j)
      idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
    return true;
  };
  Matrix S(dim, dim);
  Vector rhs(dim);
  do {
    for (int i = 0; i < dim; ++i) {
      S.row(i) = A.row(idx[static_cast<size_t>(i)]);
      rhs(i) = b(idx[static_cast<size_t>(i)]);
    }
    Eigen::FullPivLU<Matrix> lu(S);
    if (lu.rank() < dim) continue;
    Vector z = lu.solve(rhs);
    if (((A * z - b).array() > feas_tol).any()) continue;
    bool dup = false;
    for (const auto& v : verts)
      if ((v - z).cwiseAbs().maxCoeff() <= 1e-6) {
        dup = true;
        break;
      }
    if (!dup) verts.push_back(z);
  } while (advance());
  return verts;
}

/// min c'z over the vertices of a bounded polytope { A z <= b }.
inline double brute_lp_min(const Matrix& A, const Vector& b, const Vector& c) {
  auto verts = enumerate_vertices(A, b);
  if (verts.empty()) throw Error("brute_lp_min: empty polytope");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : verts) best = std::min(best, c.dot(v));
  return best;
}

inline Vector random_vector(std::mt19937& rng, int n, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937& rng, int rows, int cols,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = dist(rng);
  return M;
}

}  // namespace fpv::testing
