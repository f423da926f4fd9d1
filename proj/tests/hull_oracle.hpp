#pragma once

// Exact hull membership oracle for piecewise-affine operator graphs over a
// box. Generators are the vertices of the box clipped to each affine piece;
// envelope values at a point come from a small LP over convex multipliers.

#include <limits>
#include <utility>
#include <vector>

#include "fpv/cutgen.hpp"
#include "fpv/milp/solver.hpp"
#include "oracles.hpp"

namespace fpv::testing {

inline std::vector<std::pair<Vector, double>> graph_generators(
    const cutgen::HullQuery& q) {
  const int d = q.dim();
  std::vector<std::pair<double, double>> pieces;
  const double big = 1e9;
  switch (q.kind) {
    case PwaKind::SoftThreshold:
      pieces = {{-big, -q.lambda}, {-q.lambda, q.lambda}, {q.lambda, big}};
      break;
    case PwaKind::Relu:
      pieces = {{-big, 0.0}, {0.0, big}};
      break;
    case PwaKind::SatLin:
      pieces = {{-big, q.sat_lo}, {q.sat_lo, q.sat_hi}, {q.sat_hi, big}};
      break;
  }
  std::vector<std::pair<Vector, double>> gen;
  for (auto [zlo, zhi] : pieces) {
    Matrix A = Matrix::Zero(2 * d + 2, d);
    Vector b(2 * d + 2);
    for (int i = 0; i < d; ++i) {
      A(2 * i, i) = 1.0;
      b(2 * i) = q.yhi(i);
      A(2 * i + 1, i) = -1.0;
      b(2 * i + 1) = -q.ylo(i);
    }
    A.row(2 * d) = q.a.transpose();
    b(2 * d) = zhi - q.constant;
    A.row(2 * d + 1) = -q.a.transpose();
    b(2 * d + 1) = -(zlo - q.constant);
    for (const auto& v : enumerate_vertices(A, b, 1e-9))
      gen.emplace_back(v, q.scalar(q.a.dot(v) + q.constant));
  }
  return gen;
}

/// [convex envelope, concave envelope] of the operator at y, or nothing if y
/// is not a convex combination of generator points (numerically infeasible).
inline std::optional<std::pair<double, double>> envelope_bounds(
    const cutgen::HullQuery& q, const Vector& y,
    const std::vector<std::pair<Vector, double>>& gen) {
  std::pair<double, double> out;
  for (int pass = 0; pass < 2; ++pass) {
    milp::MilpModel m;
    std::vector<milp::VarId> th;
    th.reserve(gen.size());
    for (size_t j = 0; j < gen.size(); ++j) th.push_back(m.add_var(0.0, 1.0));
    for (int i = 0; i < q.dim(); ++i) {
      milp::LinExpr e;
      for (size_t j = 0; j < gen.size(); ++j) e.add(th[j], gen[j].first(i));
      m.add_constr(e, milp::Sense::EQ, y(i));
    }
    milp::LinExpr ones;
    for (auto v : th) ones += milp::LinExpr(v);
    m.add_constr(ones, milp::Sense::EQ, 1.0);
    milp::LinExpr obj;
    for (size_t j = 0; j < gen.size(); ++j) obj.add(th[j], gen[j].second);
    m.set_objective(obj,
                    pass == 0 ? milp::ObjSense::Minimize
                              : milp::ObjSense::Maximize);
    auto res = milp::solve(m, {});
    if (res.status != milp::SolveStatus::OptimalWithinGap) return std::nullopt;
    (pass == 0 ? out.first : out.second) = res.objective;
  }
  return out;
}

}  // namespace fpv::testing
