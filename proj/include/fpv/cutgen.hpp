#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fpv/milp/model.hpp"
#include "fpv/milp/solver.hpp"
#include "fpv/model_ir.hpp"

namespace fpv::cutgen {

// ---------------------------------------------------------------------------
// Convex-hull inequality families for soft-threshold / ReLU / SatLin rows
// over a box, plus the sorted-greedy separation oracle and the root cut loop.
// ---------------------------------------------------------------------------

/// One scalar piecewise row w = kind(a'y + constant) with y in [ylo, yhi].
/// Fixed offsets enter as `constant` (equivalently a frozen extra coordinate).
struct HullQuery {
  PwaKind kind = PwaKind::Relu;
  Vector a;
  Vector ylo, yhi;
  double constant = 0.0;
  double lambda = 0.0;          // SoftThreshold
  double sat_lo = 0.0, sat_hi = 0.0;  // SatLin

  // Sign-pattern box corners of a'y, partial-sum bounds over all of J.
  Vector l0, u0;
  double lJ = 0.0, uJ = 0.0;

  static HullQuery make(PwaKind kind, const Vector& a, const Vector& ylo,
                        const Vector& yhi, double constant, double lambda = 0.0,
                        double sat_lo = 0.0, double sat_hi = 0.0) {
    HullQuery q;
    q.kind = kind;
    q.a = a;
    q.ylo = ylo;
    q.yhi = yhi;
    q.constant = constant;
    q.lambda = lambda;
    q.sat_lo = sat_lo;
    q.sat_hi = sat_hi;
    const int d = static_cast<int>(a.size());
    q.l0.resize(d);
    q.u0.resize(d);
    for (int i = 0; i < d; ++i) {
      q.l0(i) = a(i) >= 0 ? ylo(i) : yhi(i);
      q.u0(i) = a(i) >= 0 ? yhi(i) : ylo(i);
    }
    q.lJ = constant;
    q.uJ = constant;
    for (int i = 0; i < d; ++i) {
      q.lJ += a(i) * q.l0(i);
      q.uJ += a(i) * q.u0(i);
    }
    return q;
  }

  int dim() const { return static_cast<int>(a.size()); }

  double scalar(double z) const {
    switch (kind) {
      case PwaKind::SoftThreshold: return soft_threshold(z, lambda);
      case PwaKind::Relu: return relu(z);
      case PwaKind::SatLin: return sat_lin(z, sat_lo, sat_hi);
    }
    throw Error("unreachable");
  }

  /// Upper exponential family threshold and offset; lower mirrored.
  double theta_upper() const {
    switch (kind) {
      case PwaKind::SoftThreshold: return lambda;
      case PwaKind::Relu: return 0.0;
      case PwaKind::SatLin: return sat_lo;
    }
    throw Error("unreachable");
  }
  double rho_upper() const { return kind == PwaKind::SatLin ? sat_lo : 0.0; }
  double theta_lower() const {
    switch (kind) {
      case PwaKind::SoftThreshold: return -lambda;
      case PwaKind::Relu: throw Error("ReLU has no lower family");
      case PwaKind::SatLin: return sat_hi;
    }
    throw Error("unreachable");
  }
  double rho_lower() const { return kind == PwaKind::SatLin ? sat_hi : 0.0; }
  bool has_lower_family() const { return kind != PwaKind::Relu; }

  /// Coordinates that can appear in an index pair: nonzero coefficient and
  /// positive box width. Others contribute fixed terms only.
  std::vector<int> effective() const {
    std::vector<int> idx;
    for (int i = 0; i < dim(); ++i)
      if (a(i) != 0.0 && u0(i) != l0(i)) idx.push_back(i);
    return idx;
  }
};

enum class HullCase {
  FixedUpperPiece,
  FixedLowerPiece,
  FixedLinearPiece,
  FixedZero,
  General,
};

/// Degenerate-case detection: the whole argument range sits on one affine
/// piece. Thresholds are the piece boundaries of each kind.
inline HullCase classify(const HullQuery& q) {
  switch (q.kind) {
    case PwaKind::SoftThreshold:
      if (q.lJ >= q.lambda) return HullCase::FixedUpperPiece;
      if (q.uJ <= -q.lambda) return HullCase::FixedLowerPiece;
      if (q.lJ >= -q.lambda && q.uJ <= q.lambda) return HullCase::FixedZero;
      return HullCase::General;
    case PwaKind::Relu:
      if (q.lJ >= 0.0) return HullCase::FixedLinearPiece;
      if (q.uJ <= 0.0) return HullCase::FixedZero;
      return HullCase::General;
    case PwaKind::SatLin:
      if (q.uJ <= q.sat_lo) return HullCase::FixedLowerPiece;
      if (q.lJ >= q.sat_hi) return HullCase::FixedUpperPiece;
      if (q.lJ >= q.sat_lo && q.uJ <= q.sat_hi)
        return HullCase::FixedLinearPiece;
      return HullCase::General;
  }
  throw Error("unreachable");
}

/// A halfspace w <= y_coef'y + c0 (upper = true) or w >= ... (upper = false),
/// valid for the whole operator graph.
struct CutInequality {
  Vector y_coef;
  double c0 = 0.0;
  bool upper = true;
  double violation = 0.0;
  std::vector<int> I;  // full-slope coordinates
  std::vector<int> A;  // chord-slope (aggregated) coordinates
  int o = -1;          // the aggregated coordinate when |A| == 1

  double rhs_at(const Vector& y) const { return y_coef.dot(y) + c0; }
  double violation_at(const Vector& y, double w) const {
    return upper ? w - rhs_at(y) : rhs_at(y) - w;
  }
};

namespace detail {

inline double lI(const HullQuery& q, const std::vector<bool>& in) {
  double v = q.constant;
  for (int i = 0; i < q.dim(); ++i)
    v += q.a(i) * (in[static_cast<size_t>(i)] ? q.l0(i) : q.u0(i));
  return v;
}
inline double uI(const HullQuery& q, const std::vector<bool>& in) {
  double v = q.constant;
  for (int i = 0; i < q.dim(); ++i)
    v += q.a(i) * (in[static_cast<size_t>(i)] ? q.u0(i) : q.l0(i));
  return v;
}

// The family cut for an index pair (I, A) is a chord of the scalar operator
// along the path where coordinates in I carry full slope, coordinates in A
// jointly interpolate through the aggregated argument, and the rest are fixed
// with zero coefficient. A = {o} gives the classic single-coordinate family;
// larger A is required for hull facets of three-piece operators. The chord
// anchors are clipped to the actual piece boundaries: a chord whose span
// overshoots a kink would otherwise pass through a point off the graph, which
// is valid but not facet-tight. Passing clip = false yields the plain
// textbook chord, which the clipped cut dominates pointwise.

inline CutInequality make_upper_cut(const HullQuery& q,
                                    const std::vector<int>& I,
                                    const std::vector<int>& A,
                                    double lI_val, bool clip = true) {
  double z_lo = lI_val;  // l_{I union A}
  for (int i : A) z_lo += q.a(i) * (q.l0(i) - q.u0(i));
  double z_a = z_lo, w_a = 0.0, z_b = lI_val, w_b = 0.0;
  switch (q.kind) {
    case PwaKind::SoftThreshold:
      if (clip) z_a = std::max(z_lo, -q.lambda);
      w_b = lI_val - q.lambda;
      break;
    case PwaKind::Relu:
      w_b = lI_val;
      break;
    case PwaKind::SatLin:
      w_a = q.sat_lo;
      w_b = clip ? std::min(lI_val, q.sat_hi) : lI_val;
      if (clip) z_b = w_b;
      break;
  }
  const double tau = (w_b - w_a) / (z_b - z_a);
  CutInequality cut;
  cut.upper = true;
  cut.I = I;
  cut.A = A;
  cut.o = A.size() == 1 ? A.front() : -1;
  cut.y_coef = Vector::Zero(q.dim());
  cut.c0 = w_a + tau * (lI_val - z_a);
  for (int i : I) {
    cut.y_coef(i) += q.a(i);
    cut.c0 -= q.a(i) * q.l0(i);
  }
  for (int i : A) {
    cut.y_coef(i) += tau * q.a(i);
    cut.c0 -= tau * q.a(i) * q.u0(i);
  }
  return cut;
}

inline CutInequality make_lower_cut(const HullQuery& q,
                                    const std::vector<int>& I,
                                    const std::vector<int>& A,
                                    double uI_val, bool clip = true) {
  double z_hi = uI_val;  // u_{I union A}
  for (int i : A) z_hi += q.a(i) * (q.u0(i) - q.l0(i));
  double z_a = z_hi, w_a = 0.0, z_b = uI_val, w_b = 0.0;
  switch (q.kind) {
    case PwaKind::SoftThreshold:
      if (clip) z_a = std::min(z_hi, q.lambda);
      w_b = uI_val + q.lambda;
      break;
    case PwaKind::Relu:
      throw Error("ReLU has no lower family");
    case PwaKind::SatLin:
      w_a = q.sat_hi;
      w_b = clip ? std::max(uI_val, q.sat_lo) : uI_val;
      if (clip) z_b = w_b;
      break;
  }
  const double tau = (w_b - w_a) / (z_b - z_a);
  CutInequality cut;
  cut.upper = false;
  cut.I = I;
  cut.A = A;
  cut.o = A.size() == 1 ? A.front() : -1;
  cut.y_coef = Vector::Zero(q.dim());
  cut.c0 = w_a + tau * (uI_val - z_a);
  for (int i : I) {
    cut.y_coef(i) += q.a(i);
    cut.c0 -= q.a(i) * q.u0(i);
  }
  for (int i : A) {
    cut.y_coef(i) += tau * q.a(i);
    cut.c0 -= tau * q.a(i) * q.l0(i);
  }
  return cut;
}

inline CutInequality make_upper_cut(const HullQuery& q,
                                    const std::vector<int>& I, int o,
                                    double lI_val, bool clip = true) {
  return make_upper_cut(q, I, std::vector<int>{o}, lI_val, clip);
}

inline CutInequality make_lower_cut(const HullQuery& q,
                                    const std::vector<int>& I, int o,
                                    double uI_val, bool clip = true) {
  return make_lower_cut(q, I, std::vector<int>{o}, uI_val, clip);
}

/// Aggregated secant in (a'y, w) space: w (<= or >=) slope*(a'y + t - z0) + w0.
inline CutInequality aggregated(const HullQuery& q, double slope, double z0,
                                double w0, bool upper) {
  CutInequality cut;
  cut.upper = upper;
  cut.y_coef = slope * q.a;
  cut.c0 = slope * (q.constant - z0) + w0;
  return cut;
}

}  // namespace detail

/// The O(1) inequalities of each hull plus the single-secant (I = empty)
/// members of the exponential families. The aggregated secants use anchor
/// points clipped to the actual argument range [lJ, uJ]; the unclipped
/// textbook anchors are invalid when the range stops short of an outer piece.
inline std::vector<CutInequality> base_inequalities(const HullQuery& q) {
  if (classify(q) != HullCase::General)
    throw Error("base_inequalities: degenerate query, use the equality case");
  std::vector<CutInequality> cuts;
  const double t = q.constant;

  switch (q.kind) {
    case PwaKind::SoftThreshold: {
      // a'y - lambda <= w <= a'y + lambda.
      cuts.push_back(detail::aggregated(q, 1.0, 0.0, -q.lambda, false));
      cuts.push_back(detail::aggregated(q, 1.0, 0.0, q.lambda, true));
      // Upper secant through (max(lJ, -lambda), 0) and (uJ, T(uJ)).
      const double t0 = std::max(q.lJ, -q.lambda);
      if (q.uJ > t0)
        cuts.push_back(detail::aggregated(
            q, q.scalar(q.uJ) / (q.uJ - t0), t0, 0.0, true));
      // Lower secant through (min(uJ, lambda), 0) and (lJ, T(lJ)).
      const double t1 = std::min(q.uJ, q.lambda);
      if (q.lJ < t1)
        cuts.push_back(detail::aggregated(
            q, q.scalar(q.lJ) / (q.lJ - t1), t1, 0.0, false));
      break;
    }
    case PwaKind::Relu: {
      CutInequality nonneg;
      nonneg.upper = false;
      nonneg.y_coef = Vector::Zero(q.dim());
      nonneg.c0 = 0.0;
      cuts.push_back(nonneg);
      cuts.push_back(detail::aggregated(q, 1.0, 0.0, 0.0, false));  // w >= a'y
      // Chord through (lJ, 0) and (uJ, uJ).
      cuts.push_back(
          detail::aggregated(q, q.uJ / (q.uJ - q.lJ), q.lJ, 0.0, true));
      break;
    }
    case PwaKind::SatLin: {
      CutInequality lo, hi;
      lo.upper = false;
      lo.y_coef = Vector::Zero(q.dim());
      lo.c0 = q.sat_lo;
      hi.upper = true;
      hi.y_coef = Vector::Zero(q.dim());
      hi.c0 = q.sat_hi;
      cuts.push_back(lo);
      cuts.push_back(hi);
      // Upper secant through (lJ, S(lJ)) and (min(uJ, c), min(uJ, c)).
      const double t1 = std::min(q.uJ, q.sat_hi);
      if (t1 > q.lJ)
        cuts.push_back(detail::aggregated(
            q, (t1 - q.scalar(q.lJ)) / (t1 - q.lJ), q.lJ, q.scalar(q.lJ),
            true));
      // Lower secant through (uJ, S(uJ)) and (max(lJ, b), max(lJ, b)).
      const double t0 = std::max(q.lJ, q.sat_lo);
      if (q.uJ > t0)
        cuts.push_back(detail::aggregated(
            q, (q.scalar(q.uJ) - t0) / (q.uJ - t0), q.uJ, q.scalar(q.uJ),
            false));
      break;
    }
  }
  (void)t;

  // Single-secant family members: pairs (empty, o) whose single coordinate
  // flip crosses the piece boundary.
  const auto eff = q.effective();
  std::vector<bool> none(static_cast<size_t>(q.dim()), false);
  const double l_empty = detail::lI(q, none);
  const double u_empty = detail::uI(q, none);
  for (int o : eff) {
    if (l_empty >= q.theta_upper() &&
        l_empty + q.a(o) * (q.l0(o) - q.u0(o)) < q.theta_upper())
      cuts.push_back(detail::make_upper_cut(q, {}, o, l_empty));
    if (q.has_lower_family() && u_empty <= q.theta_lower() &&
        u_empty + q.a(o) * (q.u0(o) - q.l0(o)) > q.theta_lower())
      cuts.push_back(detail::make_lower_cut(q, {}, o, u_empty));
  }
  return cuts;
}

/// Full enumeration of both families over all (I, A) assignments of the
/// effective coordinates (A nonempty, includes empty I). Exponential in the
/// effective dimension; for oracles and small d only.
inline std::vector<CutInequality> enumerate_family(const HullQuery& q,
                                                   bool clip = true) {
  std::vector<CutInequality> cuts;
  const auto eff = q.effective();
  const int ne = static_cast<int>(eff.size());
  if (ne > 12) throw Error("enumerate_family: dimension too large");
  long total = 1;
  for (int j = 0; j < ne; ++j) total *= 3;
  for (long code = 0; code < total; ++code) {
    std::vector<bool> in(static_cast<size_t>(q.dim()), false);
    std::vector<int> I, A;
    long rem = code;
    for (int j = 0; j < ne; ++j) {
      const int c = eff[static_cast<size_t>(j)];
      switch (rem % 3) {
        case 0: break;  // fixed, zero coefficient
        case 1:
          in[static_cast<size_t>(c)] = true;
          I.push_back(c);
          break;
        case 2:
          A.push_back(c);
          break;
      }
      rem /= 3;
    }
    if (A.empty()) continue;
    const double l_val = detail::lI(q, in);
    const double u_val = detail::uI(q, in);
    double l_low = l_val, u_high = u_val;
    for (int i : A) {
      l_low += q.a(i) * (q.l0(i) - q.u0(i));
      u_high += q.a(i) * (q.u0(i) - q.l0(i));
    }
    if (l_val >= q.theta_upper() && l_low < q.theta_upper())
      cuts.push_back(detail::make_upper_cut(q, I, A, l_val, clip));
    if (q.has_lower_family() && u_val <= q.theta_lower() &&
        u_high > q.theta_lower())
      cuts.push_back(detail::make_lower_cut(q, I, A, u_val, clip));
  }
  return cuts;
}

/// Sorted-greedy separation at (yhat, what). Exact for the unclipped family
/// (the optimal I is a sorted prefix there); the returned cut is the clipped
/// strengthening, so its violation is at least the unclipped family optimum.
/// Finding the most violated clipped cut exactly is a knapsack-type problem,
/// hence the prefix scan scores every straddling o per prefix instead.
inline std::optional<CutInequality> separate(const HullQuery& q,
                                             const Vector& yhat, double what,
                                             double tol = 1e-9) {
  const auto eff = q.effective();
  std::optional<CutInequality> best;

  // Upper family: grow I in nondecreasing (yhat - l0)/(u0 - l0). Anchor
  // clipping makes the violation non-monotone past the threshold crossing,
  // so score every (sorted prefix, o) pair whose partial bounds straddle the
  // threshold instead of stopping at the crossing index.
  {
    std::vector<int> order = eff;
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      return (yhat(i) - q.l0(i)) / (q.u0(i) - q.l0(i)) <
             (yhat(j) - q.l0(j)) / (q.u0(j) - q.l0(j));
    });
    std::vector<int> I;
    std::vector<bool> none(static_cast<size_t>(q.dim()), false);
    double l_run = detail::lI(q, none);
    for (size_t k = 0; k <= order.size(); ++k) {
      if (l_run >= q.theta_upper()) {
        std::vector<int> rest;
        double l_low = l_run;
        for (int o : order) {
          if (std::find(I.begin(), I.end(), o) != I.end()) continue;
          rest.push_back(o);
          l_low += q.a(o) * (q.l0(o) - q.u0(o));
          if (l_run + q.a(o) * (q.l0(o) - q.u0(o)) >= q.theta_upper())
            continue;
          auto cut = detail::make_upper_cut(q, I, o, l_run);
          cut.violation = cut.violation_at(yhat, what);
          if (cut.violation > tol &&
              (!best || cut.violation > best->violation))
            best = cut;
        }
        // Aggregated candidate: all remaining coordinates share the chord.
        if (rest.size() > 1 && l_low < q.theta_upper()) {
          auto cut = detail::make_upper_cut(q, I, rest, l_run);
          cut.violation = cut.violation_at(yhat, what);
          if (cut.violation > tol &&
              (!best || cut.violation > best->violation))
            best = cut;
        }
      }
      if (k == order.size()) break;
      I.push_back(order[k]);
      l_run += q.a(order[k]) * (q.l0(order[k]) - q.u0(order[k]));
    }
  }

  if (q.has_lower_family()) {
    std::vector<int> order = eff;
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      return (yhat(i) - q.u0(i)) / (q.l0(i) - q.u0(i)) <
             (yhat(j) - q.u0(j)) / (q.l0(j) - q.u0(j));
    });
    std::vector<int> I;
    std::vector<bool> none(static_cast<size_t>(q.dim()), false);
    double u_run = detail::uI(q, none);
    for (size_t k = 0; k <= order.size(); ++k) {
      if (u_run <= q.theta_lower()) {
        std::vector<int> rest;
        double u_high = u_run;
        for (int o : order) {
          if (std::find(I.begin(), I.end(), o) != I.end()) continue;
          rest.push_back(o);
          u_high += q.a(o) * (q.u0(o) - q.l0(o));
          if (u_run + q.a(o) * (q.u0(o) - q.l0(o)) <= q.theta_lower())
            continue;
          auto cut = detail::make_lower_cut(q, I, o, u_run);
          cut.violation = cut.violation_at(yhat, what);
          if (cut.violation > tol &&
              (!best || cut.violation > best->violation))
            best = cut;
        }
        if (rest.size() > 1 && u_high > q.theta_lower()) {
          auto cut = detail::make_lower_cut(q, I, rest, u_run);
          cut.violation = cut.violation_at(yhat, what);
          if (cut.violation > tol &&
              (!best || cut.violation > best->violation))
            best = cut;
        }
      }
      if (k == order.size()) break;
      I.push_back(order[k]);
      u_run += q.a(order[k]) * (q.u0(order[k]) - q.l0(order[k]));
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Root cut loop
// ---------------------------------------------------------------------------

/// A hull query wired to concrete model variables.
struct BoundQuery {
  HullQuery query;
  std::vector<milp::VarId> y_vars;
  milp::VarId w_var;
  int step = 0;       // reporting only
  int component = 0;  // reporting only
};

enum class CutMode { PerComponent, GlobalOne, Off };

struct CutLogEntry {
  int round = 0;
  int step = 0;
  int component = 0;
  bool upper = true;
  double violation = 0.0;
  int card_I = 0;
};

struct CutLoopOptions {
  int max_rounds = 5;
  double tol = 1e-9;
  CutMode mode = CutMode::PerComponent;
  double lp_time_limit_s = 600.0;
};

struct CutLoopResult {
  int cuts_added = 0;
  std::vector<CutLogEntry> log;
  /// The added cuts, paired with the index into the query list.
  std::vector<std::pair<size_t, CutInequality>> cuts;
  double last_relaxation_objective = std::numeric_limits<double>::quiet_NaN();
};

inline void add_cut_to_model(milp::MilpModel& model, const BoundQuery& bq,
                             const CutInequality& cut) {
  milp::LinExpr e;
  e.add(bq.w_var, 1.0);
  for (int i = 0; i < cut.y_coef.size(); ++i)
    if (cut.y_coef(i) != 0.0)
      e.add(bq.y_vars[static_cast<size_t>(i)], -cut.y_coef(i));
  model.add_constr(e, cut.upper ? milp::Sense::LE : milp::Sense::GE, cut.c0);
}

/// Separate-and-add at the root relaxation. Returns the number of cuts added.
inline CutLoopResult root_cut_loop(milp::MilpModel& model,
                                   const std::vector<BoundQuery>& queries,
                                   const CutLoopOptions& opts = {}) {
  CutLoopResult result;
  if (opts.mode == CutMode::Off) return result;
  for (int round = 1; round <= opts.max_rounds; ++round) {
    milp::SolveOptions lp;
    lp.relaxed = true;
    lp.time_limit_s = opts.lp_time_limit_s;
    auto rel = milp::solve(model, lp);
    if (rel.status == milp::SolveStatus::Infeasible)
      throw Error("root_cut_loop: relaxation infeasible (encoding bug)");
    if (rel.status != milp::SolveStatus::OptimalWithinGap) break;
    result.last_relaxation_objective = rel.objective;

    std::vector<std::pair<size_t, CutInequality>> found;
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      const auto& bq = queries[qi];
      if (classify(bq.query) != HullCase::General) continue;
      Vector yhat(bq.query.dim());
      for (int i = 0; i < bq.query.dim(); ++i)
        yhat(i) = rel.assignment[static_cast<size_t>(
            bq.y_vars[static_cast<size_t>(i)].index)];
      const double what =
          rel.assignment[static_cast<size_t>(bq.w_var.index)];
      if (auto cut = separate(bq.query, yhat, what, opts.tol))
        found.emplace_back(qi, std::move(*cut));
    }
    if (found.empty()) break;
    if (opts.mode == CutMode::GlobalOne) {
      auto it = std::max_element(found.begin(), found.end(),
                                 [](const auto& a, const auto& b) {
                                   return a.second.violation <
                                          b.second.violation;
                                 });
      found = {*it};
    }
    for (const auto& [qi, cut] : found) {
      add_cut_to_model(model, queries[qi], cut);
      ++result.cuts_added;
      result.log.push_back({round, queries[qi].step, queries[qi].component,
                            cut.upper, cut.violation,
                            static_cast<int>(cut.I.size())});
      result.cuts.emplace_back(qi, cut);
    }
  }
  return result;
}

inline void write_cut_log(std::ostream& os,
                          const std::vector<CutLogEntry>& log) {
  os << "round,step,component,family,violation,card_I\n";
  for (const auto& e : log)
    os << e.round << ',' << e.step << ',' << e.component << ','
       << (e.upper ? "upper" : "lower") << ',' << e.violation << ','
       << e.card_I << '\n';
}

}  // namespace fpv::cutgen
