#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fpv/bounds.hpp"
#include "fpv/cutgen.hpp"
#include "fpv/milp/model.hpp"
#include "fpv/model_ir.hpp"

namespace fpv::encoder {

// ---------------------------------------------------------------------------
// MILP encoding of the K-iteration verification problem: state variables per
// iteration, big-M blocks for piecewise steps, the l_inf objective split, and
// the fixed-point radius problem.
// ---------------------------------------------------------------------------

/// Model variables created for one algorithm step.
struct StepVars {
  int k = 0;     // iteration producing s^k
  int step = 0;  // global step index across iterations
  std::vector<milp::VarId> out;
  /// One entry per output row; invalid id when the binary was pruned.
  std::vector<milp::VarId> omega, zeta;
};

/// Every model variable, addressable by role. Slots a step does not write are
/// carried forward by reusing the previous iteration's variable ids.
struct VarMap {
  std::vector<std::vector<milp::VarId>> state;  // state[k][flat component]
  std::vector<milp::VarId> x;
  std::vector<milp::VarId> t, t_pos, t_neg, bin_w, bin_gamma;
  milp::VarId delta;
  std::vector<StepVars> steps;
  /// Hull queries for the general-case piecewise rows, wired to model vars.
  std::vector<cutgen::BoundQuery> queries;
};

/// Exact range of a'y over the box [ylo, yhi] via the sign split.
inline std::pair<double, double> bigM_constants(const Vector& a,
                                                const Vector& ylo,
                                                const Vector& yhi) {
  if (a.size() != ylo.size() || a.size() != yhi.size())
    throw Error("bigM_constants: dimension mismatch");
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    if (ylo(i) > yhi(i)) throw Error("bigM_constants: crossing box bounds");
    if (a(i) == 0.0) continue;
    const double m = a(i) >= 0 ? ylo(i) : yhi(i);
    const double M = a(i) >= 0 ? yhi(i) : ylo(i);
    lo += a(i) * m;
    hi += a(i) * M;
  }
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw Error("bigM_constants: unbounded row");
  return {lo, hi};
}

namespace detail {

inline void require_finite(double lo, double hi, const std::string& what) {
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw Error(what + ": infinite bound; encoding needs finite boxes");
  if (lo > hi) throw Error(what + ": crossing bounds");
}

inline std::string idx(const std::string& base, int i) {
  return base + "[" + std::to_string(i) + "]";
}

/// a'y as a LinExpr over the listed variables (constant not included).
template <typename Row>
inline milp::LinExpr row_expr(const Row& a, const std::vector<milp::VarId>& y) {
  milp::LinExpr e;
  for (int i = 0; i < static_cast<int>(a.size()); ++i)
    if (a(i) != 0.0) e.add(y[static_cast<size_t>(i)], a(i));
  return e;
}

struct AbsSplit {
  milp::VarId t, pos, neg, w;  // w invalid when no binary is needed
  double coef_max = 0.0;       // max(tbar, -tlow, 0)
};

/// t = a - b with |t| = pos + neg made exact: pos <= tbar w, neg <= -tlow
/// (1 - w). Components whose difference has one sign, or zero width, need no
/// binary: the pos/neg bounds already force the inactive side to zero.
/// An optional externally certified range for t (e.g. from bound tightening
/// on the difference itself) is intersected in; it is far tighter than the
/// interval difference of the endpoints, which loses their correlation.
inline AbsSplit abs_split(milp::MilpModel& m, milp::VarId a, milp::VarId b,
                          int i, const double* rlo = nullptr,
                          const double* rhi = nullptr) {
  AbsSplit s;
  double tlow, tbar;
  if (a == b) {
    tlow = tbar = 0.0;
  } else {
    tlow = m.var(a).lower - m.var(b).upper;
    tbar = m.var(a).upper - m.var(b).lower;
    if (rlo && *rlo > tlow) tlow = *rlo;
    if (rhi && *rhi < tbar) tbar = *rhi;
    if (tlow > tbar) {
      if (tlow > tbar + 1e-9)
        throw Error("abs_split: crossing residual range (unsound input)");
      tlow = tbar = 0.5 * (tlow + tbar);
    }
  }
  require_finite(tlow, tbar, "abs_split component " + std::to_string(i));
  s.t = m.add_var(tlow, tbar, milp::VarKind::Continuous, idx("t", i));
  const double pos_hi = std::max(tbar, 0.0);
  const double neg_hi = std::max(-tlow, 0.0);
  s.pos = m.add_var(0.0, pos_hi, milp::VarKind::Continuous, idx("t_pos", i));
  s.neg = m.add_var(0.0, neg_hi, milp::VarKind::Continuous, idx("t_neg", i));
  s.coef_max = std::max(pos_hi, neg_hi);
  {
    milp::LinExpr e(s.t);
    e.add(a, -1.0);
    e.add(b, 1.0);  // cancels against a when the slot was carried forward
    m.add_constr(e, milp::Sense::EQ, 0.0);
  }
  {
    milp::LinExpr e(s.t);
    e.add(s.pos, -1.0);
    e.add(s.neg, 1.0);
    m.add_constr(e, milp::Sense::EQ, 0.0);
  }
  if (pos_hi > 0.0 && neg_hi > 0.0 && tbar > tlow) {
    s.w = m.add_var(0.0, 1.0, milp::VarKind::Binary, idx("bin_w", i));
    milp::LinExpr up(s.pos);
    up.add(s.w, -tbar);
    m.add_constr(up, milp::Sense::LE, 0.0);
    milp::LinExpr dn(s.neg);
    dn.add(s.w, -tlow);
    m.add_constr(dn, milp::Sense::LE, -tlow);
  }
  return s;
}

}  // namespace detail

/// l_inf objective over paired variables: delta = max_i |next_i - prev_i|,
/// made exact with the pos/neg split, per-component binaries w and the
/// selector binaries gamma. Sets the model objective to maximize delta.
inline milp::VarId encode_objective(milp::MilpModel& m, VarMap& vm,
                                    const std::vector<milp::VarId>& prev,
                                    const std::vector<milp::VarId>& next,
                                    const Vector* res_lo = nullptr,
                                    const Vector* res_hi = nullptr) {
  if (prev.size() != next.size() || prev.empty())
    throw Error("encode_objective: bad residual variable lists");
  const int d = static_cast<int>(prev.size());
  if ((res_lo && res_lo->size() != d) || (res_hi && res_hi->size() != d))
    throw Error("encode_objective: residual range dimension mismatch");
  std::vector<detail::AbsSplit> splits;
  splits.reserve(static_cast<size_t>(d));
  double delta_hi = 0.0;
  for (int i = 0; i < d; ++i) {
    const double* rl = res_lo ? &(*res_lo)(i) : nullptr;
    const double* rh = res_hi ? &(*res_hi)(i) : nullptr;
    splits.push_back(detail::abs_split(m, next[static_cast<size_t>(i)],
                                       prev[static_cast<size_t>(i)], i, rl,
                                       rh));
    delta_hi = std::max(delta_hi, splits.back().coef_max);
  }
  vm.delta = m.add_var(0.0, delta_hi, milp::VarKind::Continuous, "delta");
  milp::LinExpr gamma_sum;
  for (int i = 0; i < d; ++i) {
    const auto& s = splits[static_cast<size_t>(i)];
    vm.t.push_back(s.t);
    vm.t_pos.push_back(s.pos);
    vm.t_neg.push_back(s.neg);
    vm.bin_w.push_back(s.w);
    const milp::VarId g =
        m.add_var(0.0, 1.0, milp::VarKind::Binary, detail::idx("bin_gamma", i));
    vm.bin_gamma.push_back(g);
    gamma_sum += milp::LinExpr(g);
    milp::LinExpr lo(vm.delta);
    lo.add(s.pos, -1.0);
    lo.add(s.neg, -1.0);
    m.add_constr(lo, milp::Sense::GE, 0.0);
    // The slack coefficient must bound delta itself (its global maximum),
    // not just this component's |t| range, or valid points become infeasible.
    milp::LinExpr hi(vm.delta);
    hi.add(s.pos, -1.0);
    hi.add(s.neg, -1.0);
    hi.add(g, delta_hi);
    m.add_constr(hi, milp::Sense::LE, delta_hi);
  }
  m.add_constr(gamma_sum, milp::Sense::EQ, 1.0);
  m.set_objective(milp::LinExpr(vm.delta), milp::ObjSense::Maximize);
  return vm.delta;
}

/// Affine step as equalities; the implicit form keeps M w = B y + c in the
/// model rather than pre-inverting.
inline void encode_affine(milp::MilpModel& m, const Step& st,
                          const std::vector<milp::VarId>& y,
                          const std::vector<milp::VarId>& w) {
  if (static_cast<int>(y.size()) != st.B.cols() ||
      static_cast<int>(w.size()) != st.output_dim)
    throw Error("encode_affine: dimension mismatch");
  const Vector c = st.offset_or_zero();
  for (int r = 0; r < st.output_dim; ++r) {
    milp::LinExpr e;
    if (st.variant == Step::Variant::AffineImplicit) {
      for (int j = 0; j < st.output_dim; ++j)
        if (st.M(r, j) != 0.0) e.add(w[static_cast<size_t>(j)], st.M(r, j));
    } else {
      e.add(w[static_cast<size_t>(r)], 1.0);
    }
    e -= detail::row_expr(st.B.row(r), y);
    m.add_constr(e, milp::Sense::EQ, c(r));
  }
}

/// Big-M encoding of one piecewise step. Degenerate rows (whole argument
/// range on one piece) become plain equalities with no binaries; one-sided
/// rows drop the unreachable-piece binary. arg gives sound per-row bounds on
/// B y + c (at least as tight as the box image); when strictly tighter than
/// the box image the range is also added as explicit row constraints.
inline void encode_pwa(milp::MilpModel& m, VarMap& vm, StepVars& sv,
                       const Step& st, const std::vector<milp::VarId>& y,
                       const std::vector<milp::VarId>& w, const ArgBounds& arg,
                       bool add_base_cuts = true) {
  if (st.variant != Step::Variant::PiecewiseAffine)
    throw Error("encode_pwa: not a piecewise step");
  if (static_cast<int>(y.size()) != st.B.cols() ||
      static_cast<int>(w.size()) != st.output_dim)
    throw Error("encode_pwa: dimension mismatch");
  const Vector c = st.offset_or_zero();
  Vector ylo(y.size()), yhi(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    ylo(static_cast<Eigen::Index>(i)) = m.var(y[i]).lower;
    yhi(static_cast<Eigen::Index>(i)) = m.var(y[i]).upper;
  }
  sv.omega.assign(static_cast<size_t>(st.output_dim), milp::VarId{});
  sv.zeta.assign(static_cast<size_t>(st.output_dim), milp::VarId{});

  for (int r = 0; r < st.output_dim; ++r) {
    const Vector a = st.B.row(r).transpose();
    const bool satlin = st.kind == PwaKind::SatLin;
    auto q = cutgen::HullQuery::make(st.kind, a, ylo, yhi, c(r), st.lambda,
                                     satlin ? st.sat_lo_at(r) : 0.0,
                                     satlin ? st.sat_hi_at(r) : 0.0);
    double Mlo = q.lJ, Mhi = q.uJ;
    if (arg.lo.size() > r) Mlo = std::max(Mlo, arg.lo(r));
    if (arg.hi.size() > r) Mhi = std::min(Mhi, arg.hi(r));
    // Degenerate rows: the stored arg range and the fresh box image are the
    // same quantity summed in different orders, so they may cross by
    // roundoff. Anything larger is a real inconsistency.
    if (Mlo > Mhi && Mlo <= Mhi + 1e-9) Mlo = Mhi = 0.5 * (Mlo + Mhi);
    detail::require_finite(Mlo, Mhi, "encode_pwa row " + std::to_string(r));
    const milp::LinExpr z = detail::row_expr(a, y);  // a'y; constant is c(r)
    if (Mlo > q.lJ + 1e-12) m.add_constr(z, milp::Sense::GE, Mlo - c(r));
    if (Mhi < q.uJ - 1e-12) m.add_constr(z, milp::Sense::LE, Mhi - c(r));
    q.lJ = Mlo;
    q.uJ = Mhi;

    const milp::VarId wr = w[static_cast<size_t>(r)];
    auto eq = [&](double slope, double rhs) {
      // w = slope * (a'y + c) + rhs
      milp::LinExpr e(wr);
      e -= slope * z;
      m.add_constr(e, milp::Sense::EQ, slope * c(r) + rhs);
    };
    const auto hcase = cutgen::classify(q);
    switch (hcase) {
      case cutgen::HullCase::FixedUpperPiece:
        if (st.kind == PwaKind::SoftThreshold)
          eq(1.0, -st.lambda);
        else
          eq(0.0, st.sat_hi_at(r));
        continue;
      case cutgen::HullCase::FixedLowerPiece:
        if (st.kind == PwaKind::SoftThreshold)
          eq(1.0, st.lambda);
        else
          eq(0.0, st.sat_lo_at(r));
        continue;
      case cutgen::HullCase::FixedZero:
        eq(0.0, 0.0);
        continue;
      case cutgen::HullCase::FixedLinearPiece:
        eq(1.0, 0.0);
        continue;
      case cutgen::HullCase::General:
        break;
    }

    // General case: binaries for the reachable outer pieces only.
    auto bin = [&](const char* base) {
      return m.add_var(0.0, 1.0, milp::VarKind::Binary,
                       std::string(base) + "[" + std::to_string(sv.step) +
                           "][" + std::to_string(r) + "]");
    };
    milp::VarId omega, zeta;
    switch (st.kind) {
      case PwaKind::SoftThreshold: {
        const double lam = st.lambda;
        const bool has_up = Mhi > lam, has_lo = Mlo < -lam;
        // w >= a'y + c - lambda, w <= a'y + c + lambda (globally valid).
        {
          milp::LinExpr e(wr);
          e -= z;
          m.add_constr(e, milp::Sense::GE, c(r) - lam);
          milp::LinExpr f(wr);
          f -= z;
          m.add_constr(f, milp::Sense::LE, c(r) + lam);
        }
        if (has_up) {
          omega = bin("bin_omega");
          const double slack = lam - std::max(Mlo, -lam);
          milp::LinExpr e(wr);  // w <= z - lam + slack (1 - omega)
          e -= z;
          e.add(omega, slack);
          m.add_constr(e, milp::Sense::LE, c(r) - lam + slack);
          milp::LinExpr f(wr);  // w <= (Mhi - lam) omega
          f.add(omega, -(Mhi - lam));
          m.add_constr(f, milp::Sense::LE, 0.0);
        } else {
          m.add_constr(milp::LinExpr(wr), milp::Sense::LE, 0.0);
        }
        if (has_lo) {
          zeta = bin("bin_zeta");
          const double slack = std::min(Mhi, lam) + lam;
          milp::LinExpr e(wr);  // w >= z + lam - slack (1 - zeta)
          e -= z;
          e.add(zeta, -slack);
          m.add_constr(e, milp::Sense::GE, c(r) + lam - slack);
          milp::LinExpr f(wr);  // w >= (Mlo + lam) zeta
          f.add(zeta, -(Mlo + lam));
          m.add_constr(f, milp::Sense::GE, 0.0);
        } else {
          m.add_constr(milp::LinExpr(wr), milp::Sense::GE, 0.0);
        }
        if (has_up && has_lo) {
          milp::LinExpr e(omega);
          e.add(zeta, 1.0);
          m.add_constr(e, milp::Sense::LE, 1.0);
        }
        break;
      }
      case PwaKind::Relu: {
        omega = bin("bin_omega");
        m.add_constr(milp::LinExpr(wr), milp::Sense::GE, 0.0);
        {
          milp::LinExpr e(wr);  // w >= a'y + c
          e -= z;
          m.add_constr(e, milp::Sense::GE, c(r));
        }
        {
          milp::LinExpr e(wr);  // w <= z - Mlo (1 - omega)
          e -= z;
          e.add(omega, -Mlo);
          m.add_constr(e, milp::Sense::LE, c(r) - Mlo);
        }
        {
          milp::LinExpr e(wr);  // w <= Mhi omega
          e.add(omega, -Mhi);
          m.add_constr(e, milp::Sense::LE, 0.0);
        }
        break;
      }
      case PwaKind::SatLin: {
        const double b = st.sat_lo_at(r), cc = st.sat_hi_at(r);
        const bool has_up = Mhi > cc, has_lo = Mlo < b;
        if (has_lo) {
          zeta = bin("bin_zeta");
          milp::LinExpr e(wr);  // w <= z + (b - Mlo) zeta
          e -= z;
          e.add(zeta, -(b - Mlo));
          m.add_constr(e, milp::Sense::LE, c(r));
          milp::LinExpr f(wr);  // w <= c - (c - b) zeta
          f.add(zeta, cc - b);
          m.add_constr(f, milp::Sense::LE, cc);
        } else {
          milp::LinExpr e(wr);  // w <= z
          e -= z;
          m.add_constr(e, milp::Sense::LE, c(r));
        }
        if (has_up) {
          omega = bin("bin_omega");
          milp::LinExpr e(wr);  // w >= z - (Mhi - c) omega
          e -= z;
          e.add(omega, Mhi - cc);
          m.add_constr(e, milp::Sense::GE, c(r));
          milp::LinExpr f(wr);  // w >= b + (c - b) omega
          f.add(omega, -(cc - b));
          m.add_constr(f, milp::Sense::GE, b);
        } else {
          milp::LinExpr e(wr);  // w >= z
          e -= z;
          m.add_constr(e, milp::Sense::GE, c(r));
        }
        if (has_up && has_lo) {
          milp::LinExpr e(omega);
          e.add(zeta, 1.0);
          m.add_constr(e, milp::Sense::LE, 1.0);
        }
        break;
      }
    }
    sv.omega[static_cast<size_t>(r)] = omega;
    sv.zeta[static_cast<size_t>(r)] = zeta;

    cutgen::BoundQuery bq;
    bq.query = q;
    bq.y_vars = y;
    bq.w_var = wr;
    bq.step = sv.step;
    bq.component = r;
    if (add_base_cuts)
      for (const auto& cut : cutgen::base_inequalities(q))
        cutgen::add_cut_to_model(m, bq, cut);
    vm.queries.push_back(std::move(bq));
  }
}

struct Encoded {
  milp::MilpModel model;
  VarMap vm;
};

namespace detail {

/// Variables feeding one step, gathered by input reference.
inline std::vector<milp::VarId> gather_vars(
    const std::vector<InputRef>& inputs, const StateLayout& layout,
    const std::vector<milp::VarId>& prev, const std::vector<milp::VarId>& s0,
    const std::vector<milp::VarId>& x,
    const std::map<std::string, std::vector<milp::VarId>>& outs) {
  std::vector<milp::VarId> y;
  for (const auto& in : inputs) {
    switch (in.kind) {
      case InputRef::Kind::Slot: {
        const int off = layout.slot_offset(in.name);
        const int d = layout.slot_dim(in.name);
        for (int i = 0; i < d; ++i)
          y.push_back(prev[static_cast<size_t>(off + i)]);
        break;
      }
      case InputRef::Kind::Init: {
        const int off = layout.slot_offset(in.name);
        const int d = layout.slot_dim(in.name);
        for (int i = 0; i < d; ++i)
          y.push_back(s0[static_cast<size_t>(off + i)]);
        break;
      }
      case InputRef::Kind::Param:
        y.insert(y.end(), x.begin(), x.end());
        break;
      case InputRef::Kind::StepOut: {
        auto it = outs.find(in.name);
        if (it == outs.end())
          throw Error("encoder: unknown step output " + in.name);
        y.insert(y.end(), it->second.begin(), it->second.end());
        break;
      }
    }
  }
  return y;
}

inline fpv::detail::IntervalVec var_intervals(
    const milp::MilpModel& m, const std::vector<milp::VarId>& vars) {
  fpv::detail::IntervalVec iv;
  iv.lo.resize(static_cast<Eigen::Index>(vars.size()));
  iv.hi.resize(static_cast<Eigen::Index>(vars.size()));
  for (size_t i = 0; i < vars.size(); ++i) {
    iv.lo(static_cast<Eigen::Index>(i)) = m.var(vars[i]).lower;
    iv.hi(static_cast<Eigen::Index>(i)) = m.var(vars[i]).upper;
  }
  return iv;
}

inline void intersect(double& lo, double& hi, double lo2, double hi2,
                      const std::string& what) {
  lo = std::max(lo, lo2);
  hi = std::min(hi, hi2);
  if (lo > hi + 1e-9) throw Error(what + ": crossing bounds after intersect");
  if (lo > hi) lo = hi = 0.5 * (lo + hi);
}

inline std::vector<milp::VarId> add_param_vars(milp::MilpModel& m,
                                               const ParamSet& params) {
  std::vector<milp::VarId> x;
  for (int i = 0; i < params.dim(); ++i) {
    require_finite(params.lower(i), params.upper(i), "parameter box");
    x.push_back(m.add_var(params.lower(i), params.upper(i),
                          milp::VarKind::Continuous, idx("x", i)));
  }
  for (const auto& [row, rhs] : params.extra_rows)
    m.add_constr(row_expr(row, x), milp::Sense::LE, rhs);
  return x;
}

inline std::vector<milp::VarId> add_state_vars(milp::MilpModel& m,
                                               const StateLayout& layout,
                                               const Vector& lo,
                                               const Vector& hi,
                                               const std::string& prefix) {
  std::vector<milp::VarId> v;
  for (const auto& slot : layout.slots) {
    const int off = layout.slot_offset(slot.name);
    for (int i = 0; i < slot.dim; ++i) {
      require_finite(lo(off + i), hi(off + i), prefix);
      v.push_back(m.add_var(lo(off + i), hi(off + i),
                            milp::VarKind::Continuous,
                            prefix + "[" + slot.name + "]" + "[" +
                                std::to_string(i) + "]"));
    }
  }
  return v;
}

inline std::vector<milp::VarId> residual_vars(
    const StateLayout& layout, const std::vector<milp::VarId>& state) {
  std::vector<milp::VarId> v;
  for (const auto& name : layout.residual_slots) {
    const int off = layout.slot_offset(name);
    const int d = layout.slot_dim(name);
    for (int i = 0; i < d; ++i) v.push_back(state[static_cast<size_t>(off + i)]);
  }
  return v;
}

}  // namespace detail

/// Full MILP for the K-iteration verification problem under the given sound
/// bound table. Maximizes the l_inf residual between iterations K-1 and K.
inline Encoded encode_vp(const ProblemFamily& family, int K,
                         const IterBounds& bounds, bool add_base_cuts = true,
                         const Vector* res_lo = nullptr,
                         const Vector* res_hi = nullptr) {
  if (K < 1) throw Error("encode_vp: K must be >= 1");
  if (static_cast<int>(bounds.states.size()) <= K)
    throw Error("encode_vp: bound table does not reach K");
  Encoded enc;
  auto& m = enc.model;
  auto& vm = enc.vm;
  const auto& alg = family.algorithm;
  const auto& layout = alg.layout;

  vm.x = detail::add_param_vars(m, family.params);
  vm.state.resize(static_cast<size_t>(K) + 1);
  vm.state[0] = detail::add_state_vars(m, layout, bounds.states[0].lower,
                                       bounds.states[0].upper, "s[0]");

  int gstep = 0;
  for (int k = 1; k <= K; ++k) {
    const Iteration& iter = alg.at(k - 1);
    const auto& prev = vm.state[static_cast<size_t>(k) - 1];
    auto& cur = vm.state[static_cast<size_t>(k)];
    cur = prev;  // unwritten slots carry the previous iteration's variables
    const StateBounds& sb = bounds.states[static_cast<size_t>(k)];
    std::map<std::string, std::vector<milp::VarId>> outs;
    for (size_t j = 0; j < iter.steps.size(); ++j) {
      const Step& st = iter.steps[j];
      auto y = detail::gather_vars(st.inputs, layout, prev, vm.state[0], vm.x,
                                   outs);
      if (static_cast<int>(y.size()) != st.B.cols())
        throw Error("encode_vp: input dim mismatch");
      // Output and argument ranges from the current variable bounds,
      // intersected with the precomputed table where it has entries.
      ArgBounds arg;
      auto wiv = fpv::detail::step_output_bounds(
          st, detail::var_intervals(m, y), &arg);
      if (bounds.args.size() > static_cast<size_t>(k) &&
          bounds.args[static_cast<size_t>(k)].size() > j) {
        const ArgBounds& tab = bounds.args[static_cast<size_t>(k)][j];
        for (int r = 0; r < tab.lo.size(); ++r)
          detail::intersect(arg.lo(r), arg.hi(r), tab.lo(r), tab.hi(r),
                            "encode_vp arg row");
      }
      const auto slot = alg.slot_for_output(st.output);
      std::vector<milp::VarId> w;
      const std::string base =
          slot ? "s[" + std::to_string(k) + "][" + *slot + "]"
               : "u[" + std::to_string(gstep) + "]";
      for (int r = 0; r < st.output_dim; ++r) {
        double lo = wiv.lo(r), hi = wiv.hi(r);
        if (slot) {
          const int off = layout.slot_offset(*slot);
          detail::intersect(lo, hi, sb.lower(off + r), sb.upper(off + r),
                            "encode_vp state bound");
        }
        detail::require_finite(lo, hi, "encode_vp output " + st.output);
        w.push_back(m.add_var(lo, hi, milp::VarKind::Continuous,
                              base + "[" + std::to_string(r) + "]"));
      }
      StepVars sv;
      sv.k = k;
      sv.step = gstep;
      sv.out = w;
      if (st.variant == Step::Variant::PiecewiseAffine)
        encode_pwa(m, vm, sv, st, y, w, arg, add_base_cuts);
      else
        encode_affine(m, st, y, w);
      outs[st.output] = w;
      if (slot) {
        const int off = layout.slot_offset(*slot);
        for (int r = 0; r < st.output_dim; ++r)
          cur[static_cast<size_t>(off + r)] = w[static_cast<size_t>(r)];
      }
      vm.steps.push_back(std::move(sv));
      ++gstep;
    }
  }

  encode_objective(m, vm,
                   detail::residual_vars(layout, vm.state[static_cast<size_t>(K) - 1]),
                   detail::residual_vars(layout, vm.state[static_cast<size_t>(K)]),
                   res_lo, res_hi);
  return enc;
}

/// MILP for the worst-case l1 initial distance to a fixed point: one pass of
/// the stationary iteration with output slots identified with input slots
/// (s* = T(s*, x)), objective sum of |s0 - s*| over the residual slots.
inline Encoded encode_radius(const ProblemFamily& family,
                             bool add_base_cuts = true) {
  if (!family.fixed_point_box)
    throw Error("encode_radius: family has no fixed-point box");
  Encoded enc;
  auto& m = enc.model;
  auto& vm = enc.vm;
  const auto& alg = family.algorithm;
  const auto& layout = alg.layout;
  const auto& [fp_lo, fp_hi] = *family.fixed_point_box;
  if (fp_lo.size() != layout.total_dim() || fp_hi.size() != layout.total_dim())
    throw Error("encode_radius: fixed-point box dimension mismatch");

  vm.x = detail::add_param_vars(m, family.params);
  vm.state.resize(2);
  vm.state[0] = detail::add_state_vars(m, layout, family.init.lower,
                                       family.init.upper, "s[0]");
  auto sstar = detail::add_state_vars(m, layout, fp_lo, fp_hi, "sstar");
  vm.state[1] = sstar;

  const Iteration& iter = alg.iters.back();
  std::map<std::string, std::vector<milp::VarId>> outs;
  int gstep = 0;
  for (const Step& st : iter.steps) {
    auto y = detail::gather_vars(st.inputs, layout, sstar, vm.state[0], vm.x,
                                 outs);
    if (static_cast<int>(y.size()) != st.B.cols())
      throw Error("encode_radius: input dim mismatch");
    ArgBounds arg;
    auto wiv = fpv::detail::step_output_bounds(
        st, detail::var_intervals(m, y), &arg);
    const auto slot = alg.slot_for_output(st.output);
    std::vector<milp::VarId> w;
    if (slot) {
      const int off = layout.slot_offset(*slot);
      for (int r = 0; r < st.output_dim; ++r) {
        const milp::VarId v = sstar[static_cast<size_t>(off + r)];
        double lo = m.var(v).lower, hi = m.var(v).upper;
        detail::intersect(lo, hi, wiv.lo(r), wiv.hi(r),
                          "encode_radius fixed-point bound");
        m.set_bounds(v, lo, hi);
        w.push_back(v);
      }
    } else {
      for (int r = 0; r < st.output_dim; ++r) {
        detail::require_finite(wiv.lo(r), wiv.hi(r), "encode_radius output");
        w.push_back(m.add_var(wiv.lo(r), wiv.hi(r), milp::VarKind::Continuous,
                              "u[" + std::to_string(gstep) + "][" +
                                  std::to_string(r) + "]"));
      }
    }
    StepVars sv;
    sv.k = 1;
    sv.step = gstep;
    sv.out = w;
    if (st.variant == Step::Variant::PiecewiseAffine)
      encode_pwa(m, vm, sv, st, y, w, arg, add_base_cuts);
    else
      encode_affine(m, st, y, w);
    outs[st.output] = w;
    vm.steps.push_back(std::move(sv));
    ++gstep;
  }

  const auto s0r = detail::residual_vars(layout, vm.state[0]);
  const auto str = detail::residual_vars(layout, sstar);
  milp::LinExpr obj;
  for (size_t i = 0; i < s0r.size(); ++i) {
    auto s = detail::abs_split(m, s0r[i], str[i], static_cast<int>(i));
    vm.t.push_back(s.t);
    vm.t_pos.push_back(s.pos);
    vm.t_neg.push_back(s.neg);
    vm.bin_w.push_back(s.w);
    obj += milp::LinExpr(s.pos) + milp::LinExpr(s.neg);
  }
  m.set_objective(obj, milp::ObjSense::Maximize);
  return enc;
}

}  // namespace fpv::encoder
