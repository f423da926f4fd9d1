#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fpv/model_ir.hpp"

namespace fpv {

// ---------------------------------------------------------------------------
// Per-iteration variable bounds: interval propagation, residual-decay bounds,
// elementwise combination, post-solve tightening.
// ---------------------------------------------------------------------------

enum class BoundSource { Init, Interval, Theory, Obbt, Postprocess };

/// Bounds on one flattened state vector, with per-component provenance.
struct StateBounds {
  Vector lower;
  Vector upper;
  std::vector<BoundSource> src_lo, src_hi;

  static StateBounds from(const Vector& lo, const Vector& hi,
                          BoundSource src) {
    StateBounds b;
    b.lower = lo;
    b.upper = hi;
    b.src_lo.assign(static_cast<size_t>(lo.size()), src);
    b.src_hi.assign(static_cast<size_t>(hi.size()), src);
    return b;
  }
  int dim() const { return static_cast<int>(lower.size()); }
  double width() const { return (upper - lower).maxCoeff(); }
};

/// Bounds on the affine argument rows of one piecewise step (the M-, M+ per
/// output row). Empty for affine steps.
struct ArgBounds {
  Vector lo, hi;
};

/// Bound table for states s^0..s^K. args[k][j] holds the argument-row range
/// of step j of the iteration producing s^k (k >= 1).
struct IterBounds {
  std::vector<StateBounds> states;
  std::vector<std::vector<ArgBounds>> args;

  int K() const { return static_cast<int>(states.size()) - 1; }
};

inline IterBounds seed_bounds(const ProblemFamily& family) {
  IterBounds b;
  b.states.push_back(
      StateBounds::from(family.init.lower, family.init.upper, BoundSource::Init));
  b.args.emplace_back();
  return b;
}

struct TheoryParams {
  enum class Mode { Contractive, Averaged, UserSequence };
  Mode mode = Mode::Contractive;
  double beta = 0.5;    // Contractive
  double D_c = 1.0;     // Averaged
  double q_exp = 1.0;   // Averaged
  std::vector<double> alpha;  // UserSequence
  double R = 0.0;

  static TheoryParams contractive(double beta, double R) {
    TheoryParams tp;
    tp.mode = Mode::Contractive;
    tp.beta = beta;
    tp.R = R;
    return tp;
  }
  static TheoryParams averaged(double D_c, double q_exp, double R) {
    TheoryParams tp;
    tp.mode = Mode::Averaged;
    tp.D_c = D_c;
    tp.q_exp = q_exp;
    tp.R = R;
    return tp;
  }
  static TheoryParams user(std::vector<double> alpha) {
    TheoryParams tp;
    tp.mode = Mode::UserSequence;
    tp.alpha = std::move(alpha);
    return tp;
  }
};

inline std::vector<std::string> validate(const TheoryParams& tp) {
  std::vector<std::string> diags;
  switch (tp.mode) {
    case TheoryParams::Mode::Contractive:
      if (!(tp.beta > 0.0 && tp.beta < 1.0))
        diags.push_back("contractive beta must lie in (0, 1)");
      break;
    case TheoryParams::Mode::Averaged:
      if (!(tp.D_c > 0.0)) diags.push_back("averaged D_c must be > 0");
      if (!(tp.q_exp > 0.0)) diags.push_back("averaged q_exp must be > 0");
      break;
    case TheoryParams::Mode::UserSequence:
      for (size_t i = 0; i < tp.alpha.size(); ++i) {
        if (!(tp.alpha[i] > 0.0)) {
          diags.push_back("user alpha must be positive");
          break;
        }
        if (i && tp.alpha[i] > tp.alpha[i - 1]) {
          diags.push_back("user alpha must be nonincreasing");
          break;
        }
      }
      break;
  }
  if (tp.mode != TheoryParams::Mode::UserSequence && tp.R < 0.0)
    diags.push_back("R must be >= 0");
  return diags;
}

/// Residual-magnitude sequence alpha_1..alpha_K.
inline std::vector<double> alpha_sequence(const TheoryParams& tp, int K) {
  std::vector<double> a(static_cast<size_t>(K));
  for (int k = 1; k <= K; ++k) {
    double v = 0.0;
    switch (tp.mode) {
      case TheoryParams::Mode::Contractive:
        v = 2.0 * std::pow(tp.beta, k - 1) * tp.R;
        break;
      case TheoryParams::Mode::Averaged:
        v = tp.D_c / std::pow(double(k), tp.q_exp) * tp.R;
        break;
      case TheoryParams::Mode::UserSequence:
        if (k > static_cast<int>(tp.alpha.size()))
          throw Error("alpha_sequence: user sequence shorter than K");
        v = tp.alpha[static_cast<size_t>(k) - 1];
        break;
    }
    a[static_cast<size_t>(k) - 1] = v;
  }
  return a;
}

namespace detail {

struct IntervalVec {
  Vector lo, hi;
};

inline IntervalVec gather_input_bounds(
    const std::vector<InputRef>& inputs, const StateLayout& layout,
    const StateBounds& prev, const StateBounds& s0, const ParamSet& params,
    const std::map<std::string, IntervalVec>& outs) {
  std::vector<const IntervalVec*> parts;
  std::vector<IntervalVec> owned;
  owned.reserve(inputs.size());
  int dim = 0;
  for (const auto& in : inputs) {
    IntervalVec iv;
    switch (in.kind) {
      case InputRef::Kind::Slot: {
        const int off = layout.slot_offset(in.name);
        const int d = layout.slot_dim(in.name);
        iv.lo = prev.lower.segment(off, d);
        iv.hi = prev.upper.segment(off, d);
        break;
      }
      case InputRef::Kind::Init: {
        const int off = layout.slot_offset(in.name);
        const int d = layout.slot_dim(in.name);
        iv.lo = s0.lower.segment(off, d);
        iv.hi = s0.upper.segment(off, d);
        break;
      }
      case InputRef::Kind::Param:
        iv.lo = params.lower;
        iv.hi = params.upper;
        break;
      case InputRef::Kind::StepOut: {
        auto it = outs.find(in.name);
        if (it == outs.end())
          throw Error("interval propagation: unknown step output " + in.name);
        iv = it->second;
        break;
      }
    }
    dim += static_cast<int>(iv.lo.size());
    owned.push_back(std::move(iv));
  }
  IntervalVec y;
  y.lo.resize(dim);
  y.hi.resize(dim);
  int off = 0;
  for (const auto& iv : owned) {
    y.lo.segment(off, iv.lo.size()) = iv.lo;
    y.hi.segment(off, iv.hi.size()) = iv.hi;
    off += static_cast<int>(iv.lo.size());
  }
  return y;
}

/// Range of B y + offset over the input box: the per-row [M-, M+].
inline IntervalVec affine_arg_range(const Step& st, const IntervalVec& y) {
  auto [lo, hi] = interval_affine(st.B, y.lo, y.hi);
  IntervalVec z;
  z.lo = lo + st.offset_or_zero();
  z.hi = hi + st.offset_or_zero();
  return z;
}

inline IntervalVec step_output_bounds(const Step& st, const IntervalVec& y,
                                      ArgBounds* arg_out) {
  switch (st.variant) {
    case Step::Variant::AffineExplicit:
      return affine_arg_range(st, y);
    case Step::Variant::AffineImplicit: {
      Matrix Btilde = solve_for_explicit(st.M, st.B);
      auto [lo, hi] = interval_affine(Btilde, y.lo, y.hi);
      Vector c = Eigen::PartialPivLU<Matrix>(st.M).solve(st.offset_or_zero());
      return IntervalVec{lo + c, hi + c};
    }
    case Step::Variant::PiecewiseAffine: {
      IntervalVec z = affine_arg_range(st, y);
      if (arg_out) {
        arg_out->lo = z.lo;
        arg_out->hi = z.hi;
      }
      // Each scalar kind is monotonically nondecreasing, so the image of
      // [M-, M+] is [kind(M-), kind(M+)].
      IntervalVec w;
      w.lo.resize(st.output_dim);
      w.hi.resize(st.output_dim);
      for (int i = 0; i < st.output_dim; ++i) {
        w.lo(i) = st.apply_scalar(z.lo(i), i);
        w.hi(i) = st.apply_scalar(z.hi(i), i);
      }
      return w;
    }
  }
  throw Error("unreachable");
}

}  // namespace detail

/// Chains per-step interval bounds forward to iteration K. The seed must
/// contain bounds for s^0; already-propagated iterations are kept.
inline IterBounds propagate_interval(const ProblemFamily& family, int K,
                                     const IterBounds& seed) {
  if (seed.states.empty())
    throw Error("propagate_interval: seed has no s^0 bounds");
  const auto& alg = family.algorithm;
  const auto& layout = alg.layout;
  IterBounds out = seed;
  out.args.resize(out.states.size());
  for (int k = static_cast<int>(out.states.size()); k <= K; ++k) {
    const StateBounds& prev = out.states[static_cast<size_t>(k) - 1];
    const Iteration& iter = alg.at(k - 1);
    std::map<std::string, detail::IntervalVec> outs;
    StateBounds next = prev;
    std::vector<ArgBounds> arg_rows(iter.steps.size());
    for (size_t j = 0; j < iter.steps.size(); ++j) {
      const Step& st = iter.steps[j];
      auto y = detail::gather_input_bounds(st.inputs, layout, prev,
                                           out.states[0], family.params, outs);
      if (y.lo.size() != st.B.cols())
        throw Error("propagate_interval: input dim mismatch");
      auto w = detail::step_output_bounds(st, y, &arg_rows[j]);
      outs[st.output] = w;
      if (auto slot = alg.slot_for_output(st.output)) {
        const int off = layout.slot_offset(*slot);
        const int d = layout.slot_dim(*slot);
        next.lower.segment(off, d) = w.lo;
        next.upper.segment(off, d) = w.hi;
        for (int i = 0; i < d; ++i) {
          next.src_lo[static_cast<size_t>(off + i)] = BoundSource::Interval;
          next.src_hi[static_cast<size_t>(off + i)] = BoundSource::Interval;
        }
      }
    }
    out.states.push_back(std::move(next));
    out.args.push_back(std::move(arg_rows));
  }
  return out;
}

/// Residual-decay bounds at k from the bounds at k-1: residual slots widen by
/// alpha_k on each side; other slots get no information (infinite bounds).
inline StateBounds theory_bounds(const StateBounds& prev, double alpha_k,
                                 const StateLayout& layout) {
  const double inf = std::numeric_limits<double>::infinity();
  StateBounds out = StateBounds::from(
      Vector::Constant(prev.dim(), -inf), Vector::Constant(prev.dim(), inf),
      BoundSource::Theory);
  for (const auto& name : layout.residual_slots) {
    const int off = layout.slot_offset(name);
    const int d = layout.slot_dim(name);
    out.lower.segment(off, d) = prev.lower.segment(off, d).array() - alpha_k;
    out.upper.segment(off, d) = prev.upper.segment(off, d).array() + alpha_k;
  }
  return out;
}

struct CombineResult {
  StateBounds bounds;
  /// Fraction of components where the second source is strictly tighter,
  /// counting 0.5 per side.
  double frac_b_tighter = 0.0;
};

/// Elementwise tightest of two sound bound sets. Crossing bounds abort: they
/// signal an unsound input rather than something to clamp away.
inline CombineResult combine(const StateBounds& a, const StateBounds& b) {
  if (a.dim() != b.dim()) throw Error("combine: dimension mismatch");
  CombineResult res;
  res.bounds = a;
  double tighter = 0.0;
  for (int i = 0; i < a.dim(); ++i) {
    if (b.lower(i) > a.lower(i)) {
      res.bounds.lower(i) = b.lower(i);
      res.bounds.src_lo[static_cast<size_t>(i)] =
          b.src_lo[static_cast<size_t>(i)];
      tighter += 0.5;
    }
    if (b.upper(i) < a.upper(i)) {
      res.bounds.upper(i) = b.upper(i);
      res.bounds.src_hi[static_cast<size_t>(i)] =
          b.src_hi[static_cast<size_t>(i)];
      tighter += 0.5;
    }
    if (res.bounds.lower(i) > res.bounds.upper(i) + 1e-9)
      throw Error("combine: crossing bounds at component " +
                  std::to_string(i) + " (unsound input)");
    if (res.bounds.lower(i) > res.bounds.upper(i)) {
      res.bounds.lower(i) = res.bounds.upper(i) =
          0.5 * (res.bounds.lower(i) + res.bounds.upper(i));
    }
  }
  res.frac_b_tighter = a.dim() ? tighter / a.dim() : 0.0;
  return res;
}

/// Residual-slot bounds at k tightened with the certified residual norms:
/// s^k lies within cumulative-delta distance of s^0.
inline IterBounds postprocess_delta(const IterBounds& bounds,
                                    const std::vector<double>& deltas,
                                    const StateLayout& layout) {
  IterBounds out = bounds;
  if (out.states.empty()) return out;
  const StateBounds& s0 = out.states[0];
  double cum = 0.0;
  for (size_t k = 1; k < out.states.size() && k <= deltas.size(); ++k) {
    cum += deltas[k - 1];
    StateBounds& sk = out.states[k];
    for (const auto& name : layout.residual_slots) {
      const int off = layout.slot_offset(name);
      const int d = layout.slot_dim(name);
      for (int i = 0; i < d; ++i) {
        const double lo = s0.lower(off + i) - cum;
        const double hi = s0.upper(off + i) + cum;
        if (lo > sk.lower(off + i)) {
          sk.lower(off + i) = lo;
          sk.src_lo[static_cast<size_t>(off + i)] = BoundSource::Postprocess;
        }
        if (hi < sk.upper(off + i)) {
          sk.upper(off + i) = hi;
          sk.src_hi[static_cast<size_t>(off + i)] = BoundSource::Postprocess;
        }
        if (sk.lower(off + i) > sk.upper(off + i) + 1e-9)
          throw Error("postprocess_delta: crossing bounds (invalid deltas)");
      }
    }
  }
  return out;
}

}  // namespace fpv
