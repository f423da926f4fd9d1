#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fpv/linalg.hpp"

namespace fpv {

// ---------------------------------------------------------------------------
// Parametric problem family and algorithm IR.
// ---------------------------------------------------------------------------

/// Polyhedral parameter set: a box plus optional extra halfspaces a^T x <= b.
struct ParamSet {
  Vector lower;
  Vector upper;
  std::vector<std::pair<Vector, double>> extra_rows;

  int dim() const { return static_cast<int>(lower.size()); }
};

/// Initial-iterate set: a singleton or a box over the flattened state.
struct InitSet {
  enum class Kind { Singleton, Box };
  Kind kind = Kind::Singleton;
  Vector lower;
  Vector upper;

  static InitSet singleton(const Vector& s0) {
    return InitSet{Kind::Singleton, s0, s0};
  }
  static InitSet box(const Vector& lo, const Vector& hi) {
    return InitSet{Kind::Box, lo, hi};
  }
  int dim() const { return static_cast<int>(lower.size()); }
};

struct SlotDef {
  std::string name;
  int dim = 0;
};

/// Ordered state slots. The residual is measured on `residual_slots` only;
/// auxiliary sequences (momentum, FISTA w) live in their own slots.
struct StateLayout {
  std::vector<SlotDef> slots;
  std::vector<std::string> residual_slots;
  std::map<std::string, int> history;  // informational, >= 1

  int total_dim() const {
    int d = 0;
    for (const auto& s : slots) d += s.dim;
    return d;
  }
  bool has_slot(const std::string& name) const {
    for (const auto& s : slots)
      if (s.name == name) return true;
    return false;
  }
  int slot_dim(const std::string& name) const {
    for (const auto& s : slots)
      if (s.name == name) return s.dim;
    throw Error("unknown slot: " + name);
  }
  /// Offset of a slot inside the flattened state vector.
  int slot_offset(const std::string& name) const {
    int off = 0;
    for (const auto& s : slots) {
      if (s.name == name) return off;
      off += s.dim;
    }
    throw Error("unknown slot: " + name);
  }
  int residual_dim() const {
    int d = 0;
    for (const auto& n : residual_slots) d += slot_dim(n);
    return d;
  }
};

/// Where a step input comes from.
struct InputRef {
  enum class Kind {
    Slot,     // state slot value from the previous iteration
    StepOut,  // output of an earlier step in the same iteration
    Param,    // the instance parameter x
    Init,     // slot of the initial state s^0 (Halpern anchoring)
  };
  Kind kind = Kind::Slot;
  std::string name;  // slot or output name; unused for Param

  static InputRef slot(std::string n) { return {Kind::Slot, std::move(n)}; }
  static InputRef out(std::string n) { return {Kind::StepOut, std::move(n)}; }
  static InputRef param() { return {Kind::Param, {}}; }
  static InputRef init(std::string n) { return {Kind::Init, std::move(n)}; }
};

enum class PwaKind { SoftThreshold, Relu, SatLin };

inline double soft_threshold(double t, double lambda) {
  if (t > lambda) return t - lambda;
  if (t < -lambda) return t + lambda;
  return 0.0;
}
inline double relu(double t) { return t > 0.0 ? t : 0.0; }
inline double sat_lin(double t, double lo, double hi) {
  return std::min(std::max(t, lo), hi);
}

/// One intermediate step mapping. The input vector y is the concatenation of
/// `inputs` in order, and the output is:
///   AffineExplicit:   w = B y + offset
///   AffineImplicit:   M w = B y + offset
///   PiecewiseAffine:  w_i = kind((B y + offset)_i)   (rows of B are the a_i)
struct Step {
  enum class Variant { AffineExplicit, AffineImplicit, PiecewiseAffine };
  Variant variant = Variant::AffineExplicit;

  Matrix M;  // AffineImplicit only, square output_dim x output_dim
  Matrix B;
  Vector offset;  // empty means zero

  PwaKind kind = PwaKind::Relu;
  double lambda = 0.0;  // SoftThreshold
  Vector sat_lo, sat_hi;  // SatLin, per output row

  std::vector<InputRef> inputs;
  std::string output;
  int output_dim = 0;

  Vector offset_or_zero() const {
    return offset.size() ? offset : Vector::Zero(output_dim);
  }
  double sat_lo_at(int i) const {
    return sat_lo.size() == 1 ? sat_lo(0) : sat_lo(i);
  }
  double sat_hi_at(int i) const {
    return sat_hi.size() == 1 ? sat_hi(0) : sat_hi(i);
  }
  double apply_scalar(double t, int row) const {
    switch (kind) {
      case PwaKind::SoftThreshold: return soft_threshold(t, lambda);
      case PwaKind::Relu: return relu(t);
      case PwaKind::SatLin: return sat_lin(t, sat_lo_at(row), sat_hi_at(row));
    }
    throw Error("unreachable");
  }
};

struct Iteration {
  std::vector<Step> steps;
};

/// The algorithm as an iteration of steps. Iteration-dependent coefficients
/// (momentum beta_k, FISTA beta_k, PDHG k/(k+3)) are precomputed into
/// per-iteration step lists; stationary algorithms store a single iteration.
struct AlgorithmIR {
  StateLayout layout;
  std::vector<Iteration> iters;
  bool stationary = true;
  /// step output name -> slot receiving it next iteration. Outputs whose name
  /// equals a slot name are rebound implicitly.
  std::map<std::string, std::string> rebind;

  const Iteration& at(int k) const {
    if (stationary) return iters.at(0);
    if (k < 0 || k >= static_cast<int>(iters.size()))
      throw Error("iteration index " + std::to_string(k) +
                  " beyond precomputed schedule (kmax=" +
                  std::to_string(iters.size()) + ")");
    return iters[static_cast<size_t>(k)];
  }
  int kmax() const {
    return stationary ? std::numeric_limits<int>::max()
                      : static_cast<int>(iters.size());
  }
  /// Slot fed by a step output, empty if the output is intermediate only.
  std::optional<std::string> slot_for_output(const std::string& out) const {
    auto it = rebind.find(out);
    if (it != rebind.end()) return it->second;
    if (layout.has_slot(out)) return out;
    return std::nullopt;
  }
};

struct ProblemFamily {
  std::string name;
  ParamSet params;
  InitSet init;
  AlgorithmIR algorithm;
  /// Optional sound box containing every fixed point s* = T(s*, x) over
  /// x in X; required by the radius problem.
  std::optional<std::pair<Vector, Vector>> fixed_point_box;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline int input_dim(const InputRef& ref, const StateLayout& layout, int p,
                     const std::map<std::string, int>& out_dims) {
  switch (ref.kind) {
    case InputRef::Kind::Slot: return layout.slot_dim(ref.name);
    case InputRef::Kind::Init: return layout.slot_dim(ref.name);
    case InputRef::Kind::Param: return p;
    case InputRef::Kind::StepOut: {
      auto it = out_dims.find(ref.name);
      if (it == out_dims.end())
        throw Error("step input references unknown output: " + ref.name);
      return it->second;
    }
  }
  throw Error("unreachable");
}

}  // namespace detail

inline std::vector<std::string> validate(const ProblemFamily& family) {
  std::vector<std::string> diags;
  const auto& layout = family.algorithm.layout;
  const int p = family.params.dim();

  for (int i = 0; i < p; ++i)
    if (family.params.lower(i) > family.params.upper(i)) {
      diags.push_back("parameter box: lower > upper at component " +
                      std::to_string(i));
      break;
    }
  if (family.init.lower.size() != family.init.upper.size())
    diags.push_back("init set: lower/upper dimension mismatch");
  if (family.init.kind == InitSet::Kind::Singleton &&
      family.init.lower.size() == family.init.upper.size() &&
      (family.init.lower - family.init.upper).cwiseAbs().maxCoeff() > 0)
    diags.push_back("init set: singleton requires lower == upper");
  for (int i = 0; i < family.init.dim() &&
                  family.init.lower.size() == family.init.upper.size();
       ++i)
    if (family.init.lower(i) > family.init.upper(i)) {
      diags.push_back("init set: lower > upper at component " +
                      std::to_string(i));
      break;
    }
  if (family.init.dim() != layout.total_dim())
    diags.push_back("init set dimension does not match state layout");

  for (const auto& s : layout.slots)
    if (s.dim <= 0) diags.push_back("slot " + s.name + " has dimension <= 0");
  if (layout.residual_slots.empty())
    diags.push_back("no residual slot designated");
  for (const auto& r : layout.residual_slots)
    if (!layout.has_slot(r))
      diags.push_back("residual slot " + r + " does not exist");
  for (const auto& [name, h] : layout.history)
    if (h < 1) diags.push_back("history for slot " + name + " must be >= 1");

  if (family.algorithm.iters.empty()) {
    diags.push_back("algorithm has no iterations");
    return diags;
  }

  const int niters =
      family.algorithm.stationary ? 1 : static_cast<int>(family.algorithm.iters.size());
  for (int k = 0; k < niters; ++k) {
    const auto& iter = family.algorithm.iters[static_cast<size_t>(k)];
    std::map<std::string, int> out_dims;
    std::map<std::string, int> slot_writes;
    for (size_t j = 0; j < iter.steps.size(); ++j) {
      const auto& st = iter.steps[j];
      const std::string where =
          "iteration " + std::to_string(k) + " step " + std::to_string(j);
      if (st.output_dim <= 0) diags.push_back(where + ": output_dim <= 0");
      int in_dim = 0;
      bool bad_input = false;
      for (const auto& in : st.inputs) {
        try {
          in_dim += detail::input_dim(in, layout, p, out_dims);
        } catch (const Error& e) {
          diags.push_back(where + ": " + e.what());
          bad_input = true;
        }
      }
      if (!bad_input && st.B.cols() != in_dim)
        diags.push_back(where + ": input dims sum to " +
                        std::to_string(in_dim) + " but matrix has " +
                        std::to_string(st.B.cols()) + " columns");
      if (st.B.rows() != st.output_dim)
        diags.push_back(where + ": matrix row count != output_dim");
      if (st.offset.size() && st.offset.size() != st.output_dim)
        diags.push_back(where + ": offset dimension != output_dim");
      if (st.variant == Step::Variant::AffineImplicit) {
        if (st.M.rows() != st.output_dim || st.M.cols() != st.output_dim) {
          diags.push_back(where + ": M must be square output_dim x output_dim");
        } else {
          try {
            solve_for_explicit(st.M, st.B);
          } catch (const SingularMatrixError&) {
            diags.push_back(where + ": M not invertible");
          }
        }
      }
      if (st.variant == Step::Variant::PiecewiseAffine) {
        if (st.kind == PwaKind::SoftThreshold && !(st.lambda > 0.0))
          diags.push_back(where + ": lambda must be > 0");
        if (st.kind == PwaKind::SatLin) {
          if (!st.sat_lo.size() || !st.sat_hi.size())
            diags.push_back(where + ": SatLin bounds missing");
          else
            for (int i = 0; i < st.output_dim; ++i)
              if (st.sat_lo_at(i) > st.sat_hi_at(i)) {
                diags.push_back(where + ": SatLin lower bound above upper");
                break;
              }
        }
      }
      out_dims[st.output] = st.output_dim;
      auto slot = family.algorithm.slot_for_output(st.output);
      if (slot) {
        slot_writes[*slot]++;
        if (layout.slot_dim(*slot) != st.output_dim)
          diags.push_back(where + ": output dim != dim of slot " + *slot);
      }
    }
    for (const auto& s : layout.slots) {
      auto it = slot_writes.find(s.name);
      if (it == slot_writes.end())
        diags.push_back("iteration " + std::to_string(k) + ": slot " + s.name +
                        " never written");
      else if (it->second > 1)
        diags.push_back("iteration " + std::to_string(k) + ": slot " + s.name +
                        " written more than once");
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Reference simulator
// ---------------------------------------------------------------------------

using Trajectory = std::vector<Vector>;  // flattened states s^0 .. s^K

namespace detail {

inline Vector gather_inputs(const std::vector<InputRef>& inputs,
                            const StateLayout& layout, const Vector& prev,
                            const Vector& s0, const Vector& x,
                            const std::map<std::string, Vector>& outs) {
  int dim = 0;
  for (const auto& in : inputs) {
    switch (in.kind) {
      case InputRef::Kind::Slot: dim += layout.slot_dim(in.name); break;
      case InputRef::Kind::Init: dim += layout.slot_dim(in.name); break;
      case InputRef::Kind::Param: dim += static_cast<int>(x.size()); break;
      case InputRef::Kind::StepOut: dim += static_cast<int>(outs.at(in.name).size()); break;
    }
  }
  Vector y(dim);
  int off = 0;
  for (const auto& in : inputs) {
    switch (in.kind) {
      case InputRef::Kind::Slot: {
        int d = layout.slot_dim(in.name);
        y.segment(off, d) = prev.segment(layout.slot_offset(in.name), d);
        off += d;
        break;
      }
      case InputRef::Kind::Init: {
        int d = layout.slot_dim(in.name);
        y.segment(off, d) = s0.segment(layout.slot_offset(in.name), d);
        off += d;
        break;
      }
      case InputRef::Kind::Param:
        y.segment(off, x.size()) = x;
        off += static_cast<int>(x.size());
        break;
      case InputRef::Kind::StepOut: {
        const Vector& v = outs.at(in.name);
        y.segment(off, v.size()) = v;
        off += static_cast<int>(v.size());
        break;
      }
    }
  }
  return y;
}

inline Vector eval_step(const Step& st, const Vector& y) {
  Vector z = st.B * y + st.offset_or_zero();
  switch (st.variant) {
    case Step::Variant::AffineExplicit: return z;
    case Step::Variant::AffineImplicit: {
      Eigen::PartialPivLU<Matrix> lu(st.M);
      return lu.solve(z);
    }
    case Step::Variant::PiecewiseAffine: {
      Vector w(st.output_dim);
      for (int i = 0; i < st.output_dim; ++i) w(i) = st.apply_scalar(z(i), i);
      return w;
    }
  }
  throw Error("unreachable");
}

}  // namespace detail

/// Runs K iterations of the algorithm from (x, s0). Deterministic; exact
/// scalar nonlinearities.
inline Trajectory simulate(const ProblemFamily& family, const Vector& x,
                           const Vector& s0, int K) {
  const auto& alg = family.algorithm;
  const auto& layout = alg.layout;
  if (x.size() != family.params.dim())
    throw Error("simulate: parameter dimension mismatch");
  if (s0.size() != layout.total_dim())
    throw Error("simulate: initial state dimension mismatch");
  if (K < 0) throw Error("simulate: K must be >= 0");

  Trajectory traj;
  traj.reserve(static_cast<size_t>(K) + 1);
  traj.push_back(s0);
  Vector state = s0;
  for (int k = 0; k < K; ++k) {
    const Iteration& iter = alg.at(k);
    std::map<std::string, Vector> outs;
    Vector next = state;
    for (const auto& st : iter.steps) {
      Vector y = detail::gather_inputs(st.inputs, layout, state, s0, x, outs);
      if (y.size() != st.B.cols()) throw Error("simulate: input dim mismatch");
      Vector w = detail::eval_step(st, y);
      outs[st.output] = w;
      if (auto slot = alg.slot_for_output(st.output))
        next.segment(layout.slot_offset(*slot), layout.slot_dim(*slot)) = w;
    }
    state = next;
    traj.push_back(state);
  }
  return traj;
}

/// l_inf norm of the residual-slot difference between iterations k and k-1.
inline double residual_inf(const Trajectory& traj, int k,
                           const StateLayout& layout) {
  if (k < 1 || k >= static_cast<int>(traj.size()))
    throw Error("residual_inf: k out of range");
  double r = 0.0;
  for (const auto& name : layout.residual_slots) {
    const int off = layout.slot_offset(name);
    const int d = layout.slot_dim(name);
    r = std::max(r, (traj[static_cast<size_t>(k)].segment(off, d) -
                     traj[static_cast<size_t>(k) - 1].segment(off, d))
                        .cwiseAbs()
                        .maxCoeff());
  }
  return r;
}

}  // namespace fpv
