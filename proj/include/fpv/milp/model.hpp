#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fpv/linalg.hpp"

namespace fpv::milp {

struct VarId {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
  friend bool operator<(VarId a, VarId b) { return a.index < b.index; }
};

/// Linear expression: sum of (var, coeff) plus a constant. Duplicate vars are
/// merged when the expression is attached to a model.
struct LinExpr {
  std::vector<std::pair<VarId, double>> terms;
  double constant = 0.0;

  LinExpr() = default;
  LinExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)
  LinExpr(VarId v) { terms.emplace_back(v, 1.0); }  // NOLINT

  LinExpr& add(VarId v, double coeff) {
    terms.emplace_back(v, coeff);
    return *this;
  }
  LinExpr& operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) {
    for (const auto& [v, c] : o.terms) terms.emplace_back(v, -c);
    constant -= o.constant;
    return *this;
  }
  LinExpr& operator*=(double a) {
    for (auto& [v, c] : terms) c *= a;
    constant *= a;
    return *this;
  }
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(double a, LinExpr e) { return e *= a; }

  /// Merged copy: one term per variable, sorted by index, zeros dropped.
  LinExpr merged() const {
    std::map<int, double> acc;
    for (const auto& [v, c] : terms) acc[v.index] += c;
    LinExpr out;
    out.constant = constant;
    for (const auto& [idx, c] : acc)
      if (c != 0.0) out.terms.emplace_back(VarId{idx}, c);
    return out;
  }
  double eval(const std::vector<double>& assignment) const {
    double s = constant;
    for (const auto& [v, c] : terms) s += c * assignment.at(static_cast<size_t>(v.index));
    return s;
  }
};

enum class VarKind { Continuous, Binary };
enum class Sense { LE, EQ, GE };
enum class ObjSense { Minimize, Maximize };

enum class SolveStatus {
  OptimalWithinGap,
  TimeLimit,
  Infeasible,
  Unbounded,
  Error,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::OptimalWithinGap: return "optimal_within_gap";
    case SolveStatus::TimeLimit: return "time_limit";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::Error: return "error";
  }
  return "unknown";
}

struct VarData {
  double lower = 0.0;
  double upper = 0.0;
  VarKind kind = VarKind::Continuous;
  std::string name;
};

struct Constraint {
  LinExpr expr;  // merged, constant folded into rhs
  Sense sense = Sense::LE;
  double rhs = 0.0;
  std::string name;
};

struct SolveOptions {
  double gap = 0.05;          // relative optimality gap
  double time_limit_s = 7200.0;
  bool relaxed = false;       // solve the LP relaxation (binaries -> [0,1])
  /// Optional primal repair heuristic: given a (possibly fractional)
  /// relaxation point, return a feasible full assignment or nothing.
  std::function<std::optional<std::vector<double>>(const std::vector<double>&)>
      heuristic;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Error;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double best_bound = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> assignment;  // empty if no incumbent
  double wall_time_s = 0.0;
  long nodes = 0;
  std::string message;

  bool has_incumbent() const { return !assignment.empty(); }
};

/// Abstract MILP/LP model. Single-owner; distinct models may be solved
/// concurrently.
class MilpModel {
 public:
  VarId add_var(double lower, double upper, VarKind kind = VarKind::Continuous,
                std::string name = {}) {
    if (lower > upper)
      throw Error("add_var: lower bound " + std::to_string(lower) +
                  " above upper bound " + std::to_string(upper));
    if (kind == VarKind::Binary && (lower < 0.0 || upper > 1.0))
      throw Error("add_var: binary bounds must lie within [0,1]");
    VarData v;
    v.lower = lower;
    v.upper = upper;
    v.kind = kind;
    v.name = name.empty() ? "v" + std::to_string(vars_.size()) : std::move(name);
    vars_.push_back(std::move(v));
    return VarId{static_cast<int>(vars_.size()) - 1};
  }

  void add_constr(const LinExpr& expr, Sense sense, double rhs,
                  std::string name = {}) {
    LinExpr m = expr.merged();
    for (const auto& [v, c] : m.terms) {
      check_var(v, "add_constr");
      if (!std::isfinite(c)) throw Error("add_constr: non-finite coefficient");
    }
    Constraint con;
    con.rhs = rhs - m.constant;
    m.constant = 0.0;
    con.expr = std::move(m);
    con.sense = sense;
    con.name = name.empty() ? "c" + std::to_string(constraints_.size())
                            : std::move(name);
    constraints_.push_back(std::move(con));
  }

  void set_objective(const LinExpr& expr, ObjSense sense) {
    LinExpr m = expr.merged();
    for (const auto& [v, c] : m.terms) check_var(v, "set_objective");
    objective_ = std::move(m);
    obj_sense_ = sense;
  }

  /// Partial warm start; unset variables are completed by the backend.
  void set_warm_start(const std::map<int, double>& values) {
    for (const auto& [idx, val] : values) {
      check_var(VarId{idx}, "set_warm_start");
      (void)val;
    }
    warm_start_ = values;
  }
  void clear_warm_start() { warm_start_.clear(); }

  void fix_var(VarId v, double value) {
    check_var(v, "fix_var");
    vars_[static_cast<size_t>(v.index)].lower = value;
    vars_[static_cast<size_t>(v.index)].upper = value;
  }
  void set_bounds(VarId v, double lower, double upper) {
    check_var(v, "set_bounds");
    if (lower > upper) throw Error("set_bounds: lower > upper");
    vars_[static_cast<size_t>(v.index)].lower = lower;
    vars_[static_cast<size_t>(v.index)].upper = upper;
  }

  int num_vars() const { return static_cast<int>(vars_.size()); }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  const VarData& var(VarId v) const { return vars_.at(static_cast<size_t>(v.index)); }
  const std::vector<VarData>& vars() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const LinExpr& objective() const { return objective_; }
  ObjSense objective_sense() const { return obj_sense_; }
  const std::map<int, double>& warm_start() const { return warm_start_; }

  /// Max constraint/bound violation of a full assignment (binaries also
  /// checked for integrality).
  double infeasibility(const std::vector<double>& a) const {
    if (a.size() != vars_.size()) return std::numeric_limits<double>::infinity();
    double viol = 0.0;
    for (size_t j = 0; j < vars_.size(); ++j) {
      viol = std::max(viol, vars_[j].lower - a[j]);
      viol = std::max(viol, a[j] - vars_[j].upper);
      if (vars_[j].kind == VarKind::Binary)
        viol = std::max(viol, std::abs(a[j] - std::round(a[j])));
    }
    for (const auto& con : constraints_) {
      const double lhs = con.expr.eval(a);
      switch (con.sense) {
        case Sense::LE: viol = std::max(viol, lhs - con.rhs); break;
        case Sense::GE: viol = std::max(viol, con.rhs - lhs); break;
        case Sense::EQ: viol = std::max(viol, std::abs(lhs - con.rhs)); break;
      }
    }
    return viol;
  }

  /// Writes the model in the CPLEX LP text format.
  void write_lp(std::ostream& os) const {
    os << (obj_sense_ == ObjSense::Maximize ? "Maximize" : "Minimize") << "\n obj:";
    write_expr(os, objective_);
    os << "\nSubject To\n";
    for (const auto& con : constraints_) {
      os << " " << con.name << ":";
      write_expr(os, con.expr);
      switch (con.sense) {
        case Sense::LE: os << " <= "; break;
        case Sense::GE: os << " >= "; break;
        case Sense::EQ: os << " = "; break;
      }
      os << fmt(con.rhs) << "\n";
    }
    os << "Bounds\n";
    for (const auto& v : vars_)
      os << " " << fmt(v.lower) << " <= " << v.name << " <= " << fmt(v.upper)
         << "\n";
    bool any_bin = false;
    for (const auto& v : vars_)
      if (v.kind == VarKind::Binary) {
        if (!any_bin) os << "Binaries\n";
        any_bin = true;
        os << " " << v.name << "\n";
      }
    os << "End\n";
  }

 private:
  void check_var(VarId v, const char* where) const {
    if (!v.valid() || v.index >= static_cast<int>(vars_.size()))
      throw Error(std::string(where) + ": unknown variable id");
  }
  static std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }
  void write_expr(std::ostream& os, const LinExpr& e) const {
    if (e.terms.empty()) os << " 0";
    for (const auto& [v, c] : e.terms)
      os << (c >= 0 ? " + " : " - ") << fmt(std::abs(c)) << " "
         << vars_[static_cast<size_t>(v.index)].name;
    if (e.constant != 0.0)
      os << (e.constant >= 0 ? " + " : " - ") << fmt(std::abs(e.constant));
  }

  std::vector<VarData> vars_;
  std::vector<Constraint> constraints_;
  LinExpr objective_;
  ObjSense obj_sense_ = ObjSense::Minimize;
  std::map<int, double> warm_start_;
};

}  // namespace fpv::milp
