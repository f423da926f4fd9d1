#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "fpv/milp/model.hpp"
#include "fpv/milp/simplex.hpp"

namespace fpv::milp {

/// Synchronous per-model solver contract. Adapters must be safe for
/// concurrent instantiation (parallel OBBT creates one per task).
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual SolveResult solve(const MilpModel& model,
                            const SolveOptions& options) = 0;
};

/// Reference backend: LP relaxations via the built-in simplex, binaries via
/// best-first branch and bound. No external solver binaries required.
class BranchAndBoundBackend : public SolverBackend {
 public:
  SolveResult solve(const MilpModel& model, const SolveOptions& options) override {
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult res;
    try {
      res = solve_impl(model, options, t0);
    } catch (const std::exception& e) {
      res.status = SolveStatus::Error;
      res.message = e.what();
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return res;
  }

 private:
  struct LpData {
    Matrix A;
    std::vector<Sense> senses;
    Vector b, c, lo, up;
    double obj_const = 0.0;
    double sign = 1.0;  // +1 minimize, -1 maximize (applied to c)
  };

  struct Node {
    std::vector<std::pair<int, double>> fixings;
    double bound;  // in the model's sense
  };
  struct NodeCmp {
    bool operator()(const Node& a, const Node& b) const {
      return a.bound < b.bound;  // best (largest) bound first, maximize form
    }
  };

  static constexpr double kIntTol = 1e-6;
  static constexpr double kFeasTol = 1e-6;

  static LpData build(const MilpModel& model) {
    LpData d;
    const int n = model.num_vars();
    const int m = model.num_constraints();
    d.A = Matrix::Zero(m, n);
    d.b = Vector::Zero(m);
    d.senses.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
      const auto& con = model.constraints()[static_cast<size_t>(i)];
      for (const auto& [v, coeff] : con.expr.terms) d.A(i, v.index) = coeff;
      d.b(i) = con.rhs;
      d.senses[static_cast<size_t>(i)] = con.sense;
    }
    d.c = Vector::Zero(n);
    d.lo = Vector::Zero(n);
    d.up = Vector::Zero(n);
    for (int j = 0; j < n; ++j) {
      d.lo(j) = model.vars()[static_cast<size_t>(j)].lower;
      d.up(j) = model.vars()[static_cast<size_t>(j)].upper;
    }
    d.sign = model.objective_sense() == ObjSense::Maximize ? -1.0 : 1.0;
    for (const auto& [v, coeff] : model.objective().terms)
      d.c(v.index) = d.sign * coeff;
    d.obj_const = model.objective().constant;
    return d;
  }

  /// LP solve with node fixings; objective reported in the model's sense.
  LpResult lp_solve(const LpData& d,
                    const std::vector<std::pair<int, double>>& fixings) const {
    Vector lo = d.lo, up = d.up;
    for (const auto& [j, v] : fixings) {
      lo(j) = v;
      up(j) = v;
    }
    LpResult r = Simplex::solve(d.A, d.senses, d.b, d.c, lo, up);
    if (r.status == LpStatus::Optimal)
      r.objective = d.sign * r.objective + d.obj_const;
    return r;
  }

  SolveResult solve_impl(const MilpModel& model, const SolveOptions& options,
                         std::chrono::steady_clock::time_point t0) {
    SolveResult res;
    const bool maximize = model.objective_sense() == ObjSense::Maximize;
    const double worst = maximize ? -Simplex::kInf : Simplex::kInf;
    LpData data = build(model);

    std::vector<int> binaries;
    for (int j = 0; j < model.num_vars(); ++j)
      if (model.vars()[static_cast<size_t>(j)].kind == VarKind::Binary &&
          !options.relaxed)
        binaries.push_back(j);

    auto obj_of = [&](const std::vector<double>& a) {
      return model.objective().eval(a);
    };
    // "a improves on b" in the model's sense
    auto better = [&](double a, double b) { return maximize ? a > b : a < b; };

    double incumbent_obj = worst;
    std::vector<double> incumbent;
    auto try_incumbent = [&](const std::vector<double>& a) {
      if (a.size() != static_cast<size_t>(model.num_vars())) return;
      if (model.infeasibility(a) > kFeasTol) return;
      const double v = obj_of(a);
      if (!incumbent.empty() && !better(v, incumbent_obj)) return;
      incumbent = a;
      incumbent_obj = v;
    };
    auto round_binaries = [&](std::vector<double> a) {
      for (int j : binaries) a[static_cast<size_t>(j)] = std::round(a[static_cast<size_t>(j)]);
      return a;
    };

    // Root relaxation.
    LpResult root = lp_solve(data, {});
    if (root.status == LpStatus::Infeasible) {
      res.status = SolveStatus::Infeasible;
      return res;
    }
    if (root.status == LpStatus::Unbounded) {
      res.status = SolveStatus::Unbounded;
      return res;
    }
    if (root.status == LpStatus::IterLimit) {
      res.status = SolveStatus::Error;
      res.message = "simplex iteration limit at root";
      return res;
    }

    if (options.relaxed) {
      res.status = SolveStatus::OptimalWithinGap;
      res.objective = root.objective;
      res.best_bound = root.objective;
      res.assignment = root.x;
      return res;
    }

    // Warm start: fix the given values, complete the rest by LP.
    if (!model.warm_start().empty()) {
      std::vector<std::pair<int, double>> fix(model.warm_start().begin(),
                                              model.warm_start().end());
      LpResult ws = lp_solve(data, fix);
      if (ws.status == LpStatus::Optimal) try_incumbent(round_binaries(ws.x));
    }

    auto consider_lp_point = [&](const std::vector<double>& x) {
      try_incumbent(round_binaries(x));
      if (options.heuristic) {
        if (auto repaired = options.heuristic(x)) try_incumbent(*repaired);
      }
    };

    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
          .count();
    };
    auto can_prune = [&](double bound) {
      if (incumbent.empty()) return false;
      const double tol =
          std::max(options.gap * std::abs(incumbent_obj), 1e-9);
      return maximize ? bound <= incumbent_obj + tol
                      : bound >= incumbent_obj - tol;
    };

    // Best-first search; bounds normalized to "larger is better".
    auto norm = [&](double v) { return maximize ? v : -v; };
    std::priority_queue<Node, std::vector<Node>, NodeCmp> open;
    consider_lp_point(root.x);
    bool time_out = false;

    auto frac_branch = [&](const std::vector<double>& x) {
      int best_j = -1;
      double best_score = kIntTol;
      for (int j : binaries) {
        const double f = x[static_cast<size_t>(j)];
        const double score = std::min(f - std::floor(f), std::ceil(f) - f);
        if (score > best_score) {
          best_score = score;
          best_j = j;
        }
      }
      return best_j;
    };

    auto process = [&](Node node, const LpResult& lp) {
      ++res.nodes;
      consider_lp_point(lp.x);
      const int j = frac_branch(lp.x);
      if (j < 0) {
        // Integral relaxation point.
        try_incumbent(round_binaries(lp.x));
        return;
      }
      for (double v : {0.0, 1.0}) {
        Node child = node;
        child.fixings.emplace_back(j, v);
        child.bound = norm(lp.objective);
        open.push(std::move(child));
      }
    };

    process(Node{{}, norm(root.objective)}, root);
    double global_bound = root.objective;

    while (!open.empty()) {
      if (elapsed() > options.time_limit_s) {
        time_out = true;
        break;
      }
      Node node = open.top();
      open.pop();
      global_bound = maximize ? node.bound : -node.bound;
      if (can_prune(global_bound)) {
        // Best-first order: every remaining node is prunable too.
        break;
      }
      LpResult lp = lp_solve(data, node.fixings);
      if (lp.status == LpStatus::Infeasible) continue;
      if (lp.status != LpStatus::Optimal) {
        res.status = SolveStatus::Error;
        res.message = "simplex failure in branch and bound (status " +
                      std::to_string(static_cast<int>(lp.status)) + ", " +
                      std::to_string(lp.iterations) + " iterations)";
        return res;
      }
      if (can_prune(lp.objective)) continue;
      node.bound = norm(lp.objective);
      process(std::move(node), lp);
    }

    if (!time_out && open.empty()) {
      // Search exhausted: the incumbent is optimal (global bound collapses).
      if (incumbent.empty()) {
        res.status = SolveStatus::Infeasible;
        return res;
      }
      global_bound = incumbent_obj;
    }

    res.status = time_out ? SolveStatus::TimeLimit
                          : SolveStatus::OptimalWithinGap;
    res.best_bound = global_bound;
    if (!incumbent.empty()) {
      res.objective = incumbent_obj;
      res.assignment = std::move(incumbent);
      // Tighten the reported bound so it is never on the wrong side.
      if (maximize)
        res.best_bound = std::max(res.best_bound, res.objective);
      else
        res.best_bound = std::min(res.best_bound, res.objective);
    }
    return res;
  }
};

inline SolveResult solve(const MilpModel& model, const SolveOptions& options) {
  BranchAndBoundBackend backend;
  return backend.solve(model, options);
}

/// Repeated LP-relaxation ranges over a fixed feasible set. The simplex state
/// is kept between queries so each new objective restarts from the previous
/// optimal basis instead of re-running phase 1 from scratch. One instance per
/// thread; queries mutate internal state.
class RelaxationOracle {
 public:
  explicit RelaxationOracle(const MilpModel& model)
      : n_(model.num_vars()) {
    const int m = model.num_constraints();
    A_ = Matrix::Zero(m, n_);
    b_ = Vector::Zero(m);
    senses_.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
      const auto& con = model.constraints()[static_cast<size_t>(i)];
      for (const auto& [v, coeff] : con.expr.terms) A_(i, v.index) = coeff;
      b_(i) = con.rhs;
      senses_[static_cast<size_t>(i)] = con.sense;
    }
    lo_.resize(n_);
    up_.resize(n_);
    for (int j = 0; j < n_; ++j) {
      lo_(j) = model.vars()[static_cast<size_t>(j)].lower;
      up_(j) = model.vars()[static_cast<size_t>(j)].upper;
    }
    simplex_ = std::make_unique<Simplex>(A_, senses_, b_, Vector::Zero(n_),
                                         lo_, up_);
    LpResult first = simplex_->run(max_iters_);
    status_ = first.status;
  }

  bool feasible() const { return status_ == LpStatus::Optimal; }
  bool infeasible() const { return status_ == LpStatus::Infeasible; }

  /// min (resp. max) of expr over the relaxation; NaN when the simplex fails.
  double minimize(const LinExpr& expr) { return extremum(expr, +1.0); }
  double maximize(const LinExpr& expr) { return extremum(expr, -1.0); }

 private:
  double extremum(const LinExpr& expr, double sign) {
    if (status_ != LpStatus::Optimal)
      return std::numeric_limits<double>::quiet_NaN();
    Vector c = Vector::Zero(n_);
    for (const auto& [v, coeff] : expr.terms) c(v.index) += sign * coeff;
    LpResult r = simplex_->reoptimize(c, max_iters_);
    if (r.status != LpStatus::Optimal) {
      // The warm basis went numerically bad; restart from scratch so one
      // rough query does not poison the rest of the sweep.
      simplex_ = std::make_unique<Simplex>(A_, senses_, b_, c, lo_, up_);
      r = simplex_->run(max_iters_);
      if (r.status != LpStatus::Optimal)
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sign * r.objective + expr.constant;
  }

  int n_;
  long max_iters_ = 200000;
  LpStatus status_ = LpStatus::IterLimit;
  Matrix A_;
  Vector b_, lo_, up_;
  std::vector<Sense> senses_;
  std::unique_ptr<Simplex> simplex_;
};

}  // namespace fpv::milp
