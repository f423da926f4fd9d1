#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "fpv/linalg.hpp"
#include "fpv/milp/model.hpp"

namespace fpv::milp {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

struct LpResult {
  LpStatus status = LpStatus::IterLimit;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x;  // structural variable values
  long iterations = 0;
};

/// Dense bounded-variable primal simplex with explicit basis inverse.
/// Two phases: artificial variables absorb initial row infeasibility.
/// Intended for the moderate, fully-boxed models produced by the encoder.
class Simplex {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

 private:
  enum VStat { BASIC, NB_LOWER, NB_UPPER, NB_FREE };

  static constexpr double kDualTol = 1e-9;
  static constexpr double kPrimalTol = 1e-8;
  static constexpr double kPivotTol = 1e-9;
  static constexpr int kRefactorEvery = 100;

 public:

  /// min c'x  s.t.  rows (A, sense, b),  lo <= x <= up.
  static LpResult solve(const Matrix& A, const std::vector<Sense>& senses,
                        const Vector& b, const Vector& c, const Vector& lo,
                        const Vector& up, long max_iters = 50000) {
    Simplex s(A, senses, b, c, lo, up);
    return s.run(max_iters);
  }

  /// Re-solve with a new objective from the current (feasible) basis.
  /// Valid only after a previous run/reoptimize returned Optimal; the
  /// constraints and bounds are unchanged, so no phase 1 is needed.
  LpResult reoptimize(const Vector& c, long max_iters = 50000) {
    for (int j = 0; j < n_; ++j) cost_[static_cast<size_t>(j)] = c(j);
    LpResult res;
    long iters = 0;
    res.status = optimize(cost_, max_iters, iters);
    res.iterations = iters;
    if (res.status == LpStatus::Optimal) {
      res.x.resize(static_cast<size_t>(n_));
      double obj = 0.0;
      for (int j = 0; j < n_; ++j) {
        res.x[static_cast<size_t>(j)] = val_[static_cast<size_t>(j)];
        obj += cost_[static_cast<size_t>(j)] * val_[static_cast<size_t>(j)];
      }
      res.objective = obj;
    } else if (res.status == LpStatus::IterLimit && res.iterations < max_iters) {
      // Bad-basis bailout rather than a genuine iteration limit: restart
      // from a fresh basis (with phase 1) once.
      init();
      res = run_once(max_iters);
    }
    return res;
  }

  Simplex(const Matrix& A, const std::vector<Sense>& senses, const Vector& b,
          const Vector& c, const Vector& lo, const Vector& up)
      : m_(static_cast<int>(A.rows())), n_(static_cast<int>(A.cols())), b_(b) {
    N_ = n_ + 2 * m_;
    cols_ = Matrix::Zero(m_, N_);
    cols_.leftCols(n_) = A;
    lo_.assign(static_cast<size_t>(N_), 0.0);
    up_.assign(static_cast<size_t>(N_), 0.0);
    cost_.assign(static_cast<size_t>(N_), 0.0);
    for (int j = 0; j < n_; ++j) {
      lo_[static_cast<size_t>(j)] = lo(j);
      up_[static_cast<size_t>(j)] = up(j);
      cost_[static_cast<size_t>(j)] = c(j);
    }
    for (int i = 0; i < m_; ++i) {
      const int sj = n_ + i;
      cols_(i, sj) = 1.0;
      switch (senses[static_cast<size_t>(i)]) {
        case Sense::LE: lo_[static_cast<size_t>(sj)] = 0.0; up_[static_cast<size_t>(sj)] = kInf; break;
        case Sense::GE: lo_[static_cast<size_t>(sj)] = -kInf; up_[static_cast<size_t>(sj)] = 0.0; break;
        case Sense::EQ: lo_[static_cast<size_t>(sj)] = 0.0; up_[static_cast<size_t>(sj)] = 0.0; break;
      }
    }
    init();
  }

  /// (Re)build the starting basis: slacks where they fit, artificials for the
  /// residual rows. Also used as a clean restart when the working basis goes
  /// numerically bad mid-solve.
  void init() {
    has_artificial_ = false;
    since_refactor_ = 0;
    // Artificial columns; sign chosen below so their value is >= 0.
    for (int i = 0; i < m_; ++i) {
      const int aj = n_ + m_ + i;
      cols_(i, aj) = 1.0;  // may be flipped below
      lo_[static_cast<size_t>(aj)] = 0.0;
      up_[static_cast<size_t>(aj)] = 0.0;  // opened only when needed
    }

    stat_.assign(static_cast<size_t>(N_), NB_LOWER);
    val_.assign(static_cast<size_t>(N_), 0.0);
    for (int j = 0; j < N_; ++j) set_nonbasic_start(j);

    basis_.assign(static_cast<size_t>(m_), -1);
    Vector act = Vector::Zero(m_);
    for (int j = 0; j < n_; ++j)
      if (val_[static_cast<size_t>(j)] != 0.0)
        act += cols_.col(j) * val_[static_cast<size_t>(j)];
    for (int i = 0; i < m_; ++i) {
      const int sj = n_ + i;
      const int aj = n_ + m_ + i;
      const double need = b_(i) - act(i);
      if (need >= lo_[static_cast<size_t>(sj)] - kPrimalTol &&
          need <= up_[static_cast<size_t>(sj)] + kPrimalTol) {
        make_basic(sj, i,
                   std::min(std::max(need, lo_[static_cast<size_t>(sj)]),
                            up_[static_cast<size_t>(sj)]));
      } else {
        // Slack pinned at its nearest bound; artificial takes the residual.
        double sval = need < lo_[static_cast<size_t>(sj)]
                          ? lo_[static_cast<size_t>(sj)]
                          : up_[static_cast<size_t>(sj)];
        val_[static_cast<size_t>(sj)] = sval;
        stat_[static_cast<size_t>(sj)] =
            sval == lo_[static_cast<size_t>(sj)] ? NB_LOWER : NB_UPPER;
        double r = need - sval;
        if (r < 0) {
          cols_(i, aj) = -1.0;
          r = -r;
        }
        up_[static_cast<size_t>(aj)] = kInf;
        make_basic(aj, i, r);
        has_artificial_ = true;
      }
    }
    refactor();
  }

  void set_nonbasic_start(int j) {
    const double l = lo_[static_cast<size_t>(j)], u = up_[static_cast<size_t>(j)];
    if (std::isfinite(l) && (!std::isfinite(u) || std::abs(l) <= std::abs(u))) {
      stat_[static_cast<size_t>(j)] = NB_LOWER;
      val_[static_cast<size_t>(j)] = l;
    } else if (std::isfinite(u)) {
      stat_[static_cast<size_t>(j)] = NB_UPPER;
      val_[static_cast<size_t>(j)] = u;
    } else {
      stat_[static_cast<size_t>(j)] = NB_FREE;
      val_[static_cast<size_t>(j)] = 0.0;
    }
  }

  void make_basic(int j, int row, double value) {
    stat_[static_cast<size_t>(j)] = BASIC;
    val_[static_cast<size_t>(j)] = value;
    basis_[static_cast<size_t>(row)] = j;
  }

  void refactor() {
    Matrix B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = cols_.col(basis_[static_cast<size_t>(i)]);
    binv_ = B.partialPivLu().inverse();
    if (!binv_.allFinite()) binv_ = B.fullPivLu().inverse();
    recompute_basics();
  }

  void recompute_basics() {
    Vector rhs = b_;
    for (int j = 0; j < N_; ++j)
      if (stat_[static_cast<size_t>(j)] != BASIC && val_[static_cast<size_t>(j)] != 0.0)
        rhs -= cols_.col(j) * val_[static_cast<size_t>(j)];
    Vector xb = binv_ * rhs;
    for (int i = 0; i < m_; ++i) val_[static_cast<size_t>(basis_[static_cast<size_t>(i)])] = xb(i);
  }

  LpResult run(long max_iters) {
    LpResult res = run_once(max_iters);
    if (res.status == LpStatus::IterLimit && res.iterations < max_iters) {
      init();
      res = run_once(max_iters);
    }
    return res;
  }

  LpResult run_once(long max_iters) {
    LpResult res;
    long iters = 0;
    if (has_artificial_) {
      std::vector<double> phase1(static_cast<size_t>(N_), 0.0);
      for (int i = 0; i < m_; ++i) phase1[static_cast<size_t>(n_ + m_ + i)] = 1.0;
      const LpStatus st = optimize(phase1, max_iters, iters);
      if (st == LpStatus::IterLimit) {
        res.status = st;
        res.iterations = iters;
        return res;
      }
      double infeas = 0.0;
      for (int i = 0; i < m_; ++i) infeas += val_[static_cast<size_t>(n_ + m_ + i)];
      if (infeas > 1e-7) {
        res.status = LpStatus::Infeasible;
        res.iterations = iters;
        return res;
      }
      for (int i = 0; i < m_; ++i) {
        const int aj = n_ + m_ + i;
        up_[static_cast<size_t>(aj)] = 0.0;
        if (stat_[static_cast<size_t>(aj)] != BASIC) {
          stat_[static_cast<size_t>(aj)] = NB_LOWER;
          val_[static_cast<size_t>(aj)] = 0.0;
        }
      }
      recompute_basics();
    }
    const LpStatus st = optimize(cost_, max_iters, iters);
    res.status = st;
    res.iterations = iters;
    if (st == LpStatus::Optimal) {
      res.x.resize(static_cast<size_t>(n_));
      double obj = 0.0;
      for (int j = 0; j < n_; ++j) {
        res.x[static_cast<size_t>(j)] = val_[static_cast<size_t>(j)];
        obj += cost_[static_cast<size_t>(j)] * val_[static_cast<size_t>(j)];
      }
      res.objective = obj;
    }
    return res;
  }

 private:
  LpStatus optimize(const std::vector<double>& cost, long max_iters,
                    long& iters) {
    long stall = 0;
    bool confirming = false;
    double last_obj = std::numeric_limits<double>::infinity();
    while (iters < max_iters) {
      ++iters;
      // Reduced costs.
      Vector cb(m_);
      for (int i = 0; i < m_; ++i) cb(i) = cost[static_cast<size_t>(basis_[static_cast<size_t>(i)])];
      Vector y = binv_.transpose() * cb;

      const bool bland = stall > 2L * (N_ + m_);
      // After a confirmation refactor, noise-level reduced costs must not
      // restart pivoting, or the confirm/pivot pair loops forever.
      const double dtol = confirming ? 1e-7 : kDualTol;
      int enter = -1;
      double best = dtol;
      int dir = 0;
      for (int j = 0; j < N_; ++j) {
        const VStat s = stat_[static_cast<size_t>(j)];
        if (s == BASIC) continue;
        if (lo_[static_cast<size_t>(j)] == up_[static_cast<size_t>(j)]) continue;
        const double d = cost[static_cast<size_t>(j)] - y.dot(cols_.col(j));
        int cand_dir = 0;
        if ((s == NB_LOWER || s == NB_FREE) && d < -dtol) cand_dir = +1;
        else if ((s == NB_UPPER || s == NB_FREE) && d > dtol) cand_dir = -1;
        if (!cand_dir) continue;
        if (bland) { enter = j; dir = cand_dir; break; }
        if (std::abs(d) > best) {
          best = std::abs(d);
          enter = j;
          dir = cand_dir;
        }
      }
      if (enter >= 0) confirming = false;
      if (enter < 0) {
        // Only accept optimality right after a refactorization: reduced
        // costs from a drifted product-form inverse can stop early, which
        // would make the reported optimum unsound as a bound.
        if (since_refactor_ > 0) {
          refactor();
          since_refactor_ = 0;
          confirming = true;
          continue;
        }
        // Tolerate small primal slips: at a dual-feasible basis they make
        // the point optimal for a slightly bound-relaxed problem, so the
        // objective is still valid as a relaxation bound (feasible points
        // are validated separately by their consumers). Large slips mean
        // the basis is genuinely rotten: bail out so the caller restarts.
        for (int i = 0; i < m_; ++i) {
          const int bj = basis_[static_cast<size_t>(i)];
          const double v = val_[static_cast<size_t>(bj)];
          if (v < lo_[static_cast<size_t>(bj)] - 1e-4 ||
              v > up_[static_cast<size_t>(bj)] + 1e-4)
            return LpStatus::IterLimit;
        }
        return LpStatus::Optimal;
      }

      const Vector w = binv_ * cols_.col(enter);

      // Two-pass (Harris) ratio test: pass 1 finds the softest step with
      // bounds relaxed by the primal tolerance, pass 2 picks the largest
      // pivot among the rows that fit. Choosing by pivot magnitude instead
      // of strict minimum ratio keeps the basis well conditioned, which
      // matters when one instance re-solves hundreds of objectives.
      const double own_range = up_[static_cast<size_t>(enter)] - lo_[static_cast<size_t>(enter)];
      double theta_rel = std::isfinite(own_range) ? own_range : kInf;
      auto row_limit = [&](int i, bool relaxed, bool& to_upper) {
        const int bj = basis_[static_cast<size_t>(i)];
        const double delta = -w(i) * dir;  // d(x_Bi)/d(theta)
        double bound;
        if (delta > 0) {
          bound = up_[static_cast<size_t>(bj)];
          to_upper = true;
          if (!std::isfinite(bound)) return kInf;
          if (relaxed) bound += kPrimalTol;
        } else {
          bound = lo_[static_cast<size_t>(bj)];
          to_upper = false;
          if (!std::isfinite(bound)) return kInf;
          if (relaxed) bound -= kPrimalTol;
        }
        return (bound - val_[static_cast<size_t>(bj)]) / delta;
      };
      for (int i = 0; i < m_; ++i) {
        if (std::abs(w(i)) <= kPivotTol) continue;
        bool to_upper;
        const double limit = row_limit(i, /*relaxed=*/true, to_upper);
        theta_rel = std::min(theta_rel, std::max(limit, 0.0));
      }
      if (!std::isfinite(theta_rel)) return LpStatus::Unbounded;
      int leave_row = -1;
      bool leave_to_upper = false;
      double theta = theta_rel;  // bound flip when no row qualifies
      double best_piv = 0.0;
      if (bland) {
        // Strict minimum-ratio with smallest-index tie break; the relaxed
        // qualifying set would void Bland's termination guarantee.
        theta = std::isfinite(own_range) ? own_range : kInf;
        for (int i = 0; i < m_; ++i) {
          if (std::abs(w(i)) <= kPivotTol) continue;
          bool to_upper;
          const double limit = std::max(row_limit(i, false, to_upper), 0.0);
          if (limit < theta - 1e-12 ||
              (leave_row >= 0 && limit <= theta + 1e-12 &&
               basis_[static_cast<size_t>(i)] <
                   basis_[static_cast<size_t>(leave_row)])) {
            theta = limit;
            leave_row = i;
            leave_to_upper = to_upper;
          }
        }
        if (!std::isfinite(theta)) return LpStatus::Unbounded;
      } else {
        for (int i = 0; i < m_; ++i) {
          if (std::abs(w(i)) <= kPivotTol) continue;
          bool to_upper;
          const double limit = row_limit(i, /*relaxed=*/false, to_upper);
          if (limit > theta_rel + 1e-12) continue;
          if (std::abs(w(i)) > best_piv) {
            best_piv = std::abs(w(i));
            leave_row = i;
            leave_to_upper = to_upper;
            theta = std::max(limit, 0.0);
          }
        }
      }

      // A tiny pivot amplifies product-form error catastrophically; with a
      // stale factorization, first recompute the column exactly and redo the
      // choice before accepting one.
      if (leave_row >= 0 && since_refactor_ > 0 &&
          std::abs(w(leave_row)) < 1e-6) {
        refactor();
        since_refactor_ = 0;
        continue;
      }

      double obj_now = 0.0;
      for (int j = 0; j < N_; ++j) obj_now += cost[static_cast<size_t>(j)] * val_[static_cast<size_t>(j)];
      if (obj_now < last_obj - 1e-12) { stall = 0; last_obj = obj_now; }
      else ++stall;

      if (leave_row < 0) {
        // Bound flip of the entering variable.
        for (int i = 0; i < m_; ++i)
          val_[static_cast<size_t>(basis_[static_cast<size_t>(i)])] -= w(i) * dir * theta;
        val_[static_cast<size_t>(enter)] += dir * theta;
        stat_[static_cast<size_t>(enter)] = dir > 0 ? NB_UPPER : NB_LOWER;
        continue;
      }

      // Pivot.
      const int leave = basis_[static_cast<size_t>(leave_row)];
      for (int i = 0; i < m_; ++i)
        val_[static_cast<size_t>(basis_[static_cast<size_t>(i)])] -= w(i) * dir * theta;
      const double enter_val = val_[static_cast<size_t>(enter)] + dir * theta;
      val_[static_cast<size_t>(leave)] =
          leave_to_upper ? up_[static_cast<size_t>(leave)] : lo_[static_cast<size_t>(leave)];
      stat_[static_cast<size_t>(leave)] = leave_to_upper ? NB_UPPER : NB_LOWER;
      make_basic(enter, leave_row, enter_val);

      // binv <- E * binv with E the elementary pivot matrix.
      const double piv = w(leave_row);
      Eigen::RowVectorXd pivot_row = binv_.row(leave_row) / piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave_row) continue;
        if (w(i) != 0.0) binv_.row(i) -= w(i) * pivot_row;
      }
      binv_.row(leave_row) = pivot_row;

      // The counter persists across reoptimize calls: a long sequence of
      // short re-solves accumulates product-form error just as fast.
      if (++since_refactor_ >= kRefactorEvery) {
        refactor();
        since_refactor_ = 0;
      }
    }
    return LpStatus::IterLimit;
  }

  int m_, n_, N_ = 0;
  Vector b_;
  Matrix cols_;  // structural | slack | artificial columns
  std::vector<double> lo_, up_, cost_;
  std::vector<VStat> stat_;
  std::vector<double> val_;
  std::vector<int> basis_;
  Matrix binv_;
  bool has_artificial_ = false;
  int since_refactor_ = 0;
};

}  // namespace fpv::milp
