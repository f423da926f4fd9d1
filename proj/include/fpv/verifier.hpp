#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fpv/bounds.hpp"
#include "fpv/cutgen.hpp"
#include "fpv/encoder.hpp"
#include "fpv/milp/solver.hpp"
#include "fpv/model_ir.hpp"

namespace fpv::verifier {

// ---------------------------------------------------------------------------
// Sequential verification driver: bounds -> OBBT -> cuts -> MILP -> residual
// post-processing -> warm start, for K = 1..Kmax.
// ---------------------------------------------------------------------------

struct VerifyConfig {
  int Kmax = 1;
  double gap = 0.05;
  double time_limit_s = 7200.0;
  int obbt_rounds = 3;
  bool obbt_enabled = true;
  cutgen::CutMode cut_mode = cutgen::CutMode::PerComponent;
  int cut_rounds = 5;
  std::optional<TheoryParams> theory;
  bool compute_R = false;
  bool reuse_cuts = false;  // carry root cuts into later K models and OBBT
  int samples = 0;          // sample-max baseline; 0 disables
  unsigned seed = 0;
  std::string dump_dir;     // write each K-model as an LP file when nonempty
  bool keep_bounds = false; // retain the final bound table in the report
};

inline std::vector<std::string> validate(const VerifyConfig& cfg) {
  std::vector<std::string> diags;
  if (cfg.Kmax < 1) diags.push_back("Kmax must be >= 1");
  if (!(cfg.gap > 0.0 && cfg.gap < 1.0)) diags.push_back("gap must be in (0, 1)");
  if (cfg.obbt_rounds < 0) diags.push_back("obbt_rounds must be >= 0");
  if (cfg.theory) {
    auto td = fpv::validate(*cfg.theory);
    diags.insert(diags.end(), td.begin(), td.end());
  }
  return diags;
}

struct KReport {
  int K = 0;
  double delta = std::numeric_limits<double>::quiet_NaN();
  double best_bound = std::numeric_limits<double>::quiet_NaN();
  std::string status;
  double milp_time_s = 0.0;
  double obbt_time_s = 0.0;
  int cuts = 0;
  std::optional<double> sample_max;
  double frac_ot_tighter = 0.0;
  std::vector<cutgen::CutLogEntry> cut_log;
};

struct VerificationReport {
  std::vector<KReport> per_k;
  std::optional<double> R;
  std::optional<IterBounds> final_bounds;
  std::vector<std::string> warnings;
  std::string error;  // nonempty when a stage aborted the run

  bool ok() const { return error.empty(); }
};

/// A root cut remembered for reuse in later models, keyed by the global step
/// index and output row it was generated for.
struct StoredCut {
  int step = 0;
  int component = 0;
  cutgen::CutInequality cut;
};

inline void apply_stored_cuts(milp::MilpModel& model,
                              const encoder::VarMap& vm,
                              const std::vector<StoredCut>& cuts) {
  for (const auto& sc : cuts)
    for (const auto& bq : vm.queries)
      if (bq.step == sc.step && bq.component == sc.component) {
        cutgen::add_cut_to_model(model, bq, sc.cut);
        break;
      }
}

namespace detail {

inline double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct ObbtTarget {
  milp::LinExpr expr;
  // Destination: a state component (kind 0), an arg row (kind 1), or a
  // residual difference component at the final iteration (kind 2).
  int kind = 0;
  int k = 0, comp = 0;  // state / residual
  size_t arg_k = 0, arg_j = 0;
  int arg_row = 0;  // arg
};

/// Position of each global step inside its iteration.
inline std::map<int, std::pair<int, int>> step_positions(
    const encoder::VarMap& vm) {
  std::map<int, std::pair<int, int>> pos;
  std::map<int, int> next_j;
  for (const auto& sv : vm.steps) pos[sv.step] = {sv.k, next_j[sv.k]++};
  return pos;
}

}  // namespace detail

/// One round-limited pass of LP-relaxation bound tightening over the state
/// components of the two final iterations and every piecewise argument row.
/// Never loosens; stops early when the largest improvement falls below 1e-6.
inline IterBounds obbt_pass(const ProblemFamily& family, int K,
                            IterBounds bounds,
                            const std::vector<StoredCut>& cuts = {},
                            int max_rounds = 3, double lp_time_limit_s = 600.0,
                            Vector* res_lo_out = nullptr,
                            Vector* res_hi_out = nullptr,
                            bool args_final_only = false) {
  const auto& layout = family.algorithm.layout;
  const double inf = std::numeric_limits<double>::infinity();
  Vector rlo = Vector::Constant(layout.residual_dim(), -inf);
  Vector rhi = Vector::Constant(layout.residual_dim(), inf);
  for (int round = 0; round < max_rounds; ++round) {
    auto enc =
        encoder::encode_vp(family, K, bounds, /*add_base_cuts=*/true, &rlo, &rhi);
    apply_stored_cuts(enc.model, enc.vm, cuts);
    const auto pos = detail::step_positions(enc.vm);

    std::vector<detail::ObbtTarget> targets;
    std::set<int> seen;
    for (int k : {K - 1, K})
      for (int c = 0; c < layout.total_dim(); ++c) {
        const milp::VarId v = enc.vm.state[static_cast<size_t>(k)][static_cast<size_t>(c)];
        if (!seen.insert(v.index).second) continue;  // carried-forward slot
        detail::ObbtTarget t;
        t.expr = milp::LinExpr(v);
        t.kind = 0;
        t.k = k;
        t.comp = c;
        targets.push_back(std::move(t));
      }
    for (const auto& bq : enc.vm.queries) {
      // In sequential use earlier iterations were already tightened while
      // they were final, so only the new rows are worth LP time.
      if (args_final_only && pos.at(bq.step).first < K - 1) continue;
      detail::ObbtTarget t;
      for (int i = 0; i < bq.query.dim(); ++i)
        if (bq.query.a(i) != 0.0)
          t.expr.add(bq.y_vars[static_cast<size_t>(i)], bq.query.a(i));
      t.expr.constant = bq.query.constant;
      t.kind = 1;
      auto [sk, sj] = pos.at(bq.step);
      t.arg_k = static_cast<size_t>(sk);
      t.arg_j = static_cast<size_t>(sj);
      t.arg_row = bq.component;
      targets.push_back(std::move(t));
    }
    // Residual differences at the final iteration: tightening these directly
    // (instead of differencing state intervals) preserves the correlation
    // between consecutive iterates and drives the objective big-Ms.
    {
      const auto prev =
          encoder::detail::residual_vars(layout,
                                         enc.vm.state[static_cast<size_t>(K) - 1]);
      const auto next =
          encoder::detail::residual_vars(layout,
                                         enc.vm.state[static_cast<size_t>(K)]);
      for (size_t i = 0; i < prev.size(); ++i) {
        if (prev[i] == next[i]) {  // carried forward: identically zero
          rlo(static_cast<Eigen::Index>(i)) = 0.0;
          rhi(static_cast<Eigen::Index>(i)) = 0.0;
          continue;
        }
        detail::ObbtTarget t;
        t.expr = milp::LinExpr(next[i]);
        t.expr.add(prev[i], -1.0);
        t.kind = 2;
        t.comp = static_cast<int>(i);
        targets.push_back(std::move(t));
      }
    }

    // Independent LPs against the round-start model; join, then apply. Each
    // worker keeps one warm simplex: only the objective changes per query.
    (void)lp_time_limit_s;  // iteration limits bound the oracle instead
    auto solve_pair = [&](milp::RelaxationOracle& oracle,
                          const detail::ObbtTarget& t) {
      if (oracle.infeasible())
        throw Error("obbt_pass: relaxation infeasible (encoding bug)");
      std::pair<double, double> out{-std::numeric_limits<double>::infinity(),
                                    std::numeric_limits<double>::infinity()};
      if (!oracle.feasible()) return out;  // numeric trouble: skip, stay sound
      const double lo = oracle.minimize(t.expr);
      if (!std::isnan(lo)) out.first = lo;
      const double hi = oracle.maximize(t.expr);
      if (!std::isnan(hi)) out.second = hi;
      return out;
    };
    std::vector<std::pair<double, double>> results(targets.size());
    const size_t workers =
        std::min<size_t>(std::max(1u, std::thread::hardware_concurrency()),
                         targets.size());
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
      milp::RelaxationOracle oracle(enc.model);
      for (size_t i = cursor.fetch_add(1); i < targets.size();
           i = cursor.fetch_add(1))
        results[i] = solve_pair(oracle, targets[i]);
    };
    std::vector<std::future<void>> futs;
    for (size_t w = 0; w + 1 < workers; ++w)
      futs.push_back(std::async(std::launch::async, worker));
    worker();
    for (auto& f : futs) f.get();

    double improvement = 0.0;
    // Certified LP optima carry error up to the solver's optimality
    // tolerances (~1e-7 reduced costs), so pad well past that; a thinner pad
    // lets accumulated error across iterations render later models
    // infeasible.
    const double pad = 1e-6;
    for (size_t i = 0; i < targets.size(); ++i) {
      auto [lo, hi] = results[i];
      lo -= pad;
      hi += pad;
      const auto& t = targets[i];
      if (t.kind == 0) {
        StateBounds& sb = bounds.states[static_cast<size_t>(t.k)];
        if (lo > sb.lower(t.comp)) {
          improvement = std::max(improvement, lo - sb.lower(t.comp));
          sb.lower(t.comp) = lo;
          sb.src_lo[static_cast<size_t>(t.comp)] = BoundSource::Obbt;
        }
        if (hi < sb.upper(t.comp)) {
          improvement = std::max(improvement, sb.upper(t.comp) - hi);
          sb.upper(t.comp) = hi;
          sb.src_hi[static_cast<size_t>(t.comp)] = BoundSource::Obbt;
        }
      } else if (t.kind == 1) {
        ArgBounds& ab = bounds.args[t.arg_k][t.arg_j];
        if (ab.lo.size() > t.arg_row && lo > ab.lo(t.arg_row)) {
          improvement = std::max(improvement, lo - ab.lo(t.arg_row));
          ab.lo(t.arg_row) = lo;
        }
        if (ab.hi.size() > t.arg_row && hi < ab.hi(t.arg_row)) {
          improvement = std::max(improvement, ab.hi(t.arg_row) - hi);
          ab.hi(t.arg_row) = hi;
        }
      } else {
        if (lo > rlo(t.comp)) {
          if (std::isfinite(rlo(t.comp)))
            improvement = std::max(improvement, lo - rlo(t.comp));
          rlo(t.comp) = lo;
        }
        if (hi < rhi(t.comp)) {
          if (std::isfinite(rhi(t.comp)))
            improvement = std::max(improvement, rhi(t.comp) - hi);
          rhi(t.comp) = hi;
        }
      }
    }
    if (improvement < 1e-6 && round > 0) break;
  }
  if (res_lo_out) *res_lo_out = rlo;
  if (res_hi_out) *res_hi_out = rhi;
  return bounds;
}

/// Simulate the incumbent (x, s0) forward and assign every variable of the
/// K-model, binaries included. Returns nothing (and a warning) if the
/// assignment fails the feasibility check; a wrong start is never returned.
inline std::optional<std::map<int, double>> warm_start_extend(
    const ProblemFamily& family, int K, const encoder::Encoded& enc,
    const Vector& x, const Vector& s0, std::string* warning = nullptr) {
  const auto& alg = family.algorithm;
  const auto& layout = alg.layout;
  const auto& vm = enc.vm;
  std::map<int, double> a;
  auto put = [&](milp::VarId v, double val) { a[v.index] = val; };

  for (size_t i = 0; i < vm.x.size(); ++i)
    put(vm.x[i], x(static_cast<Eigen::Index>(i)));
  for (size_t i = 0; i < vm.state[0].size(); ++i)
    put(vm.state[0][i], s0(static_cast<Eigen::Index>(i)));

  std::vector<Vector> states{s0};
  size_t cursor = 0;
  for (int k = 1; k <= K; ++k) {
    const Iteration& iter = alg.at(k - 1);
    const Vector& prev = states.back();
    Vector next = prev;
    std::map<std::string, Vector> outs;
    for (const Step& st : iter.steps) {
      const Vector y =
          fpv::detail::gather_inputs(st.inputs, layout, prev, s0, x, outs);
      const Vector w = fpv::detail::eval_step(st, y);
      const encoder::StepVars& sv = vm.steps.at(cursor++);
      for (int r = 0; r < st.output_dim; ++r)
        put(sv.out[static_cast<size_t>(r)], w(r));
      if (st.variant == Step::Variant::PiecewiseAffine) {
        const Vector z = st.B * y + st.offset_or_zero();
        for (int r = 0; r < st.output_dim; ++r) {
          double up = 0.0, dn = 0.0;
          switch (st.kind) {
            case PwaKind::SoftThreshold:
              up = z(r) >= st.lambda;
              dn = z(r) <= -st.lambda;
              break;
            case PwaKind::Relu:
              up = z(r) >= 0.0;
              break;
            case PwaKind::SatLin:
              up = z(r) >= st.sat_hi_at(r);
              dn = z(r) <= st.sat_lo_at(r);
              break;
          }
          if (sv.omega[static_cast<size_t>(r)].valid())
            put(sv.omega[static_cast<size_t>(r)], up);
          if (sv.zeta[static_cast<size_t>(r)].valid())
            put(sv.zeta[static_cast<size_t>(r)], dn);
        }
      }
      outs[st.output] = w;
      if (auto slot = alg.slot_for_output(st.output))
        next.segment(layout.slot_offset(*slot), layout.slot_dim(*slot)) = w;
    }
    states.push_back(std::move(next));
  }

  // Objective block: residual between the last two states.
  int i = 0;
  double delta = 0.0;
  int argmax = 0;
  std::vector<double> tv;
  for (const auto& name : layout.residual_slots) {
    const int off = layout.slot_offset(name);
    for (int c = 0; c < layout.slot_dim(name); ++c, ++i) {
      const double t = states[static_cast<size_t>(K)](off + c) -
                       states[static_cast<size_t>(K) - 1](off + c);
      tv.push_back(t);
      if (std::abs(t) > delta) {
        delta = std::abs(t);
        argmax = i;
      }
    }
  }
  for (size_t j = 0; j < tv.size(); ++j) {
    put(vm.t[j], tv[j]);
    put(vm.t_pos[j], std::max(tv[j], 0.0));
    put(vm.t_neg[j], std::max(-tv[j], 0.0));
    if (vm.bin_w[j].valid()) put(vm.bin_w[j], tv[j] >= 0.0 ? 1.0 : 0.0);
    put(vm.bin_gamma[j], j == static_cast<size_t>(argmax) ? 1.0 : 0.0);
  }
  put(vm.delta, delta);

  std::vector<double> full(static_cast<size_t>(enc.model.num_vars()),
                           std::numeric_limits<double>::quiet_NaN());
  for (const auto& [idx, val] : a) full[static_cast<size_t>(idx)] = val;
  for (double v : full)
    if (std::isnan(v)) {
      if (warning) *warning = "warm start incomplete; dropped";
      return std::nullopt;
    }
  const double infeas = enc.model.infeasibility(full);
  if (infeas > 1e-7) {
    if (warning)
      *warning = "warm start infeasible (violation " + std::to_string(infeas) +
                 "); dropped";
    return std::nullopt;
  }
  return a;
}

/// Certified upper bound on the l1 (hence l2) initial distance to a fixed
/// point, from the radius MILP.
inline double compute_R(const ProblemFamily& family, double gap = 0.05,
                        double time_limit_s = 7200.0) {
  auto enc = encoder::encode_radius(family);
  milp::SolveOptions o;
  o.gap = gap;
  o.time_limit_s = time_limit_s;
  auto res = milp::solve(enc.model, o);
  if (res.status == milp::SolveStatus::Infeasible)
    throw Error("compute_R: fixed-point system infeasible");
  if (res.status != milp::SolveStatus::OptimalWithinGap &&
      res.status != milp::SolveStatus::TimeLimit)
    throw Error("compute_R: solve failed (" +
                std::string(milp::to_string(res.status)) + ")");
  if (!std::isfinite(res.best_bound))
    throw Error("compute_R: no finite bound within the time limit");
  return std::max(res.best_bound, 0.0);
}

/// Per-K sample-maximum residual lower bounds from N uniform draws of
/// (x, s0); deterministic per seed. Extra parameter halfspaces are honored by
/// rejection.
inline std::vector<double> sample_max(const ProblemFamily& family, int N,
                                      int K, unsigned seed) {
  if (N < 1) throw Error("sample_max: N must be >= 1");
  std::mt19937 rng(seed);
  auto draw_box = [&](const Vector& lo, const Vector& hi) {
    Vector v(lo.size());
    for (int i = 0; i < lo.size(); ++i) {
      if (lo(i) == hi(i)) {
        v(i) = lo(i);
      } else {
        std::uniform_real_distribution<double> u(lo(i), hi(i));
        v(i) = u(rng);
      }
    }
    return v;
  };
  std::vector<double> best(static_cast<size_t>(K), 0.0);
  for (int s = 0; s < N; ++s) {
    Vector x;
    int attempts = 0;
    for (;;) {
      x = draw_box(family.params.lower, family.params.upper);
      bool ok = true;
      for (const auto& [row, rhs] : family.params.extra_rows)
        ok = ok && row.dot(x) <= rhs + 1e-12;
      if (ok) break;
      if (++attempts > 10000)
        throw Error("sample_max: rejection sampling failed (thin parameter set)");
    }
    const Vector s0 = draw_box(family.init.lower, family.init.upper);
    const auto traj = simulate(family, x, s0, K);
    for (int k = 1; k <= K; ++k)
      best[static_cast<size_t>(k) - 1] =
          std::max(best[static_cast<size_t>(k) - 1],
                   residual_inf(traj, k, family.algorithm.layout));
  }
  return best;
}

/// The sequential driver. On a per-MILP time limit the certified best bound
/// stands in for delta_K (it is the sound value for the residual-decay
/// post-processing); any stage error aborts with the partial report kept.
inline VerificationReport run_sequential(const ProblemFamily& family,
                                         const VerifyConfig& cfg) {
  VerificationReport rep;
  {
    auto fd = fpv::validate(family);
    auto cd = validate(cfg);
    fd.insert(fd.end(), cd.begin(), cd.end());
    if (!fd.empty()) {
      rep.error = "invalid input: " + fd.front();
      return rep;
    }
  }
  const auto& layout = family.algorithm.layout;

  std::optional<TheoryParams> theory = cfg.theory;
  try {
    if (cfg.compute_R) {
      rep.R = compute_R(family, cfg.gap, cfg.time_limit_s);
      if (theory && theory->mode != TheoryParams::Mode::UserSequence)
        theory->R = *rep.R;
    }
    if (theory && theory->mode != TheoryParams::Mode::UserSequence &&
        !(theory->R > 0.0))
      throw Error("theory bounds need R > 0; enable compute_R or set it");
  } catch (const Error& e) {
    rep.error = e.what();
    return rep;
  }

  std::vector<double> samp;
  if (cfg.samples > 0)
    samp = sample_max(family, cfg.samples, cfg.Kmax, cfg.seed);

  IterBounds bounds = seed_bounds(family);
  std::vector<double> deltas;  // certified upper bounds, for post-processing
  std::vector<StoredCut> stored_cuts;
  std::optional<std::pair<Vector, Vector>> incumbent;  // (x, s0)

  for (int K = 1; K <= cfg.Kmax; ++K) {
    KReport kr;
    kr.K = K;
    if (static_cast<size_t>(K) < samp.size() + 1)
      kr.sample_max = samp[static_cast<size_t>(K) - 1];
    try {
      bounds = propagate_interval(family, K, bounds);
      if (theory) {
        const auto alphas = alpha_sequence(*theory, K);
        const StateBounds ot = theory_bounds(
            bounds.states[static_cast<size_t>(K) - 1],
            alphas[static_cast<size_t>(K) - 1], layout);
        auto comb = combine(bounds.states[static_cast<size_t>(K)], ot);
        bounds.states[static_cast<size_t>(K)] = comb.bounds;
        kr.frac_ot_tighter = comb.frac_b_tighter;
      }
      const double inf = std::numeric_limits<double>::infinity();
      Vector res_lo = Vector::Constant(layout.residual_dim(), -inf);
      Vector res_hi = Vector::Constant(layout.residual_dim(), inf);
      if (theory) {
        // alpha_k bounds the residual norm, hence every component.
        const double a =
            alpha_sequence(*theory, K)[static_cast<size_t>(K) - 1];
        res_lo.setConstant(-a);
        res_hi.setConstant(a);
      }
      if (cfg.obbt_enabled && cfg.obbt_rounds > 0) {
        const double t0 = detail::now_s();
        Vector olo, ohi;
        bounds = obbt_pass(family, K, std::move(bounds), stored_cuts,
                           cfg.obbt_rounds, cfg.time_limit_s, &olo, &ohi,
                           /*args_final_only=*/K > 1);
        res_lo = res_lo.cwiseMax(olo);
        res_hi = res_hi.cwiseMin(ohi);
        kr.obbt_time_s = detail::now_s() - t0;
      }

      auto enc = encoder::encode_vp(family, K, bounds, true, &res_lo, &res_hi);
      apply_stored_cuts(enc.model, enc.vm, stored_cuts);
      if (cfg.cut_mode != cutgen::CutMode::Off) {
        cutgen::CutLoopOptions co;
        co.mode = cfg.cut_mode;
        co.max_rounds = cfg.cut_rounds;
        co.lp_time_limit_s = cfg.time_limit_s;
        auto cl = cutgen::root_cut_loop(enc.model, enc.vm.queries, co);
        kr.cuts = cl.cuts_added;
        kr.cut_log = std::move(cl.log);
        if (cfg.reuse_cuts)
          for (const auto& [qi, cut] : cl.cuts)
            stored_cuts.push_back({enc.vm.queries[qi].step,
                                   enc.vm.queries[qi].component, cut});
      }
      if (incumbent) {
        std::string warn;
        if (auto ws = warm_start_extend(family, K, enc, incumbent->first,
                                        incumbent->second, &warn))
          enc.model.set_warm_start(*ws);
        else
          rep.warnings.push_back("K=" + std::to_string(K) + ": " + warn);
      }

      if (!cfg.dump_dir.empty()) {
        std::ofstream lp(cfg.dump_dir + "/vp_K" + std::to_string(K) + ".lp");
        if (!lp) throw Error("cannot write LP dump in " + cfg.dump_dir);
        enc.model.write_lp(lp);
      }

      milp::SolveOptions so;
      so.gap = cfg.gap;
      so.time_limit_s = cfg.time_limit_s;
      auto res = milp::solve(enc.model, so);
      kr.milp_time_s = res.wall_time_s;
      kr.status = milp::to_string(res.status);
      if (res.status != milp::SolveStatus::OptimalWithinGap &&
          res.status != milp::SolveStatus::TimeLimit)
        throw Error("MILP solve failed at K=" + std::to_string(K) + " (" +
                    kr.status + ")");
      kr.best_bound = res.best_bound;
      if (res.has_incumbent()) {
        Vector xv(static_cast<Eigen::Index>(enc.vm.x.size()));
        for (size_t i = 0; i < enc.vm.x.size(); ++i)
          xv(static_cast<Eigen::Index>(i)) =
              res.assignment[static_cast<size_t>(enc.vm.x[i].index)];
        Vector s0v(static_cast<Eigen::Index>(enc.vm.state[0].size()));
        for (size_t i = 0; i < enc.vm.state[0].size(); ++i)
          s0v(static_cast<Eigen::Index>(i)) =
              res.assignment[static_cast<size_t>(enc.vm.state[0][i].index)];
        // The solver's objective can overshoot the true residual by its
        // feasibility tolerance. Re-simulating the incumbent (snapped back
        // into its boxes) yields an exactly attained value instead.
        xv = xv.cwiseMax(family.params.lower).cwiseMin(family.params.upper);
        s0v = s0v.cwiseMax(family.init.lower).cwiseMin(family.init.upper);
        kr.delta = residual_inf(simulate(family, xv, s0v, K), K, layout);
        incumbent = {xv, s0v};
      } else {
        rep.warnings.push_back("K=" + std::to_string(K) +
                               ": no incumbent within the time limit; "
                               "reporting the certified bound only");
        incumbent.reset();
      }
      if (!std::isfinite(kr.best_bound))
        throw Error("no finite bound at K=" + std::to_string(K));
      deltas.push_back(kr.best_bound);
      bounds = postprocess_delta(bounds, deltas, layout);
    } catch (const Error& e) {
      if (kr.status.empty()) kr.status = "error";
      rep.per_k.push_back(kr);
      rep.error = e.what();
      return rep;
    }
    rep.per_k.push_back(kr);
  }
  if (cfg.keep_bounds) rep.final_bounds = std::move(bounds);
  return rep;
}

inline void write_csv(std::ostream& os, const VerificationReport& rep) {
  os << "K,delta,best_bound,status,milp_time_s,obbt_time_s,cuts,sample_max,"
        "frac_ot_tighter\n";
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  for (const auto& kr : rep.per_k) {
    os << kr.K << ',' << (std::isnan(kr.delta) ? "" : num(kr.delta)) << ','
       << (std::isnan(kr.best_bound) ? "" : num(kr.best_bound)) << ','
       << kr.status << ',' << num(kr.milp_time_s) << ',' << num(kr.obbt_time_s)
       << ',' << kr.cuts << ','
       << (kr.sample_max ? num(*kr.sample_max) : std::string()) << ','
       << num(kr.frac_ot_tighter) << '\n';
  }
}

}  // namespace fpv::verifier
