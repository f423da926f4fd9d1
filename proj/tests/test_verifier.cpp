#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "fpv/verifier.hpp"

using namespace fpv;

namespace {

ProblemFamily one_step_family(Step st, int state_dim, ParamSet params,
                              InitSet init) {
  ProblemFamily f;
  f.name = "test";
  f.params = std::move(params);
  f.init = std::move(init);
  f.algorithm.layout.slots = {{"z", state_dim}};
  f.algorithm.layout.residual_slots = {"z"};
  Iteration it;
  it.steps = {std::move(st)};
  f.algorithm.iters = {it};
  f.algorithm.stationary = true;
  return f;
}

/// z <- z (no parameters beyond a dummy scalar).
ProblemFamily identity_family() {
  Step st;
  st.variant = Step::Variant::AffineExplicit;
  st.B = Matrix::Identity(2, 2);
  st.inputs = {InputRef::slot("z")};
  st.output = "z";
  st.output_dim = 2;
  ParamSet ps;
  ps.lower = Vector::Zero(1);
  ps.upper = Vector::Zero(1);
  Vector lo(2), hi(2);
  lo << -1, -2;
  hi << 3, 2;
  return one_step_family(std::move(st), 2, std::move(ps),
                         InitSet::box(lo, hi));
}

/// z <- 0.5 z - 0.5 x, x in [-1, 1], z0 = 0. Residual decays as
/// 0.5 * 0.5^{K-1} exactly.
ProblemFamily gradient_family() {
  Step st;
  st.variant = Step::Variant::AffineExplicit;
  st.B.resize(1, 2);
  st.B << 0.5, -0.5;
  st.inputs = {InputRef::slot("z"), InputRef::param()};
  st.output = "z";
  st.output_dim = 1;
  ParamSet ps;
  ps.lower = Vector::Constant(1, -1.0);
  ps.upper = Vector::Constant(1, 1.0);
  return one_step_family(std::move(st), 1, std::move(ps),
                         InitSet::singleton(Vector::Zero(1)));
}

ProblemFamily ista_family(const Matrix& D, double lam, const Vector& xlo,
                          const Vector& xhi, InitSet init) {
  const int p = static_cast<int>(D.cols());
  const int n = static_cast<int>(D.rows());
  const Matrix G = D.transpose() * D;
  const double L = Eigen::SelfAdjointEigenSolver<Matrix>(G)
                       .eigenvalues()
                       .maxCoeff();
  const double eta = 1.0 / L;
  Step st;
  st.variant = Step::Variant::PiecewiseAffine;
  st.kind = PwaKind::SoftThreshold;
  st.lambda = eta * lam;
  st.B.resize(p, p + n);
  st.B << Matrix::Identity(p, p) - eta * G, eta * D.transpose();
  st.inputs = {InputRef::slot("z"), InputRef::param()};
  st.output = "z";
  st.output_dim = p;
  ParamSet ps;
  ps.lower = xlo;
  ps.upper = xhi;
  return one_step_family(std::move(st), p, std::move(ps), std::move(init));
}

ProblemFamily small_ista() {
  Matrix D(2, 2);
  D << 1.0, 0.3, 0.2, 0.9;
  Vector s0(2);
  s0 << 0.4, -0.3;
  return ista_family(D, 0.1, Vector::Constant(2, -0.5),
                     Vector::Constant(2, 0.5), InitSet::singleton(s0));
}

}  // namespace

TEST_CASE("run_sequential: identity map has zero residual at every K") {
  verifier::VerifyConfig cfg;
  cfg.Kmax = 3;
  cfg.gap = 1e-9;
  auto rep = verifier::run_sequential(identity_family(), cfg);
  REQUIRE(rep.ok());
  REQUIRE(rep.per_k.size() == 3);
  for (const auto& kr : rep.per_k) {
    CHECK(kr.delta == Catch::Approx(0.0).margin(1e-9));
    CHECK(kr.best_bound <= 1e-9);
    CHECK(kr.status == "optimal_within_gap");
  }
}

TEST_CASE("run_sequential: 1-d gradient matches the closed form") {
  verifier::VerifyConfig cfg;
  cfg.Kmax = 6;
  cfg.gap = 1e-9;
  auto rep = verifier::run_sequential(gradient_family(), cfg);
  REQUIRE(rep.ok());
  REQUIRE(rep.per_k.size() == 6);
  for (int K = 1; K <= 6; ++K) {
    const double expect = 0.5 * std::pow(0.5, K - 1);
    const auto& kr = rep.per_k[static_cast<size_t>(K) - 1];
    CHECK(kr.delta == Catch::Approx(expect).margin(1e-7));
    CHECK(kr.best_bound >= kr.delta - 1e-9);
    CHECK(kr.best_bound <= expect + 1e-6);
  }
}

TEST_CASE("run_sequential: sample lower bounds never exceed delta") {
  verifier::VerifyConfig cfg;
  cfg.Kmax = 4;
  cfg.gap = 1e-6;
  cfg.samples = 60;
  cfg.seed = 7;
  auto f = small_ista();
  auto rep = verifier::run_sequential(f, cfg);
  REQUIRE(rep.ok());
  for (const auto& kr : rep.per_k) {
    REQUIRE(kr.sample_max.has_value());
    CHECK(*kr.sample_max <= kr.best_bound + 1e-7);
    CHECK(*kr.sample_max <= kr.delta + 1e-7);
    CHECK(kr.delta >= 0.0);
  }
  // Determinism of the sampler.
  auto s1 = verifier::sample_max(f, 60, 4, 7);
  auto s2 = verifier::sample_max(f, 60, 4, 7);
  CHECK(s1 == s2);
}

TEST_CASE("run_sequential: collapsed family equals the simulated residual") {
  Matrix D(2, 2);
  D << 1.1, -0.2, 0.4, 0.8;
  Vector x(2), s0(2);
  x << 0.3, -0.2;
  s0 << 0.5, 0.5;
  auto f = ista_family(D, 0.05, x, x, InitSet::singleton(s0));
  verifier::VerifyConfig cfg;
  cfg.Kmax = 5;
  cfg.gap = 1e-9;
  auto rep = verifier::run_sequential(f, cfg);
  REQUIRE(rep.ok());
  const auto traj = simulate(f, x, s0, 5);
  for (int K = 1; K <= 5; ++K)
    CHECK(rep.per_k[static_cast<size_t>(K) - 1].delta ==
          Catch::Approx(residual_inf(traj, K, f.algorithm.layout))
              .margin(1e-6));
}

TEST_CASE("obbt_pass: never loosens and exploits parameter halfspaces") {
  // ReLU of x with the box allowing x up to 2 but a halfspace capping x <= 1.
  Step st;
  st.variant = Step::Variant::PiecewiseAffine;
  st.kind = PwaKind::Relu;
  st.B.resize(1, 1);
  st.B << 1.0;
  st.inputs = {InputRef::param()};
  st.output = "z";
  st.output_dim = 1;
  ParamSet ps;
  ps.lower = Vector::Constant(1, -1.0);
  ps.upper = Vector::Constant(1, 2.0);
  ps.extra_rows.push_back({Vector::Constant(1, 1.0), 1.0});  // x <= 1
  auto f = one_step_family(std::move(st), 1, std::move(ps),
                           InitSet::singleton(Vector::Zero(1)));

  auto iv = propagate_interval(f, 1, seed_bounds(f));
  REQUIRE(iv.states[1].upper(0) == Catch::Approx(2.0));  // box-only image
  auto tight = verifier::obbt_pass(f, 1, iv);
  CHECK(tight.states[1].upper(0) <= 1.0 + 1e-6);
  CHECK(tight.states[1].lower(0) >= -1e-6);
  CHECK(tight.args[1][0].hi(0) <= 1.0 + 1e-6);
  for (size_t k = 0; k < iv.states.size(); ++k)
    for (int i = 0; i < iv.states[k].dim(); ++i) {
      CHECK(tight.states[k].lower(i) >= iv.states[k].lower(i) - 1e-9);
      CHECK(tight.states[k].upper(i) <= iv.states[k].upper(i) + 1e-9);
    }
}

TEST_CASE("obbt_pass: fixed point of identity bounds left intact") {
  auto f = identity_family();
  auto iv = propagate_interval(f, 2, seed_bounds(f));
  auto tight = verifier::obbt_pass(f, 2, iv);
  for (int k : {1, 2})
    for (int i = 0; i < 2; ++i) {
      CHECK(tight.states[static_cast<size_t>(k)].lower(i) ==
            Catch::Approx(iv.states[static_cast<size_t>(k)].lower(i))
                .margin(1e-6));
      CHECK(tight.states[static_cast<size_t>(k)].upper(i) ==
            Catch::Approx(iv.states[static_cast<size_t>(k)].upper(i))
                .margin(1e-6));
    }
}

TEST_CASE("warm_start_extend: simulated starts pass, corrupted ones drop") {
  auto f = small_ista();
  const int K = 3;
  auto bounds = propagate_interval(f, K, seed_bounds(f));
  auto enc = encoder::encode_vp(f, K, bounds);
  Vector x(2);
  x << 0.25, -0.4;
  const Vector s0 = f.init.lower;

  std::string warn;
  auto ws = verifier::warm_start_extend(f, K, enc, x, s0, &warn);
  REQUIRE(ws.has_value());
  std::vector<double> full(static_cast<size_t>(enc.model.num_vars()), 0.0);
  for (const auto& [idx, v] : *ws) full[static_cast<size_t>(idx)] = v;
  CHECK(enc.model.infeasibility(full) <= 1e-7);

  Vector bad = x;
  bad(0) = 5.0;  // outside the parameter box
  auto dropped = verifier::warm_start_extend(f, K, enc, bad, s0, &warn);
  CHECK_FALSE(dropped.has_value());
  CHECK_FALSE(warn.empty());
}

TEST_CASE("compute_R: radius of the 1-d gradient family") {
  // Fixed point z* = -x over x in [-1, 1]; z0 = 0, so R = 1.
  auto f = gradient_family();
  f.fixed_point_box = {Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  CHECK(verifier::compute_R(f, 1e-9) == Catch::Approx(1.0).margin(1e-6));

  // Degenerate: everything pinned at the fixed point.
  auto g = gradient_family();
  g.params.lower.setZero();
  g.params.upper.setZero();
  g.fixed_point_box = {Vector::Zero(1), Vector::Zero(1)};
  CHECK(verifier::compute_R(g, 1e-9) == Catch::Approx(0.0).margin(1e-7));
}

TEST_CASE("run_sequential: contraction-based bounds stay sound") {
  auto f = gradient_family();
  f.fixed_point_box = {Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  verifier::VerifyConfig cfg;
  cfg.Kmax = 5;
  cfg.gap = 1e-9;
  cfg.compute_R = true;
  cfg.theory = TheoryParams::contractive(0.5, 0.0);  // R filled by compute_R
  auto rep = verifier::run_sequential(f, cfg);
  REQUIRE(rep.ok());
  REQUIRE(rep.R.has_value());
  CHECK(*rep.R == Catch::Approx(1.0).margin(1e-6));
  for (int K = 1; K <= 5; ++K) {
    const double expect = 0.5 * std::pow(0.5, K - 1);
    const auto& kr = rep.per_k[static_cast<size_t>(K) - 1];
    CHECK(kr.delta == Catch::Approx(expect).margin(1e-7));
    CHECK(kr.frac_ot_tighter >= 0.0);
    CHECK(kr.frac_ot_tighter <= 1.0);
  }

  // Theory mode without a radius is rejected rather than silently unsound.
  verifier::VerifyConfig bad = cfg;
  bad.compute_R = false;
  auto rep2 = verifier::run_sequential(f, bad);
  CHECK_FALSE(rep2.ok());
}

TEST_CASE("run_sequential: invalid config reported, partial report kept") {
  verifier::VerifyConfig cfg;
  cfg.Kmax = 0;
  auto rep = verifier::run_sequential(gradient_family(), cfg);
  CHECK_FALSE(rep.ok());
  CHECK(rep.per_k.empty());
}

TEST_CASE("write_csv: one header plus one row per K") {
  verifier::VerifyConfig cfg;
  cfg.Kmax = 2;
  cfg.gap = 1e-6;
  cfg.samples = 10;
  auto rep = verifier::run_sequential(gradient_family(), cfg);
  REQUIRE(rep.ok());
  std::ostringstream os;
  verifier::write_csv(os, rep);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line ==
        "K,delta,best_bound,status,milp_time_s,obbt_time_s,cuts,sample_max,"
        "frac_ot_tighter");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    CHECK(line.substr(0, 2) == std::to_string(rows) + ",");
  }
  CHECK(rows == 2);
}

TEST_CASE("run_sequential: cut reuse keeps results identical here") {
  auto f = small_ista();
  verifier::VerifyConfig cfg;
  cfg.Kmax = 3;
  cfg.gap = 1e-7;
  auto a = verifier::run_sequential(f, cfg);
  cfg.reuse_cuts = true;
  auto b = verifier::run_sequential(f, cfg);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  for (int K = 0; K < 3; ++K)
    CHECK(a.per_k[static_cast<size_t>(K)].delta ==
          Catch::Approx(b.per_k[static_cast<size_t>(K)].delta).margin(1e-5));
}
