#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fpv/workbench.hpp"

using namespace fpv;
namespace wb = fpv::workbench;

namespace {

double lasso_objective(const Matrix& D, double lam, const Vector& z,
                       const Vector& x) {
  return 0.5 * (D * z - x).squaredNorm() + lam * z.lpNorm<1>();
}

/// Replays the generator's dictionary draw for oracle computations.
Matrix replay_dictionary(const wb::LassoOptions& opt) {
  std::mt19937 rng(opt.seed);
  return wb::detail::sample_dictionary(opt.p, opt.n, opt.density, rng);
}

int run_cli_args(std::vector<std::string> args) {
  args.insert(args.begin(), "fpverify");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return wb::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "fpv_wb_test";
  std::filesystem::create_directories(d);
  return d;
}

const char* kGradientFamilyJson = R"({
  "family": {
    "params": {"lower": [-1], "upper": [1]},
    "init": {"singleton": [0]},
    "slots": [{"name": "z", "dim": 1}],
    "residual_slots": ["z"],
    "stationary": true,
    "iterations": [[
      {"type": "affine", "B": [[0.5, -0.5]],
       "inputs": ["slot:z", "param"], "output": "z"}
    ]]
  },
  "verify": {"kmax": 3, "gap": 1e-9},
  "baseline": {"samples": 5, "seed": 1}
})";

}  // namespace

TEST_CASE("gen_lasso: deterministic in the seed, defaults validate") {
  wb::LassoOptions opt;
  opt.seed = 11;
  auto a = wb::gen_lasso(opt);
  auto b = wb::gen_lasso(opt);
  CHECK(validate(a).empty());
  CHECK(a.algorithm.iters[0].steps[0].B == b.algorithm.iters[0].steps[0].B);
  CHECK(a.params.lower == b.params.lower);
  CHECK(a.init.lower == b.init.lower);
  opt.seed = 12;
  CHECK(wb::gen_lasso(opt).algorithm.iters[0].steps[0].B !=
        a.algorithm.iters[0].steps[0].B);

  wb::LassoOptions sc;  // strongly convex setting
  sc.p = 20;
  sc.n = 15;
  CHECK(validate(wb::gen_lasso(sc)).empty());
}

TEST_CASE("gen_lasso: QP block identities") {
  wb::LassoOptions opt;
  opt.p = 4;
  opt.n = 6;
  opt.seed = 3;
  const Matrix D = replay_dictionary(opt);
  const auto qp = wb::lasso_qp(D, opt.lambda);
  const int n = opt.n;
  CHECK((qp.P.topLeftCorner(n, n) - D.transpose() * D).norm() < 1e-12);
  CHECK(qp.P.bottomRightCorner(n, n).norm() == 0.0);
  CHECK(qp.P.topRightCorner(n, n).norm() == 0.0);
  CHECK((qp.A.topLeftCorner(n, n) - Matrix::Identity(n, n)).norm() == 0.0);
  CHECK((qp.A.topRightCorner(n, n) + Matrix::Identity(n, n)).norm() == 0.0);
  CHECK((qp.A.bottomLeftCorner(n, n) + Matrix::Identity(n, n)).norm() == 0.0);
  CHECK((qp.A.bottomRightCorner(n, n) + Matrix::Identity(n, n)).norm() == 0.0);
  CHECK((qp.q_param.topRows(n) + D.transpose()).norm() < 1e-12);
  CHECK(qp.q_param.bottomRows(n).norm() == 0.0);
  CHECK(qp.q_const.head(n).norm() == 0.0);
  CHECK(qp.q_const.tail(n).isConstant(opt.lambda));
}

TEST_CASE("gen_lasso: ISTA descends the Lasso objective") {
  wb::LassoOptions opt;
  opt.p = 3;
  opt.n = 4;
  opt.lambda = 1e-2;
  opt.seed = 5;
  auto f = wb::gen_lasso(opt);
  const Matrix D = replay_dictionary(opt);
  const Vector x = 0.5 * (f.params.lower + f.params.upper);
  const auto traj = simulate(f, x, f.init.lower, 50);
  for (int k = 1; k <= 50; ++k)
    CHECK(lasso_objective(D, opt.lambda, traj[static_cast<size_t>(k)], x) <=
          lasso_objective(D, opt.lambda, traj[static_cast<size_t>(k) - 1], x) +
              1e-12);
  // Proximal-gradient residuals settle into a nonincreasing tail.
  for (int k = 10; k <= 50; ++k)
    CHECK(residual_inf(traj, k, f.algorithm.layout) <=
          residual_inf(traj, k - 1, f.algorithm.layout) + 1e-9);
}

TEST_CASE("gen_lasso: FISTA IR matches the two-sequence recursion") {
  wb::LassoOptions opt;
  opt.p = 3;
  opt.n = 4;
  opt.seed = 9;
  opt.kmax = 12;
  opt.variant = wb::LassoOptions::Variant::Fista;
  auto f = wb::gen_lasso(opt);
  REQUIRE(validate(f).empty());
  REQUIRE_FALSE(f.algorithm.stationary);
  REQUIRE(f.algorithm.iters.size() == 12);
  CHECK(f.algorithm.layout.residual_slots ==
        std::vector<std::string>{"z"});

  const Matrix D = replay_dictionary(opt);
  const Matrix G = D.transpose() * D;
  const double L =
      Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().maxCoeff();
  const double eta = 1.0 / L;
  const Vector x = f.params.upper;
  const auto traj = simulate(f, x, f.init.lower, 12);

  // Hand-rolled recursion: z_{k+1} = T(w_k), w_{k+1} = z_{k+1} + g_k dz.
  Vector z = f.init.lower.head(opt.n), w = z;
  double beta = 1.0;
  for (int k = 0; k < 12; ++k) {
    const Vector arg = (Matrix::Identity(opt.n, opt.n) - eta * G) * w +
                       eta * D.transpose() * x;
    Vector znew(opt.n);
    for (int i = 0; i < opt.n; ++i)
      znew(i) = soft_threshold(arg(i), opt.lambda * eta);
    const double beta_next =
        0.5 * (1.0 + std::sqrt(1.0 + 4.0 * beta * beta));
    w = znew + (beta - 1.0) / beta_next * (znew - z);
    beta = beta_next;
    z = znew;
    const Vector state = traj[static_cast<size_t>(k) + 1];
    CHECK((state.head(opt.n) - z).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((state.tail(opt.n) - w).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gen_network_flow: dimension identities and determinism") {
  wb::FlowOptions opt;
  opt.n_s = 3;
  opt.n_d = 2;
  opt.edge_prob = 1.0;  // full bipartite: n_e = 6, m = 17
  opt.seed = 2;
  auto f = wb::gen_network_flow(opt);
  REQUIRE(validate(f).empty());
  const auto& layout = f.algorithm.layout;
  CHECK(layout.slot_dim("z") == 6);
  CHECK(layout.slot_dim("w") == 17);
  const auto& dual = f.algorithm.iters[0].steps[0];
  CHECK(dual.output_dim == opt.n_s + opt.n_d + 2 * 6);
  auto g = wb::gen_network_flow(opt);
  CHECK(f.algorithm.iters[0].steps[0].B == g.algorithm.iters[0].steps[0].B);
  CHECK(f.init.lower == g.init.lower);
}

TEST_CASE("gen_network_flow: PDHG reaches an LP optimum") {
  wb::FlowOptions opt;
  opt.n_s = 2;
  opt.n_d = 2;
  opt.edge_prob = 1.0;
  opt.seed = 4;
  auto f = wb::gen_network_flow(opt);
  const int n_e = f.algorithm.layout.slot_dim("z");
  const int m = f.algorithm.layout.slot_dim("w");

  // The shipped s0 is the fixed point at maximum demand: one iteration
  // moves it by essentially nothing.
  const Vector xmax = f.params.lower;
  {
    const auto t = simulate(f, xmax, f.init.lower, 1);
    CHECK(residual_inf(t, 1, f.algorithm.layout) < 1e-8);
  }

  // At the other corner, iterate to convergence and compare with an LP
  // oracle on the primal flow.
  const Vector x = f.params.upper;
  Vector s = f.init.lower;
  double res = 1.0;
  for (int rounds = 0; rounds < 400 && res > 1e-11; ++rounds) {
    const auto t = simulate(f, x, s, 1000);
    s = t.back();
    res = residual_inf(t, 1000, f.algorithm.layout);
  }
  REQUIRE(res < 1e-9);
  const Vector flow = s.head(n_e);

  // Reconstruct the LP from the dual step: B = [I, eta A, -eta E].
  const auto& dual = f.algorithm.iters[0].steps[0];
  const double eta = dual.B(m - 1, m + n_e + opt.n_d - 1) * -1.0;
  const Matrix A = dual.B.block(0, m, m, n_e) / eta;
  const Vector b0 = -dual.offset / eta;
  const auto& primal = f.algorithm.iters[0].steps[1];
  const Vector mu = -primal.offset / eta;

  milp::MilpModel lp;
  std::vector<milp::VarId> fv;
  for (int e = 0; e < n_e; ++e)
    fv.push_back(lp.add_var(0.0, b0(n_e + e), milp::VarKind::Continuous));
  for (int r = 2 * n_e; r < m; ++r) {
    milp::LinExpr ex;
    for (int e = 0; e < n_e; ++e)
      if (A(r, e) != 0.0) ex.add(fv[static_cast<size_t>(e)], A(r, e));
    const bool demand_row = r >= 2 * n_e + opt.n_s;
    const double rhs =
        demand_row ? x(r - 2 * n_e - opt.n_s) : b0(r);
    lp.add_constr(ex, demand_row ? milp::Sense::EQ : milp::Sense::LE, rhs);
  }
  milp::LinExpr obj;
  for (int e = 0; e < n_e; ++e) obj.add(fv[static_cast<size_t>(e)], mu(e));
  lp.set_objective(obj, milp::ObjSense::Minimize);
  auto sol = milp::solve(lp, {});
  REQUIRE(sol.status == milp::SolveStatus::OptimalWithinGap);
  CHECK(mu.dot(flow) == Catch::Approx(sol.objective).margin(1e-4));
  CHECK((A.middleRows(2 * n_e + opt.n_s, opt.n_d) * flow - x)
            .cwiseAbs()
            .maxCoeff() < 1e-6);
  CHECK(flow.minCoeff() > -1e-8);
}

TEST_CASE("sample_max: identity gives zeros, N=1 is one simulation") {
  Step st;
  st.variant = Step::Variant::AffineExplicit;
  st.B = Matrix::Identity(2, 2);
  st.inputs = {InputRef::slot("z")};
  st.output = "z";
  st.output_dim = 2;
  ProblemFamily f;
  f.params.lower = Vector::Zero(1);
  f.params.upper = Vector::Ones(1);
  f.init = InitSet::box(Vector::Constant(2, -1.0), Vector::Ones(2));
  f.algorithm.layout.slots = {{"z", 2}};
  f.algorithm.layout.residual_slots = {"z"};
  Iteration it;
  it.steps = {st};
  f.algorithm.iters = {it};
  auto sm = wb::sample_max(f, 50, 4, 1);
  for (double v : sm) CHECK(v == 0.0);
}

TEST_CASE("run_cli: smoke run, epsilon gate, config errors") {
  const auto dir = temp_dir();
  const auto cfg = (dir / "grad.json").string();
  {
    std::ofstream out(cfg);
    out << kGradientFamilyJson;
  }
  const auto csv = (dir / "r.csv").string();
  const auto rj = (dir / "rep.json").string();

  CHECK(run_cli_args({"--config", cfg, "--out", csv}) == 0);
  {
    std::ifstream in(csv);
    std::string line;
    int rows = -1;  // header
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
  }

  // delta_3 = 0.125 certified; epsilon below it must fail with 3.
  CHECK(run_cli_args({"--config", cfg, "--out", csv, "--epsilon", "1e-3"}) ==
        3);
  CHECK(run_cli_args({"--config", cfg, "--out", csv, "--epsilon", "0.2"}) ==
        0);
  // kmax override: more rows.
  CHECK(run_cli_args({"--config", cfg, "--out", csv, "--kmax", "5"}) == 0);
  {
    std::ifstream in(csv);
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5);
  }

  const auto bad = (dir / "bad.json").string();
  {
    std::ofstream out(bad);
    out << "{ \"family\": [1,\n 2,, }";
  }
  CHECK(run_cli_args({"--config", bad, "--out", csv}) == 1);
  CHECK(run_cli_args({"--config", (dir / "missing.json").string()}) == 1);

  const auto badgen = (dir / "badgen.json").string();
  {
    std::ofstream out(badgen);
    out << R"({"generator": {"name": "nope"}})";
  }
  CHECK(run_cli_args({"--config", badgen, "--out", csv}) == 1);

  // Report JSON path via config.
  const auto cfg2 = (dir / "grad2.json").string();
  {
    nlohmann::json j = nlohmann::json::parse(kGradientFamilyJson);
    j["output"]["report_json"] = rj;
    std::ofstream out(cfg2);
    out << j.dump();
  }
  CHECK(run_cli_args({"--config", cfg2, "--out", csv}) == 0);
  {
    std::ifstream in(rj);
    REQUIRE(in.good());
    auto j = nlohmann::json::parse(in);
    REQUIRE(j["per_k"].size() == 3);
    CHECK(j["per_k"][2]["delta"].get<double>() ==
          Catch::Approx(0.125).margin(1e-7));
    CHECK(j["per_k"][0]["sample_max"].get<double>() <=
          j["per_k"][0]["delta"].get<double>() + 1e-9);
  }
}
