#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpv/verifier.hpp"

namespace fpv::workbench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment generators for the two shipped problem families (sparse-coding
// Lasso and min-cost network flow), JSON configuration, and the CLI driver.
// ---------------------------------------------------------------------------

struct StepSizeRule {
  enum class Kind { InvLipschitz, HalfInvSpecNorm, Fixed };
  Kind kind = Kind::InvLipschitz;
  double eta = 0.0;  // Fixed only

  static StepSizeRule inv_lipschitz() { return {Kind::InvLipschitz, 0.0}; }
  static StepSizeRule half_inv_specnorm() {
    return {Kind::HalfInvSpecNorm, 0.0};
  }
  static StepSizeRule fixed(double eta) { return {Kind::Fixed, eta}; }
};

inline double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  const Matrix G = A.transpose() * A;
  const double l = Eigen::SelfAdjointEigenSolver<Matrix>(G)
                       .eigenvalues()
                       .maxCoeff();
  return std::sqrt(std::max(l, 0.0));
}

// --------------------------------- Lasso ----------------------------------

struct LassoOptions {
  int p = 15;
  int n = 20;
  double lambda = 1e-2;
  double density = 0.2;     // fraction of nonzero dictionary entries
  double noise_std = 0.01;  // free parameter of the signal model
  unsigned seed = 0;
  enum class Variant { Ista, Fista } variant = Variant::Ista;
  StepSizeRule eta = StepSizeRule::inv_lipschitz();
  int kmax = 60;  // precomputed momentum schedule length (Fista only)
};

/// QP form of the Lasso: variables (z, mu), objective
/// 0.5 v'Pv + q(x)'v with the constraint cone on A v.
struct LassoQp {
  Matrix P;        // blkdiag(D'D, 0)
  Matrix A;        // [[I, -I], [-I, -I]]
  Matrix q_param;  // q(x) = q_param x + q_const
  Vector q_const;
};

inline LassoQp lasso_qp(const Matrix& D, double lambda) {
  const int n = static_cast<int>(D.cols());
  LassoQp qp;
  qp.P = Matrix::Zero(2 * n, 2 * n);
  qp.P.topLeftCorner(n, n) = D.transpose() * D;
  qp.A = Matrix::Zero(2 * n, 2 * n);
  qp.A.topLeftCorner(n, n) = Matrix::Identity(n, n);
  qp.A.topRightCorner(n, n) = -Matrix::Identity(n, n);
  qp.A.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  qp.A.bottomRightCorner(n, n) = -Matrix::Identity(n, n);
  qp.q_param = Matrix::Zero(2 * n, static_cast<int>(D.rows()));
  qp.q_param.topRows(n) = -D.transpose();
  qp.q_const = Vector::Zero(2 * n);
  qp.q_const.tail(n).setConstant(lambda);
  return qp;
}

namespace detail {

inline Matrix sample_dictionary(int p, int n, double density,
                                std::mt19937& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(p)));
  std::bernoulli_distribution keep(density);
  Matrix D = Matrix::Zero(p, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < p; ++i)
      if (keep(rng)) D(i, j) = gauss(rng);
    if (D.col(j).norm() < 1e-12) D(j % p, j) = gauss(rng);  // no dead atoms
    D.col(j) /= D.col(j).norm();
  }
  return D;
}

/// Tightest axis-aligned hypercube (equal side lengths) containing columns
/// of S: per-coordinate centers, common half-width.
inline std::pair<Vector, Vector> tightest_hypercube(const Matrix& S) {
  const Vector lo = S.rowwise().minCoeff();
  const Vector hi = S.rowwise().maxCoeff();
  const double half = 0.5 * (hi - lo).maxCoeff();
  const Vector c = 0.5 * (lo + hi);
  return {Vector(c.array() - half), Vector(c.array() + half)};
}

inline double resolve_eta(const StepSizeRule& rule, double lipschitz,
                          double specnorm) {
  switch (rule.kind) {
    case StepSizeRule::Kind::InvLipschitz: return 1.0 / lipschitz;
    case StepSizeRule::Kind::HalfInvSpecNorm: return 0.5 / specnorm;
    case StepSizeRule::Kind::Fixed:
      if (!(rule.eta > 0.0)) throw Error("fixed step size must be > 0");
      return rule.eta;
  }
  throw Error("unreachable");
}

}  // namespace detail

/// Proximal gradient (and its accelerated variant) on
/// 0.5 |Dz - x|^2 + lambda |z|_1 over a sampled dictionary, with X the
/// tightest hypercube around 100 sampled signals and s0 the unregularized
/// solution of one sample.
inline ProblemFamily gen_lasso(const LassoOptions& opt) {
  if (opt.p < 1 || opt.n < 1) throw Error("gen_lasso: p, n must be >= 1");
  if (!(opt.lambda > 0.0)) throw Error("gen_lasso: lambda must be > 0");
  if (!(opt.density > 0.0 && opt.density <= 1.0))
    throw Error("gen_lasso: density must be in (0, 1]");
  std::mt19937 rng(opt.seed);
  const Matrix D = detail::sample_dictionary(opt.p, opt.n, opt.density, rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution active(0.1);
  std::normal_distribution<double> noise(0.0, opt.noise_std);
  Matrix samples(opt.p, 100);
  for (int s = 0; s < 100; ++s) {
    Vector zstar = Vector::Zero(opt.n);
    for (int i = 0; i < opt.n; ++i) {
      const double g = gauss(rng);  // always drawn: keeps the stream aligned
      if (active(rng)) zstar(i) = g;
    }
    Vector x = D * zstar;
    for (int i = 0; i < opt.p; ++i) x(i) += noise(rng);
    samples.col(s) = x;
  }
  auto [xlo, xhi] = detail::tightest_hypercube(samples);

  // Unregularized solution (minimum-norm least squares) of the first sample.
  const Vector z0 =
      D.completeOrthogonalDecomposition().solve(samples.col(0));

  const Matrix G = D.transpose() * D;
  const double L =
      Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().maxCoeff();
  const double eta = detail::resolve_eta(opt.eta, L, std::sqrt(L));

  ProblemFamily f;
  f.params.lower = xlo;
  f.params.upper = xhi;

  auto prox_step = [&](const std::vector<InputRef>& inputs) {
    Step st;
    st.variant = Step::Variant::PiecewiseAffine;
    st.kind = PwaKind::SoftThreshold;
    st.lambda = opt.lambda * eta;
    st.B.resize(opt.n, opt.n + opt.p);
    st.B << Matrix::Identity(opt.n, opt.n) - eta * G, eta * D.transpose();
    st.inputs = inputs;
    st.output = "z";
    st.output_dim = opt.n;
    return st;
  };

  if (opt.variant == LassoOptions::Variant::Ista) {
    f.name = "lasso_ista";
    f.init = InitSet::singleton(z0);
    f.algorithm.layout.slots = {{"z", opt.n}};
    f.algorithm.layout.residual_slots = {"z"};
    Iteration it;
    it.steps = {prox_step({InputRef::slot("z"), InputRef::param()})};
    f.algorithm.iters = {it};
    f.algorithm.stationary = true;
    return f;
  }

  // Accelerated variant: auxiliary slot w with w0 = z0, momentum weights
  // (beta_k - 1) / beta_{k+1}, beta_{k+1} = (1 + sqrt(1 + 4 beta_k^2)) / 2.
  f.name = "lasso_fista";
  Vector s0(2 * opt.n);
  s0 << z0, z0;
  f.init = InitSet::singleton(s0);
  f.algorithm.layout.slots = {{"z", opt.n}, {"w", opt.n}};
  f.algorithm.layout.residual_slots = {"z"};
  f.algorithm.stationary = false;
  double beta = 1.0;
  for (int k = 0; k < opt.kmax; ++k) {
    const double beta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * beta * beta));
    const double g = (beta - 1.0) / beta_next;
    beta = beta_next;
    Iteration it;
    it.steps.push_back(prox_step({InputRef::slot("w"), InputRef::param()}));
    Step mom;
    mom.variant = Step::Variant::AffineExplicit;
    mom.B.resize(opt.n, 2 * opt.n);
    mom.B << (1.0 + g) * Matrix::Identity(opt.n, opt.n),
        -g * Matrix::Identity(opt.n, opt.n);
    mom.inputs = {InputRef::out("z"), InputRef::slot("z")};
    mom.output = "w";
    mom.output_dim = opt.n;
    it.steps.push_back(std::move(mom));
    f.algorithm.iters.push_back(std::move(it));
  }
  return f;
}

// ------------------------------ Network flow ------------------------------

struct FlowOptions {
  int n_s = 10;
  int n_d = 5;
  double edge_prob = 0.5;
  double supply = 10.0;    // b_s, per node
  double capacity = 4.0;   // h, per edge
  double cost_lo = 5.0, cost_hi = 10.0;
  double demand_lo = -7.0, demand_hi = -5.0;
  unsigned seed = 0;
  enum class Variant { Pdhg, PdhgMomentum } variant = Variant::Pdhg;
  StepSizeRule eta = StepSizeRule::half_inv_specnorm();
  int kmax = 60;           // momentum schedule length (momentum only)
  long s0_iters = 2000000; // cap for the initial-point fixed-point run
};

namespace detail {

struct FlowData {
  Matrix A;    // [-I; I; A_s; A_d], m x n_e
  Vector b0;   // (0, c, b_s, 0); demands enter the last n_d rows
  Vector mu;   // edge costs
  int n_e = 0;
};

/// One bipartite graph draw plus the LP data; empty A when no edges.
inline FlowData sample_flow(const FlowOptions& opt, std::mt19937& rng) {
  std::bernoulli_distribution edge(opt.edge_prob);
  std::uniform_real_distribution<double> cost(opt.cost_lo, opt.cost_hi);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < opt.n_s; ++i)
    for (int j = 0; j < opt.n_d; ++j)
      if (edge(rng)) edges.push_back({i, j});
  FlowData fd;
  fd.n_e = static_cast<int>(edges.size());
  const int m = opt.n_s + opt.n_d + 2 * fd.n_e;
  fd.A = Matrix::Zero(m, fd.n_e);
  fd.b0 = Vector::Zero(m);
  fd.mu = Vector::Zero(fd.n_e);
  for (int e = 0; e < fd.n_e; ++e) {
    fd.A(e, e) = -1.0;                                 // -f <= 0
    fd.A(fd.n_e + e, e) = 1.0;                         // f <= c
    fd.A(2 * fd.n_e + edges[static_cast<size_t>(e)].first, e) = 1.0;
    fd.A(2 * fd.n_e + opt.n_s + edges[static_cast<size_t>(e)].second, e) =
        -1.0;                                          // flow enters demand
    fd.b0(fd.n_e + e) = opt.capacity;
    fd.mu(e) = cost(rng);
  }
  for (int i = 0; i < opt.n_s; ++i) fd.b0(2 * fd.n_e + i) = opt.supply;
  return fd;
}

/// Feasibility of the max-demand instance (every family member is feasible
/// iff this one is).
inline bool flow_feasible(const FlowOptions& opt, const FlowData& fd) {
  if (fd.n_e == 0) return false;
  milp::MilpModel m;
  std::vector<milp::VarId> fvar;
  for (int e = 0; e < fd.n_e; ++e)
    fvar.push_back(m.add_var(0.0, opt.capacity, milp::VarKind::Continuous));
  for (int i = 0; i < opt.n_s; ++i) {
    milp::LinExpr ex;
    for (int e = 0; e < fd.n_e; ++e)
      if (fd.A(2 * fd.n_e + i, e) != 0.0)
        ex.add(fvar[static_cast<size_t>(e)], fd.A(2 * fd.n_e + i, e));
    m.add_constr(ex, milp::Sense::LE, opt.supply);
  }
  for (int j = 0; j < opt.n_d; ++j) {
    milp::LinExpr ex;
    for (int e = 0; e < fd.n_e; ++e)
      if (fd.A(2 * fd.n_e + opt.n_s + j, e) != 0.0)
        ex.add(fvar[static_cast<size_t>(e)], fd.A(2 * fd.n_e + opt.n_s + j, e));
    m.add_constr(ex, milp::Sense::EQ, opt.demand_lo);  // maximum demand
  }
  milp::LinExpr obj;
  for (int e = 0; e < fd.n_e; ++e)
    obj.add(fvar[static_cast<size_t>(e)], fd.mu(e));
  m.set_objective(obj, milp::ObjSense::Minimize);
  return milp::solve(m, {}).status == milp::SolveStatus::OptimalWithinGap;
}

}  // namespace detail

/// Primal-dual hybrid gradient (optionally with momentum) on a random
/// capacitated bipartite min-cost flow LP with box-parameterized demands.
/// The graph is resampled deterministically until the max-demand instance is
/// feasible. s0 is the fixed point at maximum demand, found by running the
/// plain iteration to convergence.
inline ProblemFamily gen_network_flow(const FlowOptions& opt) {
  if (opt.n_s < 1 || opt.n_d < 1)
    throw Error("gen_network_flow: n_s, n_d must be >= 1");
  if (!(opt.demand_lo <= opt.demand_hi && opt.demand_hi <= 0.0))
    throw Error("gen_network_flow: demand box must satisfy lo <= hi <= 0");
  std::mt19937 rng(opt.seed);
  detail::FlowData fd;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    fd = detail::sample_flow(opt, rng);
    ok = detail::flow_feasible(opt, fd);
  }
  if (!ok)
    throw Error("gen_network_flow: no feasible graph in 100 draws "
                "(demands too large for the supplies/capacities?)");

  const int n_e = fd.n_e;
  const int m = opt.n_s + opt.n_d + 2 * n_e;
  const double snorm = spectral_norm(fd.A);
  const double eta = detail::resolve_eta(opt.eta, snorm, snorm);

  // Demand entries x land in the last n_d rows of b(x) = b0 + E x.
  Matrix E = Matrix::Zero(m, opt.n_d);
  E.bottomRows(opt.n_d) = Matrix::Identity(opt.n_d, opt.n_d);

  ProblemFamily f;
  f.name = opt.variant == FlowOptions::Variant::Pdhg ? "flow_pdhg"
                                                     : "flow_pdhg_momentum";
  f.params.lower = Vector::Constant(opt.n_d, opt.demand_lo);
  f.params.upper = Vector::Constant(opt.n_d, opt.demand_hi);
  f.algorithm.layout.slots = {{"z", n_e}, {"w", m}};
  f.algorithm.layout.residual_slots = {"z", "w"};

  // Dual step: w <- max(w - eta (b0 + E x - A z), 0).
  Step dual;
  dual.variant = Step::Variant::PiecewiseAffine;
  dual.kind = PwaKind::Relu;
  dual.B.resize(m, m + n_e + opt.n_d);
  dual.B << Matrix::Identity(m, m), eta * fd.A, -eta * E;
  dual.offset = -eta * fd.b0;
  dual.inputs = {InputRef::slot("w"), InputRef::slot("z"), InputRef::param()};
  dual.output = "w";
  dual.output_dim = m;

  // Primal step: z <- z - eta (A'(2 w~ - w) + mu), with w~ the momentum
  // extrapolation substituted in (g = 0 recovers the plain update).
  auto primal_step = [&](double g) {
    Step st;
    st.variant = Step::Variant::AffineExplicit;
    st.B.resize(n_e, n_e + 2 * m);
    st.B << Matrix::Identity(n_e, n_e),
        -2.0 * eta * (1.0 + g) * fd.A.transpose(),
        eta * (1.0 + 2.0 * g) * fd.A.transpose();
    st.offset = -eta * fd.mu;
    st.inputs = {InputRef::slot("z"), InputRef::out("w"), InputRef::slot("w")};
    st.output = "z";
    st.output_dim = n_e;
    return st;
  };

  if (opt.variant == FlowOptions::Variant::Pdhg) {
    Iteration it;
    it.steps = {dual, primal_step(0.0)};
    f.algorithm.iters = {std::move(it)};
    f.algorithm.stationary = true;
  } else {
    f.algorithm.stationary = false;
    for (int k = 0; k < opt.kmax; ++k) {
      Iteration it;
      it.steps = {dual, primal_step(double(k) / double(k + 3))};
      f.algorithm.iters.push_back(std::move(it));
    }
  }

  // Initial point: plain-PDHG fixed point at maximum demand.
  {
    ProblemFamily plain = f;
    plain.algorithm.stationary = true;
    Iteration it;
    it.steps = {dual, primal_step(0.0)};
    plain.algorithm.iters = {std::move(it)};
    const Vector xmax = Vector::Constant(opt.n_d, opt.demand_lo);
    Vector s = Vector::Zero(n_e + m);
    plain.init = InitSet::singleton(s);
    double res = std::numeric_limits<double>::infinity();
    const int chunk = 1000;
    for (long done = 0; done < opt.s0_iters && res > 1e-10; done += chunk) {
      const auto traj = simulate(plain, xmax, s, chunk);
      s = traj.back();
      res = residual_inf(traj, chunk, plain.algorithm.layout);
    }
    if (res > 1e-6)
      throw Error("gen_network_flow: initial-point iteration did not "
                  "converge (residual " + std::to_string(res) + ")");
    f.init = InitSet::singleton(s);
  }
  return f;
}

inline std::vector<double> sample_max(const ProblemFamily& family, int N,
                                      int K, unsigned seed) {
  return verifier::sample_max(family, N, K, seed);
}

// ------------------------------ Configuration -----------------------------

struct OutputPaths {
  std::string results_csv;  // empty -> stdout
  std::string cuts_csv;
  std::string bounds_json;
  std::string report_json;
};

struct ExperimentConfig {
  ProblemFamily family;
  verifier::VerifyConfig verify;
  OutputPaths out;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Vector to_vector(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix to_matrix(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Matrix(0, 0);
  const auto cols = j[0].size();
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw Error("ragged matrix in config");
    for (size_t k = 0; k < cols; ++k)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          j[i][k].get<double>();
  }
  return M;
}

inline InputRef parse_input(const json& j) {
  const std::string s = j.get<std::string>();
  if (s == "param") return InputRef::param();
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw Error("input must be 'param', 'slot:NAME', 'out:NAME', or "
                "'init:NAME' (got '" + s + "')");
  const std::string kind = s.substr(0, colon), name = s.substr(colon + 1);
  if (kind == "slot") return InputRef::slot(name);
  if (kind == "out") return InputRef::out(name);
  if (kind == "init") return InputRef::init(name);
  throw Error("unknown input kind '" + kind + "'");
}

inline Step parse_step(const json& j) {
  Step st;
  const std::string type = j.at("type").get<std::string>();
  if (type == "affine") {
    st.variant = Step::Variant::AffineExplicit;
  } else if (type == "affine_implicit") {
    st.variant = Step::Variant::AffineImplicit;
    st.M = to_matrix(j.at("M"));
  } else if (type == "soft_threshold") {
    st.variant = Step::Variant::PiecewiseAffine;
    st.kind = PwaKind::SoftThreshold;
    st.lambda = j.at("lambda").get<double>();
  } else if (type == "relu") {
    st.variant = Step::Variant::PiecewiseAffine;
    st.kind = PwaKind::Relu;
  } else if (type == "satlin") {
    st.variant = Step::Variant::PiecewiseAffine;
    st.kind = PwaKind::SatLin;
    st.sat_lo = to_vector(j.at("sat_lo"));
    st.sat_hi = to_vector(j.at("sat_hi"));
  } else {
    throw Error("unknown step type '" + type + "'");
  }
  st.B = to_matrix(j.at("B"));
  if (j.contains("offset")) st.offset = to_vector(j["offset"]);
  for (const auto& in : j.at("inputs")) st.inputs.push_back(parse_input(in));
  st.output = j.at("output").get<std::string>();
  st.output_dim = static_cast<int>(st.B.rows());
  return st;
}

inline ProblemFamily parse_family(const json& j) {
  ProblemFamily f;
  f.name = j.value("name", "inline");
  const auto& pj = j.at("params");
  f.params.lower = to_vector(pj.at("lower"));
  f.params.upper = to_vector(pj.at("upper"));
  if (pj.contains("extra_rows"))
    for (const auto& r : pj["extra_rows"])
      f.params.extra_rows.push_back(
          {to_vector(r.at("row")), r.at("rhs").get<double>()});
  const auto& ij = j.at("init");
  if (ij.contains("singleton")) {
    f.init = InitSet::singleton(to_vector(ij["singleton"]));
  } else {
    f.init = InitSet::box(to_vector(ij.at("lower")), to_vector(ij.at("upper")));
  }
  for (const auto& s : j.at("slots"))
    f.algorithm.layout.slots.push_back(
        {s.at("name").get<std::string>(), s.at("dim").get<int>()});
  for (const auto& r : j.at("residual_slots"))
    f.algorithm.layout.residual_slots.push_back(r.get<std::string>());
  f.algorithm.stationary = j.value("stationary", true);
  for (const auto& itj : j.at("iterations")) {
    Iteration it;
    for (const auto& sj : itj) it.steps.push_back(parse_step(sj));
    f.algorithm.iters.push_back(std::move(it));
  }
  if (j.contains("fixed_point_box"))
    f.fixed_point_box = {to_vector(j["fixed_point_box"].at("lower")),
                         to_vector(j["fixed_point_box"].at("upper"))};
  return f;
}

inline StepSizeRule parse_step_size(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inv_lipschitz") return StepSizeRule::inv_lipschitz();
    if (s == "half_inv_specnorm") return StepSizeRule::half_inv_specnorm();
    throw Error("unknown step_size '" + s + "'");
  }
  if (j.is_object() && j.contains("fixed"))
    return StepSizeRule::fixed(j["fixed"].get<double>());
  throw Error("step_size must be a preset name or {\"fixed\": eta}");
}

inline cutgen::CutMode parse_cut_mode(const std::string& s) {
  if (s == "per_component") return cutgen::CutMode::PerComponent;
  if (s == "global_one") return cutgen::CutMode::GlobalOne;
  if (s == "off") return cutgen::CutMode::Off;
  throw Error("cut-mode must be per_component, global_one, or off");
}

inline TheoryParams parse_theory_json(const json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "contractive")
    return TheoryParams::contractive(j.at("beta").get<double>(),
                                     j.value("R", 0.0));
  if (mode == "averaged")
    return TheoryParams::averaged(j.at("D").get<double>(),
                                  j.at("q").get<double>(), j.value("R", 0.0));
  if (mode == "user") {
    std::vector<double> alpha;
    for (const auto& a : j.at("alpha")) alpha.push_back(a.get<double>());
    return TheoryParams::user(std::move(alpha));
  }
  throw Error("theory mode must be contractive, averaged, or user");
}

/// CLI `--theory` syntax: none | contractive:BETA | averaged:D:Q | user:FILE.
inline std::optional<TheoryParams> parse_theory_flag(const std::string& s) {
  if (s == "none") return std::nullopt;
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.size() == 2 && parts[0] == "contractive")
    return TheoryParams::contractive(std::stod(parts[1]), 0.0);
  if (parts.size() == 3 && parts[0] == "averaged")
    return TheoryParams::averaged(std::stod(parts[1]), std::stod(parts[2]),
                                  0.0);
  if (parts.size() == 2 && parts[0] == "user") {
    std::ifstream in(parts[1]);
    if (!in) throw Error("cannot open alpha file " + parts[1]);
    std::vector<double> alpha;
    double a;
    while (in >> a) alpha.push_back(a);
    if (alpha.empty()) throw Error("alpha file " + parts[1] + " is empty");
    return TheoryParams::user(std::move(alpha));
  }
  throw Error("--theory must be none, contractive:BETA, averaged:D:Q, or "
              "user:FILE");
}

inline ProblemFamily dispatch_generator(const json& g, const json& alg) {
  const std::string name = g.at("name").get<std::string>();
  const std::string aname =
      alg.is_null() ? std::string() : alg.value("name", std::string());
  if (name == "lasso") {
    LassoOptions opt;
    opt.p = g.value("p", opt.p);
    opt.n = g.value("n", opt.n);
    opt.lambda = g.value("lambda", opt.lambda);
    opt.density = g.value("density", opt.density);
    opt.noise_std = g.value("noise_std", opt.noise_std);
    opt.seed = g.value("seed", opt.seed);
    opt.kmax = g.value("kmax", opt.kmax);
    if (aname == "fista") opt.variant = LassoOptions::Variant::Fista;
    else if (!aname.empty() && aname != "ista")
      throw Error("lasso supports algorithms ista and fista");
    if (!alg.is_null() && alg.contains("step_size"))
      opt.eta = parse_step_size(alg["step_size"]);
    return gen_lasso(opt);
  }
  if (name == "network_flow") {
    FlowOptions opt;
    opt.n_s = g.value("n_s", opt.n_s);
    opt.n_d = g.value("n_d", opt.n_d);
    opt.edge_prob = g.value("edge_prob", opt.edge_prob);
    opt.supply = g.value("supply", opt.supply);
    opt.capacity = g.value("capacity", opt.capacity);
    opt.cost_lo = g.value("cost_lo", opt.cost_lo);
    opt.cost_hi = g.value("cost_hi", opt.cost_hi);
    opt.demand_lo = g.value("demand_lo", opt.demand_lo);
    opt.demand_hi = g.value("demand_hi", opt.demand_hi);
    opt.seed = g.value("seed", opt.seed);
    opt.kmax = g.value("kmax", opt.kmax);
    if (aname == "pdhg_momentum")
      opt.variant = FlowOptions::Variant::PdhgMomentum;
    else if (!aname.empty() && aname != "pdhg")
      throw Error("network_flow supports algorithms pdhg and pdhg_momentum");
    if (!alg.is_null() && alg.contains("step_size"))
      opt.eta = parse_step_size(alg["step_size"]);
    return gen_network_flow(opt);
  }
  throw Error("unknown generator '" + name + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  const json alg = j.contains("algorithm") ? j["algorithm"] : json();
  if (j.contains("generator") == j.contains("family"))
    throw Error("config needs exactly one of 'generator' or 'family'");
  if (j.contains("generator"))
    cfg.family = detail::dispatch_generator(j["generator"], alg);
  else
    cfg.family = detail::parse_family(j["family"]);

  if (j.contains("verify")) {
    const json& v = j["verify"];
    cfg.verify.Kmax = v.value("kmax", cfg.verify.Kmax);
    cfg.verify.gap = v.value("gap", cfg.verify.gap);
    cfg.verify.time_limit_s = v.value("time_limit_s", cfg.verify.time_limit_s);
    cfg.verify.obbt_rounds = v.value("obbt_rounds", cfg.verify.obbt_rounds);
    cfg.verify.obbt_enabled = v.value("obbt", cfg.verify.obbt_enabled);
    if (v.contains("cut_mode"))
      cfg.verify.cut_mode =
          detail::parse_cut_mode(v["cut_mode"].get<std::string>());
    cfg.verify.cut_rounds = v.value("cut_rounds", cfg.verify.cut_rounds);
    cfg.verify.compute_R = v.value("compute_R", cfg.verify.compute_R);
    cfg.verify.reuse_cuts = v.value("reuse_cuts", cfg.verify.reuse_cuts);
    if (v.contains("theory") && !v["theory"].is_null())
      cfg.verify.theory = detail::parse_theory_json(v["theory"]);
    cfg.epsilon = v.value("epsilon", cfg.epsilon);
  }
  if (j.contains("baseline")) {
    cfg.verify.samples = j["baseline"].value("samples", 0);
    cfg.verify.seed = j["baseline"].value("seed", 0u);
    if (j["baseline"].contains("samples") && cfg.verify.samples < 1)
      throw Error("baseline samples must be >= 1");
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    cfg.out.results_csv = o.value("results_csv", std::string());
    cfg.out.cuts_csv = o.value("cuts_csv", std::string());
    cfg.out.bounds_json = o.value("bounds_json", std::string());
    cfg.out.report_json = o.value("report_json", std::string());
  }
  return cfg;
}

inline json report_to_json(const verifier::VerificationReport& rep) {
  json j;
  j["per_k"] = json::array();
  for (const auto& kr : rep.per_k) {
    json e;
    e["K"] = kr.K;
    if (!std::isnan(kr.delta)) e["delta"] = kr.delta;
    if (!std::isnan(kr.best_bound)) e["best_bound"] = kr.best_bound;
    e["status"] = kr.status;
    e["milp_time_s"] = kr.milp_time_s;
    e["obbt_time_s"] = kr.obbt_time_s;
    e["cuts"] = kr.cuts;
    if (kr.sample_max) e["sample_max"] = *kr.sample_max;
    e["frac_ot_tighter"] = kr.frac_ot_tighter;
    j["per_k"].push_back(std::move(e));
  }
  if (rep.R) j["R"] = *rep.R;
  j["warnings"] = rep.warnings;
  if (!rep.error.empty()) j["error"] = rep.error;
  return j;
}

inline json bounds_to_json(const IterBounds& b) {
  json j;
  j["states"] = json::array();
  for (const auto& s : b.states) {
    json e;
    e["lower"] = std::vector<double>(s.lower.data(), s.lower.data() + s.dim());
    e["upper"] = std::vector<double>(s.upper.data(), s.upper.data() + s.dim());
    j["states"].push_back(std::move(e));
  }
  return j;
}

namespace detail {

inline std::pair<int, int> line_col(const std::string& text, size_t byte) {
  int line = 1, col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) return false;
  out << content;
  return true;
}

}  // namespace detail

/// Exit codes: 0 success, 1 configuration error, 2 solver/runtime error,
/// 3 when the certified residual bound at K = Kmax exceeds --epsilon.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"worst-case fixed-point residual verification for "
               "parametric first-order methods"};
  std::string config_path, out_path, dump_dir, cut_mode_s, theory_s;
  int kmax = -1, samples = -1;
  long seed = -1;
  double gap = -1.0, time_limit = -1.0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  bool no_obbt = false;
  app.add_option("--config", config_path, "experiment JSON")->required();
  app.add_option("--kmax", kmax, "max iteration count to verify");
  app.add_option("--gap", gap, "relative MILP gap");
  app.add_option("--time-limit", time_limit, "per-MILP time limit (s)");
  app.add_option("--epsilon", epsilon,
                 "required residual bound at K = kmax (exit 3 if exceeded)");
  app.add_option("--samples", samples, "sample-max baseline draws");
  app.add_option("--seed", seed, "override generator and baseline seeds");
  app.add_flag("--no-obbt", no_obbt, "disable bound tightening");
  app.add_option("--cut-mode", cut_mode_s, "per_component | global_one | off");
  app.add_option("--theory", theory_s,
                 "none | contractive:BETA | averaged:D:Q | user:FILE");
  app.add_option("--out", out_path, "results CSV path (default: stdout)");
  app.add_option("--dump-model", dump_dir, "write per-K LP files here");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "config error: cannot open " << config_path << "\n";
      return 1;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      auto [line, col] = detail::line_col(text, e.byte ? e.byte - 1 : 0);
      std::cerr << "config error: " << config_path << ":" << line << ":"
                << col << ": " << e.what() << "\n";
      return 1;
    }
    if (seed >= 0) {
      if (j.contains("generator"))
        j["generator"]["seed"] = static_cast<unsigned>(seed);
      if (j.contains("baseline"))
        j["baseline"]["seed"] = static_cast<unsigned>(seed);
    }
    cfg = parse_config(j);
    if (kmax > 0) cfg.verify.Kmax = kmax;
    if (gap > 0) cfg.verify.gap = gap;
    if (time_limit > 0) cfg.verify.time_limit_s = time_limit;
    if (samples >= 0) cfg.verify.samples = samples;
    if (seed >= 0) cfg.verify.seed = static_cast<unsigned>(seed);
    if (no_obbt) cfg.verify.obbt_enabled = false;
    if (!cut_mode_s.empty())
      cfg.verify.cut_mode = detail::parse_cut_mode(cut_mode_s);
    if (!theory_s.empty()) cfg.verify.theory = detail::parse_theory_flag(theory_s);
    if (!std::isnan(epsilon)) cfg.epsilon = epsilon;
    if (!out_path.empty()) cfg.out.results_csv = out_path;
    if (!dump_dir.empty()) cfg.verify.dump_dir = dump_dir;
    cfg.verify.keep_bounds = !cfg.out.bounds_json.empty();

    auto diags = fpv::validate(cfg.family);
    auto vdiags = verifier::validate(cfg.verify);
    diags.insert(diags.end(), vdiags.begin(), vdiags.end());
    if (!diags.empty()) {
      for (const auto& d : diags) std::cerr << "config error: " << d << "\n";
      return 1;
    }
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  verifier::VerificationReport rep;
  try {
    rep = verifier::run_sequential(cfg.family, cfg.verify);
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";

  {
    std::ostringstream csv;
    verifier::write_csv(csv, rep);
    if (cfg.out.results_csv.empty()) {
      std::cout << csv.str();
    } else if (!detail::write_file(cfg.out.results_csv, csv.str())) {
      std::cerr << "config error: cannot write " << cfg.out.results_csv << "\n";
      return 1;
    }
  }
  if (!cfg.out.cuts_csv.empty()) {
    std::ostringstream os;
    os << "K,round,step,component,family,violation,card_I\n";
    for (const auto& kr : rep.per_k)
      for (const auto& e : kr.cut_log)
        os << kr.K << ',' << e.round << ',' << e.step << ',' << e.component
           << ',' << (e.upper ? "upper" : "lower") << ',' << e.violation << ','
           << e.card_I << '\n';
    if (!detail::write_file(cfg.out.cuts_csv, os.str())) {
      std::cerr << "config error: cannot write " << cfg.out.cuts_csv << "\n";
      return 1;
    }
  }
  if (!cfg.out.bounds_json.empty() && rep.final_bounds &&
      !detail::write_file(cfg.out.bounds_json,
                          bounds_to_json(*rep.final_bounds).dump(2) + "\n")) {
    std::cerr << "config error: cannot write " << cfg.out.bounds_json << "\n";
    return 1;
  }
  if (!cfg.out.report_json.empty() &&
      !detail::write_file(cfg.out.report_json,
                          report_to_json(rep).dump(2) + "\n")) {
    std::cerr << "config error: cannot write " << cfg.out.report_json << "\n";
    return 1;
  }

  if (!rep.ok()) {
    std::cerr << "solver error: " << rep.error << "\n";
    return 2;
  }
  if (!std::isnan(cfg.epsilon)) {
    const double bound = rep.per_k.back().best_bound;
    if (!(bound <= cfg.epsilon)) {
      std::cerr << "residual bound " << bound << " at K=" << rep.per_k.back().K
                << " exceeds epsilon " << cfg.epsilon << "\n";
      return 3;
    }
  }
  return 0;
}

}  // namespace fpv::workbench
