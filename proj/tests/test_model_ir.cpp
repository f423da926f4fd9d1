#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "fpv/model_ir.hpp"
#include "oracles.hpp"

using namespace fpv;

namespace {

// Single-slot family with one explicit affine step w = B*(s, x) + offset.
ProblemFamily affine_family(const Matrix& Bstate, const Matrix& Bparam,
                            const ParamSet& params, const InitSet& init) {
  const int d = static_cast<int>(Bstate.rows());
  ProblemFamily fam;
  fam.name = "affine";
  fam.params = params;
  fam.init = init;
  fam.algorithm.layout.slots = {{"s", d}};
  fam.algorithm.layout.residual_slots = {"s"};
  Step st;
  st.variant = Step::Variant::AffineExplicit;
  st.B = Matrix(d, Bstate.cols() + Bparam.cols());
  st.B << Bstate, Bparam;
  st.inputs = {InputRef::slot("s"), InputRef::param()};
  st.output = "s";
  st.output_dim = d;
  fam.algorithm.iters = {{{st}}};
  return fam;
}

ParamSet param_box(const Vector& lo, const Vector& hi) {
  return ParamSet{lo, hi, {}};
}

}  // namespace

TEST_CASE("identity algorithm stays at the start") {
  Vector zero1 = Vector::Zero(1);
  auto fam = affine_family(Matrix::Identity(3, 3), Matrix::Zero(3, 1),
                           param_box(zero1, zero1),
                           InitSet::box(-Vector::Ones(3), Vector::Ones(3)));
  Vector s0(3);
  s0 << 0.3, -0.7, 2.0;
  auto traj = simulate(fam, Vector::Zero(1), s0, 3);
  REQUIRE(traj.size() == 4);
  for (const auto& s : traj) CHECK((s - s0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(residual_inf(traj, 1, fam.algorithm.layout) == 0.0);
}

TEST_CASE("gradient step with P = I, eta = 1 maps everything to -eta*x") {
  // w = (I - eta P) v - eta x = -x.
  const int d = 4;
  auto fam = affine_family(Matrix::Zero(d, d), -Matrix::Identity(d, d),
                           param_box(-Vector::Ones(d), Vector::Ones(d)),
                           InitSet::box(-Vector::Ones(d), Vector::Ones(d)));
  std::mt19937 rng(3);
  Vector s0 = testing::random_vector(rng, d);
  auto traj = simulate(fam, Vector::Zero(d), s0, 1);
  CHECK(traj[1].cwiseAbs().maxCoeff() == 0.0);
  CHECK(residual_inf(traj, 1, fam.algorithm.layout) ==
        Catch::Approx(s0.cwiseAbs().maxCoeff()));
}

TEST_CASE("1-d ISTA step matches the scalar soft threshold") {
  // D = 1, eta = 1, lambda = 0.25: s1 = T_0.25((1 - D^T D) s0 + D^T x).
  ProblemFamily fam;
  fam.name = "ista1d";
  fam.params = param_box(Vector::Ones(1), Vector::Ones(1));
  fam.init = InitSet::singleton(Vector::Zero(1));
  fam.algorithm.layout.slots = {{"s", 1}};
  fam.algorithm.layout.residual_slots = {"s"};
  Step st;
  st.variant = Step::Variant::PiecewiseAffine;
  st.kind = PwaKind::SoftThreshold;
  st.lambda = 0.25;
  st.B = Matrix(1, 2);
  st.B << 0.0, 1.0;
  st.inputs = {InputRef::slot("s"), InputRef::param()};
  st.output = "s";
  st.output_dim = 1;
  fam.algorithm.iters = {{{st}}};

  CHECK(validate(fam).empty());
  auto traj = simulate(fam, Vector::Ones(1), Vector::Zero(1), 1);
  CHECK(traj[1](0) == Catch::Approx(0.75));
}

TEST_CASE("validate flags bad families") {
  ProblemFamily fam;
  fam.params = param_box(Vector::Zero(1), Vector::Ones(1));
  fam.init = InitSet::singleton(Vector::Zero(1));
  fam.algorithm.layout.slots = {{"s", 1}};
  fam.algorithm.layout.residual_slots = {"s"};
  Step st;
  st.variant = Step::Variant::PiecewiseAffine;
  st.kind = PwaKind::SoftThreshold;
  st.lambda = 0.0;  // invalid
  st.B = Matrix::Identity(1, 1);
  st.inputs = {InputRef::slot("s")};
  st.output = "s";
  st.output_dim = 1;
  fam.algorithm.iters = {{{st}}};
  auto diags = validate(fam);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("lambda must be > 0") != std::string::npos);

  Step bad;
  bad.variant = Step::Variant::AffineImplicit;
  bad.M = Matrix::Zero(1, 1);
  bad.B = Matrix::Identity(1, 1);
  bad.inputs = {InputRef::slot("s")};
  bad.output = "s";
  bad.output_dim = 1;
  fam.algorithm.iters = {{{bad}}};
  diags = validate(fam);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("M not invertible") != std::string::npos);
}

TEST_CASE("residual_inf worked examples") {
  StateLayout layout;
  layout.slots = {{"s", 2}};
  layout.residual_slots = {"s"};
  Vector a(2), b(2);
  a << 0, 0;
  b << 1, -3;
  Trajectory traj = {a, b};
  CHECK(residual_inf(traj, 1, layout) == Catch::Approx(3.0));
  CHECK_THROWS_AS(residual_inf(traj, 2, layout), Error);
  CHECK_THROWS_AS(residual_inf(traj, 0, layout), Error);
}

TEST_CASE("simulation is deterministic bit for bit") {
  std::mt19937 rng(5);
  Matrix Bs = testing::random_matrix(rng, 3, 3);
  Matrix Bx = testing::random_matrix(rng, 3, 2);
  auto fam = affine_family(Bs, Bx, param_box(-Vector::Ones(2), Vector::Ones(2)),
                           InitSet::box(-Vector::Ones(3), Vector::Ones(3)));
  Vector x = testing::random_vector(rng, 2);
  Vector s0 = testing::random_vector(rng, 3);
  auto t1 = simulate(fam, x, s0, 10);
  auto t2 = simulate(fam, x, s0, 10);
  for (size_t k = 0; k < t1.size(); ++k)
    CHECK((t1[k] - t2[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("contractive affine step has strictly decreasing residuals") {
  std::mt19937 rng(9);
  const int d = 4;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix Bs = testing::random_matrix(rng, d, d);
    Bs *= (0.9 / std::sqrt(double(d))) / spectral_norm(Bs);
    auto fam = affine_family(Bs, Matrix::Zero(d, 1),
                             param_box(Vector::Zero(1), Vector::Zero(1)),
                             InitSet::box(-Vector::Ones(d), Vector::Ones(d)));
    Vector s0 = testing::random_vector(rng, d);
    auto traj = simulate(fam, Vector::Zero(1), s0, 8);
    for (int k = 2; k <= 8; ++k)
      CHECK(residual_inf(traj, k, fam.algorithm.layout) <
            residual_inf(traj, k - 1, fam.algorithm.layout));
  }
}

TEST_CASE("piecewise step equals affine step while on one linear piece") {
  // ReLU over strictly positive inputs is the identity composition.
  std::mt19937 rng(13);
  const int d = 3;
  Matrix Bs = testing::random_matrix(rng, d, d, 0.05, 0.3);
  ProblemFamily pwa;
  pwa.params = param_box(Vector::Zero(1), Vector::Zero(1));
  pwa.init = InitSet::box(Vector::Ones(d), 2 * Vector::Ones(d));
  pwa.algorithm.layout.slots = {{"s", d}};
  pwa.algorithm.layout.residual_slots = {"s"};
  Step st;
  st.variant = Step::Variant::PiecewiseAffine;
  st.kind = PwaKind::Relu;
  st.B = Bs;
  st.inputs = {InputRef::slot("s")};
  st.output = "s";
  st.output_dim = d;
  pwa.algorithm.iters = {{{st}}};

  ProblemFamily aff = pwa;
  aff.algorithm.iters[0].steps[0].variant = Step::Variant::AffineExplicit;

  Vector s0 = Vector::Ones(d) * 1.5;
  auto t_pwa = simulate(pwa, Vector::Zero(1), s0, 2);
  auto t_aff = simulate(aff, Vector::Zero(1), s0, 2);
  for (size_t k = 0; k < t_pwa.size(); ++k)
    CHECK((t_pwa[k] - t_aff[k]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("multi-slot FISTA-style wiring reads current outputs and prev slots") {
  // s_new = w_prev; w_new = s_new + 0.5 (s_new - s_prev).
  ProblemFamily fam;
  fam.params = param_box(Vector::Zero(1), Vector::Zero(1));
  fam.init = InitSet::singleton((Vector(2) << 1.0, 2.0).finished());
  fam.algorithm.layout.slots = {{"s", 1}, {"w", 1}};
  fam.algorithm.layout.residual_slots = {"s"};
  Step s1;
  s1.variant = Step::Variant::AffineExplicit;
  s1.B = Matrix::Identity(1, 1);
  s1.inputs = {InputRef::slot("w")};
  s1.output = "s";
  s1.output_dim = 1;
  Step s2;
  s2.variant = Step::Variant::AffineExplicit;
  s2.B = Matrix(1, 2);
  s2.B << 1.5, -0.5;
  s2.inputs = {InputRef::out("s"), InputRef::slot("s")};
  s2.output = "w";
  s2.output_dim = 1;
  fam.algorithm.iters = {{{s1, s2}}};
  CHECK(validate(fam).empty());

  auto traj = simulate(fam, Vector::Zero(1), fam.init.lower, 1);
  // s1 = w0 = 2; w1 = 1.5*2 - 0.5*1 = 2.5.
  CHECK(traj[1](0) == Catch::Approx(2.0));
  CHECK(traj[1](1) == Catch::Approx(2.5));
}
