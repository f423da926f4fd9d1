#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "fpv/linalg.hpp"
#include "oracles.hpp"

using namespace fpv;

TEST_CASE("solve_for_explicit identity and scaling") {
  std::mt19937 rng(1);
  Matrix B = testing::random_matrix(rng, 3, 4);
  CHECK((solve_for_explicit(Matrix::Identity(3, 3), B) - B).norm() == 0.0);
  Matrix I2 = Matrix::Identity(2, 2);
  Matrix half = solve_for_explicit(2.0 * I2, I2);
  CHECK((half - 0.5 * I2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("solve_for_explicit on a prox KKT system") {
  // KKT matrix of an equality-constrained prox with P = I, lambda = 1,
  // A = [1 1]:  [[P + I, A^T], [A, 0]].
  Matrix M(3, 3);
  M << 2, 0, 1, 0, 2, 1, 1, 1, 0;
  Matrix B(3, 4);
  B << 1, 0, -1, 0, 0, 1, 0, -1, 0, 0, 0, 0;
  Matrix Btilde = solve_for_explicit(M, B);
  double resid = (M * Btilde - B).cwiseAbs().maxCoeff();
  CHECK(resid <= 1e-8 * (1.0 + B.cwiseAbs().maxCoeff()));
}

TEST_CASE("solve_for_explicit rejects singular M") {
  Matrix M = Matrix::Zero(2, 2);
  M(0, 0) = 1.0;
  CHECK_THROWS_AS(solve_for_explicit(M, Matrix::Identity(2, 2)),
                  SingularMatrixError);
  try {
    solve_for_explicit(M, Matrix::Identity(2, 2));
  } catch (const SingularMatrixError& e) {
    CHECK(std::string(e.what()).find("pivot") != std::string::npos);
  }
}

TEST_CASE("spectral_norm basics") {
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1.0;
  CHECK(spectral_norm(D) == Catch::Approx(3.0).epsilon(1e-8));
  CHECK(spectral_norm(Matrix::Zero(4, 3)) == 0.0);
}

TEST_CASE("spectral_norm matches SVD oracle on random matrices") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix M = testing::random_matrix(rng, 10, 10);
    Eigen::JacobiSVD<Matrix> svd(M);
    double expected = svd.singularValues()(0);
    CHECK(spectral_norm(M) == Catch::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("interval_affine worked examples") {
  Matrix B(1, 2);
  B << 1, -1;
  Vector lo = Vector::Zero(2), hi = Vector::Ones(2);
  auto [wlo, whi] = interval_affine(B, lo, hi);
  CHECK(wlo(0) == Catch::Approx(-1.0));
  CHECK(whi(0) == Catch::Approx(1.0));

  Matrix I = Matrix::Identity(3, 3);
  Vector a(3), b(3);
  a << -2, 0, 1;
  b << -1, 2, 5;
  auto [l2, u2] = interval_affine(I, a, b);
  CHECK((l2 - a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((u2 - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("interval_affine bounds are sound and attained at vertices") {
  std::mt19937 rng(7);
  Matrix B = testing::random_matrix(rng, 5, 7);
  Vector lo = testing::random_vector(rng, 7, -2.0, 0.0);
  Vector hi = lo + testing::random_vector(rng, 7, 0.0, 3.0).cwiseAbs();
  auto [wlo, whi] = interval_affine(B, lo, hi);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int s = 0; s < 10000; ++s) {
    Vector y(7);
    for (int j = 0; j < 7; ++j) y(j) = lo(j) + u01(rng) * (hi(j) - lo(j));
    Vector w = B * y;
    for (int i = 0; i < 5; ++i) {
      CHECK(w(i) >= wlo(i) - 1e-10);
      CHECK(w(i) <= whi(i) + 1e-10);
    }
  }
  // Each bound is attained at the sign-pattern vertex of the box.
  for (int i = 0; i < 5; ++i) {
    Vector vmin(7), vmax(7);
    for (int j = 0; j < 7; ++j) {
      vmin(j) = B(i, j) >= 0 ? lo(j) : hi(j);
      vmax(j) = B(i, j) >= 0 ? hi(j) : lo(j);
    }
    CHECK(B.row(i).dot(vmin) == Catch::Approx(wlo(i)).margin(1e-12));
    CHECK(B.row(i).dot(vmax) == Catch::Approx(whi(i)).margin(1e-12));
  }
}

TEST_CASE("implicit-step interval bounds compose solve and interval_affine") {
  std::mt19937 rng(11);
  Matrix M = testing::random_matrix(rng, 4, 4) + 5.0 * Matrix::Identity(4, 4);
  Matrix B = testing::random_matrix(rng, 4, 6);
  Vector lo = testing::random_vector(rng, 6, -1.0, 0.0);
  Vector hi = testing::random_vector(rng, 6, 0.0, 1.0);
  Matrix Btilde = solve_for_explicit(M, B);
  auto [wlo, whi] = interval_affine(Btilde, lo, hi);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int s = 0; s < 2000; ++s) {
    Vector y(6);
    for (int j = 0; j < 6; ++j) y(j) = lo(j) + u01(rng) * (hi(j) - lo(j));
    Vector w = M.partialPivLu().solve(B * y);
    for (int i = 0; i < 4; ++i) {
      CHECK(w(i) >= wlo(i) - 1e-9);
      CHECK(w(i) <= whi(i) + 1e-9);
    }
  }
}
