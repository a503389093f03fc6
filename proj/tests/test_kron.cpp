#include <catch_amalgamated.hpp>

#include <chrono>
#include <cmath>

#include "fgpr/kron.hpp"
#include "test_helpers.hpp"

using namespace fgpr;
using test_helpers::random_matrix;
using test_helpers::random_spd;
using test_helpers::random_vector;

namespace {

double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

double time_solve(const LowRankPlusDiag& S, const Vector& y, int reps) {
  volatile double sink = 0.0;
  Vector x = S.solve(y);  // warm up
  const auto begin = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) {
    x = S.solve(y);
    sink = sink + x[0];
  }
  const auto end = std::chrono::steady_clock::now();
  (void)sink;
  return std::chrono::duration<double>(end - begin).count() / reps;
}

}  // namespace

TEST_CASE("dense_solve and dense_logdet basics", "[kron]") {
  const Matrix I = Matrix::Identity(4, 4);
  auto g = test_helpers::rng(11);
  const Vector y = random_vector(4, g);
  CHECK(dense_solve(I, y).isApprox(y));
  CHECK_THAT(dense_logdet(I), Catch::Matchers::WithinAbs(0.0, 1e-9));

  const Matrix D2 = 2.0 * Matrix::Identity(2, 2);
  Vector y2 = random_vector(2, g);
  CHECK(dense_solve(D2, y2).isApprox(Vector(y2 / 2.0)));
  CHECK_THAT(dense_logdet(D2), Catch::Matchers::WithinAbs(2.0 * std::log(2.0), 1e-10));

  const Matrix S = random_spd(8, g);
  const Vector y8 = random_vector(8, g);
  const Vector x = dense_solve(S, y8);
  CHECK((S * x - y8).norm() / y8.norm() < 1e-10);

  Matrix not_pd = Matrix::Identity(3, 3);
  not_pd(2, 2) = -5.0;
  CHECK_THROWS_AS(dense_solve(not_pd, Vector::Zero(3)), NumericalError);
}

TEST_CASE("kron_eig_solve trivial spectra", "[kron]") {
  auto g = test_helpers::rng(23);
  const Vector y = random_vector(6, g);
  const KronFullCov C(Matrix::Identity(2, 2), Matrix::Identity(3, 3), 2.0, 0.5);
  CHECK(kron_eig_solve(C, y).isApprox(Vector(y / 2.5), 1e-12));

  const KronFullCov nugget_only(random_spd(2, g), random_spd(3, g), 0.0, 0.25);
  CHECK(kron_eig_solve(nugget_only, y).isApprox(Vector(y / 0.25), 1e-12));

  CHECK_THROWS_AS(kron_eig_solve(C, Vector::Zero(5)), DimensionError);
}

TEST_CASE("kron_eig_logdet trivial spectra", "[kron]") {
  const KronFullCov C(Matrix::Identity(2, 2), Matrix::Identity(3, 3), 1.0, 1.0);
  CHECK_THAT(kron_eig_logdet(C), Catch::Matchers::WithinAbs(6.0 * std::log(2.0), 1e-10));

  auto g = test_helpers::rng(29);
  const KronFullCov N(random_spd(2, g), random_spd(5, g), 0.0, 0.05);
  CHECK_THAT(kron_eig_logdet(N), Catch::Matchers::WithinAbs(10.0 * std::log(0.05), 1e-9));
}

TEST_CASE("kron path matches the dense oracle", "[kron]") {
  auto g = test_helpers::rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix A = random_spd(4, g);
    const Matrix K = random_spd(5, g);
    const KronFullCov C(A, K, 1.3, 0.07);
    const Vector y = random_vector(20, g);
    const Matrix dense = C.dense();
    CHECK(rel_err(kron_eig_solve(C, y), dense_solve(dense, y)) < 1e-8);
    CHECK_THAT(kron_eig_logdet(C), Catch::Matchers::WithinAbs(dense_logdet(dense), 1e-6));
    // residual identity against the materialized matrix
    const Vector x = kron_eig_solve(C, y);
    CHECK((dense * x - y).norm() <= 1e-8 * y.norm());
  }
}

TEST_CASE("smw_solve limiting and rank-1 cases", "[kron]") {
  auto g = test_helpers::rng(37);
  const Vector D = (random_vector(7, g).array().abs() + 0.5).matrix();
  const LowRankPlusDiag zeroP(Matrix::Zero(7, 2), Matrix::Identity(2, 2), D);
  const Vector y = random_vector(7, g);
  CHECK(smw_solve(zeroP, y).isApprox(Vector(y.cwiseQuotient(D)), 1e-12));
  CHECK_THAT(smw_logdet(zeroP),
             Catch::Matchers::WithinAbs(D.array().log().sum(), 1e-10));

  // P = (1,1)^T, M = [1], D = (1,1) represents [[2,1],[1,2]].
  Matrix P1(2, 1);
  P1 << 1.0, 1.0;
  const LowRankPlusDiag rank1(P1, Matrix::Ones(1, 1), Vector::Ones(2));
  Matrix expected(2, 2);
  expected << 2.0, 1.0, 1.0, 2.0;
  const Vector y2 = random_vector(2, g);
  CHECK(rel_err(smw_solve(rank1, y2), dense_solve(expected, y2)) < 1e-12);
  CHECK_THAT(smw_logdet(rank1), Catch::Matchers::WithinAbs(std::log(3.0), 1e-10));

  const Vector bad = (Vector(2) << 1.0, 0.0).finished();
  CHECK_THROWS_AS(LowRankPlusDiag(P1, Matrix::Ones(1, 1), bad), InvalidParameterError);
}

TEST_CASE("smw path matches the dense oracle", "[kron]") {
  auto g = test_helpers::rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const int nT = 40, r = 6;
    const Matrix P = random_matrix(nT, r, g);
    const Matrix M = random_spd(r, g);
    const Vector D = (random_vector(nT, g).array().abs() + 0.3).matrix();
    const LowRankPlusDiag S(P, M, D);
    const Matrix dense = S.dense();
    const Vector y = random_vector(nT, g);
    CHECK(rel_err(smw_solve(S, y), dense_solve(dense, y)) < 1e-8);
    CHECK_THAT(smw_logdet(S), Catch::Matchers::WithinAbs(dense_logdet(dense), 1e-6));
    const Vector x = smw_solve(S, y);
    CHECK((dense * x - y).norm() <= 1e-8 * y.norm());
  }
}

TEST_CASE("smw_solve scales sub-quadratically and beats dense", "[kron][perf]") {
  auto g = test_helpers::rng(43);
  const int r = 300;

  auto build = [&](int nT) {
    const Matrix P = random_matrix(nT, r, g);
    const Matrix M = random_spd(r, g);
    const Vector D = (random_vector(nT, g).array().abs() + 0.5).matrix();
    return LowRankPlusDiag(P, M, D);
  };

  const LowRankPlusDiag S1 = build(1200);
  const LowRankPlusDiag S2 = build(2400);
  const Vector y1 = random_vector(1200, g);
  const Vector y2 = random_vector(2400, g);
  const double t1 = time_solve(S1, y1, 20);
  const double t2 = time_solve(S2, y2, 20);
  INFO("t(nT=1200)=" << t1 << "s t(nT=2400)=" << t2 << "s ratio=" << t2 / t1);
  CHECK(t2 / t1 < 4.0);

  // dense solve on the same 1200-dim system, including the factorization
  const Matrix dense = S1.dense();
  volatile double sink = 0.0;
  const auto begin = std::chrono::steady_clock::now();
  const int reps = 3;
  for (int rep = 0; rep < reps; ++rep) sink = sink + dense_solve(dense, y1)[0];
  const auto end = std::chrono::steady_clock::now();
  (void)sink;
  const double t_dense = std::chrono::duration<double>(end - begin).count() / reps;

  // SMW timed end-to-end as well: factor + solve
  const auto begin2 = std::chrono::steady_clock::now();
  for (int rep = 0; rep < reps; ++rep) {
    const LowRankPlusDiag S(S1.factor(), Matrix(S1.chol_core().matrixL() * S1.chol_core().matrixL().transpose()), S1.diag());
    sink = sink + S.solve(y1)[0];
  }
  const auto end2 = std::chrono::steady_clock::now();
  const double t_smw = std::chrono::duration<double>(end2 - begin2).count() / reps;
  INFO("dense=" << t_dense << "s smw=" << t_smw << "s speedup=" << t_dense / t_smw);
  CHECK(t_dense / t_smw >= 3.0);
}

TEST_CASE("jitter escalation recovers near-singular grams", "[kron]") {
  // Rank-deficient PSD matrix: ones requires jitter but must not error.
  const Matrix ones = Matrix::Ones(5, 5);
  CHECK_NOTHROW(CholFactor(ones, 1e-10));
  const CholFactor chol(ones, 1e-10);
  CHECK(chol.jitter_used() >= 1e-10);
}
