#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

#include "fgpr/data.hpp"
#include "fgpr/errors.hpp"

namespace fgpr {

// Materialized Kronecker product, (A (x) B)[(i-1)p+k,(j-1)q+l] = A(i,j)B(k,l).
// Only for factors small enough to store.
inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

// Lower-triangular Cholesky factor obtained with escalating diagonal jitter.
// Attempts start at `start_jitter` (0 tries the matrix as given first) and
// escalate x10 up to 1e-6 before raising NumericalError.
class CholFactor {
 public:
  explicit CholFactor(const Matrix& S, double start_jitter = 0.0) {
    if (S.rows() != S.cols()) throw DimensionError("CholFactor: matrix must be square");
    double jitter = start_jitter;
    for (;;) {
      Matrix work = S;
      if (jitter > 0.0) work.diagonal().array() += jitter;
      Eigen::LLT<Matrix> llt(work);
      if (llt.info() == Eigen::Success) {
        L_ = llt.matrixL();
        jitter_ = jitter;
        logdet_ = 2.0 * L_.diagonal().array().log().sum();
        return;
      }
      if (jitter == 0.0) {
        jitter = 1e-10;
      } else if (jitter < 1e-6) {
        jitter *= 10.0;
      } else {
        throw NumericalError("CholFactor: matrix not positive definite after jitter 1e-6");
      }
    }
  }

  CholFactor(Matrix L, double logdet, double jitter)
      : L_(std::move(L)), logdet_(logdet), jitter_(jitter) {}

  const Matrix& matrixL() const { return L_; }
  double logdet() const { return logdet_; }
  double jitter_used() const { return jitter_; }

  // Solves (L L^T) x = b.
  template <typename Rhs>
  Matrix solve(const Rhs& b) const {
    Matrix x = b;
    L_.template triangularView<Eigen::Lower>().solveInPlace(x);
    L_.template triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
  }

  // Solves L x = b (half solve; useful for quadratic forms).
  template <typename Rhs>
  Matrix half_solve(const Rhs& b) const {
    Matrix x = b;
    L_.template triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
  }

 private:
  Matrix L_;
  double logdet_ = 0.0;
  double jitter_ = 0.0;
};

inline Vector dense_solve(const Matrix& Sigma, const Vector& y) {
  if (Sigma.rows() != y.size()) throw DimensionError("dense_solve: dimension mismatch");
  return CholFactor(Sigma).solve(y);
}

inline double dense_logdet(const Matrix& Sigma) { return CholFactor(Sigma).logdet(); }

// s^2 A (x) K + tau^2 I held in factored form. Eigendecompositions of the two
// factors are taken once at construction; solves and logdets afterwards cost
// O(nT(n+T)) and O(nT).
class KronFullCov {
 public:
  KronFullCov(Matrix A, Matrix K, double s2, double tau2)
      : A_(std::move(A)), K_(std::move(K)), s2_(s2), tau2_(tau2) {
    if (A_.rows() != A_.cols() || K_.rows() != K_.cols())
      throw DimensionError("KronFullCov: factors must be square");
    if (!(s2 >= 0.0) || !(tau2 >= 0.0) || !std::isfinite(s2) || !std::isfinite(tau2))
      throw InvalidParameterError("KronFullCov: variances must be nonnegative and finite");
    double jitter = 0.0;
    for (;;) {
      if (decompose(jitter)) return;
      if (jitter == 0.0) {
        jitter = 1e-10;
      } else if (jitter < 1e-6) {
        jitter *= 10.0;
      } else {
        throw NumericalError("KronFullCov: spectrum not positive after jitter 1e-6");
      }
    }
  }

  Eigen::Index n() const { return A_.rows(); }
  Eigen::Index T() const { return K_.rows(); }
  Eigen::Index dim() const { return n() * T(); }
  double s2() const { return s2_; }
  double tau2() const { return tau2_; }
  const Matrix& A() const { return A_; }
  const Matrix& K() const { return K_; }
  const Matrix& UA() const { return UA_; }
  const Matrix& UK() const { return UK_; }
  const Vector& eigA() const { return eigA_; }
  const Vector& eigK() const { return eigK_; }
  // (j,i) entry: s^2 eigA_i eigK_j + tau^2.
  const Matrix& denominators() const { return denom_; }

  // (s^2 A (x) K + tau^2 I)^{-1} y.
  Vector solve(const Vector& y) const {
    if (y.size() != dim()) throw DimensionError("KronFullCov::solve: dimension mismatch");
    Eigen::Map<const Matrix> M(y.data(), T(), n());
    Matrix Z = UK_.transpose() * M * UA_;  // spectral coordinates
    Z.array() /= denom_.array();
    Matrix R = UK_ * Z * UA_.transpose();
    return Eigen::Map<const Vector>(R.data(), dim());
  }

  double logdet() const { return denom_.array().log().sum(); }

  Matrix dense() const {
    Matrix S = s2_ * kron(A_, K_);
    S.diagonal().array() += tau2_;
    return S;
  }

 private:
  bool decompose(double jitter) {
    Matrix Aj = A_, Kj = K_;
    if (jitter > 0.0) {
      Aj.diagonal().array() += jitter;
      Kj.diagonal().array() += jitter;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> esA(Aj);
    Eigen::SelfAdjointEigenSolver<Matrix> esK(Kj);
    if (esA.info() != Eigen::Success || esK.info() != Eigen::Success) return false;
    eigA_ = esA.eigenvalues();
    eigK_ = esK.eigenvalues();
    UA_ = esA.eigenvectors();
    UK_ = esK.eigenvectors();
    denom_ = (s2_ * (eigK_ * eigA_.transpose()).array() + tau2_).matrix();  // T x n
    return denom_.minCoeff() > 0.0;
  }

  Matrix A_, K_;
  double s2_, tau2_;
  Matrix UA_, UK_;
  Vector eigA_, eigK_;
  Matrix denom_;
};

inline Vector kron_eig_solve(const KronFullCov& C, const Vector& y) { return C.solve(y); }
inline double kron_eig_logdet(const KronFullCov& C) { return C.logdet(); }

// P M^{-1} P^T + diag(D) with r << nT. The inner matrix M + P^T D^{-1} P is
// factored once at construction; builders that know extra structure in P may
// hand the inner matrix in precomputed.
class LowRankPlusDiag {
 public:
  LowRankPlusDiag(Matrix P, const Matrix& M, Vector D)
      : LowRankPlusDiag(from_core(std::move(P), M, std::move(D))) {}

  // Builder entry point: the core Cholesky and the inner matrix are supplied
  // precomputed; Gram-derived inner matrices get the standing 1e-10 jitter.
  LowRankPlusDiag(Matrix P, CholFactor cholM, Vector D, Matrix inner,
                  double inner_jitter = 1e-10)
      : P_(std::move(P)), D_(std::move(D)), cholM_(std::move(cholM)) {
    if (P_.rows() != D_.size())
      throw DimensionError("LowRankPlusDiag: factor rows must match diag length");
    if (P_.cols() != cholM_.matrixL().rows())
      throw DimensionError("LowRankPlusDiag: core size must match factor columns");
    if (P_.cols() > P_.rows())
      throw InvalidParameterError("LowRankPlusDiag: rank must not exceed dimension");
    if ((D_.array() <= 0.0).any())
      throw InvalidParameterError("LowRankPlusDiag: diag entries must be positive");
    cholInner_.emplace(inner, inner_jitter);
  }

  Eigen::Index dim() const { return P_.rows(); }
  Eigen::Index rank() const { return P_.cols(); }
  const Matrix& factor() const { return P_; }
  const Vector& diag() const { return D_; }
  const CholFactor& chol_core() const { return cholM_; }
  const CholFactor& chol_inner() const { return *cholInner_; }

  // (diag(D) + P M^{-1} P^T)^{-1} y via Sherman-Woodbury-Morrison.
  Vector solve(const Vector& y) const {
    if (y.size() != dim()) throw DimensionError("LowRankPlusDiag::solve: dimension mismatch");
    Vector z = y.cwiseQuotient(D_);
    Vector u = P_.transpose() * z;
    Vector w = cholInner_->solve(u);
    return z - (P_ * w).cwiseQuotient(D_);
  }

  // Matrix determinant lemma on the r x r inner factor.
  double logdet() const {
    return cholInner_->logdet() - cholM_.logdet() + D_.array().log().sum();
  }

  Matrix dense() const {
    Matrix Minv = cholM_.solve(Matrix::Identity(rank(), rank()));
    Matrix S = P_ * Minv * P_.transpose();
    S += Matrix(D_.asDiagonal());
    return S;
  }

 private:
  static LowRankPlusDiag from_core(Matrix P, const Matrix& M, Vector D) {
    if (P.rows() != D.size())
      throw DimensionError("LowRankPlusDiag: factor rows must match diag length");
    if ((D.array() <= 0.0).any())
      throw InvalidParameterError("LowRankPlusDiag: diag entries must be positive");
    Matrix inner = M + P.transpose() * D.cwiseInverse().asDiagonal() * P;
    return LowRankPlusDiag(std::move(P), CholFactor(M, 0.0), std::move(D), std::move(inner),
                           0.0);
  }

  Matrix P_;
  Vector D_;
  CholFactor cholM_;
  std::optional<CholFactor> cholInner_;
};

inline Vector smw_solve(const LowRankPlusDiag& S, const Vector& y) { return S.solve(y); }
inline double smw_logdet(const LowRankPlusDiag& S) { return S.logdet(); }

}  // namespace fgpr
