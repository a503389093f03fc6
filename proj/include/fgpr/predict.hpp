#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "fgpr/kernels.hpp"
#include "fgpr/kron.hpp"
#include "fgpr/mcmc.hpp"
#include "fgpr/model.hpp"
#include "fgpr/parallel.hpp"

namespace fgpr {

// Conditional mean and pointwise variance of the latent process W at the
// test curves, one row per curve. Variances are on the W scale.
struct CondNormal {
  Matrix mean;  // n_test x T
  Matrix var;   // n_test x T
};

// Exact conditional distribution of W(x_tst, t_j) given Y under the full
// model: mean Sigma_tst,. (Sigma + tau^2 I)^{-1} Y, variance
// diag(Sigma_tst,tst - Sigma_tst,. (Sigma + tau^2 I)^{-1} Sigma_.,tst).
inline CondNormal posterior_w_full(const Theta& theta, const FunctionalDataset& data,
                                   const CurveSet& X_test) {
  theta.validate();
  if (!(X_test.grid == data.grid))
    throw DimensionError("posterior_w_full: test curves must live on the training grid");
  const KronFullCov C = build_full_cov(theta, data.X, data.grid);
  const Eigen::Index n = data.n(), T = data.T(), ntest = X_test.n();
  const Vector Y = vectorize_curves(data.Y.values);
  const Vector alpha = C.solve(Y);
  Eigen::Map<const Matrix> alpha_tc(alpha.data(), T, n);

  const Matrix Ax = cross_gram(data.X, X_test, theta.rho1);  // n x ntest
  Matrix mean_tc = theta.s2 * (C.K() * (alpha_tc * Ax));     // T x ntest

  // Spectral form of the quadratic correction, separable over curves/times.
  const Matrix At = C.UA().transpose() * Ax;                               // n x ntest
  const Matrix G = C.denominators().cwiseInverse() * At.cwiseAbs2();      // T x ntest
  const Matrix B = (C.UK() * C.eigK().asDiagonal()).cwiseAbs2();           // T x T
  Matrix var_tc = (theta.s2 - theta.s2 * theta.s2 * (B * G).array()).matrix();
  var_tc = var_tc.cwiseMax(0.0);

  return CondNormal{mean_tc.transpose(), var_tc.transpose()};
}

namespace detail {

// Per-theta machinery for predictive-process prediction. Construction does
// the O(nT r + r^3) work once; each predict() is then O(n_test (m^2 q^2 + T q^2)).
class PpPredictor {
 public:
  PpPredictor(const Theta& theta, const FunctionalDataset& data, const KnotSet& knots,
              bool diag_corrected)
      : theta_(theta),
        knots_(knots),
        parts_(build_pp_parts(theta, data.X, data.grid, knots)),
        cov_(diag_corrected ? build_ppdiag_cov(theta, data.X, data.grid, knots)
                            : build_pp_cov(theta, data.X, data.grid, knots)) {
    const Eigen::Index n = data.n(), T = data.T();
    const int m = parts_.m(), q = parts_.q();
    const Vector Y = vectorize_curves(data.Y.values);
    const Vector beta = cov_.solve(Y);

    // w' = (M_raw/s^2)^{-1} P^T beta; the s^2 factors cancel against the
    // s^2 in the cross-covariance blocks.
    Eigen::Map<const Matrix> beta_tc(beta.data(), T, n);
    const Matrix ptb = parts_.Kcross.transpose() * beta_tc * parts_.Across;  // q x m
    // vec index (u*q + v) pairs covariate knot u with time knot v; ptb is
    // q x m column-major, matching that layout.
    const Vector wprime =
        cov_.chol_core().solve(Eigen::Map<const Vector>(ptb.data(), m * q));
    Wmat_ = Eigen::Map<const Matrix>(wprime.data(), q, m);

    // S_in = P^T Sigma_train^{-1} P = G_D - (L^{-1} G_D)^T (L^{-1} G_D) with
    // the inner Cholesky L from the SMW factorization.
    const Matrix GD = kron_weighted_inner(parts_, cov_.diag().cwiseInverse());
    const Matrix Z = cov_.chol_inner().half_solve(GD);
    S_in_ = GD - Z.transpose() * Z;
    Kbar_ = parts_.cholKss.solve(parts_.Kcross.transpose());  // q x T
  }

  // Conditional moments at the test curves; `exact_test_diag` swaps the
  // degenerate diag(Sigma~_tst,tst) for the parent value s^2 (mod 1 / mod 2).
  CondNormal predict(const CurveSet& X_test, bool exact_test_diag) const {
    const Eigen::Index ntest = X_test.n();
    const Eigen::Index T = parts_.Kcross.rows();
    const int m = parts_.m(), q = parts_.q();
    const Matrix Ux = cross_gram(X_test, knots_.covariate_knots, theta_.rho1);  // ntest x m

    Matrix mean = (parts_.Kcross * Wmat_ * Ux.transpose()).transpose();  // ntest x T

    // Quadratic correction: s^4 (ubar_r (x) kbar_t)^T S_in (ubar_r (x) kbar_t)
    // with ubar = A**^{-1} u and kbar = K**^{-1} k, both separable.
    const Matrix Ubar = parts_.cholAss.solve(Ux.transpose());  // m x ntest
    const double s4 = theta_.s2 * theta_.s2;
    Matrix var(ntest, T);
    Matrix Tr(q, q);
    for (Eigen::Index r = 0; r < ntest; ++r) {
      Tr.setZero();
      // Only the symmetric part of Tr matters inside the quadratic form, so
      // off-diagonal block pairs are folded with a factor 2.
      for (int u = 0; u < m; ++u) {
        const double uu = Ubar(u, r);
        Tr += (uu * uu) * S_in_.block(u * q, u * q, q, q);
        for (int u2 = u + 1; u2 < m; ++u2)
          Tr += (2.0 * uu * Ubar(u2, r)) * S_in_.block(u * q, u2 * q, q, q);
      }
      var.row(r) =
          s4 * ((Kbar_.transpose() * Tr).cwiseProduct(Kbar_.transpose())).rowwise().sum().transpose();
    }

    if (exact_test_diag) {
      var = (theta_.s2 - var.array()).matrix();
    } else {
      const Vector alpha_tst =
          parts_.cholAss.half_solve(Ux.transpose()).colwise().squaredNorm().transpose();
      var = (theta_.s2 * (alpha_tst * parts_.kappa.transpose()).array() - var.array()).matrix();
    }
    return CondNormal{std::move(mean), var.cwiseMax(0.0)};
  }

 private:
  Theta theta_;
  const KnotSet& knots_;
  PpParts parts_;
  LowRankPlusDiag cov_;
  Matrix Wmat_;  // q x m
  Matrix S_in_;  // mq x mq
  Matrix Kbar_;  // q x T
};

}  // namespace detail

// Unmodified predictive process: every block of (8) replaced by its knot
// projection, including the test-test block. Far-away test curves collapse
// to zero predictive variance here.
inline CondNormal predict_pp(const Theta& theta, const FunctionalDataset& data,
                             const KnotSet& knots, const CurveSet& X_test) {
  if (!(X_test.grid == data.grid))
    throw DimensionError("predict_pp: test curves must live on the training grid");
  return detail::PpPredictor(theta, data, knots, false).predict(X_test, false);
}

// Modification 1: keep the exact test-block variance s^2; mean unchanged.
inline CondNormal predict_pp_mod1(const Theta& theta, const FunctionalDataset& data,
                                  const KnotSet& knots, const CurveSet& X_test) {
  if (!(X_test.grid == data.grid))
    throw DimensionError("predict_pp_mod1: test curves must live on the training grid");
  return detail::PpPredictor(theta, data, knots, false).predict(X_test, true);
}

// Modification 2: the training block carries the restored diagonal
// Sigma~ + diag(Sigma - Sigma~); cross blocks are uncorrected and the test
// block diagonal equals s^2.
inline CondNormal predict_pp_mod2(const Theta& theta, const FunctionalDataset& data,
                                  const KnotSet& knots, const CurveSet& X_test) {
  if (!(X_test.grid == data.grid))
    throw DimensionError("predict_pp_mod2: test curves must live on the training grid");
  return detail::PpPredictor(theta, data, knots, true).predict(X_test, true);
}

enum class PredictMethod { Full, Pp, PpMod1, PpMod2 };

struct PredictionResult {
  Matrix mean;   // n_test x T
  Matrix var;    // observation scale unless predict_w was set
  Matrix lower;  // pointwise interval bounds
  Matrix upper;
};

struct PredictOptions {
  bool predict_w = false;    // predict W instead of y (drops the nugget)
  int draws_per_theta = 1;
  int thin = 1;              // keep every thin-th retained draw
  double level = 0.95;
  std::uint64_t seed = 0;
  int threads = 0;           // 0 = hardware
};

// Composition sampling over the retained posterior draws: one conditional
// normal per theta, pooled empirical quantiles for the intervals. Point
// prediction is the average of the conditional means.
inline PredictionResult bayes_predict(const PosteriorSamples& samples,
                                      const FunctionalDataset& data, PredictMethod method,
                                      const std::optional<KnotSet>& knots,
                                      const CurveSet& X_test, const PredictOptions& opt = {}) {
  if (method != PredictMethod::Full && !knots)
    throw InvalidParameterError("bayes_predict: predictive-process methods require knots");
  if (opt.draws_per_theta < 1 || opt.thin < 1)
    throw InvalidParameterError("bayes_predict: draws_per_theta and thin must be >= 1");
  const std::vector<Theta> pooled = samples.pooled();
  if (pooled.empty()) throw InsufficientDataError("bayes_predict: no retained draws");

  std::vector<Theta> kept;
  for (std::size_t i = 0; i < pooled.size(); i += static_cast<std::size_t>(opt.thin))
    kept.push_back(pooled[i]);

  const Eigen::Index ntest = X_test.n(), T = data.T();
  const Eigen::Index npoints = ntest * T;
  const std::size_t ndraws = kept.size() * static_cast<std::size_t>(opt.draws_per_theta);
  Matrix draws(static_cast<Eigen::Index>(ndraws), npoints);
  Matrix mean_sum = Matrix::Zero(ntest, T);

  constexpr int kBlock = 8;
  const int nblocks = static_cast<int>((kept.size() + kBlock - 1) / kBlock);
  std::vector<Matrix> block_mean_sums(static_cast<std::size_t>(nblocks));

  detail::parallel_for_blocks(
      nblocks,
      [&](int b) {
        Matrix local = Matrix::Zero(ntest, T);
        const std::size_t begin = static_cast<std::size_t>(b) * kBlock;
        const std::size_t end = std::min(kept.size(), begin + kBlock);
        for (std::size_t idx = begin; idx < end; ++idx) {
          const Theta& theta = kept[idx];
          CondNormal cn;
          switch (method) {
            case PredictMethod::Full: cn = posterior_w_full(theta, data, X_test); break;
            case PredictMethod::Pp: cn = predict_pp(theta, data, *knots, X_test); break;
            case PredictMethod::PpMod1: cn = predict_pp_mod1(theta, data, *knots, X_test); break;
            case PredictMethod::PpMod2: cn = predict_pp_mod2(theta, data, *knots, X_test); break;
          }
          local += cn.mean;
          const double extra = opt.predict_w ? 0.0 : theta.tau2;
          std::seed_seq sseq{opt.seed, static_cast<std::uint64_t>(idx)};
          std::mt19937_64 rng(sseq);
          std::normal_distribution<double> gauss(0.0, 1.0);
          for (int d = 0; d < opt.draws_per_theta; ++d) {
            const Eigen::Index row = static_cast<Eigen::Index>(idx) * opt.draws_per_theta + d;
            for (Eigen::Index r = 0; r < ntest; ++r)
              for (Eigen::Index j = 0; j < T; ++j)
                draws(row, r * T + j) =
                    cn.mean(r, j) + std::sqrt(cn.var(r, j) + extra) * gauss(rng);
          }
        }
        block_mean_sums[static_cast<std::size_t>(b)] = std::move(local);
      },
      opt.threads);

  for (const auto& part : block_mean_sums) mean_sum += part;

  PredictionResult out;
  out.mean = mean_sum / static_cast<double>(kept.size());
  out.var.resize(ntest, T);
  out.lower.resize(ntest, T);
  out.upper.resize(ntest, T);
  const double tail = 0.5 * (1.0 - opt.level);

  detail::parallel_for_blocks(
      static_cast<int>(ntest),
      [&](int r) {
        std::vector<double> col(ndraws);
        for (Eigen::Index j = 0; j < T; ++j) {
          const Eigen::Index p = static_cast<Eigen::Index>(r) * T + j;
          for (std::size_t i = 0; i < ndraws; ++i)
            col[i] = draws(static_cast<Eigen::Index>(i), p);
          const double m = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(ndraws);
          double v = 0.0;
          for (double x : col) v += (x - m) * (x - m);
          out.var(r, j) = ndraws > 1 ? v / static_cast<double>(ndraws - 1) : 0.0;
          out.lower(r, j) = std::min(quantile(col, tail), out.mean(r, j));
          out.upper(r, j) = std::max(quantile(col, 1.0 - tail), out.mean(r, j));
        }
      },
      opt.threads);

  return out;
}

// fRKHS ridge fit Y_hat = (A (x) K)(A (x) K + lambda I)^{-1} Y, computed as
// Y - lambda (A (x) K + lambda I)^{-1} Y through the Kronecker eigen path.
inline Matrix frkhs_fit(double lambda, double rho1, double rho2, const FunctionalDataset& data) {
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw InvalidParameterError("frkhs_fit: lambda must be nonnegative");
  const Vector Y = vectorize_curves(data.Y.values);
  const KronFullCov C(covariate_gram(data.X, rho1), time_gram(data.grid, rho2), 1.0, lambda);
  const Vector fitted = Y - lambda * C.solve(Y);
  return devectorize_curves(fitted, data.n(), data.T());
}

// Kriging form of the fRKHS estimator at held-out curves.
inline Matrix frkhs_predict(const FunctionalDataset& train, const CurveSet& X_test, double lambda,
                            double rho1, double rho2) {
  if (lambda <= 0.0) throw InvalidParameterError("frkhs_predict: lambda must be positive");
  const KronFullCov C(covariate_gram(train.X, rho1), time_gram(train.grid, rho2), 1.0, lambda);
  const Vector alpha = C.solve(vectorize_curves(train.Y.values));
  Eigen::Map<const Matrix> alpha_tc(alpha.data(), train.T(), train.n());
  const Matrix Ax = cross_gram(train.X, X_test, rho1);
  return (C.K() * (alpha_tc * Ax)).transpose();
}

struct CvResult {
  double best_lambda = 0.0;
  double cv_error = 0.0;
};

// K-fold cross-validation over curves for the fRKHS smoothing parameter;
// ties resolve to the smaller lambda.
inline CvResult frkhs_cv(const FunctionalDataset& data, const std::vector<double>& lambda_grid,
                         double rho1, double rho2, int folds = 5) {
  if (lambda_grid.empty()) throw InvalidParameterError("frkhs_cv: empty lambda grid");
  const int n = data.n();
  if (folds < 2 || folds > n)
    throw InvalidParameterError("frkhs_cv: every fold needs at least one curve");

  CvResult best{0.0, std::numeric_limits<double>::infinity()};
  for (const double lambda : lambda_grid) {
    if (!(lambda > 0.0)) throw InvalidParameterError("frkhs_cv: grid values must be positive");
    double sse = 0.0;
    long count = 0;
    for (int f = 0; f < folds; ++f) {
      const int lo = static_cast<int>(static_cast<long>(f) * n / folds);
      const int hi = static_cast<int>(static_cast<long>(f + 1) * n / folds);
      std::vector<int> in, outi;
      for (int i = 0; i < n; ++i) (i >= lo && i < hi ? outi : in).push_back(i);
      const FunctionalDataset train(data.X.rows(in), data.Y.rows(in));
      const CurveSet Xout = data.X.rows(outi);
      const Matrix pred = frkhs_predict(train, Xout, lambda, rho1, rho2);
      for (std::size_t k = 0; k < outi.size(); ++k) {
        const auto diff = pred.row(static_cast<Eigen::Index>(k)) - data.Y.values.row(outi[k]);
        sse += diff.squaredNorm();
        count += data.T();
      }
    }
    const double err = sse / static_cast<double>(count);
    if (err < best.cv_error || (err == best.cv_error && lambda < best.best_lambda)) {
      best.cv_error = err;
      best.best_lambda = lambda;
    }
  }
  return best;
}

struct KernelBaselineResult {
  Matrix pred;                      // n_test x T
  long zero_weight_fallbacks = 0;   // rows that fell back to the plain mean
};

// Nadaraya-Watson functional kernel estimator with Gaussian weights on the
// curve L2 distances.
inline KernelBaselineResult kernel_baseline(const FunctionalDataset& data,
                                            const CurveSet& X_test, double h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw InvalidParameterError("kernel_baseline: bandwidth must be positive");
  if (!(X_test.grid == data.grid))
    throw DimensionError("kernel_baseline: test curves must live on the training grid");
  const Matrix D = pairwise_l2_distances(X_test, data.X);  // ntest x n
  KernelBaselineResult out;
  out.pred.resize(X_test.n(), data.T());
  const Vector mean_curve = data.Y.values.colwise().mean().transpose();
  for (int r = 0; r < X_test.n(); ++r) {
    Vector w = (-(D.row(r).transpose().array() / h).square()).exp();
    const double total = w.sum();
    if (total <= 0.0 || !std::isfinite(total)) {
      out.pred.row(r) = mean_curve.transpose();
      ++out.zero_weight_fallbacks;
      continue;
    }
    out.pred.row(r) = (w.transpose() * data.Y.values) / total;
  }
  return out;
}

// Oracle bandwidth selection for the kernel baseline: grid search minimizing
// the realized test error against supplied truth.
inline std::pair<double, double> select_oracle_bandwidth(const FunctionalDataset& data,
                                                         const CurveSet& X_test,
                                                         const Matrix& truth,
                                                         const std::vector<double>& h_grid) {
  if (h_grid.empty()) throw InvalidParameterError("select_oracle_bandwidth: empty grid");
  double best_h = 0.0, best_err = std::numeric_limits<double>::infinity();
  for (const double h : h_grid) {
    const auto res = kernel_baseline(data, X_test, h);
    const double err = (res.pred - truth).squaredNorm() / static_cast<double>(truth.size());
    if (err < best_err || (err == best_err && h < best_h)) {
      best_err = err;
      best_h = h;
    }
  }
  return {best_h, best_err};
}

}  // namespace fgpr
