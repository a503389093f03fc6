#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "fgpr/data.hpp"
#include "fgpr/errors.hpp"
#include "fgpr/kernels.hpp"
#include "fgpr/kron.hpp"

namespace fgpr {

// Model hyperparameters theta = (s^2, tau^2, rho_1, rho_2).
struct Theta {
  double s2;
  double tau2;
  double rho1;
  double rho2;

  void validate() const {
    const bool ok = s2 > 0.0 && tau2 > 0.0 && rho1 > 0.0 && rho2 > 0.0 &&
                    std::isfinite(s2) && std::isfinite(tau2) && std::isfinite(rho1) &&
                    std::isfinite(rho2);
    if (!ok) throw InvalidParameterError("Theta: all components must be positive and finite");
  }
};

inline double lambda_of(const Theta& theta) {
  theta.validate();
  return theta.tau2 / theta.s2;
}

// Inverse-gamma priors on the variances, uniform priors on the bandwidths.
struct PriorSpec {
  double s2_shape = 2.0;
  double s2_scale = 3.0;
  double tau2_shape = 2.0;
  double tau2_scale = 0.1;
  double rho1_lo = 0.0;
  double rho1_hi = 0.0;
  double rho2_lo = 0.0;
  double rho2_hi = 0.0;

  void validate() const {
    const bool ok = s2_shape > 0 && s2_scale > 0 && tau2_shape > 0 && tau2_scale > 0 &&
                    rho1_lo > 0 && rho1_lo < rho1_hi && rho2_lo > 0 && rho2_lo < rho2_hi;
    if (!ok) throw InvalidParameterError("PriorSpec: shapes/scales positive, lo < hi required");
  }
};

// Data-informed defaults: IG(2,3), IG(2,0.1) and uniform [rho_hat/10, 10 rho_hat].
inline PriorSpec default_priors(const CurveSet& X, const TimeGrid& grid) {
  const auto [r1, r2] = heuristic_bandwidths(X, grid);
  PriorSpec p;
  p.rho1_lo = r1 / 10.0;
  p.rho1_hi = r1 * 10.0;
  p.rho2_lo = r2 / 10.0;
  p.rho2_hi = r2 * 10.0;
  return p;
}

inline double log_inverse_gamma(double x, double shape, double scale) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

inline double log_uniform(double x, double lo, double hi) {
  if (x < lo || x > hi) return -std::numeric_limits<double>::infinity();
  return -std::log(hi - lo);
}

inline double log_prior(const Theta& theta, const PriorSpec& priors) {
  priors.validate();
  return log_inverse_gamma(theta.s2, priors.s2_shape, priors.s2_scale) +
         log_inverse_gamma(theta.tau2, priors.tau2_shape, priors.tau2_scale) +
         log_uniform(theta.rho1, priors.rho1_lo, priors.rho1_hi) +
         log_uniform(theta.rho2, priors.rho2_lo, priors.rho2_hi);
}

// Draw from the prior; used for overdispersed chain starts.
inline Theta sample_prior(const PriorSpec& priors, std::mt19937_64& rng) {
  priors.validate();
  auto inv_gamma = [&rng](double shape, double scale) {
    std::gamma_distribution<double> g(shape, 1.0);
    double draw = g(rng);
    draw = std::max(draw, 1e-12);
    return std::clamp(scale / draw, 1e-6, 1e6);
  };
  Theta t{};
  t.s2 = inv_gamma(priors.s2_shape, priors.s2_scale);
  t.tau2 = inv_gamma(priors.tau2_shape, priors.tau2_scale);
  t.rho1 = std::uniform_real_distribution<double>(priors.rho1_lo, priors.rho1_hi)(rng);
  t.rho2 = std::uniform_real_distribution<double>(priors.rho2_lo, priors.rho2_hi)(rng);
  return t;
}

// Knots X* (m covariate curves) and S* (q time points) of the predictive
// process.
struct KnotSet {
  CurveSet covariate_knots;
  Vector time_knots;

  KnotSet(CurveSet xk, Vector tk) : covariate_knots(std::move(xk)), time_knots(std::move(tk)) {
    if (covariate_knots.n() < 1 || time_knots.size() < 1)
      throw InvalidParameterError("KnotSet: need at least one knot of each kind");
    for (Eigen::Index j = 0; j < time_knots.size(); ++j) {
      const double t = time_knots[j];
      if (!std::isfinite(t) || t < 0.0 || t > 1.0)
        throw InvalidParameterError("KnotSet: time knots must lie in [0,1]");
      if (j > 0 && t <= time_knots[j - 1])
        throw InvalidParameterError("KnotSet: time knots must be strictly increasing");
    }
  }

  int m() const { return covariate_knots.n(); }
  int q() const { return static_cast<int>(time_knots.size()); }
};

// Random subsample of the curves for X*, regular grid spanning the
// observation window for S*.
inline KnotSet select_knots(const CurveSet& X, int m, const TimeGrid& grid, int q,
                            std::mt19937_64& rng) {
  if (m < 1 || m > X.n()) throw InvalidParameterError("select_knots: need 1 <= m <= n");
  if (q < 1 || q > grid.size()) throw InvalidParameterError("select_knots: need 1 <= q <= T");
  std::vector<int> idx(static_cast<std::size_t>(X.n()));
  for (int i = 0; i < X.n(); ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, X.n() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(m));

  Vector tk(q);
  const double lo = grid.min(), hi = grid.max();
  if (q == 1) {
    tk[0] = 0.5 * (lo + hi);
  } else {
    for (int k = 0; k < q; ++k) tk[k] = lo + (hi - lo) * k / (q - 1);
  }
  return KnotSet(X.rows(idx), std::move(tk));
}

enum class CovKind { Full, PredProc, PredProcDiag };

struct CovarianceSpec {
  CovKind kind = CovKind::Full;
  std::optional<KnotSet> knots;

  void validate() const {
    if (kind == CovKind::Full && knots)
      throw InvalidParameterError("CovarianceSpec: full model takes no knots");
    if (kind != CovKind::Full && !knots)
      throw InvalidParameterError("CovarianceSpec: predictive process requires knots");
  }
};

inline KronFullCov build_full_cov(const Theta& theta, const CurveSet& X, const TimeGrid& grid) {
  theta.validate();
  return KronFullCov(covariate_gram(X, theta.rho1), time_gram(grid, theta.rho2), theta.s2,
                     theta.tau2);
}

namespace detail {

// Shared pieces of the predictive-process covariance for one theta. The knot
// Grams are inverted through Choleskys of the Kronecker factors separately.
struct PpParts {
  Matrix Across;        // n x m
  Matrix Kcross;        // T x q
  Matrix Ass;           // m x m knot Gram
  Matrix Kss;           // q x q knot Gram
  CholFactor cholAss;
  CholFactor cholKss;
  Vector alpha;         // a_i A**^{-1} a_i^T per training curve
  Vector kappa;         // k_t K**^{-1} k_t^T per grid point

  int m() const { return static_cast<int>(Across.cols()); }
  int q() const { return static_cast<int>(Kcross.cols()); }
};

inline PpParts build_pp_parts(const Theta& theta, const CurveSet& X, const TimeGrid& grid,
                              const KnotSet& knots) {
  theta.validate();
  Matrix Across = cross_gram(X, knots.covariate_knots, theta.rho1);
  Matrix Kcross = cross_time_gram(grid, knots.time_knots, theta.rho2);
  Matrix Ass = covariate_gram(knots.covariate_knots, theta.rho1);
  Matrix Kss = time_knot_gram(knots.time_knots, theta.rho2);
  CholFactor cholAss(Ass, 1e-10);
  CholFactor cholKss(Kss, 1e-10);
  Vector alpha = cholAss.half_solve(Across.transpose()).colwise().squaredNorm().transpose();
  Vector kappa = cholKss.half_solve(Kcross.transpose()).colwise().squaredNorm().transpose();
  return PpParts{std::move(Across), std::move(Kcross), std::move(Ass),     std::move(Kss),
                 std::move(cholAss), std::move(cholKss), std::move(alpha), std::move(kappa)};
}

// Core M = [A** (x) K**] / s^2 of the low-rank representation, so that
// P M^{-1} P^T = s^2 [A.* (x) K.*][A** (x) K**]^{-1}[A*. (x) K*.].
inline CholFactor kron_core_chol(const PpParts& parts, double s2) {
  const double s = std::sqrt(s2);
  Matrix L = kron(parts.cholAss.matrixL(), parts.cholKss.matrixL()) / s;
  const double logdet = parts.q() * parts.cholAss.logdet() + parts.m() * parts.cholKss.logdet() -
                        parts.m() * parts.q() * std::log(s2);
  return CholFactor(std::move(L), logdet, 0.0);
}

// P^T diag(1/d) P for P = A.* (x) K.* without forming the nT x r product.
// A constant diagonal factors into the Kronecker product directly.
inline Matrix kron_weighted_inner(const PpParts& parts, const Vector& dinv) {
  const int n = static_cast<int>(parts.Across.rows());
  const int T = static_cast<int>(parts.Kcross.rows());
  const int m = parts.m(), q = parts.q();
  if (dinv.minCoeff() == dinv.maxCoeff()) {
    return dinv[0] * kron(Matrix(parts.Across.transpose() * parts.Across),
                          Matrix(parts.Kcross.transpose() * parts.Kcross));
  }
  Matrix inner = Matrix::Zero(m * q, m * q);
  Matrix Gi(q, q);
  for (int i = 0; i < n; ++i) {
    Gi.noalias() = parts.Kcross.transpose() * dinv.segment(static_cast<Eigen::Index>(i) * T, T).asDiagonal() * parts.Kcross;
    for (int u = 0; u < m; ++u) {
      const double aiu = parts.Across(i, u);
      for (int v = u; v < m; ++v)
        inner.block(u * q, v * q, q, q) += (aiu * parts.Across(i, v)) * Gi;
    }
  }
  return Matrix(inner.selfadjointView<Eigen::Upper>());
}

inline LowRankPlusDiag assemble_low_rank(const PpParts& parts, double s2, Vector D) {
  CholFactor cholM = kron_core_chol(parts, s2);
  Matrix inner = kron(parts.Ass, parts.Kss) / s2 + kron_weighted_inner(parts, D.cwiseInverse());
  Matrix P = kron(parts.Across, parts.Kcross);
  return LowRankPlusDiag(std::move(P), std::move(cholM), std::move(D), std::move(inner));
}

}  // namespace detail

// Covariance of Y under the unmodified predictive process:
// s^2 [A.* (x) K.*][A** (x) K**]^{-1}[A*. (x) K*.] + tau^2 I.
inline LowRankPlusDiag build_pp_cov(const Theta& theta, const CurveSet& X, const TimeGrid& grid,
                                    const KnotSet& knots) {
  const auto parts = detail::build_pp_parts(theta, X, grid, knots);
  Vector D = Vector::Constant(static_cast<Eigen::Index>(X.n()) * grid.size(), theta.tau2);
  return detail::assemble_low_rank(parts, theta.s2, std::move(D));
}

// Modification 2 covariance: the predictive-process covariance with the
// parent-process diagonal restored, Sigma~ + diag(Sigma - Sigma~) + tau^2 I.
inline LowRankPlusDiag build_ppdiag_cov(const Theta& theta, const CurveSet& X,
                                        const TimeGrid& grid, const KnotSet& knots) {
  const auto parts = detail::build_pp_parts(theta, X, grid, knots);
  const int n = X.n(), T = grid.size();
  Vector D(static_cast<Eigen::Index>(n) * T);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < T; ++j) {
      double corr = theta.s2 * (1.0 - parts.alpha[i] * parts.kappa[j]);
      if (corr < -1e-10)
        throw NumericalError("build_ppdiag_cov: negative diagonal correction");
      corr = std::max(corr, 0.0);
      D[static_cast<Eigen::Index>(i) * T + j] = theta.tau2 + corr;
    }
  }
  return detail::assemble_low_rank(parts, theta.s2, std::move(D));
}

// -1/2 [Y^T Sigma^{-1} Y + log det Sigma + nT log 2 pi] for the configured
// covariance model.
inline double log_marginal_likelihood(const Theta& theta, const FunctionalDataset& data,
                                      const CovarianceSpec& spec) {
  spec.validate();
  const Vector Y = vectorize_curves(data.Y.values);
  const double nT = static_cast<double>(Y.size());
  double quad = 0.0, ld = 0.0;
  if (spec.kind == CovKind::Full) {
    const KronFullCov C = build_full_cov(theta, data.X, data.grid);
    quad = Y.dot(C.solve(Y));
    ld = C.logdet();
  } else {
    const LowRankPlusDiag S = spec.kind == CovKind::PredProc
                                  ? build_pp_cov(theta, data.X, data.grid, *spec.knots)
                                  : build_ppdiag_cov(theta, data.X, data.grid, *spec.knots);
    quad = Y.dot(S.solve(Y));
    ld = S.logdet();
  }
  return -0.5 * (quad + ld + nT * std::log(2.0 * std::numbers::pi));
}

// Dense-Cholesky oracle path for the full model; also the benchmark baseline.
inline double log_marginal_likelihood_full_dense(const Theta& theta,
                                                 const FunctionalDataset& data) {
  theta.validate();
  const Vector Y = vectorize_curves(data.Y.values);
  Matrix Sigma = theta.s2 * kron(covariate_gram(data.X, theta.rho1), time_gram(data.grid, theta.rho2));
  Sigma.diagonal().array() += theta.tau2;
  const CholFactor chol(Sigma);
  const Vector half = chol.half_solve(Y);
  return -0.5 * (half.squaredNorm() + chol.logdet() +
                 static_cast<double>(Y.size()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace fgpr
