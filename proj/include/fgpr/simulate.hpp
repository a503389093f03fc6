#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "fgpr/data.hpp"
#include "fgpr/kernels.hpp"
#include "fgpr/kron.hpp"
#include "fgpr/model.hpp"
#include "fgpr/predict.hpp"

namespace fgpr {

// Brownian-motion covariates: 5 B(t) plus a uniform [0,5] start.
inline CurveSet gen_brownian_covariates(int n, const TimeGrid& grid, std::mt19937_64& rng) {
  if (n < 1) throw InvalidParameterError("gen_brownian_covariates: need n >= 1");
  std::uniform_real_distribution<double> start(0.0, 5.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n, grid.size());
  for (int i = 0; i < n; ++i) {
    double cur = start(rng);
    if (grid[0] > 0.0) cur += 5.0 * std::sqrt(grid[0]) * gauss(rng);
    x(i, 0) = cur;
    for (int j = 1; j < grid.size(); ++j) {
      cur += 5.0 * std::sqrt(grid[j] - grid[j - 1]) * gauss(rng);
      x(i, j) = cur;
    }
  }
  return CurveSet(std::move(x), grid);
}

// Draws W ~ N(0, s^2 A (x) K) through Choleskys of the factors, then
// Y = W + N(0, tau^2 I). The latent W is kept as W_true.
inline FunctionalDataset gen_gp_data(const Theta& theta, const CurveSet& X,
                                     std::mt19937_64& rng) {
  theta.validate();
  const int n = X.n(), T = X.T();
  const CholFactor LA(covariate_gram(X, theta.rho1), 1e-10);
  const CholFactor LK(time_gram(X.grid, theta.rho2), 1e-10);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix Z(T, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < T; ++j) Z(j, i) = gauss(rng);
  const Matrix Wtc = std::sqrt(theta.s2) * (LK.matrixL() * Z * LA.matrixL().transpose());
  Matrix W = Wtc.transpose();  // n x T, curve per row
  Matrix Y = W;
  const double tau = std::sqrt(theta.tau2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < T; ++j) Y(i, j) += tau * gauss(rng);
  return FunctionalDataset(X, CurveSet(std::move(Y), X.grid), CurveSet(std::move(W), X.grid));
}

// Noiseless response m_i(t_j) = int_0^1 2 sin(2 pi (t_j - s)) x_i(s)^2 ds by
// the trapezoidal rule on the observation grid.
inline Matrix regression_mean(const CurveSet& X) {
  const int T = X.T();
  if (T < 2) throw InvalidParameterError("regression_mean: need at least two grid points");
  const TimeGrid& g = X.grid;
  Vector w(T);
  w[0] = 0.5 * (g[1] - g[0]);
  w[T - 1] = 0.5 * (g[T - 1] - g[T - 2]);
  for (int s = 1; s + 1 < T; ++s) w[s] = 0.5 * (g[s + 1] - g[s - 1]);
  Matrix B(T, T);  // B(s, j) = 2 w_s sin(2 pi (t_j - t_s))
  for (int s = 0; s < T; ++s)
    for (int j = 0; j < T; ++j)
      B(s, j) = 2.0 * w[s] * std::sin(2.0 * std::numbers::pi * (g[j] - g[s]));
  return X.values.cwiseAbs2() * B;
}

inline FunctionalDataset gen_regression_data(const CurveSet& X, double tau2,
                                             std::mt19937_64& rng) {
  if (!(tau2 >= 0.0)) throw InvalidParameterError("gen_regression_data: tau2 must be >= 0");
  Matrix mean = regression_mean(X);
  Matrix Y = mean;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double tau = std::sqrt(tau2);
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.cols(); ++j) Y(i, j) += tau * gauss(rng);
  return FunctionalDataset(X, CurveSet(std::move(Y), X.grid), CurveSet(std::move(mean), X.grid));
}

inline double mse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw DimensionError("mse: shape mismatch");
  return (pred - truth).squaredNorm() / static_cast<double>(truth.size());
}

struct CoverageResult {
  double coverage = 0.0;
  double mean_length = 0.0;
};

inline CoverageResult coverage_and_length(const PredictionResult& result, const Matrix& truth) {
  if (result.lower.rows() != truth.rows() || result.lower.cols() != truth.cols())
    throw DimensionError("coverage_and_length: shape mismatch");
  long hits = 0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i)
    for (Eigen::Index j = 0; j < truth.cols(); ++j)
      if (truth(i, j) >= result.lower(i, j) && truth(i, j) <= result.upper(i, j)) ++hits;
  CoverageResult out;
  out.coverage = static_cast<double>(hits) / static_cast<double>(truth.size());
  out.mean_length = (result.upper - result.lower).mean();
  return out;
}

// Fraction of covered time points for each test curve separately.
inline Vector per_curve_coverage(const PredictionResult& result, const Matrix& truth) {
  if (result.lower.rows() != truth.rows() || result.lower.cols() != truth.cols())
    throw DimensionError("per_curve_coverage: shape mismatch");
  Vector cov(truth.rows());
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    long hits = 0;
    for (Eigen::Index j = 0; j < truth.cols(); ++j)
      if (truth(i, j) >= result.lower(i, j) && truth(i, j) <= result.upper(i, j)) ++hits;
    cov[i] = static_cast<double>(hits) / static_cast<double>(truth.cols());
  }
  return cov;
}

// Modified band depth with pairwise bands (J = 2): the average over
// reference pairs of the fraction of grid points where the curve lies inside
// the pair's envelope.
inline double band_depth(const Eigen::Ref<const Vector>& curve, const CurveSet& reference) {
  const int nref = reference.n(), T = reference.T();
  if (nref < 2) throw InsufficientDataError("band_depth: need at least two reference curves");
  if (curve.size() != T) throw DimensionError("band_depth: curve must live on the reference grid");
  double total = 0.0;
  long pairs = 0;
  for (int i = 0; i < nref; ++i) {
    for (int j = i + 1; j < nref; ++j) {
      long inside = 0;
      for (int t = 0; t < T; ++t) {
        const double lo = std::min(reference.values(i, t), reference.values(j, t));
        const double hi = std::max(reference.values(i, t), reference.values(j, t));
        if (curve[t] >= lo && curve[t] <= hi) ++inside;
      }
      total += static_cast<double>(inside) / static_cast<double>(T);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

struct DepthCoverage {
  std::vector<std::pair<double, double>> pairs;  // (depth, coverage) per test curve
  double pearson = 0.0;
  bool degenerate = false;  // a constant margin leaves the correlation undefined
};

inline DepthCoverage depth_coverage_table(const CurveSet& X_test, const CurveSet& X_train,
                                          const Vector& coverage) {
  if (coverage.size() != X_test.n())
    throw DimensionError("depth_coverage_table: one coverage value per test curve required");
  DepthCoverage out;
  Vector depth(X_test.n());
  for (int i = 0; i < X_test.n(); ++i) {
    depth[i] = band_depth(X_test.curve(i), X_train);
    out.pairs.emplace_back(depth[i], coverage[i]);
  }
  const Vector cd = depth.array() - depth.mean();
  const Vector cc = coverage.array() - coverage.mean();
  const double sd = cd.norm(), sc = cc.norm();
  if (sd <= 0.0 || sc <= 0.0) {
    out.degenerate = true;
    return out;
  }
  out.pearson = cd.dot(cc) / (sd * sc);
  return out;
}

}  // namespace fgpr
