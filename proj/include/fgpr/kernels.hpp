#pragma once

#include <cmath>
#include <utility>

#include "fgpr/data.hpp"
#include "fgpr/errors.hpp"

namespace fgpr {

// Gaussian kernel exp(-d^2 / rho^2).
inline double gaussian_kernel(double d, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw InvalidParameterError("gaussian_kernel: bandwidth must be positive");
  if (d < 0.0) throw InvalidParameterError("gaussian_kernel: distance must be nonnegative");
  const double z = d / rho;
  return std::exp(-z * z);
}

// Trapezoidal-rule L2 distance between two curves on a shared grid.
inline double l2_distance(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& x2,
                          const TimeGrid& grid) {
  const Eigen::Index T = grid.size();
  if (x.size() != T || x2.size() != T)
    throw DimensionError("l2_distance: curves must be sampled on the grid");
  if (T == 1) return 0.0;  // degenerate grid has zero measure
  double acc = 0.0;
  double prev = (x[0] - x2[0]) * (x[0] - x2[0]);
  for (Eigen::Index j = 1; j < T; ++j) {
    const double cur = (x[j] - x2[j]) * (x[j] - x2[j]);
    acc += 0.5 * (grid[static_cast<int>(j)] - grid[static_cast<int>(j - 1)]) * (prev + cur);
    prev = cur;
  }
  return std::sqrt(acc);
}

// Pairwise L2 distances between the rows of X and the rows of Xstar.
inline Matrix pairwise_l2_distances(const CurveSet& X, const CurveSet& Xstar) {
  if (!(X.grid == Xstar.grid))
    throw DimensionError("pairwise_l2_distances: curve sets must share the grid");
  Matrix D(X.n(), Xstar.n());
  for (int i = 0; i < X.n(); ++i)
    for (int j = 0; j < Xstar.n(); ++j)
      D(i, j) = l2_distance(X.curve(i), Xstar.curve(j), X.grid);
  return D;
}

// Entrywise scalar evaluation keeps cross_gram(X, X) bit-identical to
// covariate_gram(X); Eigen's vectorized exp differs from libm by ulps.
inline Matrix gram_from_distances(const Matrix& D, double rho) {
  Matrix G(D.rows(), D.cols());
  for (Eigen::Index i = 0; i < D.rows(); ++i)
    for (Eigen::Index j = 0; j < D.cols(); ++j) G(i, j) = gaussian_kernel(D(i, j), rho);
  return G;
}

// A = {a(||x_i - x_j||)}; symmetric with unit diagonal.
inline Matrix covariate_gram(const CurveSet& X, double rho1) {
  Matrix A(X.n(), X.n());
  for (int i = 0; i < X.n(); ++i) {
    A(i, i) = 1.0;
    for (int j = i + 1; j < X.n(); ++j) {
      const double v = gaussian_kernel(l2_distance(X.curve(i), X.curve(j), X.grid), rho1);
      A(i, j) = v;
      A(j, i) = v;
    }
  }
  return A;
}

// K = {k(|t_i - t_j|)} on the observation grid.
inline Matrix time_gram(const TimeGrid& grid, double rho2) {
  const int T = grid.size();
  Matrix K(T, T);
  for (int i = 0; i < T; ++i) {
    K(i, i) = 1.0;
    for (int j = i + 1; j < T; ++j) {
      const double v = gaussian_kernel(std::abs(grid[i] - grid[j]), rho2);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

// Rectangular kernel matrix {a(||x_i - xstar_j||)}; covers the knot-knot
// case when both arguments are the knot set.
inline Matrix cross_gram(const CurveSet& X, const CurveSet& Xstar, double rho1) {
  return gram_from_distances(pairwise_l2_distances(X, Xstar), rho1);
}

// Time analogue of cross_gram between grid points and time knots.
inline Matrix cross_time_gram(const TimeGrid& grid, const Vector& time_knots, double rho2) {
  Matrix K(grid.size(), time_knots.size());
  for (int i = 0; i < grid.size(); ++i)
    for (Eigen::Index j = 0; j < time_knots.size(); ++j)
      K(i, j) = gaussian_kernel(std::abs(grid[i] - time_knots[j]), rho2);
  return K;
}

inline Matrix time_knot_gram(const Vector& time_knots, double rho2) {
  Matrix K(time_knots.size(), time_knots.size());
  for (Eigen::Index i = 0; i < time_knots.size(); ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < time_knots.size(); ++j) {
      const double v = gaussian_kernel(std::abs(time_knots[i] - time_knots[j]), rho2);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

// Mean pairwise distances over i<j pairs; the standing heuristic for the
// bandwidth priors.
inline std::pair<double, double> heuristic_bandwidths(const CurveSet& X, const TimeGrid& grid) {
  const int n = X.n(), T = grid.size();
  if (n < 2) throw InsufficientDataError("heuristic_bandwidths: need at least two curves");
  if (T < 2) throw InsufficientDataError("heuristic_bandwidths: need at least two time points");
  double dsum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) dsum += l2_distance(X.curve(i), X.curve(j), grid);
  double tsum = 0.0;
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j) tsum += std::abs(grid[i] - grid[j]);
  const double npairs = 0.5 * n * (n - 1);
  const double tpairs = 0.5 * T * (T - 1);
  return {dsum / npairs, tsum / tpairs};
}

}  // namespace fgpr
