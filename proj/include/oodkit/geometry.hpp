#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/matrix.hpp"

namespace oodkit {

enum class Metric { cosine, euclidean, mahalanobis };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::cosine: return "cosine";
    case Metric::euclidean: return "euclidean";
    case Metric::mahalanobis: return "mahalanobis";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  if (s == "mahalanobis") return Metric::mahalanobis;
  throw DataError("unknown metric '" + s + "' (expected cosine, euclidean or mahalanobis)");
}

namespace detail {
inline void check_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
}
}  // namespace detail

// Reductions run over four independent accumulators. The explicit
// reassociation keeps the loops pipelined without -ffast-math, and the
// summation order is fixed in source, so results stay deterministic.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double squared_euclidean(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = a[i] - b[i];
    const double d1 = a[i + 1] - b[i + 1];
    const double d2 = a[i + 2] - b[i + 2];
    const double d3 = a[i + 3] - b[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

// Euclidean distance between two vectors of equal dimension.
inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  return std::sqrt(squared_euclidean(a, b));
}

// Cosine distance 1 - a.b / (|a||b|), in [0, 2]. Rejects zero vectors.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na == 0.0 || nb == 0.0) throw DataError("cosine distance undefined for a zero vector");
  double d = 1.0 - dot(a, b) / (na * nb);
  if (d < 0.0) d = 0.0;
  if (d > 2.0) d = 2.0;
  return d;
}

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws NumericalError when a pivot is not positive.
inline Matrix cholesky_factor(const Matrix& a) {
  const std::size_t n = a.rows;
  if (a.cols != n) throw DataError("cholesky: matrix must be square");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NumericalError("cholesky factorization failed at pivot " + std::to_string(j));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// Solves L y = b in place for lower-triangular L.
inline void forward_solve(const Matrix& l, std::span<double> b) {
  const std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = l.values.data() + i * n;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= i; k += 4) {
      s0 += li[k] * b[k];
      s1 += li[k + 1] * b[k + 1];
      s2 += li[k + 2] * b[k + 2];
      s3 += li[k + 3] * b[k + 3];
    }
    for (; k < i; ++k) s0 += li[k] * b[k];
    b[i] = (b[i] - ((s0 + s1) + (s2 + s3))) / li[i];
  }
}

// Per-cluster Gaussian: mean, biased covariance, and the Cholesky factor of
// the regularized covariance (cov + epsilon * I). Mahalanobis scores and log
// densities go through the factor; the covariance is never inverted.
struct GaussianStats {
  std::vector<double> mean;
  Matrix covariance;
  Matrix factor;                   // lower-triangular, of covariance + epsilon*I
  double regularization_epsilon = 0.0;
  double log_det = 0.0;            // log det of the regularized covariance

  std::size_t dim() const { return mean.size(); }
};

// Scale-aware ridge: 1e-6 * trace(cov)/D with an absolute floor of 1e-12.
inline double regularization_epsilon_for(const Matrix& covariance) {
  double trace = 0.0;
  for (std::size_t i = 0; i < covariance.rows; ++i) trace += covariance(i, i);
  const double eps = 1e-6 * trace / static_cast<double>(covariance.rows);
  return eps > 1e-12 ? eps : 1e-12;
}

// Builds stats from an explicit mean/covariance. epsilon < 0 selects the
// default ridge rule.
inline GaussianStats make_gaussian(std::vector<double> mean, Matrix covariance,
                                   double epsilon = -1.0) {
  if (covariance.rows != covariance.cols || covariance.rows != mean.size())
    throw DataError("make_gaussian: covariance shape does not match mean dimension");
  GaussianStats stats;
  stats.mean = std::move(mean);
  const double eps = epsilon < 0.0 ? regularization_epsilon_for(covariance) : epsilon;
  stats.regularization_epsilon = eps;
  Matrix regularized = covariance;
  for (std::size_t i = 0; i < regularized.rows; ++i) regularized(i, i) += eps;
  stats.factor = cholesky_factor(regularized);
  double log_det = 0.0;
  for (std::size_t i = 0; i < stats.factor.rows; ++i) log_det += std::log(stats.factor(i, i));
  stats.log_det = 2.0 * log_det;
  stats.covariance = std::move(covariance);
  return stats;
}

// Mean and biased (1/n) covariance over the selected rows of data.
inline GaussianStats estimate_gaussian(const Matrix& data,
                                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw DataError("estimate_gaussian: no samples");
  const std::size_t d = data.cols;
  const double n = static_cast<double>(rows.size());
  std::vector<double> mean(d, 0.0);
  for (const std::size_t r : rows) {
    const double* x = data.values.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  }
  for (double& m : mean) m /= n;

  // Upper-triangle scatter, four samples per pass so each covariance row is
  // touched once per group.
  Matrix cov(d, d);
  std::vector<double> c0(d), c1(d), c2(d), c3(d);
  std::size_t r = 0;
  for (; r + 4 <= rows.size(); r += 4) {
    const double* x0 = data.values.data() + rows[r] * d;
    const double* x1 = data.values.data() + rows[r + 1] * d;
    const double* x2 = data.values.data() + rows[r + 2] * d;
    const double* x3 = data.values.data() + rows[r + 3] * d;
    for (std::size_t j = 0; j < d; ++j) {
      c0[j] = x0[j] - mean[j];
      c1[j] = x1[j] - mean[j];
      c2[j] = x2[j] - mean[j];
      c3[j] = x3[j] - mean[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double w0 = c0[i], w1 = c1[i], w2 = c2[i], w3 = c3[i];
      double* row = cov.values.data() + i * d;
      for (std::size_t j = i; j < d; ++j)
        row[j] += (w0 * c0[j] + w1 * c1[j]) + (w2 * c2[j] + w3 * c3[j]);
    }
  }
  for (; r < rows.size(); ++r) {
    const double* x = data.values.data() + rows[r] * d;
    for (std::size_t j = 0; j < d; ++j) c0[j] = x[j] - mean[j];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = c0[i];
      double* row = cov.values.data() + i * d;
      for (std::size_t j = i; j < d; ++j) row[j] += ci * c0[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= n;
      cov(j, i) = cov(i, j);
    }
  return make_gaussian(std::move(mean), std::move(cov));
}

inline GaussianStats estimate_gaussian(const Matrix& data) {
  std::vector<std::size_t> all(data.rows);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return estimate_gaussian(data, all);
}

// Squared Mahalanobis form (x - mu)^T (cov + eps I)^-1 (x - mu), evaluated as
// |L^-1 (x - mu)|^2 with one forward solve. No square root is taken: the
// squared form is what the scoring pipeline ranks on.
inline double mahalanobis_score(std::span<const double> x, const GaussianStats& stats) {
  if (x.size() != stats.dim())
    throw DataError("mahalanobis: sample dimension " + std::to_string(x.size()) +
                    " does not match stats dimension " + std::to_string(stats.dim()));
  // Scratch survives across calls; this sits inside per-sample-per-cluster
  // loops where a fresh allocation each call would dominate.
  static thread_local std::vector<double> diff;
  diff.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - stats.mean[i];
  forward_solve(stats.factor, diff);
  return squared_norm(diff);
}

// log of weight * N(x | mean, cov + eps I).
inline double log_gaussian_density(std::span<const double> x, const GaussianStats& stats,
                                   double weight) {
  if (!(weight > 0.0) || weight > 1.0)
    throw DataError("component weight must be in (0, 1]");
  const double quad = mahalanobis_score(x, stats);
  const double d = static_cast<double>(stats.dim());
  return std::log(weight) -
         0.5 * (d * std::log(2.0 * std::numbers::pi) + stats.log_det + quad);
}

}  // namespace oodkit
