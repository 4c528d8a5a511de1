#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/parallel.hpp"
#include "oodkit/rng.hpp"

namespace oodkit {

// Partition of [0, N) into K non-empty clusters.
struct ClusterAssignment {
  enum class Source { ground_truth, single, kmeans, gmm };

  Source source = Source::single;
  std::size_t num_clusters = 0;
  std::vector<std::int32_t> assignment;            // sample index -> cluster id
  std::vector<std::vector<std::size_t>> members;   // cluster id -> sample indices

  static std::vector<std::vector<std::size_t>> members_of(
      const std::vector<std::int32_t>& assignment, std::size_t num_clusters) {
    std::vector<std::vector<std::size_t>> members(num_clusters);
    for (std::size_t i = 0; i < assignment.size(); ++i)
      members[static_cast<std::size_t>(assignment[i])].push_back(i);
    return members;
  }

  void validate() const {
    if (num_clusters == 0) throw DataError("cluster assignment has no clusters");
    std::size_t total = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (members[c].empty())
        throw DataError("cluster " + std::to_string(c) + " is empty");
      total += members[c].size();
    }
    if (members.size() != num_clusters || total != assignment.size())
      throw DataError("cluster member lists do not partition the sample set");
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] < 0 || static_cast<std::size_t>(assignment[i]) >= num_clusters)
        throw DataError("sample " + std::to_string(i) + " has cluster id out of range");
  }
};

inline std::string to_string(ClusterAssignment::Source s) {
  switch (s) {
    case ClusterAssignment::Source::ground_truth: return "gt";
    case ClusterAssignment::Source::single: return "single";
    case ClusterAssignment::Source::kmeans: return "kmeans";
    case ClusterAssignment::Source::gmm: return "gmm";
  }
  return "?";
}

inline ClusterAssignment::Source cluster_source_from_string(const std::string& s) {
  if (s == "gt" || s == "labels") return ClusterAssignment::Source::ground_truth;
  if (s == "single") return ClusterAssignment::Source::single;
  if (s == "kmeans") return ClusterAssignment::Source::kmeans;
  if (s == "gmm") return ClusterAssignment::Source::gmm;
  throw DataError("unknown cluster source '" + s + "' (expected gt, single, kmeans or gmm)");
}

// Clusters from ground-truth labels, remapped to a dense [0, K) id space in
// ascending label order.
inline ClusterAssignment from_labels(const EmbeddingSet& set) {
  if (!set.labels) throw DataError("ground-truth clustering requires labels");
  std::vector<std::int32_t> distinct = *set.labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  ClusterAssignment out;
  out.source = ClusterAssignment::Source::ground_truth;
  out.num_clusters = distinct.size();
  out.assignment.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto it = std::lower_bound(distinct.begin(), distinct.end(), (*set.labels)[i]);
    out.assignment[i] = static_cast<std::int32_t>(it - distinct.begin());
  }
  out.members = ClusterAssignment::members_of(out.assignment, out.num_clusters);
  return out;
}

// All samples in one cluster, ignoring labels.
inline ClusterAssignment single_cluster(const EmbeddingSet& set) {
  if (set.size() == 0) throw DataError("single_cluster: empty set");
  ClusterAssignment out;
  out.source = ClusterAssignment::Source::single;
  out.num_clusters = 1;
  out.assignment.assign(set.size(), 0);
  out.members = ClusterAssignment::members_of(out.assignment, 1);
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansConfig {
  int max_iter = 300;
  double tol = 1e-6;   // relative centroid-movement threshold
  int restarts = 5;    // independent seeded runs, best inertia wins
};

struct KMeansModel {
  Matrix centroids;    // K x D
  double inertia = 0.0;
  int iterations_run = 0;
  std::vector<double> inertia_history;   // one entry per Lloyd iteration
};

namespace kmeans_detail {

inline Matrix plus_plus_init(const Matrix& data, std::size_t k, SplitMix64& rng) {
  const std::size_t n = data.rows;
  const std::size_t d = data.cols;
  Matrix centroids(k, d);
  std::size_t first = static_cast<std::size_t>(rng.next_below(n));
  std::copy_n(data.row(first).data(), d, centroids.row(0).data());
  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i)
    dist2[i] = squared_euclidean(data.row(i), centroids.row(0));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (const double v : dist2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.next_double() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist2[i];
        if (r < cum) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.next_below(n));
    }
    std::copy_n(data.row(pick).data(), d, centroids.row(j).data());
    for (std::size_t i = 0; i < n; ++i) {
      const double v = squared_euclidean(data.row(i), centroids.row(j));
      if (v < dist2[i]) dist2[i] = v;
    }
  }
  return centroids;
}

// Nearest centroid per sample under squared Euclidean distance; ties go to
// the lowest centroid index.
inline void assign_nearest(const Matrix& data, const Matrix& centroids,
                           std::vector<std::int32_t>& assign, std::vector<double>& dist2) {
  parallel::for_blocks(data.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::int32_t best_c = 0;
      for (std::size_t c = 0; c < centroids.rows; ++c) {
        const double v = squared_euclidean(data.row(i), centroids.row(c));
        if (v < best) {
          best = v;
          best_c = static_cast<std::int32_t>(c);
        }
      }
      assign[i] = best_c;
      dist2[i] = best;
    }
  });
}

// Moves the globally farthest point (from a cluster that can spare one) into
// each empty cluster so the no-empty-cluster invariant holds.
inline bool repair_empty(const Matrix& data, const Matrix& centroids,
                         std::vector<std::int32_t>& assign, std::vector<double>& dist2,
                         std::vector<std::size_t>& counts) {
  bool repaired = false;
  for (std::size_t e = 0; e < counts.size(); ++e) {
    if (counts[e] != 0) continue;
    std::size_t farthest = data.rows;
    double far_d = -1.0;
    for (std::size_t i = 0; i < data.rows; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      if (counts[c] < 2) continue;
      if (dist2[i] > far_d) {
        far_d = dist2[i];
        farthest = i;
      }
    }
    if (farthest == data.rows)
      throw DataError("cannot repair empty cluster: not enough samples");
    --counts[static_cast<std::size_t>(assign[farthest])];
    assign[farthest] = static_cast<std::int32_t>(e);
    dist2[farthest] = squared_euclidean(data.row(farthest), centroids.row(e));
    ++counts[e];
    repaired = true;
  }
  return repaired;
}

inline void update_means(const Matrix& data, const std::vector<std::int32_t>& assign,
                         std::size_t k, Matrix& centroids) {
  const std::size_t d = data.cols;
  std::vector<double> counts(k, 0.0);
  Matrix sums(k, d);
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    const double* x = data.values.data() + i * d;
    double* s = sums.values.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
    counts[c] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / counts[c];
}

}  // namespace kmeans_detail

// k-means++ seeding followed by Lloyd iterations, repeated over `restarts`
// independent sub-seeded runs; the run with the lowest inertia wins. Fully
// deterministic for a fixed seed. Row order matters: the seeded draws index
// into the rows, so permuting the input permutes the init choices too.
inline std::pair<KMeansModel, ClusterAssignment> kmeans_fit(const EmbeddingSet& set,
                                                            std::size_t k, std::uint64_t seed,
                                                            const KMeansConfig& config = {}) {
  const std::size_t n = set.size();
  if (k < 1 || k > n)
    throw DataError("kmeans: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) +
                    "]");
  const Matrix& data = set.data;

  // Movement tolerance is relative to the data scale.
  double total_variance = 0.0;
  {
    const GaussianStats global = estimate_gaussian(data);
    for (std::size_t j = 0; j < data.cols; ++j) total_variance += global.covariance(j, j);
  }
  const double tol_abs = config.tol * std::sqrt(total_variance);

  KMeansModel best_model;
  std::vector<std::int32_t> best_assign;
  bool have_best = false;

  const int restarts = config.restarts < 1 ? 1 : config.restarts;
  for (int r = 0; r < restarts; ++r) {
    SplitMix64 rng(derive_seed(seed, 0x4B4D0000ULL + static_cast<std::uint64_t>(r)));
    Matrix centroids = kmeans_detail::plus_plus_init(data, k, rng);
    std::vector<std::int32_t> assign(n);
    std::vector<double> dist2(n);
    std::vector<double> history;
    int iterations = 0;
    for (int iter = 0; iter < config.max_iter; ++iter) {
      ++iterations;
      kmeans_detail::assign_nearest(data, centroids, assign, dist2);
      std::vector<std::size_t> counts(k, 0);
      for (const auto c : assign) ++counts[static_cast<std::size_t>(c)];
      kmeans_detail::repair_empty(data, centroids, assign, dist2, counts);
      Matrix old = centroids;
      kmeans_detail::update_means(data, assign, k, centroids);
      double inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        inertia += squared_euclidean(data.row(i), centroids.row(static_cast<std::size_t>(assign[i])));
      history.push_back(inertia);
      double movement = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double m = std::sqrt(squared_euclidean(old.row(c), centroids.row(c)));
        if (m > movement) movement = m;
      }
      if (movement <= tol_abs) break;
    }
    // Sync the assignment with the final centroids. Repair (degenerate data
    // only) forces another mean update so members and centroids stay
    // consistent.
    double final_inertia = 0.0;
    for (std::size_t pass = 0; pass <= k; ++pass) {
      kmeans_detail::assign_nearest(data, centroids, assign, dist2);
      std::vector<std::size_t> counts(k, 0);
      for (const auto c : assign) ++counts[static_cast<std::size_t>(c)];
      if (!kmeans_detail::repair_empty(data, centroids, assign, dist2, counts)) {
        final_inertia = 0.0;
        for (const double v : dist2) final_inertia += v;
        break;
      }
      kmeans_detail::update_means(data, assign, k, centroids);
      final_inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        final_inertia +=
            squared_euclidean(data.row(i), centroids.row(static_cast<std::size_t>(assign[i])));
    }
    history.push_back(final_inertia);

    if (!have_best || final_inertia < best_model.inertia) {
      have_best = true;
      best_model.centroids = std::move(centroids);
      best_model.inertia = final_inertia;
      best_model.iterations_run = iterations;
      best_model.inertia_history = std::move(history);
      best_assign = assign;
    }
  }

  ClusterAssignment out;
  out.source = ClusterAssignment::Source::kmeans;
  out.num_clusters = k;
  out.assignment = std::move(best_assign);
  out.members = ClusterAssignment::members_of(out.assignment, k);
  out.validate();
  return {std::move(best_model), std::move(out)};
}

// ---------------------------------------------------------------------------
// Gaussian mixture fit by expectation maximization
// ---------------------------------------------------------------------------

struct GmmConfig {
  int max_iter = 200;
  double tol = 1e-6;                      // relative mean log-likelihood improvement
  KMeansConfig kmeans{300, 1e-6, 2};      // init settings; EM refines, so fewer restarts
};

struct GmmModel {
  std::vector<GaussianStats> components;
  std::vector<double> weights;
  double final_log_likelihood = 0.0;             // mean per-sample log-likelihood
  int iterations_run = 0;
  std::vector<double> log_likelihood_history;    // mean log-likelihood per E-step
};

// log sum_c w_c N(x | component c), evaluated stably.
inline double gmm_log_likelihood(const GmmModel& model, std::span<const double> x) {
  double max_lp = -std::numeric_limits<double>::infinity();
  std::vector<double> lp(model.components.size());
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    lp[c] = log_gaussian_density(x, model.components[c], model.weights[c]);
    if (lp[c] > max_lp) max_lp = lp[c];
  }
  double sum = 0.0;
  for (const double v : lp) sum += std::exp(v - max_lp);
  return max_lp + std::log(sum);
}

// Posterior component probabilities for one sample.
inline std::vector<double> gmm_responsibilities(const GmmModel& model,
                                                std::span<const double> x) {
  std::vector<double> lp(model.components.size());
  double max_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    lp[c] = log_gaussian_density(x, model.components[c], model.weights[c]);
    if (lp[c] > max_lp) max_lp = lp[c];
  }
  double sum = 0.0;
  for (double& v : lp) {
    v = std::exp(v - max_lp);
    sum += v;
  }
  for (double& v : lp) v /= sum;
  return lp;
}

namespace gmm_detail {

// Scratch for the batched quadratic-form kernel.
struct QuadScratch {
  std::vector<double> d0, d1, d2, d3;
};

// Squared Mahalanobis forms of four samples against one Gaussian. A single
// pass over the Cholesky factor serves all four right-hand sides, which cuts
// the dominant cache traffic of the E-step and reference fitting to a
// quarter. Internal batching detail: the public one-sample functions are the
// reference semantics.
inline void quad_mahalanobis(const GaussianStats& stats, std::span<const double> x0,
                             std::span<const double> x1, std::span<const double> x2,
                             std::span<const double> x3, QuadScratch& scratch,
                             double out[4]) {
  const std::size_t n = stats.dim();
  scratch.d0.resize(n);
  scratch.d1.resize(n);
  scratch.d2.resize(n);
  scratch.d3.resize(n);
  double* __restrict p0 = scratch.d0.data();
  double* __restrict p1 = scratch.d1.data();
  double* __restrict p2 = scratch.d2.data();
  double* __restrict p3 = scratch.d3.data();
  const double* __restrict mean = stats.mean.data();
  for (std::size_t j = 0; j < n; ++j) {
    p0[j] = x0[j] - mean[j];
    p1[j] = x1[j] - mean[j];
    p2[j] = x2[j] - mean[j];
    p3[j] = x3[j] - mean[j];
  }
  const double* __restrict lv = stats.factor.values.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* __restrict li = lv + i * n;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    double b0 = 0.0, b1 = 0.0, b2 = 0.0, b3 = 0.0;
    std::size_t k = 0;
    for (; k + 2 <= i; k += 2) {
      const double l0 = li[k], l1 = li[k + 1];
      a0 += l0 * p0[k];
      a1 += l0 * p1[k];
      a2 += l0 * p2[k];
      a3 += l0 * p3[k];
      b0 += l1 * p0[k + 1];
      b1 += l1 * p1[k + 1];
      b2 += l1 * p2[k + 1];
      b3 += l1 * p3[k + 1];
    }
    for (; k < i; ++k) {
      const double l0 = li[k];
      a0 += l0 * p0[k];
      a1 += l0 * p1[k];
      a2 += l0 * p2[k];
      a3 += l0 * p3[k];
    }
    const double inv = 1.0 / li[i];
    p0[i] = (p0[i] - (a0 + b0)) * inv;
    p1[i] = (p1[i] - (a1 + b1)) * inv;
    p2[i] = (p2[i] - (a2 + b2)) * inv;
    p3[i] = (p3[i] - (a3 + b3)) * inv;
  }
  double q0 = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    q0 += p0[j] * p0[j];
    q1 += p1[j] * p1[j];
    q2 += p2[j] * p2[j];
    q3 += p3[j] * p3[j];
  }
  out[0] = q0;
  out[1] = q1;
  out[2] = q2;
  out[3] = q3;
}

}  // namespace gmm_detail

// Full-covariance GMM fitted by EM, initialized from a k-means run (means
// from centroids, covariances from member scatter, weights from member
// fractions). Covariances are re-regularized with the ridge rule every
// M-step. The returned assignment is argmax responsibility with ties to the
// lowest component index; empty components steal their best-responsibility
// sample so the assignment stays a partition into non-empty clusters.
inline std::pair<GmmModel, ClusterAssignment> gmm_fit(const EmbeddingSet& set, std::size_t k,
                                                      std::uint64_t seed,
                                                      const GmmConfig& config = {}) {
  const std::size_t n = set.size();
  const std::size_t d = set.dim();
  if (k < 1 || k > n)
    throw DataError("gmm: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const Matrix& data = set.data;

  auto [km_model, km_assign] = kmeans_fit(set, k, seed, config.kmeans);
  GmmModel model;
  model.components.reserve(k);
  model.weights.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    model.components.push_back(estimate_gaussian(data, km_assign.members[c]));
    model.weights[c] = static_cast<double>(km_assign.members[c].size()) / static_cast<double>(n);
  }

  std::vector<double> resp(n * k);
  std::vector<double> sample_ll(n);
  double prev_mean_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < config.max_iter; ++iter) {
    // E-step. Component-major first pass so each Cholesky factor stays
    // cache-resident across all samples, then a per-sample normalization
    // pass. Disjoint writes, reduction done serially below.
    for (std::size_t c = 0; c < k; ++c) {
      const GaussianStats& component = model.components[c];
      const double log_norm =
          std::log(model.weights[c]) -
          0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) +
                 component.log_det);
      parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
        gmm_detail::QuadScratch scratch;
        double quad[4];
        std::size_t i = begin;
        for (; i + 4 <= end; i += 4) {
          gmm_detail::quad_mahalanobis(component, data.row(i), data.row(i + 1),
                                       data.row(i + 2), data.row(i + 3), scratch, quad);
          for (int lane = 0; lane < 4; ++lane)
            resp[(i + static_cast<std::size_t>(lane)) * k + c] =
                log_norm - 0.5 * quad[lane];
        }
        for (; i < end; ++i) {
          gmm_detail::quad_mahalanobis(component, data.row(i), data.row(i), data.row(i),
                                       data.row(i), scratch, quad);
          resp[i * k + c] = log_norm - 0.5 * quad[0];
        }
      });
    }
    parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double* lp = resp.data() + i * k;
        double max_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
          if (lp[c] > max_lp) max_lp = lp[c];
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          lp[c] = std::exp(lp[c] - max_lp);
          sum += lp[c];
        }
        sample_ll[i] = max_lp + std::log(sum);
        for (std::size_t c = 0; c < k; ++c) lp[c] /= sum;
      }
    });
    double total_ll = 0.0;
    for (const double v : sample_ll) total_ll += v;
    const double mean_ll = total_ll / static_cast<double>(n);
    model.log_likelihood_history.push_back(mean_ll);
    model.iterations_run = iter + 1;
    if (iter > 0 &&
        std::abs(mean_ll - prev_mean_ll) <= config.tol * std::max(1.0, std::abs(mean_ll)))
      break;
    prev_mean_ll = mean_ll;

    // M-step: weighted moments per component, serial over samples in index
    // order within each component.
    std::vector<std::vector<double>> new_means(k, std::vector<double>(d));
    std::vector<Matrix> new_covs(k);
    std::vector<double> new_weights(k);
    std::vector<std::string> failures(k);
    parallel::for_each_index(k, [&](std::size_t c) {
      double nc = 0.0;
      for (std::size_t i = 0; i < n; ++i) nc += resp[i * k + c];
      if (!(nc > 0.0)) {
        failures[c] = "component " + std::to_string(c) + " collapsed to zero weight";
        return;
      }
      // Responsibilities below 1e-30 move the moments by less than 1e-28
      // relative; dropping them keeps the scatter work proportional to the
      // component's effective membership. The cutoff is deterministic, so
      // results stay reproducible.
      std::vector<std::size_t> support;
      support.reserve(n);
      for (std::size_t i = 0; i < n; ++i)
        if (resp[i * k + c] > 1e-30) support.push_back(i);

      auto& mean = new_means[c];
      for (const std::size_t i : support) {
        const double w = resp[i * k + c];
        const double* x = data.values.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) mean[j] += w * x[j];
      }
      for (double& m : mean) m /= nc;
      // Scatter accumulation four samples per pass: each covariance row is
      // loaded and stored once per group instead of once per sample.
      Matrix cov(d, d);
      std::vector<double> c0(d), c1(d), c2(d), c3(d);
      std::size_t s = 0;
      for (; s + 4 <= support.size(); s += 4) {
        const std::size_t i0 = support[s], i1 = support[s + 1];
        const std::size_t i2 = support[s + 2], i3 = support[s + 3];
        const double w0 = resp[i0 * k + c], w1 = resp[i1 * k + c];
        const double w2 = resp[i2 * k + c], w3 = resp[i3 * k + c];
        const double* x0 = data.values.data() + i0 * d;
        const double* x1 = data.values.data() + i1 * d;
        const double* x2 = data.values.data() + i2 * d;
        const double* x3 = data.values.data() + i3 * d;
        for (std::size_t j = 0; j < d; ++j) {
          c0[j] = x0[j] - mean[j];
          c1[j] = x1[j] - mean[j];
          c2[j] = x2[j] - mean[j];
          c3[j] = x3[j] - mean[j];
        }
        for (std::size_t a = 0; a < d; ++a) {
          const double wa0 = w0 * c0[a], wa1 = w1 * c1[a];
          const double wa2 = w2 * c2[a], wa3 = w3 * c3[a];
          double* row = cov.values.data() + a * d;
          for (std::size_t b = a; b < d; ++b)
            row[b] += (wa0 * c0[b] + wa1 * c1[b]) + (wa2 * c2[b] + wa3 * c3[b]);
        }
      }
      for (; s < support.size(); ++s) {
        const std::size_t i = support[s];
        const double w = resp[i * k + c];
        const double* x = data.values.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) c0[j] = x[j] - mean[j];
        for (std::size_t a = 0; a < d; ++a) {
          const double wa = w * c0[a];
          double* row = cov.values.data() + a * d;
          for (std::size_t b = a; b < d; ++b) row[b] += wa * c0[b];
        }
      }
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
          cov(a, b) /= nc;
          cov(b, a) = cov(a, b);
        }
      new_covs[c] = std::move(cov);
      new_weights[c] = nc / static_cast<double>(n);
    });
    for (const auto& f : failures)
      if (!f.empty()) throw NumericalError("gmm: " + f);
    double weight_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      new_weights[c] = std::max(new_weights[c], 1e-12);
      weight_sum += new_weights[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      model.weights[c] = new_weights[c] / weight_sum;
      model.components[c] = make_gaussian(std::move(new_means[c]), std::move(new_covs[c]));
    }
  }
  model.final_log_likelihood = model.log_likelihood_history.back();

  // Hard assignment by responsibility.
  std::vector<std::int32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (resp[i * k + c] > resp[i * k + best]) best = c;
    assign[i] = static_cast<std::int32_t>(best);
  }
  std::vector<std::size_t> counts(k, 0);
  for (const auto c : assign) ++counts[static_cast<std::size_t>(c)];
  for (std::size_t e = 0; e < k; ++e) {
    if (counts[e] != 0) continue;
    std::size_t pick = n;
    double best_r = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[static_cast<std::size_t>(assign[i])] < 2) continue;
      if (resp[i * k + e] > best_r) {
        best_r = resp[i * k + e];
        pick = i;
      }
    }
    if (pick == n) throw DataError("gmm: cannot repair empty component");
    --counts[static_cast<std::size_t>(assign[pick])];
    assign[pick] = static_cast<std::int32_t>(e);
    ++counts[e];
  }

  ClusterAssignment out;
  out.source = ClusterAssignment::Source::gmm;
  out.num_clusters = k;
  out.assignment = std::move(assign);
  out.members = ClusterAssignment::members_of(out.assignment, k);
  out.validate();
  return {std::move(model), std::move(out)};
}

// ---------------------------------------------------------------------------
// Assigning samples to fitted clusters
// ---------------------------------------------------------------------------

struct AssignResult {
  std::vector<std::int32_t> cluster;
  std::vector<double> distance;
};

// Distance of one sample to one cluster under the given metric. Mahalanobis
// requires per-cluster Gaussian stats.
inline double cluster_distance(std::span<const double> x, std::span<const double> mean,
                               const GaussianStats* stats, Metric metric) {
  switch (metric) {
    case Metric::cosine: return cosine_distance(x, mean);
    case Metric::euclidean: return euclidean_distance(x, mean);
    case Metric::mahalanobis:
      if (stats == nullptr)
        throw DataError("mahalanobis assignment requires Gaussian statistics");
      return mahalanobis_score(x, *stats);
  }
  throw DataError("unknown metric");
}

// Nearest cluster mean under the metric, ties to the lowest cluster index.
// `stats` may be empty unless metric is mahalanobis. Runs cluster-major with
// a running minimum per sample, so per-cluster state (the Mahalanobis factor
// in particular) stays cache-hot; strict less-than keeps the tie rule.
inline AssignResult assign_nearest_cluster(const Matrix& means,
                                           std::span<const GaussianStats> stats,
                                           const EmbeddingSet& samples, Metric metric) {
  if (samples.dim() != means.cols)
    throw DataError("assignment: sample dimension " + std::to_string(samples.dim()) +
                    " does not match cluster dimension " + std::to_string(means.cols));
  if (metric == Metric::mahalanobis && stats.size() != means.rows)
    throw DataError("mahalanobis assignment requires stats for every cluster");
  AssignResult result;
  result.cluster.assign(samples.size(), 0);
  result.distance.assign(samples.size(), std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < means.rows; ++c) {
    const GaussianStats* cluster_stats = metric == Metric::mahalanobis ? &stats[c] : nullptr;
    const auto mean = means.row(c);
    parallel::for_blocks(samples.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double v = cluster_distance(samples.data.row(i), mean, cluster_stats, metric);
        if (v < result.distance[i]) {
          result.distance[i] = v;
          result.cluster[i] = static_cast<std::int32_t>(c);
        }
      }
    });
  }
  return result;
}

inline AssignResult assign(const KMeansModel& model, const EmbeddingSet& samples) {
  return assign_nearest_cluster(model.centroids, {}, samples, Metric::euclidean);
}

// Argmax responsibility; the reported distance is the Mahalanobis score to
// the winning component.
inline AssignResult assign(const GmmModel& model, const EmbeddingSet& samples) {
  if (samples.dim() != model.components.front().dim())
    throw DataError("assignment: sample dimension does not match model dimension");
  AssignResult result;
  result.cluster.resize(samples.size());
  result.distance.resize(samples.size());
  parallel::for_blocks(samples.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = samples.data.row(i);
      const auto resp = gmm_responsibilities(model, x);
      std::size_t best = 0;
      for (std::size_t c = 1; c < resp.size(); ++c)
        if (resp[c] > resp[best]) best = c;
      result.cluster[i] = static_cast<std::int32_t>(best);
      result.distance[i] = mahalanobis_score(x, model.components[best]);
    }
  });
  return result;
}

}  // namespace oodkit
