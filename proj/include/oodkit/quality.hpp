#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "oodkit/clustering.hpp"
#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/parallel.hpp"

namespace oodkit {

struct SeparationConfig {
  double fraction_x = 0.1;           // smallest fraction of each pairwise list
  Metric metric = Metric::cosine;
};

struct QualityReport {
  std::vector<double> per_cluster_gs;
  std::vector<double> per_cluster_purity;   // empty when labels are absent
  std::vector<double> per_cluster_radius;
  double radius_quantile = 0.95;
};

namespace quality_detail {

// Keeps the `cap` smallest values of a stream; O(cap) memory however long
// the stream is.
class SmallestKeeper {
 public:
  explicit SmallestKeeper(std::size_t cap) : cap_(cap) {}

  void push(double v) {
    if (heap_.size() < cap_) {
      heap_.push(v);
    } else if (v < heap_.top()) {
      heap_.pop();
      heap_.push(v);
    }
  }

  // Mean of the kept values, summed in ascending order for determinism.
  double mean() {
    std::vector<double> values;
    values.reserve(heap_.size());
    while (!heap_.empty()) {
      values.push_back(heap_.top());
      heap_.pop();
    }
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  }

 private:
  std::size_t cap_;
  std::priority_queue<double> heap_;
};

inline double pair_distance(std::span<const double> a, std::span<const double> b,
                            Metric metric) {
  return metric == Metric::cosine ? cosine_distance(a, b) : euclidean_distance(a, b);
}

inline std::size_t truncated_count(double fraction, std::size_t total) {
  auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total)));
  if (m < 1) m = 1;
  if (m > total) m = total;
  return m;
}

// Mean of the smallest ceil(x*M) intra-cluster pairwise distances
// (unordered pairs, no self-pairs).
inline double intra_truncated_mean(const Matrix& data, const std::vector<std::size_t>& members,
                                   const SeparationConfig& config) {
  const std::size_t n = members.size();
  const std::size_t total = n * (n - 1) / 2;
  SmallestKeeper keeper(truncated_count(config.fraction_x, total));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      keeper.push(pair_distance(data.row(members[a]), data.row(members[b]), config.metric));
  return keeper.mean();
}

// Same over all cross pairs between two clusters.
inline double cross_truncated_mean(const Matrix& data, const std::vector<std::size_t>& lhs,
                                   const std::vector<std::size_t>& rhs,
                                   const SeparationConfig& config) {
  const std::size_t total = lhs.size() * rhs.size();
  SmallestKeeper keeper(truncated_count(config.fraction_x, total));
  for (const std::size_t a : lhs)
    for (const std::size_t b : rhs)
      keeper.push(pair_distance(data.row(a), data.row(b), config.metric));
  return keeper.mean();
}

}  // namespace quality_detail

// Per-cluster separation statistic in [-1, 1]: truncated mean of distances to
// the closest other cluster minus the truncated intra-cluster mean,
// normalized by the larger of the two. Positive means separated, negative
// means overlapping.
inline std::vector<double> global_separation(const EmbeddingSet& set,
                                             const ClusterAssignment& clusters,
                                             const SeparationConfig& config) {
  if (config.metric == Metric::mahalanobis)
    throw DataError("global separation needs a pairwise metric (cosine or euclidean)");
  if (!(config.fraction_x > 0.0) || config.fraction_x > 1.0)
    throw DataError("fraction_x must be in (0, 1]");
  const std::size_t k = clusters.num_clusters;
  if (k < 2) throw DataError("global separation needs at least two clusters");
  for (std::size_t c = 0; c < k; ++c)
    if (clusters.members[c].size() < 2)
      throw DataError("cluster " + std::to_string(c) +
                      " has fewer than two members; separation undefined");

  // One task per intra list and per unordered cluster pair; results land in
  // preallocated slots so scheduling cannot change the outcome.
  std::vector<double> intra(k);
  std::vector<double> cross(k * k, 0.0);
  struct Job {
    std::size_t a;
    std::size_t b;   // a == b marks an intra job
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < k; ++c) jobs.push_back({c, c});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) jobs.push_back({a, b});
  parallel::for_each_index(jobs.size(), [&](std::size_t j) {
    const auto [a, b] = jobs[j];
    if (a == b) {
      intra[a] = quality_detail::intra_truncated_mean(set.data, clusters.members[a], config);
    } else {
      const double v =
          quality_detail::cross_truncated_mean(set.data, clusters.members[a],
                                               clusters.members[b], config);
      cross[a * k + b] = v;
      cross[b * k + a] = v;
    }
  });

  std::vector<double> gs(k);
  for (std::size_t c = 0; c < k; ++c) {
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t other = 0; other < k; ++other) {
      if (other == c) continue;
      if (cross[c * k + other] < closest) closest = cross[c * k + other];
    }
    const double within = intra[c];
    const double denom = std::max(closest, within);
    gs[c] = denom == 0.0 ? 0.0 : (closest - within) / denom;
  }
  return gs;
}

// Fraction of each cluster's members that share the cluster's most common
// ground-truth label.
inline std::vector<double> cluster_purity(const ClusterAssignment& clusters,
                                          const std::vector<std::int32_t>& labels) {
  if (labels.size() != clusters.assignment.size())
    throw DataError("purity: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(clusters.assignment.size()) + " samples");
  std::int32_t max_label = 0;
  for (const auto l : labels) {
    if (l < 0) throw DataError("purity: negative label");
    if (l > max_label) max_label = l;
  }
  std::vector<double> purity(clusters.num_clusters);
  std::vector<std::size_t> counts(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t c = 0; c < clusters.num_clusters; ++c) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const std::size_t i : clusters.members[c])
      ++counts[static_cast<std::size_t>(labels[i])];
    const std::size_t top = *std::max_element(counts.begin(), counts.end());
    purity[c] = static_cast<double>(top) / static_cast<double>(clusters.members[c].size());
  }
  return purity;
}

// Distance from the cluster mean enclosing the given quantile of its
// members, using the nearest-rank convention (the ceil(q*n)-th smallest).
inline std::vector<double> cluster_radius(const EmbeddingSet& set,
                                          const ClusterAssignment& clusters, Metric metric,
                                          double quantile) {
  if (!(quantile > 0.0) || quantile > 1.0) throw DataError("quantile must be in (0, 1]");
  std::vector<double> radii(clusters.num_clusters);
  parallel::for_each_index(clusters.num_clusters, [&](std::size_t c) {
    const auto& members = clusters.members[c];
    if (metric == Metric::mahalanobis && members.size() < 2)
      throw DataError("cluster " + std::to_string(c) +
                      " has one member; mahalanobis radius is degenerate");
    std::vector<double> mean(set.dim(), 0.0);
    for (const std::size_t i : members) {
      const auto x = set.data.row(i);
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += x[j];
    }
    for (double& m : mean) m /= static_cast<double>(members.size());
    GaussianStats stats;
    if (metric == Metric::mahalanobis) stats = estimate_gaussian(set.data, members);
    std::vector<double> distances(members.size());
    for (std::size_t idx = 0; idx < members.size(); ++idx) {
      const auto x = set.data.row(members[idx]);
      distances[idx] = metric == Metric::mahalanobis
                           ? mahalanobis_score(x, stats)
                           : quality_detail::pair_distance(x, mean, metric);
    }
    std::sort(distances.begin(), distances.end());
    const std::size_t rank = quality_detail::truncated_count(quantile, distances.size());
    radii[c] = distances[rank - 1];
  });
  return radii;
}

struct EpochSeparation {
  int epoch = 0;
  std::vector<double> gs;
};

// Ground-truth-cluster separation at every checkpoint, in epoch order.
// Errors are annotated with the epoch they occurred at.
inline std::vector<EpochSeparation> separation_evolution(const CheckpointSeries& series,
                                                         const SeparationConfig& config) {
  series.validate();
  std::vector<EpochSeparation> rows;
  rows.reserve(series.entries.size());
  for (const auto& entry : series.entries) {
    try {
      const ClusterAssignment clusters = from_labels(entry.embeddings);
      rows.push_back({entry.epoch, global_separation(entry.embeddings, clusters, config)});
    } catch (const DataError& e) {
      throw DataError("epoch " + std::to_string(entry.epoch) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(entry.epoch) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace oodkit
