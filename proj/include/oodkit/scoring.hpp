#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/clustering.hpp"
#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/parallel.hpp"

namespace oodkit {

enum class ThresholdMode { cluster, global, gmm_default };

inline std::string to_string(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::cluster: return "cluster";
    case ThresholdMode::global: return "global";
    case ThresholdMode::gmm_default: return "gmm";
  }
  return "?";
}

inline ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "cluster") return ThresholdMode::cluster;
  if (s == "global") return ThresholdMode::global;
  if (s == "gmm" || s == "gmm_default") return ThresholdMode::gmm_default;
  throw DataError("unknown threshold mode '" + s + "' (expected cluster, global or gmm)");
}

// Probability-style score in [0, 1]; higher means more in-distribution.
struct ProbabilityScore {
  double value = 0.0;
  std::int32_t assigned_cluster = 0;
  double raw_distance = 0.0;   // distance for cluster/global, log-likelihood for gmm
};

// Per-cluster means, optional Gaussian stats, and sorted reference distance
// lists fitted on training data. References always come from the training
// split: calibrating on test scores would leak the evaluation set.
struct ClusterModel {
  Metric metric = Metric::cosine;
  ClusterAssignment::Source source = ClusterAssignment::Source::single;
  bool normalized_inputs = false;                // rows were L2-normalized before fitting
  Matrix means;                                  // K x D
  std::vector<GaussianStats> stats;              // per cluster; only for mahalanobis
  std::vector<std::vector<double>> references;   // sorted ascending, per cluster
  std::vector<double> global_reference;          // sorted concatenation
  std::optional<GmmModel> gmm;                   // enables gmm_default scoring
  std::vector<double> gmm_reference;             // sorted train log-likelihoods

  std::size_t num_clusters() const { return means.rows; }
  std::size_t dim() const { return means.cols; }
};

namespace scoring_detail {

// Mid-rank survival fraction: (count greater + half of ties) / n.
inline double survival_fraction(const std::vector<double>& sorted_ref, double v) {
  const auto lo = std::lower_bound(sorted_ref.begin(), sorted_ref.end(), v);
  const auto hi = std::upper_bound(sorted_ref.begin(), sorted_ref.end(), v);
  const double greater = static_cast<double>(sorted_ref.end() - hi);
  const double equal = static_cast<double>(hi - lo);
  return (greater + 0.5 * equal) / static_cast<double>(sorted_ref.size());
}

// Mid-rank CDF fraction: (count less + half of ties) / n.
inline double cdf_fraction(const std::vector<double>& sorted_ref, double v) {
  const auto lo = std::lower_bound(sorted_ref.begin(), sorted_ref.end(), v);
  const auto hi = std::upper_bound(sorted_ref.begin(), sorted_ref.end(), v);
  const double less = static_cast<double>(lo - sorted_ref.begin());
  const double equal = static_cast<double>(hi - lo);
  return (less + 0.5 * equal) / static_cast<double>(sorted_ref.size());
}

// Component log joints for one query; returns argmax (ties to lowest index).
inline std::size_t argmax_log_joint(const GmmModel& gmm, std::span<const double> x,
                                    std::vector<double>& lp) {
  lp.resize(gmm.components.size());
  std::size_t best = 0;
  for (std::size_t c = 0; c < gmm.components.size(); ++c) {
    lp[c] = log_gaussian_density(x, gmm.components[c], gmm.weights[c]);
    if (lp[c] > lp[best]) best = c;
  }
  return best;
}

}  // namespace scoring_detail

inline std::vector<double> mixture_log_likelihood_set(const ClusterModel& model,
                                                      const EmbeddingSet& samples);

// Builds the scoring model: per-cluster means over members, Gaussian stats
// when the metric needs them, and each member's distance to its own cluster
// as the sorted reference list. Pass the fitted GmmModel for gmm-sourced
// clusters; it drives responsibility-based assignment and likelihood scoring.
inline ClusterModel fit_cluster_model(const EmbeddingSet& train,
                                      const ClusterAssignment& clusters, Metric metric,
                                      const GmmModel* gmm = nullptr) {
  if (clusters.assignment.size() != train.size())
    throw DataError("cluster assignment does not match the training set");
  clusters.validate();
  const std::size_t k = clusters.num_clusters;
  const std::size_t d = train.dim();

  ClusterModel model;
  model.metric = metric;
  model.source = clusters.source;
  model.means = Matrix(k, d);
  model.references.resize(k);
  if (gmm != nullptr) {
    if (gmm->components.size() != k)
      throw DataError("gmm component count does not match the cluster count");
    model.gmm = *gmm;
  }

  for (std::size_t c = 0; c < k; ++c) {
    const auto& members = clusters.members[c];
    if (metric == Metric::mahalanobis && members.size() < 2)
      throw DataError("cluster " + std::to_string(c) +
                      " has one member; mahalanobis needs at least two");
    auto mean = model.means.row(c);
    for (const std::size_t i : members) {
      const auto x = train.data.row(i);
      for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
    }
    for (double& m : mean) m /= static_cast<double>(members.size());
  }
  if (metric == Metric::mahalanobis) {
    model.stats.resize(k);
    parallel::for_each_index(k, [&](std::size_t c) {
      model.stats[c] = estimate_gaussian(train.data, clusters.members[c]);
    });
  }

  for (std::size_t c = 0; c < k; ++c) {
    const auto& members = clusters.members[c];
    auto& reference = model.references[c];
    reference.resize(members.size());
    if (metric == Metric::mahalanobis) {
      const GaussianStats& stats = model.stats[c];
      parallel::for_blocks(members.size(), [&](std::size_t begin, std::size_t end) {
        gmm_detail::QuadScratch scratch;
        double quad[4];
        std::size_t idx = begin;
        for (; idx + 4 <= end; idx += 4) {
          gmm_detail::quad_mahalanobis(stats, train.data.row(members[idx]),
                                       train.data.row(members[idx + 1]),
                                       train.data.row(members[idx + 2]),
                                       train.data.row(members[idx + 3]), scratch, quad);
          for (int lane = 0; lane < 4; ++lane)
            reference[idx + static_cast<std::size_t>(lane)] = quad[lane];
        }
        for (; idx < end; ++idx)
          reference[idx] = mahalanobis_score(train.data.row(members[idx]), stats);
      });
    } else {
      parallel::for_blocks(members.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx)
          reference[idx] = cluster_distance(train.data.row(members[idx]), model.means.row(c),
                                            nullptr, metric);
      });
    }
    std::sort(reference.begin(), reference.end());
    model.global_reference.insert(model.global_reference.end(), reference.begin(),
                                  reference.end());
  }
  std::sort(model.global_reference.begin(), model.global_reference.end());

  if (model.gmm) {
    model.gmm_reference = mixture_log_likelihood_set(model, train);
    std::sort(model.gmm_reference.begin(), model.gmm_reference.end());
  }
  return model;
}

// Cluster choice and raw distance for one query. Models built from GMM
// clusters pick by responsibility (argmax of the component log joints),
// consistent with fit-time assignment; everything else picks the nearest
// cluster under the model metric.
inline std::pair<std::int32_t, double> assign_query(const ClusterModel& model,
                                                    std::span<const double> x) {
  if (x.size() != model.dim())
    throw DataError("query dimension " + std::to_string(x.size()) +
                    " does not match model dimension " + std::to_string(model.dim()));
  if (model.source == ClusterAssignment::Source::gmm && model.gmm) {
    std::vector<double> lp;
    const std::size_t best = scoring_detail::argmax_log_joint(*model.gmm, x, lp);
    const GaussianStats* stats =
        model.metric == Metric::mahalanobis ? &model.stats[best] : nullptr;
    return {static_cast<std::int32_t>(best),
            cluster_distance(x, model.means.row(best), stats, model.metric)};
  }
  double best = std::numeric_limits<double>::infinity();
  std::int32_t best_c = 0;
  for (std::size_t c = 0; c < model.num_clusters(); ++c) {
    const GaussianStats* stats = model.metric == Metric::mahalanobis ? &model.stats[c] : nullptr;
    const double v = cluster_distance(x, model.means.row(c), stats, model.metric);
    if (v < best) {
      best = v;
      best_c = static_cast<std::int32_t>(c);
    }
  }
  return {best_c, best};
}

// Batched raw assignment for a whole set: same results as assign_query per
// sample, restructured cluster-major so per-cluster state stays cache-hot.
inline AssignResult assign_set(const ClusterModel& model, const EmbeddingSet& samples) {
  if (samples.dim() != model.dim())
    throw DataError("query dimension " + std::to_string(samples.dim()) +
                    " does not match model dimension " + std::to_string(model.dim()));
  const std::size_t n = samples.size();
  const std::size_t k = model.num_clusters();
  if (!(model.source == ClusterAssignment::Source::gmm && model.gmm))
    return assign_nearest_cluster(model.means, model.stats, samples, model.metric);

  std::vector<double> lp(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const GaussianStats& component = model.gmm->components[c];
    const double weight = model.gmm->weights[c];
    parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        lp[i * k + c] = log_gaussian_density(samples.data.row(i), component, weight);
    });
  }
  AssignResult result;
  result.cluster.resize(n);
  result.distance.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lp.data() + i * k;
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (row[c] > row[best]) best = c;
    result.cluster[i] = static_cast<std::int32_t>(best);
  }
  for (std::size_t c = 0; c < k; ++c) {
    const GaussianStats* stats = model.metric == Metric::mahalanobis ? &model.stats[c] : nullptr;
    parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        if (result.cluster[i] != static_cast<std::int32_t>(c)) continue;
        result.distance[i] =
            cluster_distance(samples.data.row(i), model.means.row(c), stats, model.metric);
      }
    });
  }
  return result;
}

// Batched mixture log-likelihoods; identical values to gmm_log_likelihood
// applied per sample.
inline std::vector<double> mixture_log_likelihood_set(const ClusterModel& model,
                                                      const EmbeddingSet& samples) {
  if (!model.gmm) throw DataError("gmm scoring requires a model fitted with a GMM");
  const std::size_t n = samples.size();
  const std::size_t k = model.gmm->components.size();
  std::vector<double> lp(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const GaussianStats& component = model.gmm->components[c];
    const double weight = model.gmm->weights[c];
    parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        lp[i * k + c] = log_gaussian_density(samples.data.row(i), component, weight);
    });
  }
  std::vector<double> out(n);
  parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = lp.data() + i * k;
      double max_lp = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c)
        if (row[c] > max_lp) max_lp = row[c];
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += std::exp(row[c] - max_lp);
      out[i] = max_lp + std::log(sum);
    }
  });
  return out;
}

// Probability score against the assigned cluster's own reference list.
inline ProbabilityScore score_cluster_threshold(const ClusterModel& model,
                                                std::span<const double> x) {
  const auto [cluster, raw] = assign_query(model, x);
  ProbabilityScore score;
  score.assigned_cluster = cluster;
  score.raw_distance = raw;
  score.value = scoring_detail::survival_fraction(
      model.references[static_cast<std::size_t>(cluster)], raw);
  return score;
}

// Probability score against the pooled reference list over all clusters.
inline ProbabilityScore score_global_threshold(const ClusterModel& model,
                                               std::span<const double> x) {
  const auto [cluster, raw] = assign_query(model, x);
  ProbabilityScore score;
  score.assigned_cluster = cluster;
  score.raw_distance = raw;
  score.value = scoring_detail::survival_fraction(model.global_reference, raw);
  return score;
}

// Mixture log-likelihood ranked against the training distribution,
// irrespective of which component a sample lands in. Higher likelihood means
// more in-distribution, so the CDF fraction is returned directly.
inline ProbabilityScore score_gmm_global(const ClusterModel& model, std::span<const double> x) {
  if (!model.gmm) throw DataError("gmm scoring requires a model fitted with a GMM");
  std::vector<double> lp;
  const std::size_t best = scoring_detail::argmax_log_joint(*model.gmm, x, lp);
  ProbabilityScore score;
  score.assigned_cluster = static_cast<std::int32_t>(best);
  score.raw_distance = gmm_log_likelihood(*model.gmm, x);
  score.value = scoring_detail::cdf_fraction(model.gmm_reference, score.raw_distance);
  return score;
}

inline ProbabilityScore score_sample(const ClusterModel& model, std::span<const double> x,
                                     ThresholdMode mode) {
  switch (mode) {
    case ThresholdMode::cluster: return score_cluster_threshold(model, x);
    case ThresholdMode::global: return score_global_threshold(model, x);
    case ThresholdMode::gmm_default: return score_gmm_global(model, x);
  }
  throw DataError("unknown threshold mode");
}

// Batched scoring; per-sample results match score_sample exactly.
inline std::vector<ProbabilityScore> score_set(const ClusterModel& model,
                                               const EmbeddingSet& samples,
                                               ThresholdMode mode) {
  std::vector<ProbabilityScore> scores(samples.size());
  if (mode == ThresholdMode::gmm_default) {
    if (!model.gmm) throw DataError("gmm scoring requires a model fitted with a GMM");
    if (samples.dim() != model.dim())
      throw DataError("query dimension does not match model dimension");
    // One pass over the component log joints covers both the argmax and the
    // mixture log-likelihood.
    const std::size_t n = samples.size();
    const std::size_t k = model.gmm->components.size();
    std::vector<double> lp(n * k);
    for (std::size_t c = 0; c < k; ++c) {
      const GaussianStats& component = model.gmm->components[c];
      const double weight = model.gmm->weights[c];
      parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
          lp[i * k + c] = log_gaussian_density(samples.data.row(i), component, weight);
      });
    }
    parallel::for_blocks(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double* row = lp.data() + i * k;
        std::size_t best = 0;
        double max_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          if (row[c] > row[best]) best = c;
          if (row[c] > max_lp) max_lp = row[c];
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(row[c] - max_lp);
        const double likelihood = max_lp + std::log(sum);
        scores[i].assigned_cluster = static_cast<std::int32_t>(best);
        scores[i].raw_distance = likelihood;
        scores[i].value = scoring_detail::cdf_fraction(model.gmm_reference, likelihood);
      }
    });
    return scores;
  }
  const auto assignment = assign_set(model, samples);
  parallel::for_blocks(samples.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto cluster = static_cast<std::size_t>(assignment.cluster[i]);
      scores[i].assigned_cluster = assignment.cluster[i];
      scores[i].raw_distance = assignment.distance[i];
      const auto& reference = mode == ThresholdMode::cluster ? model.references[cluster]
                                                             : model.global_reference;
      scores[i].value = scoring_detail::survival_fraction(reference, assignment.distance[i]);
    }
  });
  return scores;
}

}  // namespace oodkit
