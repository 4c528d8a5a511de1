#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "oodkit/clustering.hpp"
#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/format.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/scoring.hpp"

namespace oodkit {

struct BinaryScoredSample {
  double score = 0.0;   // higher = more in-distribution
  bool is_id = false;
};

// Area under the ROC curve via the Mann-Whitney rank statistic: one sort,
// mid-ranks for ties. Equals the fraction of (ID, OOD) pairs where the ID
// sample outscores the OOD sample, counting ties as half.
inline double auroc(std::span<const BinaryScoredSample> samples) {
  std::size_t n_id = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw DataError("auroc: non-finite score");
    if (s.is_id) ++n_id;
  }
  const std::size_t n_ood = samples.size() - n_id;
  if (n_id == 0 || n_ood == 0)
    throw DataError("auroc needs at least one ID and one OOD sample");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].score < samples[b].score;
  });

  double rank_sum_id = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && samples[order[j + 1]].score == samples[order[i]].score) ++j;
    // 1-based mid-rank of the tied block [i, j]
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (samples[order[t]].is_id) rank_sum_id += mid_rank;
    i = j + 1;
  }
  const double n1 = static_cast<double>(n_id);
  const double u = rank_sum_id - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * static_cast<double>(n_ood));
}

// Piecewise-constant ROC curve over the unique score thresholds, from (0, 0)
// to (1, 1). Trapezoidal area over these points equals auroc().
inline std::vector<std::pair<double, double>> roc_curve(
    std::span<const BinaryScoredSample> samples) {
  std::size_t n_id = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw DataError("roc_curve: non-finite score");
    if (s.is_id) ++n_id;
  }
  const std::size_t n_ood = samples.size() - n_id;
  if (n_id == 0 || n_ood == 0)
    throw DataError("roc curve needs at least one ID and one OOD sample");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].score > samples[b].score;
  });

  std::vector<std::pair<double, double>> curve;
  curve.emplace_back(0.0, 0.0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && samples[order[j + 1]].score == samples[order[i]].score) ++j;
    for (std::size_t t = i; t <= j; ++t) {
      if (samples[order[t]].is_id) ++tp;
      else ++fp;
    }
    curve.emplace_back(static_cast<double>(fp) / static_cast<double>(n_ood),
                       static_cast<double>(tp) / static_cast<double>(n_id));
    i = j + 1;
  }
  return curve;
}

inline double trapezoid_area(std::span<const std::pair<double, double>> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += 0.5 * (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second);
  return area;
}

// ---------------------------------------------------------------------------
// Sweep harness: clusters x metrics x K x threshold modes, AUROC per cell.
// ---------------------------------------------------------------------------

struct SweepCell {
  ClusterAssignment::Source source = ClusterAssignment::Source::single;
  Metric metric = Metric::cosine;
  std::size_t k = 1;   // ignored for ground_truth (resolved from labels) and single
  ThresholdMode mode = ThresholdMode::cluster;
};

struct SweepRow {
  ClusterAssignment::Source source;
  Metric metric;
  std::size_t k = 0;            // resolved cluster count
  ThresholdMode mode;
  double auroc = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::string error;            // empty on success
};

struct SweepReport {
  std::vector<SweepRow> rows;

  static void write_csv_header(std::ostream& out) {
    out << "source,metric,k,mode,auroc,n_id,n_ood,error\n";
  }

  void write_csv(std::ostream& out) const {
    write_csv_header(out);
    for (const auto& row : rows) {
      out << to_string(row.source) << ',' << to_string(row.metric) << ',' << row.k << ','
          << to_string(row.mode) << ',';
      if (row.error.empty()) out << format_double(row.auroc);
      out << ',' << row.n_id << ',' << row.n_ood << ',' << csv_field(row.error) << '\n';
    }
  }
};

struct SweepOptions {
  std::uint64_t seed = 1;
  KMeansConfig kmeans;
  GmmConfig gmm;
  // Cosine cells run on L2-normalized rows (clustering and scoring alike);
  // Euclidean and Mahalanobis run on raw features.
  bool normalize_for_cosine = true;
};

// The standard comparison grid: GT clusters (when labels exist), the single
// cluster, k-means over the K list under every metric with cluster and global
// thresholds, and GMM clusters with Mahalanobis scoring plus the default
// mixture-likelihood mode. `gt_k` adds the ground-truth cluster count to the
// K list when known.
inline std::vector<SweepCell> default_grid(bool has_labels,
                                           std::vector<std::size_t> k_values = {1, 5, 10, 15, 20},
                                           std::optional<std::size_t> gt_k = std::nullopt) {
  if (gt_k) k_values.push_back(*gt_k);
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());
  const Metric metrics[] = {Metric::cosine, Metric::euclidean, Metric::mahalanobis};
  const ThresholdMode modes[] = {ThresholdMode::cluster, ThresholdMode::global};
  std::vector<SweepCell> cells;
  if (has_labels)
    for (const Metric m : metrics)
      for (const ThresholdMode mode : modes)
        cells.push_back({ClusterAssignment::Source::ground_truth, m, 0, mode});
  for (const Metric m : metrics)
    for (const ThresholdMode mode : modes)
      cells.push_back({ClusterAssignment::Source::single, m, 1, mode});
  for (const Metric m : metrics)
    for (const std::size_t k : k_values)
      for (const ThresholdMode mode : modes)
        cells.push_back({ClusterAssignment::Source::kmeans, m, k, mode});
  for (const std::size_t k : k_values) {
    cells.push_back({ClusterAssignment::Source::gmm, Metric::mahalanobis, k,
                     ThresholdMode::cluster});
    cells.push_back({ClusterAssignment::Source::gmm, Metric::mahalanobis, k,
                     ThresholdMode::global});
    cells.push_back({ClusterAssignment::Source::gmm, Metric::mahalanobis, k,
                     ThresholdMode::gmm_default});
  }
  return cells;
}

namespace sweep_detail {

struct ClusteringOutcome {
  ClusterAssignment clusters;
  std::optional<GmmModel> gmm;
  std::string error;
};

struct ModelOutcome {
  std::optional<ClusterModel> model;
  std::string error;
};

}  // namespace sweep_detail

// Runs every requested cell: build clusters on the training split, fit the
// scoring model, score test-ID and OOD, and report AUROC. Cells that violate
// preconditions become error rows rather than disappearing. Deterministic for
// a fixed seed: per-fit seeds are derived from (source, k), never from cell
// order or thread count.
inline SweepReport run_sweep(const EmbeddingSet& train, const EmbeddingSet& test_id,
                             const EmbeddingSet& ood, const std::vector<SweepCell>& cells,
                             const SweepOptions& options = {}) {
  if (train.dim() != test_id.dim() || train.dim() != ood.dim())
    throw DataError("sweep: train/test/ood dimensions disagree");

  std::optional<EmbeddingSet> norm_train, norm_test, norm_ood;
  auto representation = [&](Metric metric)
      -> std::tuple<const EmbeddingSet&, const EmbeddingSet&, const EmbeddingSet&, bool> {
    if (metric == Metric::cosine && options.normalize_for_cosine) {
      if (!norm_train) {
        norm_train = l2_normalize(train);
        norm_test = l2_normalize(test_id);
        norm_ood = l2_normalize(ood);
      }
      return {*norm_train, *norm_test, *norm_ood, true};
    }
    return {train, test_id, ood, false};
  };

  // source, requested k, normalized flag
  using ClusterKey = std::tuple<int, std::size_t, bool>;
  std::map<ClusterKey, sweep_detail::ClusteringOutcome> clusterings;
  auto get_clustering = [&](ClusterAssignment::Source source, std::size_t k,
                            const EmbeddingSet& fit_train,
                            bool normalized) -> sweep_detail::ClusteringOutcome& {
    const ClusterKey key{static_cast<int>(source), k, normalized};
    const auto it = clusterings.find(key);
    if (it != clusterings.end()) return it->second;
    auto& outcome = clusterings[key];
    try {
      switch (source) {
        case ClusterAssignment::Source::ground_truth:
          outcome.clusters = from_labels(fit_train);
          break;
        case ClusterAssignment::Source::single:
          outcome.clusters = single_cluster(fit_train);
          break;
        case ClusterAssignment::Source::kmeans: {
          const std::uint64_t fit_seed =
              derive_seed(options.seed, 0x6B000000ULL + k * 2 + (normalized ? 1 : 0));
          outcome.clusters = kmeans_fit(fit_train, k, fit_seed, options.kmeans).second;
          break;
        }
        case ClusterAssignment::Source::gmm: {
          const std::uint64_t fit_seed =
              derive_seed(options.seed, 0x67000000ULL + k * 2 + (normalized ? 1 : 0));
          auto [gmm_model, gmm_assign] = gmm_fit(fit_train, k, fit_seed, options.gmm);
          outcome.gmm = std::move(gmm_model);
          outcome.clusters = std::move(gmm_assign);
          break;
        }
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    return outcome;
  };

  // source, requested k, metric
  using ModelKey = std::tuple<int, std::size_t, int>;
  std::map<ModelKey, sweep_detail::ModelOutcome> models;

  SweepReport report;
  for (const auto& cell : cells) {
    SweepRow row;
    row.source = cell.source;
    row.metric = cell.metric;
    row.mode = cell.mode;
    row.k = cell.k;
    row.n_id = test_id.size();
    row.n_ood = ood.size();

    const auto [fit_train, fit_test, fit_ood, normalized] = representation(cell.metric);
    const std::size_t requested_k =
        cell.source == ClusterAssignment::Source::single ? 1 : cell.k;

    const ModelKey model_key{static_cast<int>(cell.source), requested_k,
                             static_cast<int>(cell.metric)};
    auto model_it = models.find(model_key);
    if (model_it == models.end()) {
      sweep_detail::ModelOutcome outcome;
      auto& clustering = get_clustering(cell.source, requested_k, fit_train, normalized);
      if (!clustering.error.empty()) {
        outcome.error = clustering.error;
      } else {
        try {
          outcome.model = fit_cluster_model(fit_train, clustering.clusters, cell.metric,
                                            clustering.gmm ? &*clustering.gmm : nullptr);
        } catch (const std::exception& e) {
          outcome.error = e.what();
        }
      }
      model_it = models.emplace(model_key, std::move(outcome)).first;
    }

    const auto& outcome = model_it->second;
    if (!outcome.error.empty()) {
      row.error = outcome.error;
    } else {
      const ClusterModel& model = *outcome.model;
      row.k = model.num_clusters();
      try {
        if (cell.mode == ThresholdMode::gmm_default && !model.gmm)
          throw DataError("gmm threshold mode needs gmm-sourced clusters");
        const auto id_scores = score_set(model, fit_test, cell.mode);
        const auto ood_scores = score_set(model, fit_ood, cell.mode);
        std::vector<BinaryScoredSample> pooled;
        pooled.reserve(id_scores.size() + ood_scores.size());
        for (const auto& s : id_scores) pooled.push_back({s.value, true});
        for (const auto& s : ood_scores) pooled.push_back({s.value, false});
        row.auroc = auroc(pooled);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
    report.rows.push_back(std::move(row));
  }

  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const SweepRow& a, const SweepRow& b) {
                     return std::tuple(static_cast<int>(a.source), static_cast<int>(a.metric),
                                       a.k, static_cast<int>(a.mode)) <
                            std::tuple(static_cast<int>(b.source), static_cast<int>(b.metric),
                                       b.k, static_cast<int>(b.mode));
                   });
  return report;
}

}  // namespace oodkit
