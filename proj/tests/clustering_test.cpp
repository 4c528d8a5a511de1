#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <oodkit/clustering.hpp>
#include <oodkit/embedding.hpp>

namespace {

using namespace oodkit;

EmbeddingSet make_set(std::vector<std::vector<double>> rows,
                      std::vector<std::int32_t> labels = {}) {
  EmbeddingSet set;
  set.name = "t";
  set.data = Matrix(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) set.data(i, j) = rows[i][j];
  if (!labels.empty()) set.labels = std::move(labels);
  return set;
}

// Exhaustive oracle: best possible two-cluster inertia over every assignment
// of the points.
double brute_force_two_cluster_inertia(const Matrix& data) {
  const std::size_t n = data.rows;
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<std::vector<std::size_t>> groups(2);
    for (std::size_t i = 0; i < n; ++i) groups[(mask >> i) & 1u].push_back(i);
    double inertia = 0.0;
    for (const auto& group : groups) {
      std::vector<double> mean(data.cols, 0.0);
      for (const std::size_t i : group)
        for (std::size_t j = 0; j < data.cols; ++j) mean[j] += data(i, j);
      for (double& m : mean) m /= static_cast<double>(group.size());
      for (const std::size_t i : group) inertia += squared_euclidean(data.row(i), mean);
    }
    best = std::min(best, inertia);
  }
  return best;
}

TEST(FromLabels, RemapsToDenseIds) {
  const auto set = make_set({{0}, {1}, {2}}, {5, 5, 9});
  const auto clusters = from_labels(set);
  EXPECT_EQ(clusters.num_clusters, 2u);
  EXPECT_EQ(clusters.assignment, (std::vector<std::int32_t>{0, 0, 1}));
  EXPECT_EQ(clusters.source, ClusterAssignment::Source::ground_truth);
}

TEST(FromLabels, AllIdenticalLabelsGiveOneCluster) {
  const auto set = make_set({{0}, {1}, {2}}, {4, 4, 4});
  EXPECT_EQ(from_labels(set).num_clusters, 1u);
}

TEST(FromLabels, TenDistinctLabelsGiveTenClusters) {
  const auto set = synth_blobs(10, 8, 4, 10.0, 1.0, 5);
  const auto clusters = from_labels(set);
  EXPECT_EQ(clusters.num_clusters, 10u);
  for (const auto& members : clusters.members) EXPECT_EQ(members.size(), 8u);
}

TEST(FromLabels, MissingLabelsRejected) {
  auto set = make_set({{0}, {1}});
  EXPECT_THROW(from_labels(set), DataError);
}

TEST(SingleCluster, AssignsEverythingToClusterZero) {
  const auto set = make_set({{0}, {1}, {2}, {3}, {4}}, {1, 2, 3, 4, 5});
  const auto clusters = single_cluster(set);
  EXPECT_EQ(clusters.num_clusters, 1u);
  EXPECT_EQ(clusters.assignment, (std::vector<std::int32_t>(5, 0)));
  const auto one = single_cluster(make_set({{7.0}}));
  EXPECT_EQ(one.members[0].size(), 1u);
}

TEST(KMeans, KOneIsTheGlobalMean) {
  const auto set = synth_blobs(2, 30, 4, 6.0, 1.0, 11);
  const auto [model, clusters] = kmeans_fit(set, 1, 3);
  const auto global = estimate_gaussian(set.data);
  double expected_inertia = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i)
    expected_inertia += squared_euclidean(set.data.row(i), global.mean);
  for (std::size_t j = 0; j < set.dim(); ++j)
    EXPECT_NEAR(model.centroids(0, j), global.mean[j], 1e-12);
  EXPECT_NEAR(model.inertia, expected_inertia, 1e-9);
  EXPECT_EQ(clusters.num_clusters, 1u);
}

TEST(KMeans, UnitSquareReachesTheBruteForceOptimum) {
  const auto set = make_set({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const double optimum = brute_force_two_cluster_inertia(set.data);
  EXPECT_DOUBLE_EQ(optimum, 1.0);
  const auto [model, clusters] = kmeans_fit(set, 2, 17);
  EXPECT_NEAR(model.inertia, optimum, 1e-12);
  EXPECT_EQ(clusters.members[0].size(), 2u);
  EXPECT_EQ(clusters.members[1].size(), 2u);
}

TEST(KMeans, IdenticalPointsRepairToZeroInertia) {
  const auto set = make_set({{2, 2}, {2, 2}, {2, 2}, {2, 2}});
  const auto [model, clusters] = kmeans_fit(set, 3, 5);
  EXPECT_DOUBLE_EQ(model.inertia, 0.0);
  clusters.validate();   // no empty cluster
  EXPECT_EQ(clusters.num_clusters, 3u);
}

TEST(KMeans, InertiaHistoryIsNonIncreasing) {
  for (const std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto set = synth_blobs(4, 100, 8, 4.0, 2.0, seed);
    const auto [model, clusters] = kmeans_fit(set, 4, seed);
    for (std::size_t t = 1; t < model.inertia_history.size(); ++t)
      EXPECT_LE(model.inertia_history[t],
                model.inertia_history[t - 1] * (1.0 + 1e-12));
  }
}

TEST(KMeans, FinalAssignmentIsAFixedPoint) {
  const auto set = synth_blobs(3, 60, 6, 8.0, 1.0, 23);
  const auto [model, clusters] = kmeans_fit(set, 3, 23);
  const auto reassigned = assign(model, set);
  EXPECT_EQ(reassigned.cluster, clusters.assignment);
}

TEST(KMeans, DeterministicForFixedSeed) {
  const auto set = synth_blobs(3, 40, 5, 5.0, 1.5, 31);
  const auto a = kmeans_fit(set, 3, 9);
  const auto b = kmeans_fit(set, 3, 9);
  EXPECT_EQ(a.first.centroids.values, b.first.centroids.values);
  EXPECT_EQ(a.second.assignment, b.second.assignment);
  EXPECT_EQ(a.first.inertia, b.first.inertia);
}

TEST(KMeans, RejectsKAboveN) {
  const auto set = make_set({{0}, {1}});
  EXPECT_THROW(kmeans_fit(set, 3, 1), DataError);
}

TEST(Gmm, SingleComponentClosedForm) {
  const auto set = synth_blobs(2, 25, 3, 4.0, 1.0, 41);
  const auto [model, clusters] = gmm_fit(set, 1, 7);
  const auto expected = estimate_gaussian(set.data);
  ASSERT_EQ(model.components.size(), 1u);
  EXPECT_DOUBLE_EQ(model.weights[0], 1.0);
  for (std::size_t j = 0; j < set.dim(); ++j)
    EXPECT_NEAR(model.components[0].mean[j], expected.mean[j], 1e-9);
  for (std::size_t i = 0; i < set.dim(); ++i)
    for (std::size_t j = 0; j < set.dim(); ++j)
      EXPECT_NEAR(model.components[0].covariance(i, j), expected.covariance(i, j), 1e-9);
  EXPECT_LE(model.iterations_run, 2);
  EXPECT_EQ(clusters.num_clusters, 1u);
}

TEST(Gmm, WellSeparatedBlobsGetConfidentResponsibilities) {
  // Two blobs 20 sigma apart.
  Matrix centers(2, 4);
  centers(0, 0) = 0.0;
  centers(1, 0) = 20.0;
  const auto set = sample_blobs(centers, 80, 1.0, 13);
  const auto [model, clusters] = gmm_fit(set, 2, 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto resp = gmm_responsibilities(model, set.data.row(i));
    const double top = *std::max_element(resp.begin(), resp.end());
    EXPECT_GT(top, 0.999);
    const auto assigned = static_cast<std::size_t>(clusters.assignment[i]);
    EXPECT_DOUBLE_EQ(resp[assigned], top);
  }
  // Hard assignment must agree with the generating component up to a
  // component relabeling.
  for (std::size_t i = 1; i < set.size(); ++i) {
    const bool same_label = (*set.labels)[i] == (*set.labels)[0];
    const bool same_cluster = clusters.assignment[i] == clusters.assignment[0];
    EXPECT_EQ(same_label, same_cluster);
  }
}

TEST(Gmm, LogLikelihoodHistoryIsNonDecreasing) {
  for (const std::uint64_t seed : {1, 2, 3}) {
    const auto set = synth_blobs(3, 80, 6, 3.0, 1.5, seed + 50);
    const auto [model, clusters] = gmm_fit(set, 3, seed);
    for (std::size_t t = 1; t < model.log_likelihood_history.size(); ++t)
      EXPECT_GE(model.log_likelihood_history[t], model.log_likelihood_history[t - 1] - 1e-8);
    EXPECT_DOUBLE_EQ(model.final_log_likelihood, model.log_likelihood_history.back());
    double sum = 0.0;
    for (const double w : model.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Gmm, RejectsKAboveN) {
  const auto set = make_set({{0}, {1}});
  EXPECT_THROW(gmm_fit(set, 5, 1), DataError);
}

TEST(Assign, SampleAtCentroidGetsDistanceZero) {
  KMeansModel model;
  model.centroids = Matrix(2, 2);
  model.centroids(0, 0) = 1.0;
  model.centroids(1, 1) = 5.0;
  const auto samples = make_set({{1, 0}});
  const auto result = assign(model, samples);
  EXPECT_EQ(result.cluster[0], 0);
  EXPECT_DOUBLE_EQ(result.distance[0], 0.0);
}

TEST(Assign, TieGoesToTheLowestIndex) {
  KMeansModel model;
  model.centroids = Matrix(2, 1);
  model.centroids(0, 0) = 0.0;
  model.centroids(1, 0) = 10.0;
  const auto samples = make_set({{5.0}});
  const auto result = assign(model, samples);
  EXPECT_EQ(result.cluster[0], 0);
}

TEST(Assign, OneDimensionalHandCase) {
  KMeansModel model;
  model.centroids = Matrix(2, 1);
  model.centroids(0, 0) = 0.0;
  model.centroids(1, 0) = 10.0;
  const auto result = assign(model, make_set({{4.0}}));
  EXPECT_EQ(result.cluster[0], 0);
  EXPECT_DOUBLE_EQ(result.distance[0], 4.0);
}

TEST(Assign, MahalanobisRequiresStats) {
  Matrix means(1, 2);
  const auto samples = make_set({{1, 2}});
  EXPECT_THROW(assign_nearest_cluster(means, {}, samples, Metric::mahalanobis), DataError);
}

TEST(Assign, DimensionMismatchRejected) {
  KMeansModel model;
  model.centroids = Matrix(1, 3);
  EXPECT_THROW(assign(model, make_set({{1, 2}})), DataError);
}

}  // namespace
