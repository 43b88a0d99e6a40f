#include <doctest.h>

#include <numeric>
#include <set>

#include "stylescout/engine.hpp"
#include "stylescout/kmeans.hpp"
#include "support.hpp"

using namespace stylescout;
using stylescout::testing::best_two_partition_wcss;
using stylescout::testing::separated_blobs;

TEST_SUITE("kmeans") {

TEST_CASE("two separated triples are recovered and match the exhaustive optimum") {
  Eigen::MatrixXd points(6, 2);
  points << 0.0, 0.0, 0.2, 0.1, 0.1, 0.3,  //
      5.0, 5.0, 5.2, 4.9, 4.8, 5.1;
  const auto result = kmeans(points, 2, {.seed = 3});
  CHECK(result.labels[0] == result.labels[1]);
  CHECK(result.labels[1] == result.labels[2]);
  CHECK(result.labels[3] == result.labels[4]);
  CHECK(result.labels[4] == result.labels[5]);
  CHECK(result.labels[0] != result.labels[3]);
  CHECK(result.inertia == doctest::Approx(best_two_partition_wcss(points)).epsilon(1e-12));
}

TEST_CASE("small separated instances reach the exhaustive optimum") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(6));
    const int dim = 1 + static_cast<int>(rng.below(4));
    const Eigen::MatrixXd points = separated_blobs(rng, n, dim);
    const auto result = kmeans(points, 2, {.seed = static_cast<std::uint64_t>(trial)});
    CHECK(std::abs(within_cluster_ss(points, result.labels, 2) - best_two_partition_wcss(points)) <= 1e-9);
  }
}

TEST_CASE("result is a fixed point of Lloyd's iteration") {
  Rng rng(5);
  Eigen::MatrixXd points(40, 3);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) points(i, j) = rng.normal();
  }
  const auto result = kmeans(points, 5, {.seed = 9});
  REQUIRE(result.converged);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double own = (points.row(i) - result.centroids.row(result.labels[i])).squaredNorm();
    for (int c = 0; c < 5; ++c) CHECK(own <= (points.row(i) - result.centroids.row(c)).squaredNorm() + 1e-12);
  }
  for (int c = 0; c < 5; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    int count = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (result.labels[i] == c) {
        mean += points.row(i);
        ++count;
      }
    }
    REQUIRE(count > 0);
    CHECK((mean / count - result.centroids.row(c)).norm() <= 1e-9);
  }
  CHECK(result.inertia == doctest::Approx(within_cluster_ss(points, result.labels, 5)).epsilon(1e-12));
}

TEST_CASE("same seed, same answer; float scalar works too") {
  Rng rng(2);
  Eigen::MatrixXd points(30, 4);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) points(i, j) = rng.normal();
  }
  const auto a = kmeans(points, 4, {.seed = 77});
  const auto b = kmeans(points, 4, {.seed = 77});
  CHECK(a.labels == b.labels);
  CHECK(a.centroids == b.centroids);

  const Eigen::MatrixXf single = points.cast<float>();
  const auto f = kmeans(single, 4, {.seed = 77});
  CHECK(f.labels.size() == 30);
  CHECK(f.centroids.rows() == 4);
}

TEST_CASE("k equal to the number of points gives singletons") {
  Eigen::MatrixXd points(5, 2);
  points << 0, 0, 1, 0, 0, 1, 3, 3, -2, 1;
  const std::vector<DirectionId> ids = {10, 11, 12, 13, 14};
  const auto clusters = cluster_embeddings(ids, points, 5, {.seed = 1});
  REQUIRE(clusters.size() == 5);
  std::set<DirectionId> seen;
  for (const auto& c : clusters) {
    REQUIRE(c.member_ids.size() == 1);
    CHECK(c.representative_id == c.member_ids[0]);
    seen.insert(c.member_ids[0]);
  }
  CHECK(seen.size() == 5);
  // Equal sizes: ordered by lowest member id.
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    CHECK(clusters[c].id == static_cast<int>(c));
    CHECK(clusters[c].member_ids[0] == ids[c]);
  }
}

TEST_CASE("k = 1 puts everything in one cluster") {
  Eigen::MatrixXd points(4, 2);
  points << 0, 0, 2, 0, 0, 2, 2, 2;
  const std::vector<DirectionId> ids = {4, 3, 2, 1};
  const auto clusters = cluster_embeddings(ids, points, 1, {.seed = 1});
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].member_ids == std::vector<DirectionId>{1, 2, 3, 4});
  // All four are equidistant from the centroid: the lowest id wins.
  CHECK(clusters[0].representative_id == 1);
}

TEST_CASE("representative is the member nearest the centroid") {
  Rng rng(8);
  Eigen::MatrixXd points(25, 3);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) points(i, j) = rng.normal();
  }
  std::vector<DirectionId> ids(25);
  std::iota(ids.begin(), ids.end(), DirectionId{100});
  const auto clusters = cluster_embeddings(ids, points, 4, {.seed = 4});
  std::size_t members = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (c > 0) CHECK(clusters[c - 1].member_ids.size() >= clusters[c].member_ids.size());
    members += clusters[c].member_ids.size();
    double best = std::numeric_limits<double>::infinity();
    DirectionId arg = 0;
    for (const DirectionId id : clusters[c].member_ids) {
      const double d = (points.row(static_cast<Eigen::Index>(id - 100)).transpose() - clusters[c].centroid).squaredNorm();
      if (d < best) {
        best = d;
        arg = id;
      }
    }
    CHECK(clusters[c].representative_id == arg);
  }
  CHECK(members == 25);
}

TEST_CASE("invalid k is rejected") {
  Eigen::MatrixXd points = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(kmeans(points, 0), InvalidArgument);
  CHECK_THROWS_AS(kmeans(points, 4), InvalidArgument);
}

TEST_CASE("duplicate points do not leave empty clusters") {
  Eigen::MatrixXd points(6, 1);
  points << 0, 0, 0, 0, 1, 1;
  const auto result = kmeans(points, 3, {.seed = 1});
  std::vector<int> counts(3, 0);
  for (const int l : result.labels) ++counts[l];
  for (const int c : counts) CHECK(c > 0);
}

}
