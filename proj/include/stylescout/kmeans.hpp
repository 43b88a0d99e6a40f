#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "stylescout/error.hpp"
#include "stylescout/rng.hpp"

namespace stylescout {

struct KMeansOptions {
  int max_iterations = 300;
  int restarts = 10;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct KMeansResult {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix centroids;         // k x dim
  std::vector<int> labels;  // one per point
  Scalar inertia = 0;       // within-cluster sum of squared distances
  int iterations = 0;
  bool converged = false;
};

namespace detail {

template <typename Derived, typename Centroids>
int nearest_centroid(const Eigen::MatrixBase<Derived>& point, const Centroids& centroids,
                     typename Derived::Scalar* distance) {
  using Scalar = typename Derived::Scalar;
  int best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const Scalar d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest centroid index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (distance) *distance = best_d;
  return best;
}

template <typename Scalar, typename Points>
void plus_plus_init(const Points& points, int k, Rng& rng,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centroids) {
  const Eigen::Index n = points.rows();
  centroids.resize(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));

  std::vector<Scalar> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centroids.row(0)).squaredNorm();

  for (int c = 1; c < k; ++c) {
    Scalar total = 0;
    for (const Scalar v : d2) total += v;
    Eigen::Index pick = n - 1;
    if (total > 0) {
      const Scalar target = static_cast<Scalar>(rng.uniform()) * total;
      Scalar acc = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0 && acc > target) {
          pick = i;
          break;
        }
      }
      // Rounding can leave acc <= target; fall back to the last positive-weight point.
      if (!(acc > target)) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2[i] > 0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < d2[i]) d2[i] = d;
    }
  }
}

// Moves the point farthest from its centroid (taken from a cluster with more
// than one member) into each empty cluster.
template <typename Scalar, typename Points>
void reseed_empty(const Points& points, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centroids,
                  std::vector<int>& labels, std::vector<int>& counts) {
  const Eigen::Index n = points.rows();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    if (counts[c] > 0) continue;
    Eigen::Index far = -1;
    Scalar far_d = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (counts[labels[i]] < 2) continue;
      const Scalar d = (points.row(i) - centroids.row(labels[i])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) break;  // only possible when k > n
    --counts[labels[far]];
    labels[far] = static_cast<int>(c);
    counts[c] = 1;
    centroids.row(c) = points.row(far);
  }
}

template <typename Scalar, typename Points>
void update_means(const Points& points, const std::vector<int>& labels,
                  const std::vector<int>& counts,
                  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centroids) {
  centroids.setZero();
  for (Eigen::Index i = 0; i < points.rows(); ++i) centroids.row(labels[i]) += points.row(i);
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    if (counts[c] > 0) centroids.row(c) /= static_cast<Scalar>(counts[c]);
  }
}

template <typename Scalar, typename Points>
KMeansResult<Scalar> lloyd(const Points& points, int k, int max_iterations, Rng& rng) {
  KMeansResult<Scalar> result;
  plus_plus_init<Scalar>(points, k, rng, result.centroids);
  const Eigen::Index n = points.rows();

  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  auto assign = [&](std::vector<int>& out) {
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] = nearest_centroid(points.row(i), result.centroids, nullptr);
      ++counts[out[i]];
    }
  };
  assign(labels);

  std::vector<int> next(labels.size());
  for (int it = 1; it <= max_iterations; ++it) {
    reseed_empty<Scalar>(points, result.centroids, labels, counts);
    update_means<Scalar>(points, labels, counts, result.centroids);
    result.iterations = it;
    assign(next);
    if (next == labels) {
      result.converged = true;
      break;
    }
    labels.swap(next);
  }
  if (!result.converged) {
    // Out of iterations: settle the last assignment so centroids are its means.
    reseed_empty<Scalar>(points, result.centroids, labels, counts);
    update_means<Scalar>(points, labels, counts, result.centroids);
  }

  result.labels = std::move(labels);
  result.inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    result.inertia += (points.row(i) - result.centroids.row(result.labels[i])).squaredNorm();
  }
  return result;
}

}  // namespace detail

/// k-means over the rows of `points` (Euclidean metric).
///
/// Each restart is k-means++ seeded from an independent stream derived from
/// `options.seed`; Lloyd iterations stop once assignments are stable. Empty
/// clusters are re-seeded from the point farthest from its centroid. The
/// restart with the lowest inertia wins; ties keep the earliest restart.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                              const KMeansOptions& options = {}) {
  using Scalar = typename Derived::Scalar;
  if (k < 1 || k > points.rows()) throw InvalidArgument("k-means: k must lie in [1, number of points]");
  if (options.max_iterations < 1 || options.restarts < 1) {
    throw InvalidArgument("k-means: iterations and restarts must be positive");
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> data = points;

  KMeansResult<Scalar> best;
  bool have_best = false;
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r)));
    auto candidate = detail::lloyd<Scalar>(data, k, options.max_iterations, rng);
    if (!have_best || candidate.inertia < best.inertia) {
      best = std::move(candidate);
      have_best = true;
    }
  }
  return best;
}

/// Within-cluster sum of squares of an arbitrary labelling, centroids taken as
/// member means.
template <typename Derived>
typename Derived::Scalar within_cluster_ss(const Eigen::MatrixBase<Derived>& points,
                                           const std::vector<int>& labels, int k) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> means =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(k, points.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    means.row(labels[i]) += points.row(i);
    ++counts[labels[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] > 0) means.row(c) /= static_cast<Scalar>(counts[c]);
  }
  Scalar total = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) total += (points.row(i) - means.row(labels[i])).squaredNorm();
  return total;
}

}  // namespace stylescout
