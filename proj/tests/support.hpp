#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stylescout/backend.hpp"
#include "stylescout/error.hpp"
#include "stylescout/rng.hpp"

namespace stylescout::testing {

/// Exhaustive k=2 optimum: within-cluster sum of squares minimised over every
/// split of the rows into two non-empty groups.
inline double best_two_partition_wcss(const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  double best = std::numeric_limits<double>::infinity();
  // Row 0 always sits in group 0, so each split is visited once.
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> group(static_cast<std::size_t>(n), 0);
    int ones = 0;
    for (int i = 1; i < n; ++i) {
      group[i] = (mask >> (i - 1)) & 1u;
      ones += group[i];
    }
    if (ones == 0) continue;
    double total = 0.0;
    for (int g = 0; g < 2; ++g) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (group[i] == g) {
          mean += points.row(i);
          ++count;
        }
      }
      mean /= count;
      for (int i = 0; i < n; ++i) {
        if (group[i] == g) total += (points.row(i) - mean).squaredNorm();
      }
    }
    best = std::min(best, total);
  }
  return best;
}

/// Two well-separated blobs of `n` points (n <= 8) in `dim` dimensions.
inline Eigen::MatrixXd separated_blobs(Rng& rng, int n, int dim) {
  Eigen::MatrixXd points(n, dim);
  Eigen::RowVectorXd centre_a(dim), centre_b(dim);
  for (int j = 0; j < dim; ++j) {
    centre_a[j] = rng.normal(0.0, 1.0);
    centre_b[j] = rng.normal(0.0, 1.0);
  }
  centre_b += Eigen::RowVectorXd::Constant(dim, 10.0);
  const int split = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd& centre = i < split ? centre_a : centre_b;
    for (int j = 0; j < dim; ++j) points(i, j) = centre[j] + rng.normal(0.0, 0.5);
  }
  return points;
}

/// Backend with hand-set importance tables and no rendering, for testing the
/// mask-to-parameter translation in isolation.
class TableBackend final : public GeneratorBackend {
 public:
  TableBackend(Eigen::Index dim, std::map<std::string, Eigen::VectorXd> tables) : tables_(std::move(tables)) {
    meta_.dim = dim;
    meta_.layout = {{0, static_cast<int>(dim)}};
    meta_.embedding_dim = 2;
    meta_.lambda_max = 10.0;
    for (const auto& [id, t] : tables_) meta_.exemplars.push_back({id, Eigen::VectorXd::Zero(dim)});
  }
  const BackendMeta& meta() const override { return meta_; }
  Image generate(const StyleVector&) const override { throw BackendError("table backend does not render"); }
  Eigen::VectorXd embed(const Image&) const override { throw BackendError("table backend does not embed"); }
  Eigen::VectorXd importance(const HighlightMask& mask) const override { return tables_.at(mask.exemplar_id); }

 private:
  BackendMeta meta_;
  std::map<std::string, Eigen::VectorXd> tables_;
};

}  // namespace stylescout::testing
