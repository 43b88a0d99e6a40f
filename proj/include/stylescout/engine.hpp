#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stylescout/backend.hpp"
#include "stylescout/kmeans.hpp"
#include "stylescout/rng.hpp"
#include "stylescout/types.hpp"

namespace stylescout {

inline constexpr double kDefaultImportanceThreshold = 0.7;
inline constexpr int kDefaultDirectionCount = 60;
inline constexpr double kDefaultSubsampleRate = 0.05;
inline constexpr double kDefaultSigma = 1.0;
inline constexpr double kDefaultNoiseSigma = 0.25 * kDefaultSigma;
inline constexpr int kDefaultClusterCount = 6;
inline constexpr int kMaxUiClusterCount = 10;

/// Translates highlight masks into the parameters eligible for sampling.
///
/// Per mask, keeps the smallest set of highest-importance parameters whose
/// cumulative importance reaches `threshold` of the mask's total; the result
/// is the union over masks with per-index maximum importance. No masks, or
/// masks that select nothing, yield the full parameter set with uniform
/// importance.
ParameterSubset select_parameters(std::span<const HighlightMask> masks, const GeneratorBackend& backend,
                                  double threshold = kDefaultImportanceThreshold);

/// Per-mask step of select_parameters, exposed for testing: indices (sorted)
/// of the top-importance prefix reaching `threshold` of the total. Empty when
/// every weight is zero.
std::vector<int> top_importance_prefix(const Eigen::VectorXd& importance, double threshold);

struct SamplingOptions {
  int count = kDefaultDirectionCount;
  double subsample_rate = kDefaultSubsampleRate;
  double sigma = kDefaultSigma;

  void validate() const;
};

/// max(1, round(rate * subset_size)), capped at subset_size.
int support_size(double subsample_rate, std::size_t subset_size);

/// Draws `count` distinct entries of `indices` without replacement, each
/// successive pick proportional to the weight of the remaining entries.
/// Returns them sorted.
std::vector<int> weighted_subsample(std::span<const int> indices, std::span<const double> weights, int count,
                                    Rng& rng);

/// Uniformly sub-sampled sparse directions with N(0, sigma^2) deltas. Ids are
/// first_id, first_id + 1, ...
std::vector<Direction> sample_directions(const ParameterSubset& subset, const SamplingOptions& options,
                                         std::uint64_t seed, DirectionId first_id);

/// Like sample_directions, but supports favour rarely used parameters:
/// index i is weighted 1 / (1 + usage[i]). `usage` is indexed by parameter.
std::vector<Direction> resample_directions(const ParameterSubset& subset, const SamplingOptions& options,
                                           std::span<const std::uint64_t> usage, std::uint64_t seed,
                                           DirectionId first_id);

/// Coordinate-wise average of two directions over the union of their
/// supports, plus N(0, noise_sigma^2) on that union.
Direction combine_pair(const Direction& a, const Direction& b, double noise_sigma, Rng& rng, DirectionId id);

/// `count` scattered children of `pool`: each averages a uniformly chosen
/// pair of distinct pool members (a member pairs with itself only when the
/// pool has one entry).
std::vector<Direction> scatter_directions(std::span<const Direction> pool, int count, double noise_sigma,
                                          std::uint64_t seed, DirectionId first_id);

/// Renders `base + strength * d`.
Image apply_direction(const StyleVector& base, const Direction& d, Strength strength,
                      const GeneratorBackend& backend);

/// Unit embeddings (one row per direction) of each direction rendered on
/// `base`. Backend calls run in parallel when the backend allows it; rows are
/// always in input order.
Eigen::MatrixXd embed_directions(std::span<const Direction> directions, const StyleVector& base, Strength strength,
                                 const GeneratorBackend& backend);

/// k-means over `embeddings` (row i belongs to ids[i]) turned into clusters:
/// ordered by descending size then lowest member id, each with the member
/// nearest its centroid as representative (ties: lowest id).
std::vector<Cluster> cluster_embeddings(std::span<const DirectionId> ids, const Eigen::MatrixXd& embeddings, int k,
                                        const KMeansOptions& options);

/// Renders, embeds and clusters `directions`.
std::vector<Cluster> cluster_directions(std::span<const Direction> directions, const StyleVector& base, int k,
                                        const GeneratorBackend& backend, std::uint64_t seed);

}  // namespace stylescout
