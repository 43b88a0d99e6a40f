#include "stylescout/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <numeric>
#include <thread>

#include "stylescout/error.hpp"

namespace stylescout {

std::vector<int> top_importance_prefix(const Eigen::VectorXd& importance, double threshold) {
  const double total = importance.sum();
  if (!(total > 0.0)) return {};

  std::vector<int> order;
  for (Eigen::Index i = 0; i < importance.size(); ++i) {
    if (importance[i] > 0.0) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return importance[a] > importance[b]; });

  // Relative slack so that e.g. 0.5 + 0.2 reaches 0.7 despite rounding.
  const double goal = threshold * total * (1.0 - 1e-12);
  std::vector<int> picked;
  double cumulative = 0.0;
  for (const int i : order) {
    picked.push_back(i);
    cumulative += importance[i];
    if (cumulative >= goal) break;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

ParameterSubset select_parameters(std::span<const HighlightMask> masks, const GeneratorBackend& backend,
                                  double threshold) {
  const BackendMeta& meta = backend.meta();
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("importance threshold must lie in (0, 1]");
  for (const auto& mask : masks) {
    mask.validate();
    if (!meta.has_exemplar(mask.exemplar_id)) throw NotFound("unknown exemplar: " + mask.exemplar_id);
  }

  std::map<int, double> merged;
  for (const auto& mask : masks) {
    const Eigen::VectorXd weights = backend.importance(mask);
    if (weights.size() != meta.dim) throw BackendError("importance: wrong number of weights");
    if (!weights.allFinite() || (weights.array() < 0.0).any()) {
      throw BackendError("importance: weights must be finite and non-negative");
    }
    for (const int i : top_importance_prefix(weights, threshold)) {
      auto [it, inserted] = merged.try_emplace(i, weights[i]);
      if (!inserted) it->second = std::max(it->second, weights[i]);
    }
  }
  if (merged.empty()) return ParameterSubset::full(meta.dim);

  ParameterSubset subset;
  subset.importance.resize(static_cast<Eigen::Index>(merged.size()));
  Eigen::Index k = 0;
  for (const auto& [index, weight] : merged) {
    subset.indices.push_back(index);
    subset.importance[k++] = weight;
  }
  return subset;
}

void SamplingOptions::validate() const {
  if (count < 1) throw InvalidArgument("sampling: count must be at least 1");
  if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) throw InvalidArgument("sampling: rate must lie in (0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sampling: sigma must be positive");
}

int support_size(double subsample_rate, std::size_t subset_size) {
  const auto m = static_cast<long>(std::lround(subsample_rate * static_cast<double>(subset_size)));
  return static_cast<int>(std::clamp<long>(m, 1, static_cast<long>(subset_size)));
}

std::vector<int> weighted_subsample(std::span<const int> indices, std::span<const double> weights, int count,
                                    Rng& rng) {
  if (indices.size() != weights.size()) throw InvalidArgument("weighted_subsample: size mismatch");
  if (count < 0 || static_cast<std::size_t>(count) > indices.size()) {
    throw InvalidArgument("weighted_subsample: count out of range");
  }
  std::vector<int> pool(indices.begin(), indices.end());
  std::vector<double> w(weights.begin(), weights.end());
  for (const double v : w) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("weighted_subsample: weights must be positive");
  }

  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const double target = rng.uniform() * total;
    std::size_t j = 0;
    double acc = 0.0;
    for (; j < w.size(); ++j) {
      acc += w[j];
      if (acc > target) break;
    }
    if (j == w.size()) j = w.size() - 1;
    picked.push_back(pool[j]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(j));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

std::vector<Direction> draw_directions(const ParameterSubset& subset, const SamplingOptions& options,
                                       std::span<const double> weights, Provenance provenance, std::uint64_t seed,
                                       DirectionId first_id) {
  options.validate();
  if (subset.indices.empty()) throw InvalidArgument("sampling: empty parameter subset");
  const int m = support_size(options.subsample_rate, subset.indices.size());

  Rng rng(seed);
  std::vector<Direction> out;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int n = 0; n < options.count; ++n) {
    Direction d;
    d.id = first_id + static_cast<DirectionId>(n);
    d.provenance = provenance;
    d.support = weighted_subsample(subset.indices, weights, m, rng);
    d.deltas.resize(m);
    for (int k = 0; k < m; ++k) d.deltas[k] = rng.normal(0.0, options.sigma);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<Direction> sample_directions(const ParameterSubset& subset, const SamplingOptions& options,
                                         std::uint64_t seed, DirectionId first_id) {
  const std::vector<double> uniform(subset.indices.size(), 1.0);
  return draw_directions(subset, options, uniform, Provenance::sampled, seed, first_id);
}

std::vector<Direction> resample_directions(const ParameterSubset& subset, const SamplingOptions& options,
                                           std::span<const std::uint64_t> usage, std::uint64_t seed,
                                           DirectionId first_id) {
  std::vector<double> weights;
  weights.reserve(subset.indices.size());
  for (const int i : subset.indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= usage.size()) {
      throw InvalidArgument("resample: usage history does not cover the subset");
    }
    weights.push_back(1.0 / (1.0 + static_cast<double>(usage[i])));
  }
  return draw_directions(subset, options, weights, Provenance::resampled, seed, first_id);
}

Direction combine_pair(const Direction& a, const Direction& b, double noise_sigma, Rng& rng, DirectionId id) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidArgument("scatter: noise sigma must be >= 0");
  Direction child;
  child.id = id;
  child.provenance = Provenance::scattered;
  child.parent_ids = {a.id, b.id};
  std::set_union(a.support.begin(), a.support.end(), b.support.begin(), b.support.end(),
                 std::back_inserter(child.support));
  child.deltas.resize(static_cast<Eigen::Index>(child.support.size()));
  for (std::size_t k = 0; k < child.support.size(); ++k) {
    const int i = child.support[k];
    const double mean = (a.at(i) + b.at(i)) / 2.0;
    child.deltas[static_cast<Eigen::Index>(k)] = mean + noise_sigma * rng.normal();
  }
  return child;
}

std::vector<Direction> scatter_directions(std::span<const Direction> pool, int count, double noise_sigma,
                                          std::uint64_t seed, DirectionId first_id) {
  if (pool.empty()) throw InvalidArgument("scatter: nothing gathered");
  if (count < 1) throw InvalidArgument("scatter: count must be at least 1");
  Rng rng(seed);
  const auto size = static_cast<std::uint64_t>(pool.size());
  std::vector<Direction> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    std::uint64_t i = 0, j = 0;
    if (size > 1) {
      i = rng.below(size);
      j = rng.below(size - 1);
      if (j >= i) ++j;
    }
    out.push_back(combine_pair(pool[i], pool[j], noise_sigma, rng, first_id + static_cast<DirectionId>(n)));
  }
  return out;
}

Image apply_direction(const StyleVector& base, const Direction& d, Strength strength,
                      const GeneratorBackend& backend) {
  return backend.generate(compose(base, d, strength));
}

Eigen::MatrixXd embed_directions(std::span<const Direction> directions, const StyleVector& base, Strength strength,
                                 const GeneratorBackend& backend) {
  const auto n = static_cast<Eigen::Index>(directions.size());
  const Eigen::Index dim = backend.meta().embedding_dim;
  Eigen::MatrixXd out(n, dim);

  auto work = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) {
      const Eigen::VectorXd e = backend.embed(apply_direction(base, directions[i], strength, backend));
      if (e.size() != dim) throw BackendError("embed: wrong embedding dimension");
      out.row(i) = normalized_embedding(e).transpose();
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (!backend.concurrent() || hw == 1 || n < 8) {
    work(0, n);
    return out;
  }
  const Eigen::Index chunks = std::min<Eigen::Index>(hw, n);
  std::vector<std::future<void>> jobs;
  for (Eigen::Index c = 0; c < chunks; ++c) {
    jobs.push_back(std::async(std::launch::async, work, n * c / chunks, n * (c + 1) / chunks));
  }
  for (auto& job : jobs) job.get();
  return out;
}

std::vector<Cluster> cluster_embeddings(std::span<const DirectionId> ids, const Eigen::MatrixXd& embeddings, int k,
                                        const KMeansOptions& options) {
  if (static_cast<Eigen::Index>(ids.size()) != embeddings.rows()) {
    throw InvalidArgument("cluster: one embedding per direction required");
  }
  if (k < 1 || static_cast<std::size_t>(k) > ids.size()) {
    throw InvalidArgument("cluster count must lie in [1, " + std::to_string(ids.size()) + "]");
  }
  const auto result = kmeans(embeddings, k, options);

  std::vector<Cluster> clusters(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) clusters[c].centroid = result.centroids.row(c).transpose();

  std::vector<Eigen::Index> order(ids.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ids[a] < ids[b]; });
  std::vector<double> best(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  for (const Eigen::Index i : order) {
    const int label = result.labels[i];
    Cluster& cluster = clusters[label];
    cluster.member_ids.push_back(ids[i]);
    const double d = (embeddings.row(i).transpose() - cluster.centroid).squaredNorm();
    if (d < best[label]) {  // ascending id order: ties keep the lowest id
      best[label] = d;
      cluster.representative_id = ids[i];
    }
  }
  std::erase_if(clusters, [](const Cluster& c) { return c.member_ids.empty(); });

  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.member_ids.size() != b.member_ids.size()) return a.member_ids.size() > b.member_ids.size();
    return a.member_ids.front() < b.member_ids.front();
  });
  for (std::size_t c = 0; c < clusters.size(); ++c) clusters[c].id = static_cast<int>(c);
  return clusters;
}

std::vector<Cluster> cluster_directions(std::span<const Direction> directions, const StyleVector& base, int k,
                                        const GeneratorBackend& backend, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > directions.size()) {
    throw InvalidArgument("cluster count must lie in [1, " + std::to_string(directions.size()) + "]");
  }
  const Eigen::MatrixXd embeddings =
      embed_directions(directions, base, Strength(kDefaultStrength, backend.meta().lambda_max), backend);
  std::vector<DirectionId> ids;
  ids.reserve(directions.size());
  for (const auto& d : directions) ids.push_back(d.id);
  KMeansOptions options;
  options.seed = seed;
  return cluster_embeddings(ids, embeddings, k, options);
}

}  // namespace stylescout
