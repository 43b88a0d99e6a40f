#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stylescout/backend.hpp"
#include "stylescout/engine.hpp"
#include "stylescout/types.hpp"

namespace stylescout {

struct SessionConfig {
  std::uint64_t seed = 0;
  std::string base_exemplar;  // empty: the backend's first exemplar
  SamplingOptions sampling;
  double noise_sigma = kDefaultNoiseSigma;
  int default_k = kDefaultClusterCount;
  double importance_threshold = kDefaultImportanceThreshold;
  double default_strength = kDefaultStrength;
  int kmeans_restarts = 10;
  int kmeans_max_iterations = 300;

  void validate() const;
  nlohmann::json to_json() const;
  static SessionConfig from_json(const nlohmann::json& j);
};

/// One scatter/gather view: a pool of directions and its clustering.
struct TreeNode {
  NodeId id = 0;
  std::optional<NodeId> parent;
  std::vector<int> gathered_cluster_ids;         // selection in the parent that produced this node
  std::vector<DirectionId> gathered_direction_ids;  // the parent pool members that selection covered
  std::vector<DirectionId> pool;                  // ascending
  std::vector<Cluster> clusters;
  int k = 0;
  std::uint64_t cluster_seed = 0;
  std::vector<NodeId> children;
};

/// Branching history. Nodes are only ever appended; going back and scattering
/// again grows a sibling branch.
class SessionTree {
 public:
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  const TreeNode& node(NodeId id) const;
  TreeNode& node(NodeId id);
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }

  NodeId root() const;
  NodeId current() const;
  const TreeNode& current_node() const { return node(current()); }

  NodeId add_root(TreeNode node);
  /// Appends `node` under `parent` and makes it current.
  NodeId add_child(NodeId parent, TreeNode node);
  /// Moves current to its parent; throws AtRoot at the root.
  NodeId back();
  /// Moves current to an arbitrary existing node.
  void jump(NodeId id);

  const std::map<NodeId, TreeNode>& nodes() const { return nodes_; }

  std::vector<DirectionId> bookmarks;

 private:
  friend class Session;
  std::map<NodeId, TreeNode> nodes_;
  std::optional<NodeId> root_;
  std::optional<NodeId> current_;
};

struct TestRow {
  std::string base_id;
  DirectionId direction_id = 0;
  double lambda = kDefaultStrength;
};

/// A discovery session: highlight, sample, scatter/gather, test and bookmark
/// against one backend. Every stochastic step draws its seed from the session
/// seed and an operation counter, so identical call sequences replay
/// bit-identically (including after export/import).
///
/// Single-writer: callers serialize mutating calls.
class Session {
 public:
  Session(const GeneratorBackend& backend, SessionConfig config = {});

  const ParameterSubset& highlight(std::span<const HighlightMask> masks);
  /// Initial sampling; creates the root node. Only valid on an empty tree.
  NodeId sample(std::optional<int> count = {}, std::optional<int> k = {});
  /// Scatters the gathered clusters of the current node into a new child.
  NodeId scatter(std::span<const int> gathered_cluster_ids, std::optional<int> count = {},
                 std::optional<int> k = {});
  NodeId back();
  /// Re-clusters a node in place from cached embeddings.
  const TreeNode& set_cluster_count(NodeId node, int k);
  /// Adds freshly sampled directions (favouring unused parameters) to a node
  /// and re-clusters it at its current k.
  const TreeNode& resample(NodeId node, std::optional<int> count = {});
  /// Renders a direction on an exemplar at strength lambda (clamped) and
  /// records it in the test field.
  Image test(DirectionId direction, const std::string& base_id, std::optional<double> lambda = {});

  void bookmark(DirectionId direction);
  void unbookmark(DirectionId direction);
  const std::vector<DirectionId>& bookmarks() const { return tree_.bookmarks; }

  const GeneratorBackend& backend() const { return *backend_; }
  const SessionConfig& config() const { return config_; }
  const SessionTree& tree() const { return tree_; }
  const ParameterSubset& subset() const { return subset_; }
  const StyleVector& base() const;
  const Direction& direction(DirectionId id) const;
  bool has_direction(DirectionId id) const { return directions_.count(id) != 0; }
  const Eigen::VectorXd& embedding(DirectionId id) const;
  const std::vector<std::uint64_t>& usage() const { return usage_; }
  const std::vector<TestRow>& test_field() const { return test_field_; }
  std::uint64_t operations() const { return op_counter_; }

  /// Throws std::logic_error naming the first violated tree invariant.
  void check_invariants() const;

  nlohmann::json to_json() const;
  std::string export_json() const;
  static Session import_json(const GeneratorBackend& backend, std::string_view text);
  static Session from_json(const GeneratorBackend& backend, const nlohmann::json& j);

 private:
  template <typename F>
  auto transact(F&& body) -> decltype(body());
  NodeId sample_impl(std::optional<int> count, std::optional<int> k);
  NodeId scatter_impl(std::span<const int> gathered_cluster_ids, std::optional<int> count, std::optional<int> k);
  const TreeNode& resample_impl(NodeId node, std::optional<int> count);

  std::uint64_t next_seed();
  void store(std::vector<Direction> directions);
  void count_usage(std::span<const Direction> directions);
  void cluster_node(TreeNode& node);
  SamplingOptions sampling(std::optional<int> count) const;

  const GeneratorBackend* backend_;
  SessionConfig config_;
  ParameterSubset subset_;
  bool highlighted_ = false;
  std::vector<std::uint64_t> usage_;
  std::map<DirectionId, Direction> directions_;
  std::map<DirectionId, Eigen::VectorXd> embeddings_;
  SessionTree tree_;
  std::vector<TestRow> test_field_;
  std::uint64_t op_counter_ = 0;
  DirectionId next_direction_id_ = 1;
  NodeId next_node_id_ = 1;
};

}  // namespace stylescout
