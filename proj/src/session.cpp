#include "stylescout/session.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "stylescout/error.hpp"

namespace stylescout {

using nlohmann::json;

// ---------------------------------------------------------------- config

void SessionConfig::validate() const {
  sampling.validate();
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("config: noise_sigma must be >= 0");
  if (default_k < 1) throw InvalidArgument("config: default_k must be >= 1");
  if (!(importance_threshold > 0.0 && importance_threshold <= 1.0)) {
    throw InvalidArgument("config: importance_threshold must lie in (0, 1]");
  }
  if (!std::isfinite(default_strength)) throw InvalidArgument("config: default_strength must be finite");
  if (kmeans_restarts < 1 || kmeans_max_iterations < 1) throw InvalidArgument("config: k-means limits must be >= 1");
}

// 64-bit seeds travel as decimal strings so JavaScript clients keep them intact.
static json seed_to_json(std::uint64_t s) { return std::to_string(s); }

static std::uint64_t seed_from_json(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == s.size() && !s.empty() && s[0] != '-') return v;
  }
  throw InvalidArgument("seed must be a non-negative integer");
}

json SessionConfig::to_json() const {
  return {{"seed", seed_to_json(seed)},
          {"base_exemplar", base_exemplar},
          {"count", sampling.count},
          {"subsample_rate", sampling.subsample_rate},
          {"sigma", sampling.sigma},
          {"noise_sigma", noise_sigma},
          {"default_k", default_k},
          {"importance_threshold", importance_threshold},
          {"default_strength", default_strength},
          {"kmeans_restarts", kmeans_restarts},
          {"kmeans_max_iterations", kmeans_max_iterations}};
}

SessionConfig SessionConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be an object");
  SessionConfig c;
  try {
    if (j.contains("seed")) c.seed = seed_from_json(j["seed"]);
    c.base_exemplar = j.value("base_exemplar", c.base_exemplar);
    c.sampling.count = j.value("count", c.sampling.count);
    c.sampling.subsample_rate = j.value("subsample_rate", c.sampling.subsample_rate);
    c.sampling.sigma = j.value("sigma", c.sampling.sigma);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.default_k = j.value("default_k", c.default_k);
    c.importance_threshold = j.value("importance_threshold", c.importance_threshold);
    c.default_strength = j.value("default_strength", c.default_strength);
    c.kmeans_restarts = j.value("kmeans_restarts", c.kmeans_restarts);
    c.kmeans_max_iterations = j.value("kmeans_max_iterations", c.kmeans_max_iterations);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- tree

const TreeNode& SessionTree::node(NodeId id) const {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFound("unknown node: " + std::to_string(id));
  return it->second;
}

TreeNode& SessionTree::node(NodeId id) {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFound("unknown node: " + std::to_string(id));
  return it->second;
}

NodeId SessionTree::root() const {
  if (!root_) throw NotFound("session has not sampled yet");
  return *root_;
}

NodeId SessionTree::current() const {
  if (!current_) throw NotFound("session has not sampled yet");
  return *current_;
}

NodeId SessionTree::add_root(TreeNode n) {
  if (root_) throw InvalidArgument("session already has a root");
  n.parent.reset();
  const NodeId id = n.id;
  nodes_.emplace(id, std::move(n));
  root_ = current_ = id;
  return id;
}

NodeId SessionTree::add_child(NodeId parent, TreeNode n) {
  TreeNode& p = node(parent);
  n.parent = parent;
  const NodeId id = n.id;
  p.children.push_back(id);
  nodes_.emplace(id, std::move(n));
  current_ = id;
  return id;
}

NodeId SessionTree::back() {
  const TreeNode& cur = node(current());
  if (!cur.parent) throw AtRoot();
  current_ = *cur.parent;
  return *current_;
}

void SessionTree::jump(NodeId id) {
  node(id);
  current_ = id;
}

// ---------------------------------------------------------------- session

Session::Session(const GeneratorBackend& backend, SessionConfig config)
    : backend_(&backend), config_(std::move(config)) {
  config_.validate();
  const BackendMeta& meta = backend_->meta();
  meta.validate();
  if (config_.base_exemplar.empty()) config_.base_exemplar = meta.exemplars.front().id;
  meta.exemplar(config_.base_exemplar);
  subset_ = ParameterSubset::full(meta.dim);
  usage_.assign(static_cast<std::size_t>(meta.dim), 0);
}

const StyleVector& Session::base() const { return backend_->meta().exemplar(config_.base_exemplar).values; }

const Direction& Session::direction(DirectionId id) const {
  const auto it = directions_.find(id);
  if (it == directions_.end()) throw NotFound("unknown direction: " + std::to_string(id));
  return it->second;
}

const Eigen::VectorXd& Session::embedding(DirectionId id) const {
  const auto it = embeddings_.find(id);
  if (it == embeddings_.end()) throw NotFound("no embedding for direction: " + std::to_string(id));
  return it->second;
}

std::uint64_t Session::next_seed() { return derive_seed(config_.seed, op_counter_++); }

void Session::store(std::vector<Direction> directions) {
  for (auto& d : directions) directions_.emplace(d.id, std::move(d));
}

void Session::count_usage(std::span<const Direction> directions) {
  for (const auto& d : directions) {
    for (const int i : d.support) ++usage_[static_cast<std::size_t>(i)];
  }
}

SamplingOptions Session::sampling(std::optional<int> count) const {
  SamplingOptions options = config_.sampling;
  if (count) options.count = *count;
  options.validate();
  return options;
}

void Session::cluster_node(TreeNode& node) {
  std::vector<Direction> missing;
  for (const DirectionId id : node.pool) {
    if (!embeddings_.count(id)) missing.push_back(direction(id));
  }
  if (!missing.empty()) {
    const Eigen::MatrixXd rows = embed_directions(
        missing, base(), Strength(config_.default_strength, backend_->meta().lambda_max), *backend_);
    for (std::size_t r = 0; r < missing.size(); ++r) {
      embeddings_[missing[r].id] = rows.row(static_cast<Eigen::Index>(r)).transpose();
    }
  }
  Eigen::MatrixXd points(static_cast<Eigen::Index>(node.pool.size()), backend_->meta().embedding_dim);
  for (std::size_t r = 0; r < node.pool.size(); ++r) {
    points.row(static_cast<Eigen::Index>(r)) = embeddings_.at(node.pool[r]).transpose();
  }
  KMeansOptions options;
  options.seed = node.cluster_seed;
  options.restarts = config_.kmeans_restarts;
  options.max_iterations = config_.kmeans_max_iterations;
  node.clusters = cluster_embeddings(node.pool, points, node.k, options);
}

template <typename F>
auto Session::transact(F&& body) -> decltype(body()) {
  const std::uint64_t ops = op_counter_;
  const DirectionId first = next_direction_id_;
  const NodeId node = next_node_id_;
  const auto usage = usage_;
  try {
    return body();
  } catch (...) {
    op_counter_ = ops;
    next_direction_id_ = first;
    next_node_id_ = node;
    usage_ = usage;
    directions_.erase(directions_.lower_bound(first), directions_.end());
    embeddings_.erase(embeddings_.lower_bound(first), embeddings_.end());
    throw;
  }
}

const ParameterSubset& Session::highlight(std::span<const HighlightMask> masks) {
  ParameterSubset subset = select_parameters(masks, *backend_, config_.importance_threshold);
  subset_ = std::move(subset);
  highlighted_ = !masks.empty();
  return subset_;
}

NodeId Session::sample(std::optional<int> count, std::optional<int> k) {
  return transact([&] { return sample_impl(count, k); });
}

NodeId Session::sample_impl(std::optional<int> count, std::optional<int> k) {
  if (!tree_.empty()) throw InvalidArgument("session already sampled; use resample or scatter");
  const SamplingOptions options = sampling(count);
  const int clusters = k.value_or(std::min(config_.default_k, options.count));
  if (clusters < 1 || clusters > options.count) throw InvalidArgument("cluster count must lie in [1, count]");

  const std::uint64_t seed = next_seed();
  auto sampled = sample_directions(subset_, options, derive_seed(seed, 0), next_direction_id_);
  next_direction_id_ += sampled.size();

  TreeNode node;
  node.id = next_node_id_;
  node.k = clusters;
  node.cluster_seed = derive_seed(seed, 1);
  for (const auto& d : sampled) node.pool.push_back(d.id);
  count_usage(sampled);
  store(std::move(sampled));
  cluster_node(node);
  ++next_node_id_;
  return tree_.add_root(std::move(node));
}

NodeId Session::scatter(std::span<const int> gathered_cluster_ids, std::optional<int> count, std::optional<int> k) {
  return transact([&] { return scatter_impl(gathered_cluster_ids, count, k); });
}

NodeId Session::scatter_impl(std::span<const int> gathered_cluster_ids, std::optional<int> count,
                             std::optional<int> k) {
  if (tree_.empty()) throw InvalidArgument("scatter: nothing sampled yet");
  if (gathered_cluster_ids.empty()) throw InvalidArgument("scatter: gather at least one cluster");
  const NodeId parent_id = tree_.current();
  const TreeNode& parent = tree_.node(parent_id);

  std::vector<int> gathered(gathered_cluster_ids.begin(), gathered_cluster_ids.end());
  std::sort(gathered.begin(), gathered.end());
  gathered.erase(std::unique(gathered.begin(), gathered.end()), gathered.end());
  std::vector<DirectionId> pool_ids;
  for (const int cid : gathered) {
    const auto it = std::find_if(parent.clusters.begin(), parent.clusters.end(),
                                 [&](const Cluster& c) { return c.id == cid; });
    if (it == parent.clusters.end()) throw NotFound("unknown cluster at current node: " + std::to_string(cid));
    pool_ids.insert(pool_ids.end(), it->member_ids.begin(), it->member_ids.end());
  }
  std::sort(pool_ids.begin(), pool_ids.end());

  const SamplingOptions options = sampling(count);
  const int clusters = k.value_or(std::min(config_.default_k, options.count));
  if (clusters < 1 || clusters > options.count) throw InvalidArgument("cluster count must lie in [1, count]");

  std::vector<Direction> pool;
  pool.reserve(pool_ids.size());
  for (const DirectionId id : pool_ids) pool.push_back(direction(id));

  const std::uint64_t seed = next_seed();
  auto children = scatter_directions(pool, options.count, config_.noise_sigma, derive_seed(seed, 0),
                                     next_direction_id_);
  next_direction_id_ += children.size();

  TreeNode node;
  node.id = next_node_id_;
  node.gathered_cluster_ids = std::move(gathered);
  node.gathered_direction_ids = std::move(pool_ids);
  node.k = clusters;
  node.cluster_seed = derive_seed(seed, 1);
  for (const auto& d : children) node.pool.push_back(d.id);
  store(std::move(children));
  cluster_node(node);
  ++next_node_id_;
  return tree_.add_child(parent_id, std::move(node));
}

NodeId Session::back() { return tree_.back(); }

const TreeNode& Session::set_cluster_count(NodeId node_id, int k) {
  TreeNode& node = tree_.node(node_id);
  if (k < 1 || static_cast<std::size_t>(k) > node.pool.size()) {
    throw InvalidArgument("cluster count must lie in [1, " + std::to_string(node.pool.size()) + "]");
  }
  TreeNode updated = node;
  updated.k = k;
  cluster_node(updated);
  node = std::move(updated);
  return node;
}

const TreeNode& Session::resample(NodeId node_id, std::optional<int> count) {
  return transact([&]() -> const TreeNode& { return resample_impl(node_id, count); });
}

const TreeNode& Session::resample_impl(NodeId node_id, std::optional<int> count) {
  TreeNode& node = tree_.node(node_id);
  const SamplingOptions options = sampling(count);
  const std::uint64_t seed = next_seed();
  auto fresh = resample_directions(subset_, options, usage_, derive_seed(seed, 0), next_direction_id_);

  TreeNode updated = node;
  for (const auto& d : fresh) updated.pool.push_back(d.id);
  next_direction_id_ += fresh.size();
  count_usage(fresh);
  store(std::move(fresh));
  cluster_node(updated);
  node = std::move(updated);
  return node;
}

Image Session::test(DirectionId direction_id, const std::string& base_id, std::optional<double> lambda) {
  const Direction& d = direction(direction_id);
  const StyleVector& target = backend_->meta().exemplar(base_id).values;
  const Strength strength(lambda.value_or(config_.default_strength), backend_->meta().lambda_max);
  Image image = apply_direction(target, d, strength, *backend_);

  TestRow row{base_id, direction_id, strength.value()};
  const auto it = std::find_if(test_field_.begin(), test_field_.end(),
                               [&](const TestRow& r) { return r.base_id == base_id; });
  if (it == test_field_.end()) {
    test_field_.push_back(std::move(row));
  } else {
    *it = std::move(row);
  }
  return image;
}

void Session::bookmark(DirectionId id) {
  direction(id);
  if (std::find(tree_.bookmarks.begin(), tree_.bookmarks.end(), id) == tree_.bookmarks.end()) {
    tree_.bookmarks.push_back(id);
  }
}

void Session::unbookmark(DirectionId id) {
  direction(id);
  std::erase(tree_.bookmarks, id);
}

void Session::check_invariants() const {
  auto fail = [](const std::string& what) { throw std::logic_error("session invariant: " + what); };
  const Eigen::Index dim = backend_->meta().dim;

  for (const auto& [id, d] : directions_) {
    if (d.id != id) fail("direction keyed under a different id");
    d.validate(dim);
    for (const DirectionId p : d.parent_ids) {
      if (!directions_.count(p)) fail("direction parent missing");
    }
  }
  if (tree_.empty()) {
    if (tree_.root_ || tree_.current_) fail("empty tree with root/current set");
  } else {
    if (!tree_.root_ || !tree_.contains(*tree_.root_)) fail("root missing");
    if (!tree_.current_ || !tree_.contains(*tree_.current_)) fail("current does not reference a node");
    if (tree_.node(*tree_.root_).parent) fail("root has a parent");
  }
  for (const auto& [id, node] : tree_.nodes()) {
    if (node.id != id) fail("node keyed under a different id");
    // Parent chain must reach the root without revisiting a node.
    std::set<NodeId> seen{id};
    for (auto p = node.parent; p; p = tree_.node(*p).parent) {
      if (!seen.insert(*p).second) fail("cycle in parent links");
    }
    if (id != tree_.root() && !node.parent) fail("non-root node without parent");
    if (node.parent) {
      const TreeNode& parent = tree_.node(*node.parent);
      if (std::find(parent.children.begin(), parent.children.end(), id) == parent.children.end()) {
        fail("child not listed under its parent");
      }
      if (node.gathered_cluster_ids.empty()) fail("non-root node with empty gather");
      for (const DirectionId g : node.gathered_direction_ids) {
        if (!std::binary_search(parent.pool.begin(), parent.pool.end(), g)) fail("gathered direction not in parent pool");
      }
    }
    if (!std::is_sorted(node.pool.begin(), node.pool.end())) fail("pool not sorted");
    std::vector<DirectionId> members;
    for (const auto& c : node.clusters) {
      if (c.member_ids.empty()) fail("empty cluster");
      if (std::find(c.member_ids.begin(), c.member_ids.end(), c.representative_id) == c.member_ids.end()) {
        fail("representative outside its cluster");
      }
      members.insert(members.end(), c.member_ids.begin(), c.member_ids.end());
    }
    std::sort(members.begin(), members.end());
    if (members != node.pool) fail("clusters do not partition the node pool");
    for (const DirectionId d : node.pool) {
      if (!directions_.count(d)) fail("pool references a missing direction");
    }
  }
  for (const DirectionId b : tree_.bookmarks) {
    if (!directions_.count(b)) fail("bookmark references a missing direction");
  }
}

// ---------------------------------------------------------------- JSON

namespace {

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json Session::to_json() const {
  const BackendMeta& meta = backend_->meta();
  json j;
  j["format"] = "stylescout-session";
  j["version"] = 1;
  j["config"] = config_.to_json();
  j["backend"] = {{"dim", meta.dim}, {"embedding_dim", meta.embedding_dim}, {"lambda_max", meta.lambda_max}};
  j["rng"] = {{"seed", seed_to_json(config_.seed)}, {"operations", op_counter_}};
  j["next_direction_id"] = next_direction_id_;
  j["next_node_id"] = next_node_id_;
  j["highlighted"] = highlighted_;
  j["subset"] = {{"indices", subset_.indices}, {"importance", vector_to_json(subset_.importance)}};

  json usage = json::array();
  for (std::size_t i = 0; i < usage_.size(); ++i) {
    if (usage_[i] != 0) usage.push_back({i, usage_[i]});
  }
  j["usage"] = std::move(usage);

  json directions = json::array();
  for (const auto& [id, d] : directions_) {
    directions.push_back({{"id", id},
                          {"support", d.support},
                          {"deltas", vector_to_json(d.deltas)},
                          {"provenance", std::string(to_string(d.provenance))},
                          {"parent_ids", d.parent_ids}});
  }
  j["directions"] = std::move(directions);

  json embeddings = json::array();
  for (const auto& [id, e] : embeddings_) embeddings.push_back({{"id", id}, {"vector", vector_to_json(e)}});
  j["embeddings"] = std::move(embeddings);

  json nodes = json::array();
  for (const auto& [id, n] : tree_.nodes()) {
    json clusters = json::array();
    for (const auto& c : n.clusters) {
      clusters.push_back({{"id", c.id},
                          {"member_ids", c.member_ids},
                          {"centroid", vector_to_json(c.centroid)},
                          {"representative_id", c.representative_id}});
    }
    nodes.push_back({{"id", id},
                     {"parent", n.parent ? json(*n.parent) : json(nullptr)},
                     {"gathered_cluster_ids", n.gathered_cluster_ids},
                     {"gathered_direction_ids", n.gathered_direction_ids},
                     {"pool", n.pool},
                     {"k", n.k},
                     {"cluster_seed", seed_to_json(n.cluster_seed)},
                     {"children", n.children},
                     {"clusters", std::move(clusters)}});
  }
  j["tree"] = {{"root", tree_.root_ ? json(*tree_.root_) : json(nullptr)},
               {"current", tree_.current_ ? json(*tree_.current_) : json(nullptr)},
               {"nodes", std::move(nodes)}};
  j["bookmarks"] = tree_.bookmarks;

  json field = json::array();
  for (const auto& r : test_field_) {
    field.push_back({{"base_id", r.base_id}, {"direction_id", r.direction_id}, {"lambda", r.lambda}});
  }
  j["test_field"] = std::move(field);
  return j;
}

std::string Session::export_json() const { return to_json().dump(); }

Session Session::import_json(const GeneratorBackend& backend, std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("session import: ") + e.what());
  }
  return from_json(backend, j);
}

Session Session::from_json(const GeneratorBackend& backend, const json& j) {
  try {
    if (j.value("format", "") != "stylescout-session" || j.value("version", 0) != 1) {
      throw InvalidArgument("session import: unsupported document");
    }
    const BackendMeta& meta = backend.meta();
    const json& b = j.at("backend");
    if (b.at("dim").get<Eigen::Index>() != meta.dim || b.at("embedding_dim").get<Eigen::Index>() != meta.embedding_dim) {
      throw InvalidArgument("session import: backend dimensions do not match");
    }

    Session s(backend, SessionConfig::from_json(j.at("config")));
    s.op_counter_ = j.at("rng").at("operations").get<std::uint64_t>();
    s.next_direction_id_ = j.at("next_direction_id").get<DirectionId>();
    s.next_node_id_ = j.at("next_node_id").get<NodeId>();
    s.highlighted_ = j.at("highlighted").get<bool>();
    s.subset_.indices = j.at("subset").at("indices").get<std::vector<int>>();
    s.subset_.importance = vector_from_json(j.at("subset").at("importance"));
    s.subset_.validate(meta.dim);

    for (const auto& entry : j.at("usage")) {
      const auto index = entry.at(0).get<std::size_t>();
      if (index >= s.usage_.size()) throw InvalidArgument("session import: usage index out of range");
      s.usage_[index] = entry.at(1).get<std::uint64_t>();
    }
    for (const auto& jd : j.at("directions")) {
      Direction d;
      d.id = jd.at("id").get<DirectionId>();
      d.support = jd.at("support").get<std::vector<int>>();
      d.deltas = vector_from_json(jd.at("deltas"));
      d.provenance = provenance_from_string(jd.at("provenance").get<std::string>());
      d.parent_ids = jd.at("parent_ids").get<std::vector<DirectionId>>();
      d.validate(meta.dim);
      s.directions_.emplace(d.id, std::move(d));
    }
    for (const auto& je : j.at("embeddings")) {
      Eigen::VectorXd e = vector_from_json(je.at("vector"));
      if (e.size() != meta.embedding_dim) throw InvalidArgument("session import: embedding dimension mismatch");
      s.embeddings_.emplace(je.at("id").get<DirectionId>(), std::move(e));
    }

    const json& tree = j.at("tree");
    for (const auto& jn : tree.at("nodes")) {
      TreeNode n;
      n.id = jn.at("id").get<NodeId>();
      if (!jn.at("parent").is_null()) n.parent = jn.at("parent").get<NodeId>();
      n.gathered_cluster_ids = jn.at("gathered_cluster_ids").get<std::vector<int>>();
      n.gathered_direction_ids = jn.at("gathered_direction_ids").get<std::vector<DirectionId>>();
      n.pool = jn.at("pool").get<std::vector<DirectionId>>();
      n.k = jn.at("k").get<int>();
      n.cluster_seed = seed_from_json(jn.at("cluster_seed"));
      n.children = jn.at("children").get<std::vector<NodeId>>();
      for (const auto& jc : jn.at("clusters")) {
        Cluster c;
        c.id = jc.at("id").get<int>();
        c.member_ids = jc.at("member_ids").get<std::vector<DirectionId>>();
        c.centroid = vector_from_json(jc.at("centroid"));
        c.representative_id = jc.at("representative_id").get<DirectionId>();
        n.clusters.push_back(std::move(c));
      }
      s.tree_.nodes_.emplace(n.id, std::move(n));
    }
    if (!tree.at("root").is_null()) s.tree_.root_ = tree.at("root").get<NodeId>();
    if (!tree.at("current").is_null()) s.tree_.current_ = tree.at("current").get<NodeId>();
    s.tree_.bookmarks = j.at("bookmarks").get<std::vector<DirectionId>>();

    for (const auto& jr : j.at("test_field")) {
      s.test_field_.push_back({jr.at("base_id").get<std::string>(), jr.at("direction_id").get<DirectionId>(),
                               jr.at("lambda").get<double>()});
    }

    try {
      s.check_invariants();
    } catch (const std::logic_error& e) {
      throw InvalidArgument(std::string("session import: ") + e.what());
    } catch (const NotFound& e) {
      throw InvalidArgument(std::string("session import: ") + e.what());
    }
    return s;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("session import: ") + e.what());
  }
}

}  // namespace stylescout
