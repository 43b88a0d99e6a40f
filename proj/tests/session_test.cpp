#include <doctest.h>

#include <set>

#include "stylescout/session.hpp"
#include "stylescout/synthetic_backend.hpp"

using namespace stylescout;

namespace {

const SyntheticBackend& backend() {
  static const SyntheticBackend instance;
  return instance;
}

SessionConfig config(std::uint64_t seed) {
  SessionConfig c;
  c.seed = seed;
  return c;
}

std::vector<HighlightMask> mouth_mask() { return {backend().region_mask(0, "e0")}; }

void check_partition(const TreeNode& node) {
  std::multiset<DirectionId> members;
  for (const auto& c : node.clusters) members.insert(c.member_ids.begin(), c.member_ids.end());
  CHECK(std::vector<DirectionId>(members.begin(), members.end()) == node.pool);
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("fresh sample shows six clusters over sixty directions") {
  Session s(backend(), config(1));
  const NodeId root = s.sample();
  const TreeNode& node = s.tree().node(root);
  CHECK(node.pool.size() == 60);
  CHECK(node.clusters.size() == 6);
  CHECK(node.k == 6);
  CHECK(s.tree().current() == root);
  check_partition(node);
  CHECK_NOTHROW(s.check_invariants());
  CHECK_THROWS_AS(s.sample(), InvalidArgument);
}

TEST_CASE("highlighting restricts every sampled support") {
  Session s(backend(), config(2));
  const auto masks = mouth_mask();
  const auto& subset = s.highlight(masks);
  const std::set<int> allowed(subset.indices.begin(), subset.indices.end());
  s.sample();
  for (const DirectionId id : s.tree().current_node().pool) {
    for (const int i : s.direction(id).support) CHECK(allowed.count(i) == 1);
  }
}

TEST_CASE("scatter, back and a different gather grow a branch") {
  Session s(backend(), config(3));
  const NodeId root = s.sample();
  const std::vector<int> first = {0, 1};
  const NodeId a = s.scatter(first);
  CHECK(s.tree().node(a).parent == root);
  CHECK(s.tree().node(a).gathered_cluster_ids == first);
  for (const DirectionId id : s.tree().node(a).pool) {
    const auto& d = s.direction(id);
    CHECK(d.provenance == Provenance::scattered);
    for (const DirectionId p : d.parent_ids) {
      const auto& gathered = s.tree().node(a).gathered_direction_ids;
      CHECK(std::find(gathered.begin(), gathered.end(), p) != gathered.end());
    }
  }
  CHECK(s.back() == root);
  const std::vector<int> second = {2};
  const NodeId b = s.scatter(second);
  CHECK(s.tree().node(root).children == std::vector<NodeId>{a, b});
  CHECK(s.tree().size() == 3);
  CHECK_NOTHROW(s.check_invariants());
}

TEST_CASE("gathered ids are de-duplicated and must exist") {
  Session s(backend(), config(4));
  s.sample();
  const std::vector<int> dup = {1, 0, 1};
  const NodeId n = s.scatter(dup);
  CHECK(s.tree().node(n).gathered_cluster_ids == std::vector<int>{0, 1});
  const std::vector<int> missing = {42};
  const auto before = s.export_json();
  CHECK_THROWS_AS(s.scatter(missing), NotFound);
  CHECK(s.export_json() == before);
  CHECK_THROWS_AS(s.scatter(std::vector<int>{}), InvalidArgument);
}

TEST_CASE("back at the root is an error") {
  Session s(backend(), config(5));
  s.sample();
  CHECK_THROWS_AS(s.back(), AtRoot);
  Session empty(backend(), config(5));
  CHECK_THROWS(empty.back());
}

TEST_CASE("a sibling scattered from an imported pre-scatter state matches the first child") {
  Session s(backend(), config(7));
  s.sample();
  const auto checkpoint = s.export_json();
  const std::vector<int> gather = {1, 3};
  const NodeId first = s.scatter(gather);

  Session replay = Session::import_json(backend(), checkpoint);
  const NodeId again = replay.scatter(gather);
  CHECK(again == first);
  const TreeNode& x = s.tree().node(first);
  const TreeNode& y = replay.tree().node(again);
  CHECK(x.pool == y.pool);
  CHECK(x.clusters == y.clusters);
  for (const DirectionId id : x.pool) CHECK(s.direction(id) == replay.direction(id));
}

TEST_CASE("cluster count changes are reversible") {
  Session s(backend(), config(8));
  const NodeId root = s.sample();
  const auto original = s.tree().node(root).clusters;
  CHECK(s.set_cluster_count(root, 9).clusters.size() == 9);
  check_partition(s.tree().node(root));
  CHECK(s.set_cluster_count(root, 6).clusters == original);
  CHECK(s.set_cluster_count(root, 10).clusters.size() == static_cast<std::size_t>(kMaxUiClusterCount));

  const auto& one = s.set_cluster_count(root, 1);
  REQUIRE(one.clusters.size() == 1);
  CHECK(one.clusters[0].member_ids == one.pool);

  CHECK_THROWS_AS(s.set_cluster_count(root, 0), InvalidArgument);
  CHECK_THROWS_AS(s.set_cluster_count(root, 61), InvalidArgument);
  CHECK_THROWS_AS(s.set_cluster_count(99, 3), NotFound);
}

TEST_CASE("resampling grows the pool and keeps links") {
  Session s(backend(), config(9));
  const NodeId root = s.sample();
  const std::vector<int> gather = {0};
  const NodeId child = s.scatter(gather);
  const auto parent_before = s.tree().node(child).parent;
  const auto& node = s.resample(child, 12);
  CHECK(node.pool.size() == 72);
  CHECK(node.parent == parent_before);
  CHECK(node.gathered_cluster_ids == gather);
  check_partition(node);
  for (std::size_t i = 60; i < node.pool.size(); ++i) {
    CHECK(s.direction(node.pool[i]).provenance == Provenance::resampled);
  }
  CHECK(s.tree().node(root).pool.size() == 60);
  CHECK_NOTHROW(s.check_invariants());
  std::uint64_t used = 0;
  for (const auto c : s.usage()) used += c;
  CHECK(used == 72 * 26);  // 60 sampled + 12 resampled, 26 parameters each (5% of 512)
}

TEST_CASE("bookmarks are idempotent and survive navigation") {
  Session s(backend(), config(10));
  s.sample();
  const DirectionId d = s.tree().current_node().pool[3];
  s.bookmark(d);
  s.bookmark(d);
  CHECK(s.bookmarks() == std::vector<DirectionId>{d});
  const std::vector<int> gather = {0};
  s.scatter(gather);
  s.back();
  CHECK(s.bookmarks() == std::vector<DirectionId>{d});
  s.unbookmark(d);
  CHECK(s.bookmarks().empty());
  CHECK_THROWS_AS(s.bookmark(12345), NotFound);
}

TEST_CASE("testing a bookmark later reproduces the same image") {
  Session s(backend(), config(11));
  s.sample();
  const DirectionId d = s.tree().current_node().pool[0];
  s.bookmark(d);
  const Image then = s.test(d, "e1", 2.0);
  const std::vector<int> gather = {0, 1};
  s.scatter(gather);
  s.scatter(std::vector<int>{0});
  CHECK(s.test(d, "e1", 2.0) == then);
}

TEST_CASE("test at zero strength renders the base and records one row per base") {
  Session s(backend(), config(12));
  s.sample();
  const DirectionId d = s.tree().current_node().pool[5];
  CHECK(s.test(d, "e2", 0.0) == backend().generate(backend().meta().exemplar("e2").values));
  s.test(d, "e2", 3.0);
  s.test(d, "e3", 50.0);
  REQUIRE(s.test_field().size() == 2);
  CHECK(s.test_field()[0].lambda == 3.0);
  CHECK(s.test_field()[1].lambda == 10.0);  // clamped to lambda_max
  CHECK_THROWS_AS(s.test(d, "nobody"), NotFound);
  CHECK_THROWS_AS(s.test(999999, "e0"), NotFound);
}

TEST_CASE("identical call sequences give identical sessions") {
  auto run = [](std::uint64_t seed) {
    Session s(backend(), config(seed));
    const auto masks = mouth_mask();
    s.highlight(masks);
    s.sample();
    s.scatter(std::vector<int>{0, 1});
    s.scatter(std::vector<int>{0});
    s.test(s.tree().current_node().clusters[0].representative_id, "e0", 1.5);
    return s.export_json();
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("export, import, export is byte-identical") {
  Session s(backend(), config(13));
  const auto masks = mouth_mask();
  s.highlight(masks);
  const NodeId root = s.sample();
  s.scatter(std::vector<int>{0, 2});
  s.back();
  s.scatter(std::vector<int>{1});
  s.set_cluster_count(root, 8);
  s.resample(root, 5);
  s.bookmark(s.tree().current_node().pool[2]);
  s.test(s.tree().current_node().pool[2], "e1", -1.25);

  const std::string first = s.export_json();
  const Session copy = Session::import_json(backend(), first);
  CHECK(copy.export_json() == first);
  CHECK_NOTHROW(copy.check_invariants());

  const auto j = nlohmann::json::parse(first);
  CHECK(j["format"] == "stylescout-session");
  CHECK(j["rng"]["seed"] == "13");
}

TEST_CASE("an imported session continues exactly like the original") {
  Session s(backend(), config(14));
  s.sample();
  s.scatter(std::vector<int>{0});
  Session copy = Session::import_json(backend(), s.export_json());
  s.back();
  copy.back();
  s.scatter(std::vector<int>{3, 4});
  copy.scatter(std::vector<int>{3, 4});
  s.resample(s.tree().current(), 7);
  copy.resample(copy.tree().current(), 7);
  CHECK(s.export_json() == copy.export_json());
}

TEST_CASE("malformed or inconsistent imports are rejected") {
  Session s(backend(), config(15));
  s.sample();
  s.scatter(std::vector<int>{0});
  CHECK_THROWS_AS(Session::import_json(backend(), "{not json"), InvalidArgument);
  auto j = s.to_json();
  j["tree"]["nodes"][1]["parent"] = 77;
  CHECK_THROWS_AS(Session::import_json(backend(), j.dump()), InvalidArgument);
  j = s.to_json();
  j["backend"]["dim"] = 3;
  CHECK_THROWS_AS(Session::import_json(backend(), j.dump()), InvalidArgument);
  j = s.to_json();
  j["directions"][0]["support"] = {9999};
  CHECK_THROWS_AS(Session::import_json(backend(), j.dump()), InvalidArgument);
  j = s.to_json();
  j["format"] = "something-else";
  CHECK_THROWS_AS(Session::import_json(backend(), j.dump()), InvalidArgument);
}

TEST_CASE("invalid configs are rejected") {
  SessionConfig c;
  c.default_k = 0;
  CHECK_THROWS_AS(Session(backend(), c), InvalidArgument);
  c = {};
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(Session(backend(), c), InvalidArgument);
  c = {};
  c.base_exemplar = "missing";
  CHECK_THROWS_AS(Session(backend(), c), NotFound);
  c = {};
  c.sampling.count = 3;
  Session small(backend(), c);
  CHECK(small.tree().node(small.sample()).clusters.size() == 3);
}

TEST_CASE("nodes only accumulate across a long random walk") {
  Session s(backend(), config(16));
  s.sample({}, 4);
  Rng rng(16);
  std::size_t nodes = s.tree().size();
  std::map<NodeId, std::pair<std::optional<NodeId>, std::vector<int>>> links;
  for (int step = 0; step < 30; ++step) {
    const auto& node = s.tree().current_node();
    switch (rng.below(4)) {
      case 0: {
        std::vector<int> gather = {static_cast<int>(rng.below(node.clusters.size()))};
        s.scatter(gather, 20, 4);
        break;
      }
      case 1:
        if (node.parent) s.back();
        break;
      case 2:
        s.set_cluster_count(node.id, 1 + static_cast<int>(rng.below(std::min<std::size_t>(node.pool.size(), 10))));
        break;
      default:
        s.resample(node.id, 5);
        break;
    }
    CHECK(s.tree().size() >= nodes);
    nodes = s.tree().size();
    for (const auto& [id, link] : links) {
      CHECK(s.tree().node(id).parent == link.first);
      CHECK(s.tree().node(id).gathered_cluster_ids == link.second);
    }
    for (const auto& [id, n] : s.tree().nodes()) links[id] = {n.parent, n.gathered_cluster_ids};
    CHECK_NOTHROW(s.check_invariants());
  }
}

}
