// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "stylescout/eval.hpp"
#include "stylescout/kmeans.hpp"
#include "stylescout/service.hpp"
#include "stylescout/session.hpp"
#include "stylescout/synthetic_backend.hpp"
#include "support.hpp"

#include <httplib.h>  // after Eigen, see service_test.cpp

using namespace stylescout;
using nlohmann::json;

namespace {

const SyntheticBackend& backend() {
  static const SyntheticBackend instance;
  return instance;
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

// 36 runs, 12 seeds x 3 tasks, at most 3 scatters, ranked among 1000 random directions.
SimilarityTable closed_table;
double closed_seconds = 0.0;

Outcome closed_rank() {
  const auto start = std::chrono::steady_clock::now();
  GreedyGatherAgent agent;
  agent.max_scatters = 3;
  closed_table = run_similarity_table(make_closed_tasks(backend(), 3), agent, SessionConfig{}, backend(), 12, 1, 1000);
  closed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  int top5 = 0, over = 0;
  for (const auto& r : closed_table.runs) {
    top5 += r.rank_among_random <= 5;
    over += r.scatters > 3;
  }
  const bool pass = closed_table.runs.size() == 36 && top5 >= 33 && over == 0 && closed_seconds <= 300.0;
  return {pass, std::to_string(top5) + "/36 top-5, need >= 33, runtime " + std::to_string(closed_seconds) +
                    "s of 300s"};
}

Outcome similarity_improvement() {
  int improved = 0;
  for (const auto& r : closed_table.runs) improved += r.similarity > r.reference_similarity;
  return {closed_table.runs.size() == 36 && improved == 36, std::to_string(improved) + "/36 improved on the reference"};
}

Outcome kmeans_oracle() {
  Rng rng(2024);
  int agree = 0;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.below(7));  // 2..8 points
    const int dim = 1 + static_cast<int>(rng.below(4));
    const Eigen::MatrixXd points = testing::separated_blobs(rng, n, dim);
    KMeansOptions options;
    options.seed = static_cast<std::uint64_t>(t);
    const auto result = kmeans(points, 2, options);
    const double gap = std::abs(result.inertia - testing::best_two_partition_wcss(points));
    worst = std::max(worst, gap);
    agree += gap <= 1e-9;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d/200 at the exhaustive optimum, worst gap %.3g", agree, worst);
  return {agree == 200, buf};
}

std::string pipeline_export(std::uint64_t master_seed) {
  SessionConfig config;
  config.seed = master_seed;
  Session s(backend(), config);
  const std::vector<HighlightMask> masks = {backend().region_mask(static_cast<int>(master_seed % 8), "e1"),
                                            HighlightMask::rect("e1", 0, 0, 16, 64)};
  s.highlight(masks);
  const NodeId root = s.sample();
  s.set_cluster_count(root, 5);
  s.scatter(std::vector<int>{0, 2});
  s.scatter(std::vector<int>{1});
  s.test(s.tree().current_node().pool[3], "e2", 1.5);
  return s.export_json();
}

Outcome determinism() {
  int same = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const std::uint64_t seed = derive_seed(99, t);
    same += pipeline_export(seed) == pipeline_export(seed);
  }
  return {same == 20, std::to_string(same) + "/20 byte-identical exports"};
}

Outcome scatter_algebra() {
  const Eigen::Index dim = backend().meta().dim;
  SamplingOptions options;
  options.count = 40;
  options.subsample_rate = 0.1;
  const auto pool = sample_directions(ParameterSubset::full(dim), options, 5, 1);
  const auto children = scatter_directions(pool, 1000, 0.0, 6, 1000);
  int exact = 0, contained = 0;
  for (const auto& child : children) {
    const Direction& a = pool[child.parent_ids[0] - 1];
    const Direction& b = pool[child.parent_ids[1] - 1];
    const Eigen::VectorXd expected = (a.dense(dim) + b.dense(dim)) / 2.0;
    exact += child.dense(dim) == expected && a.id != b.id;
    std::set<int> allowed(a.support.begin(), a.support.end());
    allowed.insert(b.support.begin(), b.support.end());
    bool inside = true;
    for (const int i : child.support) inside = inside && allowed.count(i) == 1;
    contained += inside;
  }
  return {exact == 1000 && contained == 1000,
          std::to_string(exact) + "/1000 exact averages, " + std::to_string(contained) + "/1000 contained"};
}

// Calibrated for the default synthetic backend (model seed 1, weights U(4, 8)):
// at lambda = 1 off-target moves stay under 0.05 and the target moves by more than 0.2.
constexpr double kOffTargetLimit = 0.05;
constexpr double kTargetMinimum = 0.2;
constexpr double kLocalityShare = 0.95;

Outcome highlight_locality() {
  int local = 0, total = 0;
  for (int attribute = 0; attribute < backend().attribute_count(); ++attribute) {
    SessionConfig config;
    config.seed = 500 + static_cast<std::uint64_t>(attribute);
    Session s(backend(), config);
    const std::vector<HighlightMask> masks = {backend().region_mask(attribute, "e0")};
    s.highlight(masks);
    s.sample();
    const Eigen::VectorXd before = backend().attributes(s.base());
    for (const DirectionId id : s.tree().current_node().pool) {
      const Eigen::VectorXd delta = backend().attributes(compose(s.base(), s.direction(id), Strength(1.0))) - before;
      bool ok = std::abs(delta[attribute]) > kTargetMinimum;
      for (Eigen::Index j = 0; j < delta.size(); ++j) {
        if (j != attribute) ok = ok && std::abs(delta[j]) < kOffTargetLimit;
      }
      local += ok;
      ++total;
    }
  }
  const double share = static_cast<double>(local) / total;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d/%d local (%.1f%%), need >= 95%%", local, total, 100.0 * share);
  return {share >= kLocalityShare, buf};
}

Outcome negative_reversal() {
  const StyleVector& base = backend().meta().exemplars[0].values;
  const Eigen::VectorXd origin = backend().embed(backend().generate(base));
  SamplingOptions options;
  options.count = 100;
  const auto hundred = sample_directions(ParameterSubset::full(backend().meta().dim), options, 77, 1);
  int reversed = 0;
  for (const auto& d : hundred) {
    const Eigen::VectorXd plus = backend().embed(apply_direction(base, d, Strength(0.5), backend())) - origin;
    const Eigen::VectorXd minus = backend().embed(apply_direction(base, d, Strength(-0.5), backend())) - origin;
    const double norms = plus.norm() * minus.norm();
    reversed += norms > 0.0 && plus.dot(minus) / norms < 0.0;
  }
  return {hundred.size() == 100 && reversed >= 99, std::to_string(reversed) + "/100 reversed, need >= 99"};
}

// Random action sequences applied to a direct Session and, in parallel, to the
// same session driven over HTTP. Both the per-step status and the final export
// must agree.
int expected_status(const std::function<void()>& action) {
  try {
    action();
    return 200;
  } catch (const NotFound&) {
    return 404;
  } catch (const InvalidArgument&) {
    return 422;
  }
}

Outcome api_differential() {
  Service service(backend());
  httplib::Server server;
  service.bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  if (port <= 0) return {false, "could not bind a port"};
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto send = [&](const std::string& method, const std::string& path, const json& body) -> std::pair<int, std::string> {
    httplib::Result r = method == "GET"      ? client.Get(path)
                         : method == "POST"  ? client.Post(path, body.dump(), "application/json")
                                             : client.Delete(path, body.dump(), "application/json");
    if (!r) return {-1, ""};
    return {r->status, r->body};
  };

  int identical = 0, mismatched_steps = 0;
  std::string first_problem;
  for (int seq = 0; seq < 50; ++seq) {
    Rng rng(derive_seed(4242, static_cast<std::uint64_t>(seq)));
    SessionConfig config;
    config.seed = 1000 + static_cast<std::uint64_t>(seq);
    Session direct(backend(), config);
    const auto created = send("POST", "/sessions", {{"seed", config.seed}});
    if (created.first != 200) return {false, "session creation failed"};
    const std::string path = "/sessions/" + json::parse(created.second)["session_id"].get<std::string>();

    const int steps = 6 + static_cast<int>(rng.below(10));
    for (int step = 0; step < steps; ++step) {
      std::string action;
      json body = json::object();
      std::function<void()> apply;
      auto random_direction = [&]() -> DirectionId {
        if (direct.tree().empty() || rng.below(10) == 0) return 1 + rng.below(400);
        const auto& pool = direct.tree().current_node().pool;
        return pool[rng.below(pool.size())];
      };
      std::string method = "POST";
      switch (direct.tree().empty() && rng.below(3) != 0 ? 1 : rng.below(9)) {
        case 0: {
          const int attribute = static_cast<int>(rng.below(8));
          const std::string exemplar = "e" + std::to_string(rng.below(4));
          const HighlightMask mask = backend().region_mask(attribute, exemplar);
          action = "highlight";
          body["masks"] = json::array({{{"exemplar_id", exemplar}, {"rows", mask.to_rows()}}});
          apply = [&direct, mask] {
            const std::vector<HighlightMask> masks = {mask};
            direct.highlight(masks);
          };
          break;
        }
        case 1: {
          const int n = 12 + static_cast<int>(rng.below(49));
          const int k = 2 + static_cast<int>(rng.below(7));
          action = "sample";
          body = {{"n", n}, {"k", k}};
          apply = [&direct, n, k] { direct.sample(n, k); };
          break;
        }
        case 2:
        case 3: {
          std::vector<int> gathered;
          const int clusters = direct.tree().empty() ? 3 : static_cast<int>(direct.tree().current_node().clusters.size());
          const int take = 1 + static_cast<int>(rng.below(2));
          for (int i = 0; i < take; ++i) gathered.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(clusters + 1))));
          action = "scatter";
          body["gathered_cluster_ids"] = gathered;
          apply = [&direct, gathered] { direct.scatter(gathered); };
          break;
        }
        case 4:
          action = "back";
          apply = [&direct] { direct.back(); };
          break;
        case 5: {
          const int k = 1 + static_cast<int>(rng.below(10));
          action = "clusters";
          body["k"] = k;
          apply = [&direct, k] {
            if (direct.tree().empty()) throw InvalidArgument("no nodes");
            direct.set_cluster_count(direct.tree().current(), k);
          };
          break;
        }
        case 6: {
          const int n = 1 + static_cast<int>(rng.below(12));
          action = "more";
          body["n"] = n;
          apply = [&direct, n] {
            if (direct.tree().empty()) throw InvalidArgument("no nodes");
            direct.resample(direct.tree().current(), n);
          };
          break;
        }
        case 7: {
          const DirectionId d = random_direction();
          const bool remove = rng.below(3) == 0;
          action = "bookmarks";
          method = remove ? "DELETE" : "POST";
          body["direction_id"] = d;
          apply = [&direct, d, remove] { remove ? direct.unbookmark(d) : direct.bookmark(d); };
          break;
        }
        default: {
          const DirectionId d = random_direction();
          const std::string base = "e" + std::to_string(rng.below(4));
          const double lambda = rng.uniform() * 24.0 - 12.0;
          action = "test";
          body = {{"direction_id", d}, {"base_id", base}, {"lambda", lambda}};
          apply = [&direct, d, base, lambda] { direct.test(d, base, lambda); };
          break;
        }
      }
      const int want = expected_status(apply);
      const int got = send(method, path + "/" + action, body).first;
      if (want != got) {
        ++mismatched_steps;
        if (first_problem.empty()) {
          first_problem = "sequence " + std::to_string(seq) + " " + action + ": direct " + std::to_string(want) +
                          ", http " + std::to_string(got);
        }
      }
    }
    const auto exported = send("GET", path + "/export", nullptr);
    const bool same_export = exported.first == 200 && exported.second == direct.export_json();
    // A handle() call sees the same state as the socket.
    const bool same_handle = service.handle("GET", path + "/export", "").body == exported.second;
    if (!same_export && first_problem.empty()) first_problem = "sequence " + std::to_string(seq) + " export differs";
    identical += same_export && same_handle;
  }
  server.stop();
  loop.join();
  std::string detail = std::to_string(identical) + "/50 identical exports, " + std::to_string(mismatched_steps) +
                       " status mismatches";
  if (!first_problem.empty()) detail += "; first: " + first_problem;
  return {identical == 50 && mismatched_steps == 0, detail};
}

}  // namespace

int main() {
  report("closed-task rank benchmark", closed_rank);
  report("similarity improvement", similarity_improvement);
  report("k-means oracle equivalence", kmeans_oracle);
  report("pipeline determinism", determinism);
  report("scatter algebra", scatter_algebra);
  report("highlight locality", highlight_locality);
  report("negative-strength reversal", negative_reversal);
  report("API differential", api_differential);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
  return failures == 0 ? 0 : 1;
}
