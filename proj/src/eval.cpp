#include "stylescout/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>

#include "stylescout/error.hpp"

namespace stylescout {

namespace {

struct HiddenEdit {
  const char* name;
  std::vector<std::pair<int, double>> shifts;  // attribute, pre-activation shift
};

const std::array<HiddenEdit, 3> kHiddenEdits = {{
    {"mouth", {{0, 0.9}}},
    {"eyes_brows", {{1, 0.8}, {3, -0.6}}},
    {"hair_collar", {{2, -0.8}, {7, 0.7}}},
}};

constexpr int kParamsPerShift = 3;

}  // namespace

std::vector<ClosedTask> make_closed_tasks(const SyntheticBackend& backend, int count) {
  if (count < 1) throw InvalidArgument("closed tasks: count must be >= 1");
  const BackendMeta& meta = backend.meta();
  std::vector<ClosedTask> tasks;
  for (int t = 0; t < count; ++t) {
    const HiddenEdit& edit = kHiddenEdits[static_cast<std::size_t>(t) % kHiddenEdits.size()];
    ClosedTask task;
    task.id = "task" + std::to_string(t + 1) + "_" + edit.name;
    const Exemplar& ex = meta.exemplars[static_cast<std::size_t>(t) % meta.exemplars.size()];
    task.reference_id = ex.id;
    task.reference = ex.values;

    Rng rng(derive_seed(backend.config().model_seed ^ 0x7a5c, static_cast<std::uint64_t>(t)));
    std::map<int, double> deltas;
    for (const auto& [attribute, shift] : edit.shifts) {
      if (attribute >= backend.attribute_count()) continue;
      std::vector<int> support = backend.attribute_support(attribute);
      for (int k = 0; k < kParamsPerShift && !support.empty(); ++k) {
        const auto pick = static_cast<std::size_t>(rng.below(support.size()));
        const int param = support[pick];
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(pick));
        deltas[param] = shift / (kParamsPerShift * backend.mixing()(param, attribute));
      }
    }
    if (deltas.empty()) throw InvalidArgument("closed tasks: backend has too few attributes");
    task.hidden.id = 0;
    for (const auto& [param, delta] : deltas) task.hidden.support.push_back(param);
    task.hidden.deltas.resize(static_cast<Eigen::Index>(deltas.size()));
    Eigen::Index k = 0;
    for (const auto& [param, delta] : deltas) task.hidden.deltas[k++] = delta;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

double similarity_to(const GeneratorBackend& backend, const StyleVector& values, const Eigen::VectorXd& target) {
  return normalized_embedding(backend.embed(backend.generate(values))).dot(target);
}

std::pair<double, double> tune_strength(const GeneratorBackend& backend, const StyleVector& base, const Direction& d,
                                        const Eigen::VectorXd& target) {
  const double lambda_max = backend.meta().lambda_max;
  auto score = [&](double lambda) {
    return similarity_to(backend, compose(base, d, Strength(lambda, lambda_max)), target);
  };

  std::vector<double> grid{0.0};
  for (const double g : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0,
                         5.0, 6.0, 8.0, 10.0}) {
    if (g >= lambda_max) break;
    grid.push_back(g);
    grid.push_back(-g);
  }
  grid.push_back(lambda_max);
  grid.push_back(-lambda_max);
  std::sort(grid.begin(), grid.end());

  std::size_t best = 0;
  std::vector<double> scores(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    scores[i] = score(grid[i]);
    if (scores[i] > scores[best]) best = i;
  }

  double lo = grid[best == 0 ? 0 : best - 1];
  double hi = grid[best + 1 == grid.size() ? best : best + 1];
  double best_lambda = grid[best];
  double best_score = scores[best];
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = score(x1), f2 = score(x2);
  for (int it = 0; it < 24; ++it) {
    if (f1 > f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = score(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = score(x2);
    }
  }
  for (const auto& [x, f] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (f > best_score) {
      best_score = f;
      best_lambda = x;
    }
  }
  return {best_lambda, best_score};
}

GreedyGatherAgent::Outcome GreedyGatherAgent::run(Session& session, const Eigen::VectorXd& target_embedding) const {
  if (session.tree().empty()) session.sample();

  auto closeness = [&](DirectionId id) { return session.embedding(id).dot(target_embedding); };

  Outcome outcome;
  for (int s = 0; s < max_scatters; ++s) {
    const TreeNode& node = session.tree().current_node();
    std::vector<const Cluster*> ranked;
    for (const auto& c : node.clusters) ranked.push_back(&c);
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Cluster* a, const Cluster* b) {
      return closeness(a->representative_id) > closeness(b->representative_id);
    });
    std::vector<int> gathered;
    for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < gather_top; ++i) gathered.push_back(ranked[i]->id);
    session.scatter(gathered);
    ++outcome.scatters;
  }

  // Finalists: directions of the visited branch closest to the target at the
  // default strength.
  std::vector<DirectionId> candidates;
  for (NodeId id = session.tree().current();;) {
    const TreeNode& node = session.tree().node(id);
    candidates.insert(candidates.end(), node.pool.begin(), node.pool.end());
    if (!node.parent) break;
    id = *node.parent;
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](DirectionId a, DirectionId b) { return closeness(a) > closeness(b) || (closeness(a) == closeness(b) && a < b); });
  candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max(1, finalists))));

  bool first = true;
  for (const DirectionId id : candidates) {
    const Direction& d = session.direction(id);
    const auto [lambda, similarity] = tune_strength(session.backend(), session.base(), d, target_embedding);
    if (first || similarity > outcome.similarity) {
      outcome.best = d;
      outcome.strength = lambda;
      outcome.similarity = similarity;
      first = false;
    }
  }
  return outcome;
}

ClosedReport run_closed_task(const ClosedTask& task, const GreedyGatherAgent& agent, const SessionConfig& config,
                             const GeneratorBackend& backend, std::uint64_t seed, int random_count) {
  if (random_count < 1) throw InvalidArgument("closed task: random_count must be >= 1");
  const Eigen::VectorXd target = normalized_embedding(backend.embed(backend.generate(task.target())));

  SessionConfig session_config = config;
  session_config.seed = seed;
  session_config.base_exemplar = task.reference_id;
  Session session(backend, session_config);
  const auto outcome = agent.run(session, target);

  ClosedReport report;
  report.task_id = task.id;
  report.seed = seed;
  report.best_direction = outcome.best;
  report.strength = outcome.strength;
  report.similarity = outcome.similarity;
  report.reference_similarity = similarity_to(backend, task.reference, target);
  report.scatters = outcome.scatters;
  report.random_count = random_count;

  SamplingOptions options = config.sampling;
  options.count = random_count;
  const auto random = sample_directions(ParameterSubset::full(backend.meta().dim), options,
                                        derive_seed(seed, 0x5eed'0000'0000ULL), 1);
  const Strength strength(config.default_strength, backend.meta().lambda_max);
  int better = 0;
  for (const auto& d : random) {
    if (similarity_to(backend, compose(task.reference, d, strength), target) > report.similarity) ++better;
  }
  report.rank_among_random = better + 1;
  return report;
}

SimilarityTable run_similarity_table(const std::vector<ClosedTask>& tasks, const GreedyGatherAgent& agent,
                                     const SessionConfig& config, const GeneratorBackend& backend, int seeds,
                                     std::uint64_t master_seed, int random_count) {
  if (seeds < 1) throw InvalidArgument("similarity table: seeds must be >= 1");
  SimilarityTable table;
  for (const auto& task : tasks) {
    SimilarityRow row;
    row.task_id = task.id;
    std::vector<double> values;
    for (int s = 0; s < seeds; ++s) {
      auto report = run_closed_task(task, agent, config, backend, derive_seed(master_seed, static_cast<std::uint64_t>(s)),
                                    random_count);
      row.reference_similarity = report.reference_similarity;
      values.push_back(report.similarity);
      if (report.rank_among_random <= 5) ++row.top5;
      table.runs.push_back(std::move(report));
    }
    row.runs = seeds;
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    row.mean = mean;
    row.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    table.rows.push_back(row);
  }
  return table;
}

void write_runs_csv(const SimilarityTable& table, std::ostream& out) {
  out << "task,seed,similarity,reference_similarity,rank_among_random,random_count,strength,scatters,support_size\n";
  out << std::setprecision(17);
  for (const auto& r : table.runs) {
    out << r.task_id << ',' << r.seed << ',' << r.similarity << ',' << r.reference_similarity << ','
        << r.rank_among_random << ',' << r.random_count << ',' << r.strength << ',' << r.scatters << ','
        << r.best_direction.support.size() << '\n';
  }
}

void write_table_csv(const SimilarityTable& table, std::ostream& out) {
  out << "task,reference_similarity,generated_mean,generated_sd,runs,top5\n";
  out << std::setprecision(17);
  for (const auto& r : table.rows) {
    out << r.task_id << ',' << r.reference_similarity << ',' << r.mean << ',' << r.sd << ',' << r.runs << ','
        << r.top5 << '\n';
  }
}

nlohmann::json summary_json(const SimilarityTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  int runs = 0, top5 = 0, improved = 0;
  for (const auto& r : table.rows) {
    rows.push_back({{"task", r.task_id},
                    {"reference_similarity", r.reference_similarity},
                    {"generated_mean", r.mean},
                    {"generated_sd", r.sd},
                    {"runs", r.runs},
                    {"top5", r.top5}});
  }
  for (const auto& r : table.runs) {
    ++runs;
    if (r.rank_among_random <= 5) ++top5;
    if (r.similarity > r.reference_similarity) ++improved;
  }
  return {{"tasks", rows},
          {"runs", runs},
          {"top5_runs", top5},
          {"improved_runs", improved},
          {"similarity", "cosine of unit-normalized backend embeddings"}};
}

OpenReport run_open_task(const SyntheticBackend& backend, int attribute, const GreedyGatherAgent& agent,
                         const SessionConfig& config, std::uint64_t seed, const std::string& reference_id) {
  const StyleVector& reference = backend.meta().exemplar(reference_id).values;
  const Eigen::VectorXd column = backend.mixing().col(attribute);
  if (column.squaredNorm() == 0.0) throw InvalidArgument("open task: attribute has no parameters");

  // Goal: the reference with this attribute's pre-activation raised by one unit.
  const StyleVector goal = reference + column / column.squaredNorm();
  const Eigen::VectorXd reference_embedding = normalized_embedding(backend.embed(backend.generate(reference)));
  const Eigen::VectorXd goal_embedding = normalized_embedding(backend.embed(backend.generate(goal)));

  SessionConfig session_config = config;
  session_config.seed = seed;
  session_config.base_exemplar = reference_id;
  Session session(backend, session_config);
  const auto outcome = agent.run(session, goal_embedding);

  const StyleVector edited = compose(reference, outcome.best, Strength(outcome.strength, backend.meta().lambda_max));
  const Eigen::VectorXd delta = backend.attributes(edited) - backend.attributes(reference);
  OpenReport report;
  report.attribute = std::string(SyntheticBackend::attribute_name(attribute));
  report.seed = seed;
  report.target_delta = delta[attribute];
  for (Eigen::Index j = 0; j < delta.size(); ++j) {
    if (j != attribute) report.max_off_target = std::max(report.max_off_target, std::abs(delta[j]));
  }
  const Eigen::VectorXd moved = normalized_embedding(backend.embed(backend.generate(edited))) - reference_embedding;
  const Eigen::VectorXd wanted = goal_embedding - reference_embedding;
  report.goal_similarity = moved.norm() > 0.0 ? moved.dot(wanted) / (moved.norm() * wanted.norm()) : 0.0;
  report.strength = outcome.strength;
  report.direction = outcome.best.dense(backend.meta().dim) * outcome.strength;
  return report;
}

double max_pairwise_cosine(const std::vector<OpenReport>& reports) {
  double worst = -1.0;
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = a + 1; b < reports.size(); ++b) {
      const double na = reports[a].direction.norm(), nb = reports[b].direction.norm();
      if (na == 0.0 || nb == 0.0) continue;
      worst = std::max(worst, reports[a].direction.dot(reports[b].direction) / (na * nb));
    }
  }
  return worst;
}

void write_open_csv(const std::vector<OpenReport>& reports, std::ostream& out) {
  out << "attribute,seed,target_delta,max_off_target,goal_similarity,strength\n";
  out << std::setprecision(17);
  for (const auto& r : reports) {
    out << r.attribute << ',' << r.seed << ',' << r.target_delta << ',' << r.max_off_target << ','
        << r.goal_similarity << ',' << r.strength << '\n';
  }
}

}  // namespace stylescout
