#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stylescout/session.hpp"
#include "stylescout/synthetic_backend.hpp"

namespace stylescout {

/// A reference/target pair produced by a hidden edit of an exemplar.
struct ClosedTask {
  std::string id;
  std::string reference_id;  // exemplar used as reference and session base
  StyleVector reference;
  Direction hidden;
  double hidden_strength = 1.0;

  StyleVector target() const { return compose(reference, hidden, Strength(hidden_strength, std::max(1.0, std::abs(hidden_strength)))); }
};

/// Three hidden edits on the synthetic backend: a mouth edit, an eyes+brows
/// edit and a hair+collar edit, each on its own exemplar.
std::vector<ClosedTask> make_closed_tasks(const SyntheticBackend& backend, int count);

/// Scripted stand-in for a participant: gathers the clusters whose
/// representatives look most like the target, scatters, repeats, then tunes
/// the strength of its best few candidates.
struct GreedyGatherAgent {
  int max_scatters = 3;
  int gather_top = 2;
  int finalists = 3;

  struct Outcome {
    Direction best;
    double strength = kDefaultStrength;
    double similarity = 0.0;
    int scatters = 0;
  };

  Outcome run(Session& session, const Eigen::VectorXd& target_embedding) const;
};

/// cos(embed(render(values)), target) with unit `target`.
double similarity_to(const GeneratorBackend& backend, const StyleVector& values, const Eigen::VectorXd& target);

/// Strength in [-lambda_max, lambda_max] maximising similarity of
/// base + lambda * d to `target`: a fixed grid followed by golden-section
/// refinement around the best grid point.
std::pair<double, double> tune_strength(const GeneratorBackend& backend, const StyleVector& base, const Direction& d,
                                        const Eigen::VectorXd& target);

struct ClosedReport {
  std::string task_id;
  std::uint64_t seed = 0;
  Direction best_direction;
  double strength = 0.0;
  double similarity = 0.0;            // generated vs target
  double reference_similarity = 0.0;  // reference vs target
  int rank_among_random = 0;          // 1 = better than every random direction
  int random_count = 0;
  int scatters = 0;
};

/// One agent run on one task. The rank compares the agent's similarity with
/// `random_count` directions drawn like unhighlighted engine samples and
/// applied to the reference at the default strength.
ClosedReport run_closed_task(const ClosedTask& task, const GreedyGatherAgent& agent, const SessionConfig& config,
                             const GeneratorBackend& backend, std::uint64_t seed, int random_count = 1000);

struct SimilarityRow {
  std::string task_id;
  double reference_similarity = 0.0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single run
  int runs = 0;
  int top5 = 0;
};

struct SimilarityTable {
  std::vector<ClosedReport> runs;  // ordered by task, then seed
  std::vector<SimilarityRow> rows;
};

/// Runs every task once per seed (seeds derived from `master_seed`).
SimilarityTable run_similarity_table(const std::vector<ClosedTask>& tasks, const GreedyGatherAgent& agent,
                                     const SessionConfig& config, const GeneratorBackend& backend, int seeds,
                                     std::uint64_t master_seed, int random_count = 1000);

void write_runs_csv(const SimilarityTable& table, std::ostream& out);
void write_table_csv(const SimilarityTable& table, std::ostream& out);
nlohmann::json summary_json(const SimilarityTable& table);

/// Open-ended goal: push one named synthetic attribute upward.
struct OpenReport {
  std::string attribute;
  std::uint64_t seed = 0;
  double target_delta = 0.0;       // attribute change, generated - reference
  double max_off_target = 0.0;     // largest absolute change among other attributes
  double goal_similarity = 0.0;    // cos(embed displacement, goal displacement)
  double strength = 0.0;
  Eigen::VectorXd direction;       // dense
};

OpenReport run_open_task(const SyntheticBackend& backend, int attribute, const GreedyGatherAgent& agent,
                         const SessionConfig& config, std::uint64_t seed, const std::string& reference_id = "e0");

/// Largest pairwise cosine between the dense directions of `reports`.
double max_pairwise_cosine(const std::vector<OpenReport>& reports);

void write_open_csv(const std::vector<OpenReport>& reports, std::ostream& out);

}  // namespace stylescout
