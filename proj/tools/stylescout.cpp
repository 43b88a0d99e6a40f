#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stylescout/error.hpp"
#include "stylescout/eval.hpp"
#include "stylescout/service.hpp"
#include "stylescout/synthetic_backend.hpp"
#include "stylescout/wire.hpp"

namespace fs = std::filesystem;
using namespace stylescout;

namespace {

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  return out;
}

int eval_closed(int tasks, int seeds, const std::string& out, std::uint64_t master_seed, int random_count,
                std::uint64_t model_seed, std::string summary_path) {
  const SyntheticBackend backend(SyntheticConfig{.model_seed = model_seed});
  const auto task_list = make_closed_tasks(backend, tasks);
  const auto table = run_similarity_table(task_list, GreedyGatherAgent{}, SessionConfig{}, backend, seeds, master_seed,
                                          random_count);
  {
    auto f = open_out(out);
    write_runs_csv(table, f);
  }
  {
    auto f = open_out(sibling(out, ".table.csv"));
    write_table_csv(table, f);
  }
  auto summary = summary_json(table);
  summary["master_seed"] = std::to_string(master_seed);
  summary["model_seed"] = std::to_string(model_seed);
  if (summary_path.empty()) summary_path = sibling(out, ".json");
  auto f = open_out(summary_path);
  f << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int eval_open(const std::string& attribute, int seeds, const std::string& out, std::uint64_t master_seed,
              std::uint64_t model_seed, std::string summary_path, const std::string& reference) {
  if (seeds < 1) throw InvalidArgument("--seeds must be >= 1");
  const SyntheticBackend backend(SyntheticConfig{.model_seed = model_seed});
  const int index = backend.attribute_index(attribute);
  std::vector<OpenReport> reports;
  for (int s = 0; s < seeds; ++s) {
    reports.push_back(run_open_task(backend, index, GreedyGatherAgent{}, SessionConfig{},
                                    derive_seed(master_seed, static_cast<std::uint64_t>(s)), reference));
  }
  {
    auto f = open_out(out);
    write_open_csv(reports, f);
  }
  int achieved = 0;
  double delta = 0.0, off = 0.0, goal = 0.0;
  for (const auto& r : reports) {
    if (r.target_delta > 0.0) ++achieved;
    delta += r.target_delta;
    off += r.max_off_target;
    goal += r.goal_similarity;
  }
  const double n = static_cast<double>(reports.size());
  const double max_cos = max_pairwise_cosine(reports);
  nlohmann::json summary = {{"attribute", attribute},
                            {"reference", reference},
                            {"runs", reports.size()},
                            {"goal_achieved_runs", achieved},
                            {"mean_target_delta", delta / n},
                            {"mean_max_off_target", off / n},
                            {"mean_goal_similarity", goal / n},
                            {"max_pairwise_direction_cosine", max_cos},
                            {"diverse", reports.size() < 2 || max_cos < 0.95},
                            {"master_seed", std::to_string(master_seed)},
                            {"model_seed", std::to_string(model_seed)}};
  if (summary_path.empty()) summary_path = sibling(out, ".json");
  auto f = open_out(summary_path);
  f << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stylescout: find style directions in a generator by scatter/gather exploration"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "run the HTTP JSON API");
  std::string config_path;
  std::optional<int> port;
  serve->add_option("--config", config_path, "service config file (JSON)");
  serve->add_option("--port", port, "override the configured port (0 picks a free one)");

  auto* backend_cmd = app.add_subcommand("backend", "serve the synthetic backend over the wire protocol on stdin/stdout");
  std::uint64_t backend_seed = SyntheticConfig{}.model_seed;
  backend_cmd->add_option("--model-seed", backend_seed, "synthetic model seed");

  auto* eval = app.add_subcommand("eval", "scripted-agent evaluation on the synthetic backend");
  eval->require_subcommand(1);
  std::uint64_t master_seed = 1;
  std::uint64_t model_seed = SyntheticConfig{}.model_seed;
  std::string summary_path;

  auto* closed = eval->add_subcommand("closed", "closed target-matching tasks with rank among random directions");
  int tasks = 3, seeds = 12, random_count = 1000;
  std::string closed_out;
  closed->add_option("--tasks", tasks, "number of tasks (hidden edits)")->check(CLI::Range(1, 1000));
  closed->add_option("--seeds", seeds, "agent seeds per task")->check(CLI::Range(1, 100000));
  closed->add_option("--out", closed_out, "per-run CSV")->required();
  closed->add_option("--random", random_count, "random directions for the rank baseline")->check(CLI::Range(1, 1000000));
  closed->add_option("--master-seed", master_seed, "seed all agent seeds derive from");
  closed->add_option("--model-seed", model_seed, "synthetic model seed");
  closed->add_option("--summary", summary_path, "JSON summary path (default: next to --out)");

  auto* open = eval->add_subcommand("open", "open-ended task: raise one named attribute");
  std::string attribute, open_out_path, reference = "e0";
  int open_seeds = 12;
  open->add_option("--attribute", attribute, "attribute name")->required();
  open->add_option("--seeds", open_seeds, "agent seeds")->check(CLI::Range(1, 100000));
  open->add_option("--out", open_out_path, "per-run CSV")->required();
  open->add_option("--reference", reference, "exemplar the edit starts from");
  open->add_option("--master-seed", master_seed, "seed all agent seeds derive from");
  open->add_option("--model-seed", model_seed, "synthetic model seed");
  open->add_option("--summary", summary_path, "JSON summary path (default: next to --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      ServiceConfig config = config_path.empty() ? ServiceConfig{} : ServiceConfig::load(config_path);
      if (port) config.port = *port;
      return run_service(config);
    }
    if (*backend_cmd) {
      const SyntheticBackend backend(SyntheticConfig{.model_seed = backend_seed});
      std::ios::sync_with_stdio(false);
      serve_backend(backend, std::cin, std::cout);
      return 0;
    }
    if (*closed) return eval_closed(tasks, seeds, closed_out, master_seed, random_count, model_seed, summary_path);
    if (*open) return eval_open(attribute, open_seeds, open_out_path, master_seed, model_seed, summary_path, reference);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
