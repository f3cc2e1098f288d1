#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ctlab/analysis.hpp"
#include "ctlab/csv.hpp"
#include "ctlab/hash.hpp"
#include "ctlab/replay.hpp"
#include "ctlab/server.hpp"
#include "ctlab/simulation.hpp"

namespace fs = std::filesystem;
using namespace ctlab;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

std::string join(const fs::path& dir, const char* name) { return (dir / name).string(); }

int cmd_simulate(const std::string& plan_path, std::optional<std::uint64_t> seed, const std::string& out) {
  ExperimentPlan plan = plan_path.empty() ? ExperimentPlan{} : load_plan(plan_path);
  if (seed) plan.seed = *seed;
  plan.validate();
  const auto population = generate_population(plan);
  const auto result = run_experiment(plan, population);

  const auto replayed = replay(result.events);
  if (outcomes_to_jsonl(replayed.outcomes) != outcomes_to_jsonl(result.outcomes)) {
    throw std::logic_error("replayed outcomes differ from the live run");
  }

  const fs::path dir(out);
  fs::create_directories(dir);
  write_file(join(dir, "events.jsonl"), events_to_jsonl(result.events));
  write_file(join(dir, "records.csv"), records_csv(result.records));
  write_file(join(dir, "population.csv"), population_csv(population));
  write_file(join(dir, "plan.json"), Json(plan).dump(2) + "\n");

  int funded = 0;
  double contributors = 0;
  for (const auto& o : result.outcomes) {
    funded += o.funded;
    contributors += static_cast<double>(o.ranks.size());
  }
  int rounds = 0;
  for (const auto& g : result.schedule) rounds = std::max(rounds, g.round_index);
  const auto n = static_cast<double>(result.outcomes.size());
  std::cout << "rounds " << rounds << ", group-rounds " << result.outcomes.size() << ", funded " << funded
            << " (" << format_fixed(n > 0 ? funded / n : 0.0, 3) << "), mean contributors "
            << format_fixed(n > 0 ? contributors / n : 0.0, 2) << "\n";
  return 0;
}

int cmd_analyze(const std::string& records_path, const std::string& population_path, const std::string& out,
                const std::string& model, int boot, std::uint64_t seed) {
  AnalysisOptions options;
  options.model = binary_model_from_string(model);
  options.n_boot = boot;
  options.seed = seed;
  const std::string records_text = read_file(records_path);
  const std::string population_text = read_file(population_path);
  const auto records = parse_records_csv(records_text);
  std::map<SubjectId, Subject> subjects;
  for (auto& s : parse_population_csv(population_text)) subjects[s.subject_id] = std::move(s);

  const auto result = analyze(records, subjects, options);
  write_analysis(result, options,
                 {{"records.csv", sha256_hex(records_text)}, {"population.csv", sha256_hex(population_text)}},
                 out);
  const auto& fit = result.table2b.columns.front().fit;
  std::cout << "subjects " << result.rows.size() << "; mean-rank tobit: Extravert "
            << format_fixed(fit.coefficient("Extravert"), 3) << stats::significance_stars(fit.p_value("Extravert"))
            << ", Agreeable " << format_fixed(fit.coefficient("Agreeable"), 3)
            << stats::significance_stars(fit.p_value("Agreeable")) << "\n";
  return 0;
}

int cmd_replay(const std::string& log_path, const std::string& out) {
  const auto events = parse_event_log(read_file(log_path));
  const auto result = replay(events);
  const fs::path dir(out);
  fs::create_directories(dir);
  write_file(join(dir, "outcomes.jsonl"), outcomes_to_jsonl(result.outcomes));
  std::cout << "events " << events.size() << ", settled " << result.outcomes.size() << ", voided "
            << result.voided.size() << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::NoData, "no such directory: " + dir);
  write_report(dir);
  std::cout << "wrote " << join(dir, "report.txt") << " and manifest.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Threshold-participation lab: simulate, analyze, serve, replay and report."};
  app.require_subcommand(1);

  std::string plan_path, out, records_path, population_path, model = "logit", log_path, dir;
  std::optional<std::uint64_t> seed;
  std::uint64_t analyze_seed = 0;
  int boot = 500;

  auto* simulate = app.add_subcommand("simulate", "Run a synthetic experiment with bot subjects");
  simulate->add_option("--plan", plan_path, "Experiment plan (JSON); defaults when omitted")->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Override the plan seed");
  simulate->add_option("--out", out, "Output directory")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Compute measures, tables and figure data");
  analyze_cmd->add_option("--records", records_path, "records.csv from simulate or a server export")->required();
  analyze_cmd->add_option("--population", population_path, "population.csv with questionnaire scores")->required();
  analyze_cmd->add_option("--out", out, "Output directory")->required();
  analyze_cmd->add_option("--model", model, "Funded regression family")
      ->check(CLI::IsMember({"logit", "probit"}))
      ->capture_default_str();
  analyze_cmd->add_option("--boot", boot, "Bootstrap resamples for the LOWESS band")
      ->check(CLI::Range(0, 100000))
      ->capture_default_str();
  analyze_cmd->add_option("--seed", analyze_seed, "Bootstrap seed")->capture_default_str();

  ServeOptions serve_options;
  auto* serve = app.add_subcommand("serve", "Host live sessions over WebSocket with an admin HTTP API");
  serve->add_option("--port", serve_options.port, "Listen port (0 picks a free one)")->capture_default_str();
  serve->add_option("--plan", serve_options.plan_path, "Default plan for sessions")->check(CLI::ExistingFile);
  serve->add_option("--bots", serve_options.bots, "Create a session with this many server-side bots at start");
  serve->add_option("--seed", serve_options.seed, "Seed for the start-up session");
  serve->add_option("--data-dir", serve_options.data_dir, "Directory for session logs")->capture_default_str();
  serve->add_option("--clock", serve_options.clock, "wall or lockstep")
      ->check(CLI::IsMember({"wall", "lockstep"}))
      ->capture_default_str();
  serve->add_option("--time-scale", serve_options.time_scale, "Wall-clock speed-up factor")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* replay_cmd = app.add_subcommand("replay", "Rebuild outcomes from an event log");
  replay_cmd->add_option("--log", log_path, "events.jsonl")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Render report.txt and manifest.json from analyze output");
  report->add_option("--dir", dir, "analyze output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(plan_path, seed, out);
    if (*analyze_cmd) return cmd_analyze(records_path, population_path, out, model, boot, analyze_seed);
    if (*serve) return run_server(serve_options);
    if (*replay_cmd) return cmd_replay(log_path, out);
    if (*report) return cmd_report(dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
