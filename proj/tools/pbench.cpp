// Command-line entry point; see `pbench --help`.
#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "pbench/cli/annotation_service.hpp"
#include "pbench/cli/commands.hpp"

namespace {

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

std::vector<pbench::TaskKind> parse_tasks(const std::vector<std::string>& names) {
  std::vector<pbench::TaskKind> out;
  for (const auto& n : names) {
    auto kind = pbench::parse_task_kind(n);
    if (!kind) throw CLI::ValidationError("--task", "unknown task '" + n + "'");
    out.push_back(*kind);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace pbench::cli;
  CLI::App app{"Persona-agent benchmark: run, report, correlate, grid, annotate"};
  app.require_subcommand(1);
  Streams io{std::cout, std::cerr};
  int code = kOk;

  std::string config;
  RunFlags flags;
  auto* run = app.add_subcommand("run", "Run (or resume) a benchmark from a config file");
  run->add_option("--config", config, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--resume", flags.resume, "Continue an existing run; completed items are not recomputed");
  run->add_flag("--overwrite", flags.overwrite, "Delete an existing run directory first");
  run->add_flag("--quiet", flags.quiet, "No progress lines on stderr");
  run->callback([&] { code = cmd_run(config, flags, io); });

  std::vector<std::string> run_dirs;
  bool csv = false;
  auto* report = app.add_subcommand("report", "Score, refusal and completeness tables for runs");
  report->add_option("--run-dir", run_dirs, "Run directory; repeat for one row per model")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_flag("--csv", csv, "CSV instead of text");
  report->callback([&] { code = cmd_report({run_dirs.begin(), run_dirs.end()}, csv, io); });

  std::string scores_dir;
  bool per_persona = false;
  auto* correlate = app.add_subcommand("correlate", "Correlate machine scores with human scores");
  correlate->add_option("--run-dir", run_dirs, "Run directory; repeat for one row per model")
      ->required()
      ->check(CLI::ExistingDirectory);
  correlate->add_option("--scores-dir", scores_dir, "Directory of scores-*.json (default: the run's annotations)");
  correlate->add_flag("--per-persona", per_persona, "Average per-persona correlations instead of pooling items");
  correlate->callback([&] {
    std::optional<std::filesystem::path> dir;
    if (!scores_dir.empty()) dir = scores_dir;
    code = cmd_correlate({run_dirs.begin(), run_dirs.end()}, dir,
                         per_persona ? CorrelationMode::PerPersona : CorrelationMode::Pooled, io);
  });

  auto* grid = app.add_subcommand("grid", "Run every question-generator x evaluator cell");
  grid->add_option("--config", config, "Grid config (JSON)")->required()->check(CLI::ExistingFile);
  grid->add_flag("--resume", flags.resume, "Continue existing cell runs");
  grid->add_flag("--overwrite", flags.overwrite, "Delete existing cell runs first");
  grid->add_flag("--quiet", flags.quiet, "No progress lines on stderr");
  grid->callback([&] { code = cmd_grid(config, flags, io); });

  std::string run_dir;
  ExportFlags export_flags;
  std::vector<std::string> tasks;
  auto* exp = app.add_subcommand("export-annotations", "Write a blind annotation packet (JSON and CSV)");
  exp->add_option("--run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--sample", export_flags.sample, "Number of personas to sample (default: all)");
  exp->add_option("--seed", export_flags.seed, "Sampling and shuffle seed")->default_val(0);
  exp->add_option("--task", tasks, "Restrict to a task (repeatable)");
  exp->callback([&] {
    export_flags.tasks = parse_tasks(tasks);
    code = cmd_export(run_dir, export_flags, io);
  });

  std::string bind = "127.0.0.1:8080";
  std::string static_dir;
  std::uint64_t seed = 0;
  auto* serve = app.add_subcommand("serve", "Serve an annotation packet to annotators over HTTP");
  serve->add_option("--run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  auto* seed_opt = serve->add_option("--seed", seed, "Packet seed (needed when several packets exist)");
  serve->add_option("--bind", bind, "host:port")->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of UI assets")->check(CLI::ExistingDirectory);
  serve->callback([&] {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--bind", "expected host:port");
    std::optional<std::uint64_t> packet_seed;
    if (*seed_opt) packet_seed = seed;
    try {
      AnnotationService service(run_dir, packet_seed);
      httplib::Server server;
      service.mount(server, static_dir);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      const std::string host = bind.substr(0, colon);
      const int port = std::stoi(bind.substr(colon + 1));
      std::cerr << "serving " << service.loaded_packet().items.size() << " items on http://" << bind << "\n";
      code = server.listen(host, port) ? kOk : kFailure;
      if (code != kOk) std::cerr << "cannot listen on " << bind << "\n";
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      code = kConfigError;
    }
  });

  std::string cache_dir;
  auto* cache = app.add_subcommand("cache", "Response cache maintenance");
  cache->require_subcommand(1);
  auto* repair = cache->add_subcommand("repair", "Remove corrupt or partial cache entries");
  repair->add_option("--cache-dir", cache_dir, "Cache directory")->required()->check(CLI::ExistingDirectory);
  repair->callback([&] { code = cmd_cache_repair(cache_dir, io); });

  auto* check = app.add_subcommand("check", "Load a config and check the task data");
  check->add_option("--config", config, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);
  check->callback([&] { code = cmd_check(config, io); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return code;
}
