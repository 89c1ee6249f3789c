#include "pbench/cli/commands.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "pbench/gateway/cache.hpp"
#include "pbench/pipeline/config.hpp"
#include "pbench/pipeline/report.hpp"
#include "pbench/prompt/prompt_kit.hpp"

namespace pbench::cli {

namespace fs = std::filesystem;
using pipeline::ConfigError;
using pipeline::FatalRunError;
using pipeline::ReportError;
using store::StoreError;

namespace {

// Maps the library's exceptions onto exit codes.
int guarded(Streams io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << "config error (" << e.subject() << "): " << e.what() << "\n";
    return kConfigError;
  } catch (const FatalRunError& e) {
    io.err << "provider " << e.provider() << " failed: " << e.what() << "\n";
    return kConfigError;
  } catch (const ReportError& e) {
    io.err << "EmptyRun: " << e.what() << "\n";
    return kEmptyRun;
  } catch (const StoreError& e) {
    io.err << to_string(e.code()) << ": " << e.what() << "\n";
    switch (e.code()) {
      case StoreError::Code::NoAnnotations: return kNoAnnotations;
      case StoreError::Code::RunExists:
        io.err << "use --resume to continue the run or --overwrite to start over\n";
        return kConfigError;
      case StoreError::Code::ConfigMismatch:
      case StoreError::Code::NoRun: return kConfigError;
      default: return kFailure;
    }
  } catch (const gateway::GatewayError& e) {
    io.err << "provider " << e.provider() << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

std::string outcome_line(const std::string& run_id, const pipeline::RunOutcome& outcome) {
  std::ostringstream s;
  s << "run " << run_id << ": " << (outcome.complete ? "complete" : "partial") << " ("
    << outcome.provider_calls << " provider calls, " << outcome.cache_hits << " cache hits) -> "
    << outcome.run_dir.string();
  return s.str();
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double sum = 0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

CorrelationCell correlate_pairs(const std::vector<double>& machine, const std::vector<double>& human) {
  CorrelationCell c;
  c.items = machine.size();
  if (machine.size() < 2) return c;
  if (auto r = stats::spearman(machine, human)) c.rho = r->value;
  if (auto t = stats::kendall_tau(machine, human)) c.tau = t->value;
  return c;
}

std::string render_cell(const CorrelationCell& c) {
  if (!c.rho || !c.tau) return "undefined";
  return stats::format_correlation_cell(*c.rho, *c.tau);
}

}  // namespace

int cmd_run(const fs::path& config_path, const RunFlags& flags, Streams io, pipeline::RunOptions options) {
  return guarded(io, [&] {
    const auto config = pipeline::load_config(config_path);
    options.resume = flags.resume;
    options.overwrite = flags.overwrite;
    if (!flags.quiet && !options.progress) options.progress = &io.err;
    const auto outcome = pipeline::run_benchmark(config, options);
    auto log = store::RunLog::open(outcome.run_dir);
    if (pipeline::score_matrix(*log).total() > 0) {
      const std::vector<pipeline::ModelReport> models = {pipeline::build_report(*log)};
      io.out << pipeline::render_text(models);
    } else {
      io.out << "no items were scored\n";
    }
    io.out << outcome_line(config.run_id, outcome) << "\n";
    return outcome.complete ? kOk : kPartial;
  });
}

int cmd_report(const std::vector<fs::path>& run_dirs, bool csv, Streams io) {
  return guarded(io, [&] {
    std::vector<pipeline::ModelReport> models;
    for (const auto& dir : run_dirs) models.push_back(pipeline::build_report(*store::RunLog::open(dir)));
    io.out << (csv ? pipeline::render_csv(models) : pipeline::render_text(models));
    return kOk;
  });
}

CorrelationRow correlate_run(const store::RunLog& log, const std::vector<store::HumanScoreSet>& sets,
                             CorrelationMode mode) {
  const auto imported = store::import_human_scores(log, sets);
  CorrelationRow row;
  const auto meta = log.manifest().metadata.value("benchmark", nlohmann::json::object());
  row.model = meta.contains("agent") ? meta["agent"].value("name", log.manifest().run_id)
                                     : log.manifest().run_id;
  row.annotators = static_cast<int>(sets.size());
  row.agreement_items = imported.agreement.items();
  if (imported.agreement.items() > 0) row.kappa = stats::fleiss_kappa(imported.agreement);

  // persona -> task -> (machine, human) means of that persona's items
  std::map<std::string, std::map<TaskKind, std::pair<std::vector<double>, std::vector<double>>>> by_persona;
  for (TaskKind task : kAllTasks) {
    auto it = imported.per_task.find(task);
    if (it == imported.per_task.end()) {
      row.tasks[task] = {};
      continue;
    }
    const auto& paired = it->second;
    for (std::size_t i = 0; i < paired.size(); ++i) {
      auto& slot = by_persona[imported.persona_of.at(paired.keys[i])][task];
      slot.first.push_back(paired.machine[i]);
      slot.second.push_back(paired.human[i]);
    }
    if (mode == CorrelationMode::Pooled) {
      row.tasks[task] = correlate_pairs(paired.machine, paired.human);
    } else {
      std::vector<double> rhos, taus;
      for (const auto& [persona, tasks] : by_persona) {
        auto t = tasks.find(task);
        if (t == tasks.end()) continue;
        const auto c = correlate_pairs(t->second.first, t->second.second);
        if (c.rho && c.tau) {
          rhos.push_back(*c.rho);
          taus.push_back(*c.tau);
        }
      }
      row.tasks[task] = {mean_of(rhos), mean_of(taus), rhos.size()};
    }
  }

  std::vector<double> machine, human;
  for (const auto& [persona, tasks] : by_persona) {
    if (tasks.size() != kAllTasks.size()) continue;
    double m = 0, h = 0;
    for (const auto& [task, pair] : tasks) {
      m += *mean_of(pair.first);
      h += *mean_of(pair.second);
    }
    machine.push_back(m / static_cast<double>(kAllTasks.size()));
    human.push_back(h / static_cast<double>(kAllTasks.size()));
  }
  row.persona_score = correlate_pairs(machine, human);
  return row;
}

std::string render_correlations(const std::vector<CorrelationRow>& rows, CorrelationMode mode) {
  std::vector<std::string> header = {"Model"};
  for (TaskKind t : kAllTasks) header.emplace_back(display_name(t));
  header.emplace_back("PersonaScore");
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.model};
    for (TaskKind t : kAllTasks) line.push_back(render_cell(r.tasks.at(t)));
    line.push_back(render_cell(r.persona_score));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    std::string s;
    for (std::size_t c = 0; c < line.size(); ++c) {
      s += line[c];
      if (c + 1 < line.size()) s += std::string(width[c] + 2 - line[c].size(), ' ');
    }
    out << s << "\n";
  };
  out << "Spearman (rho) / Kendall tau-b against human scores; "
      << (mode == CorrelationMode::Pooled ? "items pooled across personas"
                                          : "mean of per-persona correlations")
      << "\n";
  emit(header);
  for (const auto& line : cells) emit(line);
  out << "\n";
  for (const auto& r : rows) {
    out << "Fleiss' kappa " << r.model << ": ";
    if (r.annotators < 2) {
      out << "n/a (needs at least two annotators)\n";
    } else if (r.agreement_items == 0) {
      out << "n/a (no item scored by all " << r.annotators << " annotators)\n";
    } else if (!r.kappa) {
      out << "undefined (perfect chance agreement)\n";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", r.kappa->value);
      out << buf << " (" << r.annotators << " annotators, " << r.agreement_items << " items)\n";
    }
  }
  return out.str();
}

int cmd_correlate(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& scores_dir,
                  CorrelationMode mode, Streams io) {
  return guarded(io, [&] {
    std::vector<CorrelationRow> rows;
    for (const auto& dir : run_dirs) {
      auto log = store::RunLog::open(dir);
      const auto sets = store::load_score_sets(scores_dir ? *scores_dir : log->annotations_dir());
      if (sets.empty()) {
        throw StoreError(StoreError::Code::NoAnnotations, "no scores-*.json files for run " + dir.string());
      }
      rows.push_back(correlate_run(*log, sets, mode));
    }
    io.out << render_correlations(rows, mode);
    return kOk;
  });
}

int cmd_grid(const fs::path& config_path, const RunFlags& flags, Streams io, pipeline::RunOptions options) {
  return guarded(io, [&] {
    const auto grid = pipeline::load_grid_config(config_path);
    options.resume = flags.resume;
    options.overwrite = flags.overwrite;
    if (!flags.quiet && !options.progress) options.progress = &io.err;
    const auto result = pipeline::run_grid(grid, options);
    io.out << pipeline::render_grid(result);
    const bool complete = std::all_of(result.cells.begin(), result.cells.end(),
                                      [](const pipeline::GridCell& c) { return c.complete; });
    return complete ? kOk : kPartial;
  });
}

int cmd_export(const fs::path& run_dir, const ExportFlags& flags, Streams io) {
  return guarded(io, [&] {
    auto log = store::RunLog::open(run_dir);
    std::vector<std::string> personas;
    const auto meta = log->manifest().metadata.value("benchmark", nlohmann::json::object());
    if (meta.contains("personas")) personas = meta["personas"].get<std::vector<std::string>>();
    if (flags.sample > 0 && flags.sample < personas.size()) {
      store::seeded_shuffle(personas, flags.seed);
      personas.resize(flags.sample);
      std::sort(personas.begin(), personas.end());
    }
    const auto packet = store::export_annotation_packet(*log, personas, flags.tasks, flags.seed);
    if (packet.items.empty()) {
      io.err << "no exportable items in " << run_dir.string() << "\n";
      return kEmptyRun;
    }
    const auto path = store::write_packet(*log, packet);
    io.out << "wrote " << packet.items.size() << " items to " << path.string() << "\n";
    if (!packet.incomplete.empty()) {
      io.out << packet.incomplete.size() << " sampled items skipped (no response or rubric)\n";
    }
    return kOk;
  });
}

int cmd_cache_repair(const fs::path& cache_dir, Streams io) {
  return guarded(io, [&] {
    gateway::ResponseCache cache(cache_dir);
    const auto removed = cache.repair();
    for (const auto& p : removed) io.out << "removed " << p.string() << "\n";
    io.out << removed.size() << " entr" << (removed.size() == 1 ? "y" : "ies") << " removed\n";
    return kOk;
  });
}

int cmd_check(const fs::path& config_path, Streams io) {
  return guarded(io, [&] {
    const auto config = pipeline::load_config(config_path);
    const auto violations = prompt::author_check(config.tasks);
    for (const auto& v : violations) io.out << display_name(v.task) << ": " << v.message << "\n";
    io.out << config.personas.size() << " personas, " << config.pool.size() << " environments, "
           << violations.size() << " task-data problem(s)\n";
    return violations.empty() ? kOk : kConfigError;
  });
}

}  // namespace pbench::cli
