#include "pbench/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pbench/core/aggregate.hpp"
#include "pbench/core/serialization.hpp"

namespace pbench::pipeline {

using nlohmann::json;
namespace stage = store::stage;
namespace status = store::status;

namespace {

long long rounded_units(double value, int decimals) {
  const double scaled = std::fabs(value) * std::pow(10.0, decimals);
  const auto units = static_cast<long long>(std::floor(scaled + 0.5 + 1e-9));
  return value < 0 ? -units : units;
}

std::string cell(const std::optional<TaskSummary>& s) {
  if (!s) return "-";
  return format_fixed(s->mean) + " (" + format_fixed(s->std) + ")";
}

std::vector<std::optional<TaskSummary>> columns(const ModelReport& m) {
  std::vector<std::optional<TaskSummary>> out;
  for (TaskKind t : kAllTasks) {
    auto it = m.tasks.find(t);
    out.push_back(it == m.tasks.end() ? std::nullopt : std::optional<TaskSummary>(it->second));
  }
  out.push_back(m.persona_score);
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  const long long units = rounded_units(value, decimals);
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const long long whole = std::llabs(units) / scale;
  const long long frac = std::llabs(units) % scale;
  std::string out = units < 0 ? "-" : "";
  out += std::to_string(whole);
  if (decimals > 0) {
    std::string f = std::to_string(frac);
    out += "." + std::string(static_cast<std::size_t>(decimals) - f.size(), '0') + f;
  }
  return out;
}

ScoreMatrix score_matrix(const store::RunLog& log) {
  std::map<ItemKey, EnsembleScore> by_key;
  for (const auto& [key, payload] : store::ok_payloads(log, stage::kEnsembles)) {
    auto score = payload.get<EnsembleScore>();
    const auto parts = ItemKey::parse(score.question_id);
    by_key[parts] = std::move(score);
  }
  ScoreMatrix m;
  for (auto& [key, score] : by_key) m.entries[key.persona_id][key.task].push_back(std::move(score));
  return m;
}

ModelReport build_report(const store::RunLog& log) {
  const json& meta = log.manifest().metadata.value("benchmark", json::object());
  ModelReport report;
  report.run_id = log.manifest().run_id;
  report.model = meta.contains("agent") ? meta["agent"].value("name", report.run_id) : report.run_id;
  report.matrix = score_matrix(log);
  if (report.matrix.total() == 0) {
    throw ReportError(ReportError::Code::EmptyRun,
                      "run '" + report.run_id + "' has no scored items (" + log.dir().string() + ")");
  }
  const int per_task = meta.value("questions_per_task", 10);

  std::vector<std::string> persona_ids;
  if (meta.contains("personas")) persona_ids = meta["personas"].get<std::vector<std::string>>();
  for (const auto& [id, _] : report.matrix.entries) {
    if (std::find(persona_ids.begin(), persona_ids.end(), id) == persona_ids.end()) persona_ids.push_back(id);
  }

  std::map<std::string, int> refusals;
  for (const auto& [key, payload] : store::ok_payloads(log, stage::kResponses)) {
    if (payload.value("refusal", false)) ++refusals[ItemKey::parse(key).persona_id];
  }

  for (const auto& id : persona_ids) {
    PersonaScoreReport p;
    p.persona_id = id;
    p.expected_items = per_task * static_cast<int>(kAllTasks.size());
    p.refusal_count = refusals[id];
    std::map<TaskKind, double> means;
    if (auto it = report.matrix.entries.find(id); it != report.matrix.entries.end()) {
      for (const auto& [task, scores] : it->second) {
        if (scores.empty()) continue;
        p.tasks[task] = summarize_task(scores);
        means[task] = p.tasks[task].mean;
        p.completed_items += static_cast<int>(scores.size());
      }
    }
    if (means.size() == kAllTasks.size()) p.persona_score = persona_score(means);
    report.refusals += p.refusal_count;
    report.completed_items += p.completed_items;
    report.expected_items += p.expected_items;
    report.personas.push_back(std::move(p));
  }

  for (TaskKind t : kAllTasks) {
    std::vector<double> values;
    for (const auto& p : report.personas) {
      if (auto it = p.tasks.find(t); it != p.tasks.end()) values.push_back(it->second.mean);
    }
    if (!values.empty()) report.tasks[t] = summarize_values(values);
  }
  std::vector<double> scores;
  for (const auto& p : report.personas) {
    if (p.persona_score) scores.push_back(*p.persona_score);
  }
  if (!scores.empty()) report.persona_score = summarize_values(scores);

  // Keep only the latest state per key: a transient error later resolved by
  // a resume is not a failure.
  std::map<std::string, store::StageEvent> latest;
  for (auto& e : log.events(stage::kErrors)) latest[e.key] = std::move(e);
  const auto ensembles = store::ok_payloads(log, stage::kEnsembles);
  const auto envs = store::ok_payloads(log, stage::kEnvironments);
  const auto questions = store::ok_payloads(log, stage::kQuestions);
  for (const auto& [key, e] : latest) {
    if (ensembles.contains(key) || envs.contains(key) || questions.contains(key)) continue;
    std::string line = key + " [" + e.payload.value("stage", "?") + "] " + e.payload.value("code", "?");
    if (e.status == status::kTransient) line += " (pending, retried on resume)";
    line += ": " + e.payload.value("message", "");
    report.failures.push_back(std::move(line));
  }
  return report;
}

std::vector<std::vector<bool>> best_marks(std::span<const ModelReport> models) {
  const std::size_t ncols = kAllTasks.size() + 1;
  std::vector<std::vector<bool>> marks(models.size(), std::vector<bool>(ncols, false));
  for (std::size_t c = 0; c < ncols; ++c) {
    std::optional<long long> best;
    std::vector<std::optional<long long>> shown;
    for (const auto& m : models) {
      const auto col = columns(m)[c];
      shown.push_back(col ? std::optional<long long>(rounded_units(col->mean, 2)) : std::nullopt);
      if (shown.back() && (!best || *shown.back() > *best)) best = shown.back();
    }
    for (std::size_t r = 0; r < models.size(); ++r) marks[r][c] = shown[r] && shown[r] == best;
  }
  return marks;
}

std::string render_text(std::span<const ModelReport> models) {
  std::vector<std::string> header = {"Model"};
  for (TaskKind t : kAllTasks) header.emplace_back(display_name(t));
  header.emplace_back("PersonaScore");

  std::vector<std::vector<std::string>> rows;
  const auto marks = best_marks(models);
  for (std::size_t r = 0; r < models.size(); ++r) {
    std::vector<std::string> row = {models[r].model};
    const auto cols = columns(models[r]);
    for (std::size_t c = 0; c < cols.size(); ++c) row.push_back(cell(cols[c]) + (marks[r][c] ? "*" : ""));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      s += c + 1 < cells.size() ? pad(cells[c], width[c] + 2) : cells[c];
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << "\n";
  };
  out << "Scores: mean (std); * marks the best value per column\n";
  line(header);
  for (const auto& row : rows) line(row);

  std::size_t name_width = 5;
  for (const auto& m : models) name_width = std::max(name_width, m.model.size());
  out << "\nRefusals\n";
  for (const auto& m : models) out << pad(m.model, name_width + 2) << m.refusals << "\n";

  out << "\nCompleteness\n";
  for (const auto& m : models) {
    const double pct = m.expected_items ? 100.0 * m.completed_items / m.expected_items : 0.0;
    out << pad(m.model, name_width + 2) << m.completed_items << "/" << m.expected_items << " items ("
        << format_fixed(pct, 1) << "%)\n";
    for (const auto& p : m.personas) {
      if (!p.complete()) {
        out << "  " << p.persona_id << " " << p.completed_items << "/" << p.expected_items << "\n";
      }
    }
  }

  bool any = false;
  for (const auto& m : models) any = any || !m.failures.empty();
  if (any) {
    out << "\nFailures\n";
    for (const auto& m : models) {
      for (const auto& f : m.failures) out << m.model << ": " << f << "\n";
    }
  }
  return out.str();
}

std::string render_csv(std::span<const ModelReport> models) {
  std::ostringstream out;
  out << "model,run_id";
  for (TaskKind t : kAllTasks) {
    const std::string n(to_string(t));
    out << "," << n << "_mean," << n << "_std";
  }
  out << ",PersonaScore_mean,PersonaScore_std,refusals,completed_items,expected_items\r\n";
  for (const auto& m : models) {
    out << csv_field(m.model) << "," << csv_field(m.run_id);
    for (const auto& col : columns(m)) {
      if (col) {
        out << "," << format_fixed(col->mean) << "," << format_fixed(col->std);
      } else {
        out << ",,";
      }
    }
    out << "," << m.refusals << "," << m.completed_items << "," << m.expected_items << "\r\n";
  }
  return out.str();
}

GridResult run_grid(const GridConfig& grid, const RunOptions& options) {
  GridResult result;
  for (const auto& g : grid.generators) result.generators.push_back(g.name);
  for (const auto& e : grid.evaluators) result.evaluators.push_back(e.name);
  std::optional<double> lo, hi;
  for (std::size_t gi = 0; gi < grid.generators.size(); ++gi) {
    for (std::size_t ei = 0; ei < grid.evaluators.size(); ++ei) {
      const BenchmarkConfig config = grid_cell(grid, gi, ei);
      const auto outcome = run_benchmark(config, options);
      GridCell c{result.generators[gi], result.evaluators[ei], config.run_id, std::nullopt, outcome.complete};
      auto log = store::RunLog::open(outcome.run_dir);
      if (score_matrix(*log).total() > 0) {
        const auto report = build_report(*log);
        if (report.persona_score) c.persona_score = report.persona_score->mean;
      }
      if (c.persona_score) {
        lo = lo ? std::min(*lo, *c.persona_score) : *c.persona_score;
        hi = hi ? std::max(*hi, *c.persona_score) : *c.persona_score;
      }
      result.cells.push_back(std::move(c));
    }
  }
  if (lo) result.spread = *hi - *lo;
  return result;
}

std::string render_grid(const GridResult& result) {
  std::size_t w = 9;  // "generator"
  for (const auto& g : result.generators) w = std::max(w, g.size());
  std::vector<std::size_t> cw;
  for (const auto& e : result.evaluators) cw.push_back(std::max<std::size_t>(e.size(), 4));
  std::ostringstream out;
  out << "PersonaScore by question generator (rows) and evaluator (columns)\n";
  std::string head = pad("generator", w + 2);
  for (std::size_t i = 0; i < result.evaluators.size(); ++i) head += pad(result.evaluators[i], cw[i] + 2);
  while (!head.empty() && head.back() == ' ') head.pop_back();
  out << head << "\n";
  std::size_t k = 0;
  for (const auto& g : result.generators) {
    std::string row = pad(g, w + 2);
    for (std::size_t i = 0; i < result.evaluators.size(); ++i, ++k) {
      const auto& c = result.cells[k];
      std::string v = c.persona_score ? format_fixed(*c.persona_score) : "-";
      if (c.persona_score && !c.complete) v += "~";
      row += pad(v, cw[i] + 2);
    }
    while (!row.empty() && row.back() == ' ') row.pop_back();
    out << row << "\n";
  }
  out << "spread (max - min): " << (result.spread ? format_fixed(*result.spread) : std::string("-")) << "\n";
  bool partial = false;
  for (const auto& c : result.cells) partial = partial || !c.complete;
  if (partial) out << "~ cell run incomplete\n";
  return out.str();
}

}  // namespace pbench::pipeline
