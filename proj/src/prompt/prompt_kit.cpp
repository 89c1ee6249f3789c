#include "pbench/prompt/prompt_kit.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "pbench/parsing/parsers.hpp"

namespace pbench::prompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kFinalScoreInstruction = "Therefore, the final score is";

[[noreturn]] void invalid_asset(const fs::path& path, const std::string& why) {
  throw PromptError(PromptError::Code::InvalidAsset, path.string(), path.string() + ": " + why);
}

}  // namespace

PromptKit PromptKit::load(const fs::path& dir) {
  PromptKit kit;
  kit.env_ = load_template(dir / "environment_selection.txt", {"persona", "environments_list"});
  kit.questions_ = load_template(dir / "question_generation.txt",
                                 {"persona", "environments", "task", "question_quality_criteria"});
  kit.persona_ = load_template(dir / "persona_system_prompt.txt", {"persona"});
  kit.examples_ = load_template(dir / "score_examples.txt", {"persona", "question", "rubric"});
  return kit;
}

std::string PromptKit::environment_selection(const std::string& persona,
                                             const EnvironmentPool& pool) const {
  return env_.render({{"persona", persona},
                      {"environments_list", parsing::format_string_list(pool.entries())}});
}

std::string PromptKit::question_generation(const std::string& persona,
                                           const std::vector<std::string>& environments,
                                           const TaskSpec& task) const {
  return questions_.render({{"persona", persona},
                            {"environments", parsing::format_string_list(environments)},
                            {"task", std::string(display_name(task.kind))},
                            {"question_quality_criteria", task.question_quality_criteria}});
}

std::string PromptKit::persona_system_prompt(const std::string& persona) const {
  return persona_.render({{"persona", persona}});
}

std::string PromptKit::score_examples(const std::string& persona, const std::string& question,
                                      const RubricOutline& outline) const {
  return examples_.render({{"persona", persona}, {"question", question}, {"rubric", outline.text}});
}

const std::set<std::string>& rubric_placeholders() {
  static const std::set<std::string> names = {"score_example", "persona", "question", "response"};
  return names;
}

std::string format_score_examples(const ScoreExampleSet& examples) {
  std::string out;
  for (int k = 1; k <= 5; ++k) {
    if (k > 1) out += '\n';
    out += "Score " + std::to_string(k) + ": " + examples.examples.at(k);
  }
  return out;
}

CompletedRubric assemble_rubric(const RubricOutline& outline, const ScoreExampleSet& examples,
                                const std::string& persona, const std::string& question,
                                const std::string& response) {
  if (auto problem = examples.problem()) {
    throw PromptError(PromptError::Code::IncompleteExamples, examples.question_id,
                      "score examples for " + examples.question_id + ": " + *problem);
  }
  auto t = Template::parse(std::string(slug(outline.kind)), outline.text, rubric_placeholders());
  return {examples.question_id, t.render({{"score_example", format_score_examples(examples)},
                                          {"persona", persona},
                                          {"question", question},
                                          {"response", response}})};
}

std::vector<AuthorViolation> author_check(std::span<const TaskSpec> tasks) {
  std::vector<AuthorViolation> out;
  std::map<TaskKind, int> seen;
  for (const auto& spec : tasks) {
    auto report = [&](std::string msg) { out.push_back({spec.kind, std::move(msg)}); };
    ++seen[spec.kind];
    if (spec.name.empty()) report("empty task name");
    if (spec.task_description.empty()) report("empty task description");
    if (spec.question_quality_criteria.empty()) report("empty question quality criteria");
    if (spec.rubric_outline.kind != spec.kind) report("rubric outline belongs to another task");

    const std::string& text = spec.rubric_outline.text;
    std::map<int, int> guideline_count;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      for (int k = 1; k <= 5; ++k) {
        if (line.rfind("Score = " + std::to_string(k) + ":", 0) == 0) ++guideline_count[k];
      }
    }
    for (int k = 1; k <= 5; ++k) {
      const std::string label = "\"Score = " + std::to_string(k) + "\"";
      if (guideline_count[k] == 0) report("missing guideline line " + label);
      if (guideline_count[k] > 1) report("duplicated guideline line " + label);
    }
    if (text.find(kFinalScoreInstruction) == std::string::npos) {
      report("missing the final-score instruction \"" + std::string(kFinalScoreInstruction) +
             "\"");
    }
    if (!spec.task_description.empty() && text.find(spec.task_description) == std::string::npos) {
      report("rubric outline does not contain the task description");
    }
    try {
      auto t = Template::parse(std::string(slug(spec.kind)), text, rubric_placeholders());
      for (const auto& name : rubric_placeholders()) {
        if (!t.placeholders().contains(name)) report("rubric outline lacks {" + name + "}");
      }
    } catch (const PromptError& e) {
      report(e.what());
    }
  }
  for (TaskKind k : kAllTasks) {
    if (seen[k] == 0) out.push_back({k, "no task spec"});
    if (seen[k] > 1) out.push_back({k, "more than one task spec"});
  }
  return out;
}

std::vector<TaskSpec> load_task_specs(const fs::path& tasks_dir, const fs::path& rubrics_dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(tasks_dir, ec)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (ec) invalid_asset(tasks_dir, ec.message());
  std::sort(files.begin(), files.end());

  std::vector<TaskSpec> specs;
  for (const auto& file : files) {
    json j;
    try {
      j = json::parse(read_text_asset(file));
    } catch (const json::exception& e) {
      invalid_asset(file, e.what());
    }
    TaskSpec spec;
    try {
      auto kind = parse_task_kind(j.at("kind").get<std::string>());
      if (!kind) invalid_asset(file, "unknown task kind");
      spec.kind = *kind;
      spec.name = j.at("name").get<std::string>();
      spec.task_description = j.at("task_description").get<std::string>();
      spec.question_quality_criteria = j.at("question_quality_criteria").get<std::string>();
      spec.provenance = j.value("provenance", std::map<std::string, std::string>{});
      spec.rubric_outline = {spec.kind,
                             read_text_asset(rubrics_dir / j.at("rubric").get<std::string>())};
    } catch (const json::exception& e) {
      invalid_asset(file, e.what());
    }
    specs.push_back(std::move(spec));
  }
  std::sort(specs.begin(), specs.end(),
            [](const TaskSpec& a, const TaskSpec& b) { return a.kind < b.kind; });
  return specs;
}

EnvironmentPool load_environment_pool(const fs::path& path) {
  std::istringstream in(read_text_asset(path));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;
    auto end = line.find_last_not_of(" \t\r");
    names.push_back(line.substr(begin, end - begin + 1));
  }
  try {
    return EnvironmentPool(std::move(names));
  } catch (const DomainError& e) {
    invalid_asset(path, e.what());
  }
}

std::vector<Persona> load_personas(const fs::path& path) {
  std::istringstream in(read_text_asset(path));
  std::vector<Persona> out;
  std::set<std::string> ids;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Persona p;
    try {
      auto j = json::parse(line);
      p.id = j.at("id").get<std::string>();
      p.description = j.at("description").get<std::string>();
    } catch (const json::exception& e) {
      invalid_asset(path, "line " + std::to_string(number) + ": " + e.what());
    }
    if (p.id.empty() || p.description.empty()) {
      invalid_asset(path, "line " + std::to_string(number) + ": empty id or description");
    }
    if (!ids.insert(p.id).second) invalid_asset(path, "duplicate persona id " + p.id);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pbench::prompt
