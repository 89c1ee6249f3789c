#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pbench/core/types.hpp"
#include "pbench/prompt/template.hpp"

namespace pbench::prompt {

/// The four stage prompts, loaded from a prompts directory:
/// environment_selection.txt, question_generation.txt,
/// persona_system_prompt.txt and score_examples.txt.
class PromptKit {
 public:
  static PromptKit load(const std::filesystem::path& prompts_dir);

  std::string environment_selection(const std::string& persona,
                                    const EnvironmentPool& pool) const;
  std::string question_generation(const std::string& persona,
                                  const std::vector<std::string>& environments,
                                  const TaskSpec& task) const;
  std::string persona_system_prompt(const std::string& persona) const;
  /// The rubric slot receives the raw outline text.
  std::string score_examples(const std::string& persona, const std::string& question,
                             const RubricOutline& outline) const;

  const Template& environment_selection_template() const { return env_; }
  const Template& question_generation_template() const { return questions_; }
  const Template& persona_system_prompt_template() const { return persona_; }
  const Template& score_examples_template() const { return examples_; }

 private:
  Template env_;
  Template questions_;
  Template persona_;
  Template examples_;
};

/// Placeholders every rubric outline declares.
const std::set<std::string>& rubric_placeholders();

/// "Score k: text" for k = 1..5, one per line.
std::string format_score_examples(const ScoreExampleSet& examples);

/// Fills a rubric outline. Throws IncompleteExamples unless all five scores
/// have non-empty, distinct examples.
CompletedRubric assemble_rubric(const RubricOutline& outline, const ScoreExampleSet& examples,
                                const std::string& persona, const std::string& question,
                                const std::string& response);

struct AuthorViolation {
  TaskKind task;
  std::string message;
};

/// Report-only validation of task data: five "Score = k" lines, the
/// final-score instruction, declared placeholders, non-empty texts, and one
/// spec per task.
std::vector<AuthorViolation> author_check(std::span<const TaskSpec> tasks);

/// Reads <tasks_dir>/*.json; each file names its rubric outline, resolved
/// against `rubrics_dir`. Returned in report column order.
std::vector<TaskSpec> load_task_specs(const std::filesystem::path& tasks_dir,
                                      const std::filesystem::path& rubrics_dir);

/// One name per line; blank lines and '#' comments skipped.
EnvironmentPool load_environment_pool(const std::filesystem::path& path);

/// JSON lines of {"id", "description"}.
std::vector<Persona> load_personas(const std::filesystem::path& path);

}  // namespace pbench::prompt
