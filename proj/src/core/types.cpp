#include "pbench/core/types.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace pbench {

namespace {

struct TaskNames {
  TaskKind kind;
  std::string_view id;
  std::string_view display;
  std::string_view column;
  std::string_view slug;
};

constexpr std::array<TaskNames, 5> kTaskNames = {{
    {TaskKind::ActionJustification, "ActionJustification", "Action Justification",
     "Action Just.", "action_justification"},
    {TaskKind::ExpectedAction, "ExpectedAction", "Expected Action", "Expected Action",
     "expected_action"},
    {TaskKind::LinguisticHabits, "LinguisticHabits", "Linguistic Habits", "Ling. Habits",
     "linguistic_habits"},
    {TaskKind::PersonaConsistency, "PersonaConsistency", "Persona Consistency",
     "Persona Cons.", "persona_consistency"},
    {TaskKind::ToxicityControl, "ToxicityControl", "Toxicity Control", "Toxicity Ctrl.",
     "toxicity_control"},
}};

const TaskNames& names_of(TaskKind kind) {
  return kTaskNames[static_cast<std::size_t>(kind)];
}

}  // namespace

std::string_view to_string(TaskKind kind) { return names_of(kind).id; }
std::string_view display_name(TaskKind kind) { return names_of(kind).display; }
std::string_view column_label(TaskKind kind) { return names_of(kind).column; }
std::string_view slug(TaskKind kind) { return names_of(kind).slug; }

std::optional<TaskKind> parse_task_kind(std::string_view text) {
  for (const auto& n : kTaskNames) {
    if (text == n.id || text == n.display || text == n.slug) return n.kind;
  }
  return std::nullopt;
}

std::string normalize_environment_name(std::string_view name) {
  auto begin = name.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = name.find_last_not_of(" \t\r\n");
  std::string out(name.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

EnvironmentPool::EnvironmentPool(std::vector<std::string> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto key = normalize_environment_name(entries_[i]);
    if (key.empty()) {
      throw DomainError(DomainError::Code::InvalidValue,
                        "environment pool entry " + std::to_string(i) + " is empty");
    }
    if (!index_.emplace(key, i).second) {
      throw DomainError(DomainError::Code::InvalidValue,
                        "duplicate environment in pool: " + entries_[i]);
    }
  }
}

std::optional<std::string> EnvironmentPool::find(std::string_view name) const {
  auto it = index_.find(normalize_environment_name(name));
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second];
}

std::string ItemKey::str() const {
  return persona_id + "/" + std::string(to_string(task)) + "/" + std::to_string(index);
}

ItemKey ItemKey::parse(std::string_view key) {
  const auto last = key.rfind('/');
  const auto first = last == std::string_view::npos || last == 0 ? std::string_view::npos
                                                                  : key.rfind('/', last - 1);
  if (first == std::string_view::npos || first == 0) {
    throw DomainError(DomainError::Code::InvalidValue, "malformed item key '" + std::string(key) + "'");
  }
  const auto task = parse_task_kind(key.substr(first + 1, last - first - 1));
  const std::string index(key.substr(last + 1));
  if (!task || index.empty() || index.find_first_not_of("0123456789") != std::string::npos) {
    throw DomainError(DomainError::Code::InvalidValue, "malformed item key '" + std::string(key) + "'");
  }
  return {std::string(key.substr(0, first)), *task, std::stoi(index)};
}

std::optional<std::string> ScoreExampleSet::problem() const {
  for (int k = 1; k <= 5; ++k) {
    auto it = examples.find(k);
    if (it == examples.end()) return "missing example for score " + std::to_string(k);
    if (it->second.empty()) return "empty example for score " + std::to_string(k);
  }
  if (examples.size() != 5) return "unexpected score key outside 1..5";
  std::set<std::string> seen;
  for (const auto& [score, text] : examples) {
    if (!seen.insert(text).second) {
      return "example for score " + std::to_string(score) + " duplicates another score";
    }
  }
  return std::nullopt;
}

std::size_t ScoreMatrix::total() const {
  std::size_t n = 0;
  for (const auto& [persona, tasks] : entries) {
    for (const auto& [task, scores] : tasks) n += scores.size();
  }
  return n;
}

}  // namespace pbench
