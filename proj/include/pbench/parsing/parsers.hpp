#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pbench/core/types.hpp"

namespace pbench::parsing {

enum class Reason {
  NoListFound,
  UnbalancedQuotes,
  EmptyList,
  MissingScore,
  DuplicateScore,
  InvalidExamples,
  NoScoreSentence,
  OutOfRange,
  NonIntegerScore,
  WrongCount,
  EmptyResponse,
};

std::string_view to_string(Reason reason);

/// Appended (after a blank line) to a prompt whose previous answer failed to
/// parse.
inline constexpr std::string_view kMalformedRetrySuffix =
    "Your previous output was malformed. Output only the requested format.";

struct ParseFailure {
  std::string stage;
  std::string excerpt;  // first 500 bytes of the offending text
  Reason reason = Reason::NoListFound;
  int detail = 0;  // score or count the reason refers to, when it has one
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(ParseFailure failure);

  const ParseFailure& failure() const { return failure_; }
  Reason reason() const { return failure_.reason; }

 private:
  ParseFailure failure_;
};

/// Extracts the first well-formed bracketed list of quoted strings, e.g. a
/// Python list literal, from free-form model output. Surrounding prose and
/// code fences are ignored. Duplicates are dropped, keeping the first one.
std::vector<std::string> parse_string_list(std::string_view text,
                                           std::string_view stage = "list");

/// Inverse of parse_string_list: `['a', 'b']` with quotes and backslashes
/// escaped.
std::string format_string_list(std::span<const std::string> items);

/// Parses the five "Score k:" blocks of an exemplar generation.
/// The question id of the result is left empty.
ScoreExampleSet parse_score_examples(std::string_view text,
                                     std::string_view stage = "exemplars");

/// Reads the judge's verdict from "... the final score is <k>". The last
/// occurrence wins.
int extract_final_score(std::string_view text, std::string_view stage = "judgement");

/// Pattern-list refusal heuristic. Patterns match case-insensitively on word
/// boundaries within the first `window` code points of a response.
class RefusalDetector {
 public:
  static constexpr std::size_t kDefaultWindow = 400;

  RefusalDetector(std::vector<std::string> patterns, std::vector<std::string> continuations,
                  std::size_t window = kDefaultWindow);

  /// Reads the pattern file format: one pattern per line, '#' comments,
  /// '!'-prefixed lines are continuation cues.
  static RefusalDetector from_file(const std::filesystem::path& path);
  static RefusalDetector from_text(std::string_view text);
  static RefusalDetector defaults();

  bool detect(std::string_view text) const;

  const std::vector<std::string>& patterns() const { return patterns_; }
  const std::vector<std::string>& continuations() const { return continuations_; }

 private:
  std::vector<std::string> patterns_;
  std::vector<std::string> continuations_;
  std::size_t window_;
};

/// Clips to the first `max_bytes` bytes without splitting a UTF-8 sequence.
std::string excerpt(std::string_view text, std::size_t max_bytes = 500);

}  // namespace pbench::parsing
