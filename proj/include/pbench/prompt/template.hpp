#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pbench::prompt {

class PromptError : public std::runtime_error {
 public:
  enum class Code {
    MissingBinding,
    UnknownBinding,
    UndeclaredPlaceholder,
    MalformedTemplate,
    IncompleteExamples,
    InvalidAsset,
  };

  PromptError(Code code, std::string subject, const std::string& message)
      : std::runtime_error(message), code_(code), subject_(std::move(subject)) {}

  Code code() const { return code_; }
  /// Placeholder, template or file the error is about.
  const std::string& subject() const { return subject_; }

 private:
  Code code_;
  std::string subject_;
};

using Bindings = std::map<std::string, std::string>;

/// A prompt body with single-brace `{name}` placeholders. `{{` and `}}`
/// stand for literal braces. Substitution is literal: bound values are never
/// scanned for placeholders.
class Template {
 public:
  /// Throws MalformedTemplate on a stray `{`, UndeclaredPlaceholder when the
  /// body uses a name outside `declared`.
  static Template parse(std::string name, std::string_view body, std::set<std::string> declared);

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& declared() const { return declared_; }
  /// Names that actually occur in the body.
  std::set<std::string> placeholders() const;

  /// Bindings must cover the declared set exactly: MissingBinding for an
  /// absent name, UnknownBinding for an extra one.
  std::string render(const Bindings& bindings) const;

 private:
  struct Segment {
    bool placeholder = false;
    std::string text;  // literal text or placeholder name
  };

  std::string name_;
  std::string body_;
  std::set<std::string> declared_;
  std::vector<Segment> segments_;
};

/// Reads a UTF-8 text asset: CRLF becomes LF and one trailing newline is
/// dropped, so files may end with a newline without it reaching prompts.
std::string read_text_asset(const std::filesystem::path& path);

Template load_template(const std::filesystem::path& path, std::set<std::string> declared);

}  // namespace pbench::prompt
