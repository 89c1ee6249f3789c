#include "pbench/prompt/template.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace pbench::prompt {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

Template Template::parse(std::string name, std::string_view body, std::set<std::string> declared) {
  Template t;
  t.name_ = std::move(name);
  t.body_ = std::string(body);
  t.declared_ = std::move(declared);

  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) t.segments_.push_back({false, std::move(literal)});
    literal.clear();
  };

  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '}') {
      if (i + 1 < body.size() && body[i + 1] == '}') ++i;
      literal.push_back('}');
      continue;
    }
    if (c != '{') {
      literal.push_back(c);
      continue;
    }
    if (i + 1 < body.size() && body[i + 1] == '{') {
      literal.push_back('{');
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (j < body.size() && is_ident_start(body[j])) {
      while (j < body.size() && is_ident_char(body[j])) ++j;
    }
    if (j == i + 1 || j >= body.size() || body[j] != '}') {
      throw PromptError(PromptError::Code::MalformedTemplate, t.name_,
                        "template '" + t.name_ + "': stray '{' at offset " + std::to_string(i));
    }
    std::string token(body.substr(i + 1, j - i - 1));
    if (!t.declared_.contains(token)) {
      throw PromptError(PromptError::Code::UndeclaredPlaceholder, token,
                        "template '" + t.name_ + "' uses undeclared placeholder {" + token + "}");
    }
    flush();
    t.segments_.push_back({true, std::move(token)});
    i = j;
  }
  flush();
  return t;
}

std::set<std::string> Template::placeholders() const {
  std::set<std::string> out;
  for (const auto& s : segments_) {
    if (s.placeholder) out.insert(s.text);
  }
  return out;
}

std::string Template::render(const Bindings& bindings) const {
  for (const auto& name : declared_) {
    if (!bindings.contains(name)) {
      throw PromptError(PromptError::Code::MissingBinding, name,
                        "template '" + name_ + "': missing binding {" + name + "}");
    }
  }
  for (const auto& [name, value] : bindings) {
    if (!declared_.contains(name)) {
      throw PromptError(PromptError::Code::UnknownBinding, name,
                        "template '" + name_ + "': unknown binding {" + name + "}");
    }
  }
  std::string out;
  for (const auto& s : segments_) out += s.placeholder ? bindings.at(s.text) : s.text;
  return out;
}

std::string read_text_asset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PromptError(PromptError::Code::InvalidAsset, path.string(),
                      "cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string raw = buf.str();
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') continue;
    text.push_back(raw[i]);
  }
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

Template load_template(const std::filesystem::path& path, std::set<std::string> declared) {
  return Template::parse(path.stem().string(), read_text_asset(path), std::move(declared));
}

}  // namespace pbench::prompt
