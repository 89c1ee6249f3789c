#include "pbench/parsing/parsers.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

namespace pbench::parsing {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

[[noreturn]] void fail(std::string_view stage, std::string_view text, Reason reason,
                       int detail = 0) {
  throw ParseError(ParseFailure{std::string(stage), excerpt(text), reason, detail});
}

// ---- string lists -------------------------------------------------------

enum class ListOutcome { Ok, Unbalanced, Malformed };

struct ListAttempt {
  ListOutcome outcome = ListOutcome::Malformed;
  std::vector<std::string> items;
};

void skip_space(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
}

// Reads one quoted literal starting at text[pos] (a quote character).
// Returns nullopt when the closing quote is missing.
std::optional<std::string> read_quoted(std::string_view text, std::size_t& pos) {
  const char quote = text[pos++];
  std::string out;
  while (pos < text.size()) {
    char c = text[pos++];
    if (c == quote) return out;
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (pos >= text.size()) return std::nullopt;
    char e = text[pos++];
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '\\':
      case '\'':
      case '"': out.push_back(e); break;
      default:
        // Unknown escapes keep their backslash, as Python does.
        out.push_back('\\');
        out.push_back(e);
    }
  }
  return std::nullopt;
}

ListAttempt try_list_at(std::string_view text, std::size_t pos) {
  ListAttempt attempt;
  ++pos;  // '['
  skip_space(text, pos);
  if (pos < text.size() && text[pos] == ']') {
    attempt.outcome = ListOutcome::Ok;
    return attempt;
  }
  while (pos < text.size()) {
    if (text[pos] != '\'' && text[pos] != '"') return attempt;
    auto item = read_quoted(text, pos);
    if (!item) {
      attempt.outcome = ListOutcome::Unbalanced;
      return attempt;
    }
    attempt.items.push_back(std::move(*item));
    skip_space(text, pos);
    if (pos >= text.size()) return attempt;
    if (text[pos] == ']') {
      attempt.outcome = ListOutcome::Ok;
      return attempt;
    }
    if (text[pos] != ',') return attempt;
    ++pos;
    skip_space(text, pos);
    if (pos < text.size() && text[pos] == ']') {
      attempt.outcome = ListOutcome::Ok;
      return attempt;
    }
  }
  return attempt;
}

// ---- score examples ------------------------------------------------------

struct Header {
  int score = 0;
  std::size_t body_begin = 0;  // offset just past the ':'
  std::size_t line_begin = 0;
};

// Recognises "Score k:" at the start of a line, allowing markdown decoration
// such as "**Score 3:**" or "- Score 3:".
std::optional<Header> match_header(std::string_view text, std::size_t line_begin,
                                   std::size_t line_end) {
  std::size_t p = line_begin;
  while (p < line_end && (is_space(text[p]) || text[p] == '*' || text[p] == '#' ||
                          text[p] == '-' || text[p] == '>' || text[p] == '_')) {
    ++p;
  }
  constexpr std::string_view kWord = "score";
  if (line_end - p < kWord.size() || lower_ascii(text.substr(p, kWord.size())) != kWord) {
    return std::nullopt;
  }
  p += kWord.size();
  while (p < line_end && (text[p] == ' ' || text[p] == '\t')) ++p;
  std::size_t digits = p;
  while (p < line_end && std::isdigit(static_cast<unsigned char>(text[p]))) ++p;
  if (p == digits || p - digits > 2) return std::nullopt;
  int score = std::stoi(std::string(text.substr(digits, p - digits)));
  while (p < line_end && (text[p] == '*' || text[p] == '_' || text[p] == ' ')) ++p;
  if (p >= line_end || text[p] != ':') return std::nullopt;
  ++p;
  while (p < line_end && (text[p] == '*' || text[p] == '_')) ++p;
  if (score < 1 || score > 5) return std::nullopt;
  return Header{score, p, line_begin};
}

bool is_rule_line(std::string_view line) {
  line = trim(line);
  if (line.empty()) return false;
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == '-' || c == '=' || c == '*' || c == '_'; });
}

std::string clean_example(std::string_view body) {
  body = trim(body);
  // Drop trailing separator lines such as the "-----" that closes the format.
  while (true) {
    auto nl = body.rfind('\n');
    std::string_view last = nl == std::string_view::npos ? body : body.substr(nl + 1);
    if (!is_rule_line(last)) break;
    body = nl == std::string_view::npos ? std::string_view{} : trim(body.substr(0, nl));
  }
  const std::string lowered = lower_ascii(body.substr(0, std::min<std::size_t>(body.size(), 16)));
  if (lowered.rfind("response", 0) == 0) {
    std::size_t p = 8;
    while (p < body.size() && (body[p] == ' ' || body[p] == '\t')) ++p;
    if (p < body.size() && (body[p] == '-' || body[p] == ':')) {
      ++p;
      body = trim(body.substr(p));
    }
  }
  return std::string(body);
}

// ---- refusal -------------------------------------------------------------

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Truncates to `window` code points, lower-cases ASCII and folds typographic
// apostrophes to '\''.
std::string normalize_window(std::string_view text, std::size_t window) {
  std::size_t cut = 0;
  std::size_t points = 0;
  while (cut < text.size() && points < window) {
    unsigned char c = static_cast<unsigned char>(text[cut]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    cut += len;
    ++points;
  }
  std::string clipped(text.substr(0, std::min(cut, text.size())));
  std::string out;
  out.reserve(clipped.size());
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    if (i + 2 < clipped.size() && static_cast<unsigned char>(clipped[i]) == 0xE2 &&
        static_cast<unsigned char>(clipped[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(clipped[i + 2]) == 0x98 ||
         static_cast<unsigned char>(clipped[i + 2]) == 0x99)) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(clipped[i]))));
  }
  return out;
}

// Start offsets of word-bounded occurrences of `pattern` in `haystack`.
std::vector<std::size_t> find_bounded(const std::string& haystack, const std::string& pattern) {
  std::vector<std::size_t> hits;
  if (pattern.empty()) return hits;
  for (std::size_t pos = haystack.find(pattern); pos != std::string::npos;
       pos = haystack.find(pattern, pos + 1)) {
    const std::size_t end = pos + pattern.size();
    bool left_ok = pos == 0 || !is_word_char(static_cast<unsigned char>(pattern.front())) ||
                   !is_word_char(static_cast<unsigned char>(haystack[pos - 1]));
    bool right_ok = end == haystack.size() ||
                    !is_word_char(static_cast<unsigned char>(pattern.back())) ||
                    !is_word_char(static_cast<unsigned char>(haystack[end]));
    if (left_ok && right_ok) hits.push_back(pos);
  }
  return hits;
}

}  // namespace

std::string_view to_string(Reason reason) {
  switch (reason) {
    case Reason::NoListFound: return "NoListFound";
    case Reason::UnbalancedQuotes: return "UnbalancedQuotes";
    case Reason::EmptyList: return "EmptyList";
    case Reason::MissingScore: return "MissingScore";
    case Reason::DuplicateScore: return "DuplicateScore";
    case Reason::InvalidExamples: return "InvalidExamples";
    case Reason::NoScoreSentence: return "NoScoreSentence";
    case Reason::OutOfRange: return "OutOfRange";
    case Reason::NonIntegerScore: return "NonIntegerScore";
    case Reason::WrongCount: return "WrongCount";
    case Reason::EmptyResponse: return "EmptyResponse";
  }
  return "Unknown";
}

ParseError::ParseError(ParseFailure failure)
    : std::runtime_error(failure.stage + ": " + std::string(to_string(failure.reason)) +
                         (failure.detail != 0 ? "(" + std::to_string(failure.detail) + ")"
                                              : std::string())),
      failure_(std::move(failure)) {}

std::string excerpt(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return std::string(text.substr(0, cut));
}

std::vector<std::string> parse_string_list(std::string_view text, std::string_view stage) {
  bool unbalanced = false;
  bool saw_empty = false;
  for (std::size_t pos = text.find('['); pos != std::string_view::npos;
       pos = text.find('[', pos + 1)) {
    auto attempt = try_list_at(text, pos);
    if (attempt.outcome == ListOutcome::Unbalanced) unbalanced = true;
    if (attempt.outcome != ListOutcome::Ok) continue;
    if (attempt.items.empty()) {
      saw_empty = true;
      continue;
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& item : attempt.items) {
      if (seen.insert(item).second) out.push_back(std::move(item));
    }
    return out;
  }
  if (unbalanced) fail(stage, text, Reason::UnbalancedQuotes);
  if (saw_empty) fail(stage, text, Reason::EmptyList);
  fail(stage, text, Reason::NoListFound);
}

std::string format_string_list(std::span<const std::string> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += '\'';
    for (char c : items[i]) {
      switch (c) {
        case '\\': out += "\\\\"; break;
        case '\'': out += "\\'"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
      }
    }
    out += '\'';
  }
  out += "]";
  return out;
}

ScoreExampleSet parse_score_examples(std::string_view text, std::string_view stage) {
  std::vector<Header> headers;
  std::size_t line_begin = 0;
  while (line_begin <= text.size()) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = text.size();
    if (auto h = match_header(text, line_begin, line_end)) headers.push_back(*h);
    if (line_end == text.size()) break;
    line_begin = line_end + 1;
  }

  ScoreExampleSet out;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    const auto& h = headers[i];
    if (out.examples.contains(h.score)) fail(stage, text, Reason::DuplicateScore, h.score);
    std::size_t end = i + 1 < headers.size() ? headers[i + 1].line_begin : text.size();
    out.examples[h.score] = clean_example(text.substr(h.body_begin, end - h.body_begin));
  }
  for (int k = 1; k <= 5; ++k) {
    if (!out.examples.contains(k)) fail(stage, text, Reason::MissingScore, k);
  }
  if (out.problem()) fail(stage, text, Reason::InvalidExamples);
  return out;
}

int extract_final_score(std::string_view text, std::string_view stage) {
  static const std::regex kPattern(
      R"(final\s+score\s+is\s*[:=\-]?\s*[*_"'(\[]*\s*([+-]?\d+)(\.\d+)?)",
      std::regex::ECMAScript | std::regex::icase);
  const std::string haystack(text);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(haystack.begin(), haystack.end(), kPattern);
       it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) fail(stage, text, Reason::NoScoreSentence);

  const std::string fraction = last[2].matched ? last[2].str() : std::string();
  if (fraction.find_first_not_of(".0") != std::string::npos) {
    fail(stage, text, Reason::NonIntegerScore);
  }
  const std::string digits = last[1].str();
  // Long digit runs are out of range regardless of their value.
  if (digits.size() > 6) fail(stage, text, Reason::OutOfRange);
  const int score = std::stoi(digits);
  if (score < 1 || score > 5) fail(stage, text, Reason::OutOfRange, score);
  return score;
}

RefusalDetector::RefusalDetector(std::vector<std::string> patterns,
                                 std::vector<std::string> continuations, std::size_t window)
    : window_(window) {
  for (auto& p : patterns) {
    auto n = normalize_window(trim(p), std::string::npos);
    if (!n.empty()) patterns_.push_back(std::move(n));
  }
  for (auto& c : continuations) {
    auto n = normalize_window(trim(c), std::string::npos);
    if (!n.empty()) continuations_.push_back(std::move(n));
  }
}

RefusalDetector RefusalDetector::from_text(std::string_view text) {
  std::vector<std::string> patterns;
  std::vector<std::string> continuations;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '!') {
      continuations.emplace_back(trim(t.substr(1)));
    } else {
      patterns.emplace_back(t);
    }
  }
  return RefusalDetector(std::move(patterns), std::move(continuations));
}

RefusalDetector RefusalDetector::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read refusal patterns: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

RefusalDetector RefusalDetector::defaults() {
  return RefusalDetector(
      {"as an ai", "as an artificial intelligence", "as a language model", "i'm an ai",
       "i am an ai", "ai assistant", "i don't have personal experience",
       "i don't have personal experiences", "i do not have personal experience",
       "i do not have personal experiences", "i cannot adopt", "i can't adopt"},
      {"but if i were"});
}

bool RefusalDetector::detect(std::string_view text) const {
  const std::string window = normalize_window(text, window_);
  std::optional<std::size_t> last_refusal;
  for (const auto& p : patterns_) {
    auto hits = find_bounded(window, p);
    if (!hits.empty() && (!last_refusal || hits.back() > *last_refusal)) {
      last_refusal = hits.back();
    }
  }
  if (!last_refusal) return false;
  for (const auto& c : continuations_) {
    auto hits = find_bounded(window, c);
    if (!hits.empty() && hits.back() > *last_refusal) return false;
  }
  return true;
}

}  // namespace pbench::parsing
