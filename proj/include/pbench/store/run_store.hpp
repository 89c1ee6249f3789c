#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbench/core/types.hpp"
#include "pbench/stats/stats.hpp"

namespace pbench::store {

class StoreError : public std::runtime_error {
 public:
  enum class Code {
    ClosedRun,
    StorageFull,
    ConfigMismatch,
    CorruptLog,
    NoRun,
    RunExists,
    IncompleteItems,
    UnknownItem,
    ScoreOutOfRange,
    NoAnnotations,
    Io,
  };

  StoreError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::string_view to_string(StoreError::Code code);

/// Stage files, in pipeline order.
namespace stage {
inline constexpr const char* kEnvironments = "environments";
inline constexpr const char* kQuestions = "questions";
inline constexpr const char* kResponses = "responses";
inline constexpr const char* kExemplars = "exemplars";
inline constexpr const char* kRubrics = "rubrics";
inline constexpr const char* kJudgements = "judgements";
inline constexpr const char* kEnsembles = "ensembles";
inline constexpr const char* kErrors = "errors";
}  // namespace stage

const std::vector<std::string>& all_stages();

/// Event status values.
namespace status {
inline constexpr const char* kOk = "ok";
inline constexpr const char* kMalformed = "malformed";  // parse failed, will retry
inline constexpr const char* kFailed = "failed";        // terminal for the item
inline constexpr const char* kTransient = "transient";  // gateway failure, retried on resume
}  // namespace status

struct StageEvent {
  std::string run_id;
  std::string stage;
  std::string key;
  std::string status = status::kOk;
  nlohmann::json payload = nlohmann::json::object();
  std::string timestamp;

  nlohmann::json to_json() const;
  static StageEvent from_json(const nlohmann::json& j);
  bool operator==(const StageEvent&) const = default;
};

struct Manifest {
  std::string run_id;
  std::string config_digest;
  std::string created_at;
  std::string status = "open";  // open | complete | partial
  nlohmann::json metadata = nlohmann::json::object();
};

using TimestampFn = std::function<std::string()>;

/// Current UTC time, second precision.
std::string utc_now();

/// Append-only run directory:
///   <dir>/manifest.json
///   <dir>/events/<stage>.jsonl
///   <dir>/annotations/
/// Appends are fsynced before returning; lines within one stage file are
/// totally ordered. A torn final line (crash mid-write) is dropped when the
/// run is reopened for writing.
class RunLog {
 public:
  ~RunLog();
  RunLog(RunLog&&) = delete;

  /// Creates a fresh run. Throws RunExists when the directory already holds
  /// a manifest.
  static std::unique_ptr<RunLog> create(const std::filesystem::path& dir, std::string run_id,
                                        std::string config_digest, TimestampFn clock = utc_now);
  /// Reopens an existing run for appending. Throws NoRun when absent and
  /// ConfigMismatch when the stored digest differs.
  static std::unique_ptr<RunLog> resume(const std::filesystem::path& dir,
                                        const std::string& config_digest,
                                        TimestampFn clock = utc_now);
  /// Read-only view; appends throw ClosedRun.
  static std::unique_ptr<RunLog> open(const std::filesystem::path& dir);

  /// Fills in run_id and timestamp, writes one line and fsyncs.
  void append(StageEvent event);

  /// Records the final status and closes the log for writing.
  void finalize(const std::string& final_status);
  bool closed() const { return closed_; }

  /// All events of one stage, in file order. A torn final line is ignored;
  /// any other unparsable line throws CorruptLog.
  std::vector<StageEvent> events(const std::string& stage_name) const;

  const Manifest& manifest() const { return manifest_; }
  void set_metadata(const std::string& key, nlohmann::json value);
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path events_path(const std::string& stage_name) const;
  std::filesystem::path annotations_dir() const { return dir_ / "annotations"; }

  /// Test hook: invoked after each durable append with the running count.
  /// Throwing from it simulates a crash between two appends.
  void set_after_append(std::function<void(std::size_t)> hook) { after_append_ = std::move(hook); }

 private:
  RunLog(std::filesystem::path dir, Manifest manifest, TimestampFn clock, bool writable);
  void write_manifest() const;
  std::FILE* stream_for(const std::string& stage_name);

  std::filesystem::path dir_;
  Manifest manifest_;
  TimestampFn clock_;
  bool closed_;
  std::size_t appended_ = 0;
  mutable std::mutex mu_;
  std::map<std::string, std::FILE*> streams_;
  std::function<void(std::size_t)> after_append_;
};

/// Item keys with a terminal event: an ensemble recorded or a hard failure.
/// Throws ConfigMismatch when `config_digest` differs from the manifest.
std::set<std::string> resume_point(const RunLog& log, const std::string& config_digest);

/// Latest "ok" payload per key for one stage.
std::map<std::string, nlohmann::json> ok_payloads(const RunLog& log, const std::string& stage_name);

// ---------------------------------------------------------------- annotations

struct PacketItem {
  std::string item_id;
  std::string persona;  // description
  TaskKind task = TaskKind::ExpectedAction;
  std::string question;
  std::string response;
  std::string rubric;  // fully assembled, including score examples

  bool operator==(const PacketItem&) const = default;
};

struct AnnotationPacket {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<PacketItem> items;
  /// Items that were sampled but lacked a response or rubric.
  std::vector<std::string> incomplete;

  nlohmann::json to_json() const;
  static AnnotationPacket from_json(const nlohmann::json& j);
};

/// Stable, opaque id for an item key within a run: 12 hex digits of
/// SHA-256("<run_id>|<key>").
std::string item_id(const std::string& run_id, const std::string& key);

/// Fisher-Yates over mt19937_64, so the order is identical on every platform.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    // Unbiased draw from [0, i) by rejection.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(items[i - 1], items[r % bound]);
  }
}

/// Collects the sampled personas' items (all tasks when `tasks` is empty),
/// strips machine scores, and shuffles by seed.
AnnotationPacket export_annotation_packet(const RunLog& log,
                                          const std::vector<std::string>& persona_ids,
                                          const std::vector<TaskKind>& tasks, std::uint64_t seed);

/// Writes annotations/packet-<seed>.json and its CSV mirror; returns the
/// JSON path.
std::filesystem::path write_packet(const RunLog& log, const AnnotationPacket& packet);

/// RFC 4180: fields containing a comma, quote, CR or LF are quoted with
/// inner quotes doubled; lines end with CRLF.
std::string packet_csv(const AnnotationPacket& packet);
std::string csv_field(const std::string& field);

struct HumanScoreSet {
  std::string annotator_id;
  std::map<std::string, int> scores;             // item_id -> 1..5
  std::map<std::string, std::string> timestamps;  // item_id -> when scored

  nlohmann::json to_json() const;
  static HumanScoreSet from_json(const nlohmann::json& j);
  bool operator==(const HumanScoreSet&) const = default;
};

/// 1-64 characters from [A-Za-z0-9._-], not starting with a dot; the id
/// becomes part of a file name.
bool valid_annotator_id(std::string_view id);

/// Reads every annotations/scores-*.json in `dir`, sorted by file name.
std::vector<HumanScoreSet> load_score_sets(const std::filesystem::path& dir);
void save_score_set(const std::filesystem::path& dir, const HumanScoreSet& set);

struct ImportedScores {
  /// Per task: machine ensemble vs mean human score, keyed by item key.
  std::map<TaskKind, stats::PairedScores> per_task;
  /// Item key -> persona id, for per-persona analyses.
  std::map<std::string, std::string> persona_of;
  /// Items scored by every annotator, as a 5-category table. Empty when
  /// fewer than two annotators.
  stats::AnnotationTable agreement;
};

/// Joins human scores with the run's ensembles. Throws NoAnnotations for an
/// empty list, UnknownItem for an item id not in the run, ScoreOutOfRange
/// for a score outside 1..5.
ImportedScores import_human_scores(const RunLog& log, const std::vector<HumanScoreSet>& sets);

}  // namespace pbench::store
