#include "pbench/store/run_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "pbench/core/digest.hpp"
#include "pbench/core/serialization.hpp"

namespace pbench::store {

namespace fs = std::filesystem;
using nlohmann::json;
using Code = StoreError::Code;

std::string_view to_string(StoreError::Code code) {
  switch (code) {
    case Code::ClosedRun: return "ClosedRun";
    case Code::StorageFull: return "StorageFull";
    case Code::ConfigMismatch: return "ConfigMismatch";
    case Code::CorruptLog: return "CorruptLog";
    case Code::NoRun: return "NoRun";
    case Code::RunExists: return "RunExists";
    case Code::IncompleteItems: return "IncompleteItems";
    case Code::UnknownItem: return "UnknownItem";
    case Code::ScoreOutOfRange: return "ScoreOutOfRange";
    case Code::NoAnnotations: return "NoAnnotations";
    case Code::Io: return "Io";
  }
  return "Unknown";
}

const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> stages = {
      stage::kEnvironments, stage::kQuestions, stage::kResponses, stage::kExemplars,
      stage::kRubrics,      stage::kJudgements, stage::kEnsembles, stage::kErrors};
  return stages;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError(Code::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temporary file, fsync, then rename over the target.
void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw StoreError(Code::Io, "cannot write " + tmp.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < content.size()) {
    const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
    if (n < 0) {
      const int err = errno;
      ::close(fd);
      throw StoreError(err == ENOSPC ? Code::StorageFull : Code::Io,
                       "cannot write " + tmp.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path);
}

json manifest_json(const Manifest& m) {
  return {{"run_id", m.run_id},
          {"config_digest", m.config_digest},
          {"created_at", m.created_at},
          {"status", m.status},
          {"metadata", m.metadata}};
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw StoreError(Code::NoRun, "no run at " + dir.string());
  try {
    const json j = json::parse(read_file(path));
    Manifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.metadata = j.value("metadata", json::object());
    return m;
  } catch (const json::exception& e) {
    throw StoreError(Code::CorruptLog, "unreadable manifest " + path.string() + ": " + e.what());
  }
}

// Drops a partial final line left by an interrupted append.
void truncate_torn_tail(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return;
  const std::string content = read_file(path);
  if (content.empty() || content.back() == '\n') return;
  const auto last_newline = content.rfind('\n');
  fs::resize_file(path, last_newline == std::string::npos ? 0 : last_newline + 1);
}

}  // namespace

json StageEvent::to_json() const {
  return {{"run_id", run_id}, {"stage", stage},     {"key", key},
          {"status", status}, {"payload", payload}, {"timestamp", timestamp}};
}

StageEvent StageEvent::from_json(const json& j) {
  StageEvent e;
  e.run_id = j.at("run_id").get<std::string>();
  e.stage = j.at("stage").get<std::string>();
  e.key = j.at("key").get<std::string>();
  e.status = j.at("status").get<std::string>();
  e.payload = j.at("payload");
  e.timestamp = j.at("timestamp").get<std::string>();
  return e;
}

RunLog::RunLog(fs::path dir, Manifest manifest, TimestampFn clock, bool writable)
    : dir_(std::move(dir)),
      manifest_(std::move(manifest)),
      clock_(std::move(clock)),
      closed_(!writable) {}

RunLog::~RunLog() {
  for (auto& [name, f] : streams_) std::fclose(f);
}

std::unique_ptr<RunLog> RunLog::create(const fs::path& dir, std::string run_id,
                                       std::string config_digest, TimestampFn clock) {
  if (fs::exists(dir / "manifest.json")) {
    throw StoreError(Code::RunExists, "run already exists at " + dir.string());
  }
  fs::create_directories(dir / "events");
  fs::create_directories(dir / "annotations");
  Manifest m;
  m.run_id = std::move(run_id);
  m.config_digest = std::move(config_digest);
  m.created_at = clock();
  std::unique_ptr<RunLog> log(new RunLog(dir, std::move(m), std::move(clock), true));
  log->write_manifest();
  return log;
}

std::unique_ptr<RunLog> RunLog::resume(const fs::path& dir, const std::string& config_digest,
                                       TimestampFn clock) {
  Manifest m = read_manifest(dir);
  if (m.config_digest != config_digest) {
    throw StoreError(Code::ConfigMismatch, "run " + m.run_id +
                                               " was started with a different configuration (" +
                                               m.config_digest.substr(0, 12) + " vs " +
                                               config_digest.substr(0, 12) + ")");
  }
  fs::create_directories(dir / "events");
  fs::create_directories(dir / "annotations");
  for (const auto& name : all_stages()) truncate_torn_tail(dir / "events" / (name + ".jsonl"));
  m.status = "open";
  std::unique_ptr<RunLog> log(new RunLog(dir, std::move(m), std::move(clock), true));
  log->write_manifest();
  return log;
}

std::unique_ptr<RunLog> RunLog::open(const fs::path& dir) {
  Manifest m = read_manifest(dir);
  return std::unique_ptr<RunLog>(new RunLog(dir, std::move(m), utc_now, false));
}

fs::path RunLog::events_path(const std::string& stage_name) const {
  return dir_ / "events" / (stage_name + ".jsonl");
}

void RunLog::write_manifest() const { write_atomic(dir_ / "manifest.json", manifest_json(manifest_).dump(2) + "\n"); }

std::FILE* RunLog::stream_for(const std::string& stage_name) {
  auto it = streams_.find(stage_name);
  if (it != streams_.end()) return it->second;
  std::FILE* f = std::fopen(events_path(stage_name).c_str(), "ab");
  if (f == nullptr) {
    throw StoreError(Code::Io, "cannot open " + events_path(stage_name).string() + ": " +
                                   std::strerror(errno));
  }
  streams_.emplace(stage_name, f);
  return f;
}

void RunLog::append(StageEvent event) {
  std::size_t count;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw StoreError(Code::ClosedRun, "run " + manifest_.run_id + " is closed");
    event.run_id = manifest_.run_id;
    event.timestamp = clock_();
    const std::string line = event.to_json().dump() + "\n";
    std::FILE* f = stream_for(event.stage);
    errno = 0;
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                    std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
    if (!ok) {
      const int err = errno;
      // Drop the buffered remainder so a later append starts a fresh line.
      std::fclose(f);
      streams_.erase(event.stage);
      throw StoreError(err == ENOSPC || err == EDQUOT ? Code::StorageFull : Code::Io,
                       "append to " + event.stage + " failed: " + std::strerror(err));
    }
    count = ++appended_;
  }
  if (after_append_) after_append_(count);
}

void RunLog::finalize(const std::string& final_status) {
  std::lock_guard lock(mu_);
  if (closed_) throw StoreError(Code::ClosedRun, "run " + manifest_.run_id + " is closed");
  for (auto& [name, f] : streams_) std::fclose(f);
  streams_.clear();
  manifest_.status = final_status;
  write_manifest();
  closed_ = true;
}

void RunLog::set_metadata(const std::string& key, json value) {
  std::lock_guard lock(mu_);
  if (closed_) throw StoreError(Code::ClosedRun, "run " + manifest_.run_id + " is closed");
  manifest_.metadata[key] = std::move(value);
  write_manifest();
}

std::vector<StageEvent> RunLog::events(const std::string& stage_name) const {
  std::vector<StageEvent> out;
  const fs::path path = events_path(stage_name);
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  const std::string content = read_file(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    const auto end = content.find('\n', start);
    if (end == std::string::npos) break;  // torn tail
    ++line_no;
    try {
      out.push_back(StageEvent::from_json(json::parse(content.substr(start, end - start))));
    } catch (const json::exception& e) {
      throw StoreError(Code::CorruptLog, path.string() + ":" + std::to_string(line_no) + ": " +
                                             e.what());
    }
    start = end + 1;
  }
  return out;
}

std::set<std::string> resume_point(const RunLog& log, const std::string& config_digest) {
  if (log.manifest().config_digest != config_digest) {
    throw StoreError(Code::ConfigMismatch, "run " + log.manifest().run_id +
                                               " was started with a different configuration");
  }
  std::set<std::string> done;
  for (const auto& e : log.events(stage::kEnsembles)) {
    if (e.status == status::kOk) done.insert(e.key);
  }
  for (const auto& e : log.events(stage::kErrors)) {
    if (e.status == status::kFailed && e.payload.value("scope", "") == "item") done.insert(e.key);
  }
  return done;
}

std::map<std::string, json> ok_payloads(const RunLog& log, const std::string& stage_name) {
  std::map<std::string, json> out;
  for (auto& e : log.events(stage_name)) {
    if (e.status == status::kOk) out[e.key] = std::move(e.payload);
  }
  return out;
}

// ---------------------------------------------------------------- annotations

std::string item_id(const std::string& run_id, const std::string& key) {
  return sha256_hex(run_id + "|" + key).substr(0, 12);
}

json AnnotationPacket::to_json() const {
  json items_json = json::array();
  for (const auto& it : items) {
    items_json.push_back({{"item_id", it.item_id},
                          {"persona", it.persona},
                          {"task", std::string(pbench::to_string(it.task))},
                          {"question", it.question},
                          {"response", it.response},
                          {"rubric", it.rubric}});
  }
  return {{"run_id", run_id}, {"seed", seed}, {"items", items_json}, {"incomplete", incomplete}};
}

AnnotationPacket AnnotationPacket::from_json(const json& j) {
  AnnotationPacket p;
  p.run_id = j.at("run_id").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& it : j.at("items")) {
    PacketItem item;
    item.item_id = it.at("item_id").get<std::string>();
    item.persona = it.at("persona").get<std::string>();
    auto kind = parse_task_kind(it.at("task").get<std::string>());
    if (!kind) throw StoreError(Code::CorruptLog, "packet item with unknown task");
    item.task = *kind;
    item.question = it.at("question").get<std::string>();
    item.response = it.at("response").get<std::string>();
    item.rubric = it.at("rubric").get<std::string>();
    p.items.push_back(std::move(item));
  }
  p.incomplete = j.value("incomplete", std::vector<std::string>{});
  return p;
}

namespace {

// Every question recorded in the run, in persona/task/index order.
std::vector<Question> run_questions(const RunLog& log) {
  std::vector<Question> out;
  for (const auto& [key, payload] : ok_payloads(log, stage::kQuestions)) {
    for (const auto& q : payload.at("questions")) out.push_back(q.get<Question>());
  }
  std::sort(out.begin(), out.end(), [](const Question& a, const Question& b) { return a.key() < b.key(); });
  return out;
}

}  // namespace

AnnotationPacket export_annotation_packet(const RunLog& log,
                                          const std::vector<std::string>& persona_ids,
                                          const std::vector<TaskKind>& tasks, std::uint64_t seed) {
  const auto envs = ok_payloads(log, stage::kEnvironments);
  const auto responses = ok_payloads(log, stage::kResponses);
  const auto rubrics = ok_payloads(log, stage::kRubrics);
  const std::set<std::string> wanted_personas(persona_ids.begin(), persona_ids.end());
  const std::set<TaskKind> wanted_tasks(tasks.begin(), tasks.end());

  AnnotationPacket packet;
  packet.run_id = log.manifest().run_id;
  packet.seed = seed;
  for (const auto& q : run_questions(log)) {
    if (!wanted_personas.empty() && !wanted_personas.contains(q.persona_id)) continue;
    if (!wanted_tasks.empty() && !wanted_tasks.contains(q.task)) continue;
    const std::string key = q.key().str();
    auto r = responses.find(key);
    auto rb = rubrics.find(key);
    auto env = envs.find(q.persona_id);
    if (r == responses.end() || rb == rubrics.end() || env == envs.end()) {
      packet.incomplete.push_back(key);
      continue;
    }
    PacketItem item;
    item.item_id = item_id(packet.run_id, key);
    item.persona = env->second.at("persona").get<std::string>();
    item.task = q.task;
    item.question = q.text;
    item.response = r->second.get<AgentResponse>().text;
    item.rubric = rb->second.get<CompletedRubric>().text;
    packet.items.push_back(std::move(item));
  }
  seeded_shuffle(packet.items, seed);
  return packet;
}

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string packet_csv(const AnnotationPacket& packet) {
  std::string out = "item_id,persona,task,question,response,rubric,score\r\n";
  for (const auto& it : packet.items) {
    out += csv_field(it.item_id) + ',' + csv_field(it.persona) + ',' +
           csv_field(std::string(pbench::to_string(it.task))) + ',' + csv_field(it.question) + ',' +
           csv_field(it.response) + ',' + csv_field(it.rubric) + ",\r\n";
  }
  return out;
}

fs::path write_packet(const RunLog& log, const AnnotationPacket& packet) {
  fs::create_directories(log.annotations_dir());
  const std::string stem = "packet-" + std::to_string(packet.seed);
  const fs::path json_path = log.annotations_dir() / (stem + ".json");
  write_atomic(json_path, packet.to_json().dump(2) + "\n");
  write_atomic(log.annotations_dir() / (stem + ".csv"), packet_csv(packet));
  return json_path;
}

json HumanScoreSet::to_json() const {
  return {{"annotator_id", annotator_id}, {"scores", scores}, {"timestamps", timestamps}};
}

HumanScoreSet HumanScoreSet::from_json(const json& j) {
  HumanScoreSet s;
  s.annotator_id = j.at("annotator_id").get<std::string>();
  for (const auto& [id, v] : j.at("scores").items()) {
    if (!v.is_number_integer()) {
      throw StoreError(Code::ScoreOutOfRange, "annotator " + s.annotator_id + ", item " + id +
                                                  ": score " + v.dump() + " is not an integer");
    }
    s.scores[id] = v.get<int>();
  }
  if (j.contains("timestamps")) {
    s.timestamps = j.at("timestamps").get<std::map<std::string, std::string>>();
  }
  return s;
}

bool valid_annotator_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  }) && id.front() != '.';
}

std::vector<HumanScoreSet> load_score_sets(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.rfind("scores-", 0) == 0 &&
          entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<HumanScoreSet> sets;
  for (const auto& f : files) {
    try {
      sets.push_back(HumanScoreSet::from_json(json::parse(read_file(f))));
    } catch (const json::exception& e) {
      throw StoreError(Code::CorruptLog, "unreadable score file " + f.string() + ": " + e.what());
    }
  }
  return sets;
}

void save_score_set(const fs::path& dir, const HumanScoreSet& set) {
  if (!valid_annotator_id(set.annotator_id)) {
    throw StoreError(Code::Io, "invalid annotator id '" + set.annotator_id + "'");
  }
  fs::create_directories(dir);
  write_atomic(dir / ("scores-" + set.annotator_id + ".json"), set.to_json().dump(2) + "\n");
}

ImportedScores import_human_scores(const RunLog& log, const std::vector<HumanScoreSet>& sets) {
  if (sets.empty()) throw StoreError(Code::NoAnnotations, "no human score sets to import");
  const std::string& run_id = log.manifest().run_id;

  std::map<std::string, Question> by_id;  // item id -> question
  for (auto& q : run_questions(log)) by_id.emplace(item_id(run_id, q.key().str()), std::move(q));
  const auto ensembles = ok_payloads(log, stage::kEnsembles);

  // item key -> one score per annotator (in set order)
  std::map<ItemKey, std::vector<int>> human;
  for (const auto& set : sets) {
    for (const auto& [id, score] : set.scores) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw StoreError(Code::UnknownItem,
                         "annotator " + set.annotator_id + " scored unknown item " + id);
      }
      if (score < 1 || score > 5) {
        throw StoreError(Code::ScoreOutOfRange, "annotator " + set.annotator_id + ", item " + id +
                                                    ": score " + std::to_string(score) +
                                                    " outside 1..5");
      }
      human[it->second.key()].push_back(score);
    }
  }

  ImportedScores out;
  for (const auto& [key, scores] : human) {
    const std::string k = key.str();
    out.persona_of[k] = key.persona_id;
    auto e = ensembles.find(k);
    if (e == ensembles.end()) continue;  // item excluded from machine aggregates
    const auto machine = e->second.get<EnsembleScore>();
    double sum = 0;
    for (int s : scores) sum += s;
    auto& paired = out.per_task[key.task];
    paired.keys.push_back(k);
    paired.machine.push_back(machine.value());
    paired.human.push_back(sum / static_cast<double>(scores.size()));
  }
  if (sets.size() >= 2) {
    for (const auto& [key, scores] : human) {
      if (scores.size() != sets.size()) continue;
      std::vector<int> row(5, 0);
      for (int s : scores) ++row[static_cast<std::size_t>(s - 1)];
      out.agreement.counts.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace pbench::store
