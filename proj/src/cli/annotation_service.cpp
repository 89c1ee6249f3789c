#include "pbench/cli/annotation_service.hpp"

#include <fstream>
#include <regex>

#include <httplib.h>

namespace pbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using store::StoreError;

namespace {

AnnotationService::Reply error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

store::AnnotationPacket read_packet(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError(StoreError::Code::Io, "cannot read " + path.string());
  try {
    return store::AnnotationPacket::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw StoreError(StoreError::Code::CorruptLog, path.string() + ": " + e.what());
  }
}

fs::path find_packet(const fs::path& dir, std::optional<std::uint64_t> seed) {
  if (seed) return dir / ("packet-" + std::to_string(*seed) + ".json");
  std::vector<fs::path> found;
  if (fs::is_directory(dir)) {
    static const std::regex name(R"(packet-\d+\.json)");
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (std::regex_match(entry.path().filename().string(), name)) found.push_back(entry.path());
    }
  }
  if (found.size() != 1) {
    throw StoreError(StoreError::Code::NoAnnotations,
                     found.empty() ? "no annotation packet in " + dir.string()
                                   : "several packets in " + dir.string() + "; choose one with --seed");
  }
  return found.front();
}

}  // namespace

AnnotationService::AnnotationService(fs::path run_dir, std::optional<std::uint64_t> seed,
                                     store::TimestampFn clock)
    : run_dir_(std::move(run_dir)), clock_(std::move(clock)) {
  packet_ = read_packet(find_packet(scores_dir(), seed));
  for (std::size_t i = 0; i < packet_.items.size(); ++i) index_[packet_.items[i].item_id] = i;
  for (auto& set : store::load_score_sets(scores_dir())) sets_[set.annotator_id] = std::move(set);
}

AnnotationService::Reply AnnotationService::packet() const {
  // The run id names the model under test; annotators do not see it.
  json items = json::array();
  for (const auto& item : packet_.items) {
    items.push_back({{"item_id", item.item_id},
                     {"persona", item.persona},
                     {"task", std::string(display_name(item.task))},
                     {"question", item.question},
                     {"response", item.response},
                     {"rubric", item.rubric}});
  }
  return {200, {{"seed", packet_.seed}, {"items", items}}};
}

AnnotationService::Reply AnnotationService::progress(const std::string& annotator) const {
  if (!store::valid_annotator_id(annotator)) return error(400, "invalid annotator id");
  std::lock_guard lock(mu_);
  json scores = json::object();
  if (auto it = sets_.find(annotator); it != sets_.end()) {
    for (const auto& [id, s] : it->second.scores) scores[id] = s;
  }
  return {200, {{"annotator_id", annotator},
                {"scored", scores.size()},
                {"total", packet_.items.size()},
                {"scores", scores}}};
}

AnnotationService::Reply AnnotationService::score(const std::string& body, bool overwrite_query) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "body is not JSON");
  }
  if (!j.is_object()) return error(400, "body must be an object");
  for (const auto& [k, _] : j.items()) {
    if (k != "annotator_id" && k != "item_id" && k != "score" && k != "overwrite") {
      return error(400, "unknown field '" + k + "'");
    }
  }
  if (!j.contains("annotator_id") || !j["annotator_id"].is_string() ||
      !store::valid_annotator_id(j["annotator_id"].get<std::string>())) {
    return error(400, "annotator_id must be 1-64 characters of [A-Za-z0-9._-]");
  }
  if (!j.contains("item_id") || !j["item_id"].is_string()) return error(400, "item_id must be a string");
  if (!j.contains("score") || !j["score"].is_number_integer()) return error(400, "score must be an integer");
  const auto score = j["score"].get<long long>();
  if (score < 1 || score > 5) return error(400, "score must be between 1 and 5");
  bool overwrite = overwrite_query;
  if (j.contains("overwrite")) {
    if (!j["overwrite"].is_boolean()) return error(400, "overwrite must be a boolean");
    overwrite = overwrite || j["overwrite"].get<bool>();
  }
  const auto annotator = j["annotator_id"].get<std::string>();
  const auto item = j["item_id"].get<std::string>();
  if (!index_.contains(item)) return error(404, "unknown item " + item);

  std::lock_guard lock(mu_);
  auto& set = sets_[annotator];
  set.annotator_id = annotator;
  std::string outcome = "recorded";
  if (auto it = set.scores.find(item); it != set.scores.end()) {
    if (it->second == score) {
      return {200, {{"status", "unchanged"}, {"item_id", item}, {"score", score}}};
    }
    if (!overwrite) {
      return {409, {{"error", "item already scored with a different value; resend with overwrite=true"},
                    {"item_id", item},
                    {"existing", it->second}}};
    }
    outcome = "overwritten";
  }
  store::HumanScoreSet updated = set;
  updated.scores[item] = static_cast<int>(score);
  updated.timestamps[item] = clock_();
  try {
    store::save_score_set(scores_dir(), updated);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
  set = std::move(updated);
  return {200, {{"status", outcome}, {"item_id", item}, {"score", score}}};
}

AnnotationService::Reply AnnotationService::export_sets() const {
  std::lock_guard lock(mu_);
  json sets = json::array();
  for (const auto& [_, set] : sets_) sets.push_back(set.to_json());
  return {200, {{"sets", sets}}};
}

void AnnotationService::mount(httplib::Server& server, const fs::path& static_dir) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/api/packet", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, packet());
  });
  server.Get(R"(/api/progress/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, progress(req.matches[1]));
  });
  server.Post("/api/score", [this, send](const httplib::Request& req, httplib::Response& res) {
    const bool overwrite = req.has_param("overwrite") && req.get_param_value("overwrite") == "true";
    send(res, score(req.body, overwrite));
  });
  server.Get("/api/export", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, export_sets());
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir.string());
}

}  // namespace pbench::cli
