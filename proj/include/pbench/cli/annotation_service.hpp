#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "pbench/store/run_store.hpp"

namespace httplib {
class Server;
}

namespace pbench::cli {

/// Backs the annotation UI. Serves one exported packet of a run and
/// persists each annotator's scores to annotations/scores-<id>.json after
/// every accepted write. Machine scores are never part of any response.
///
///   GET  /api/packet                 items in packet order
///   GET  /api/progress/<annotator>   scored count and the scores so far
///   POST /api/score                  {annotator_id, item_id, score[, overwrite]}
///   GET  /api/export                 every annotator's HumanScoreSet
class AnnotationService {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  /// Loads annotations/packet-<seed>.json; without a seed the run must hold
  /// exactly one packet. Throws StoreError otherwise.
  AnnotationService(std::filesystem::path run_dir, std::optional<std::uint64_t> seed = std::nullopt,
                    store::TimestampFn clock = store::utc_now);

  Reply packet() const;
  Reply progress(const std::string& annotator) const;
  /// 400 on a malformed body or a score outside 1..5, 404 for an unknown
  /// item, 409 when a different score exists and overwrite is not set.
  /// Re-sending the stored value is a no-op (200).
  Reply score(const std::string& body, bool overwrite_query = false);
  Reply export_sets() const;

  /// Registers the routes; static files are served from `static_dir` when
  /// it is non-empty.
  void mount(httplib::Server& server, const std::filesystem::path& static_dir = {});

  const store::AnnotationPacket& loaded_packet() const { return packet_; }
  std::filesystem::path scores_dir() const { return run_dir_ / "annotations"; }

 private:
  std::filesystem::path run_dir_;
  store::AnnotationPacket packet_;
  std::map<std::string, std::size_t> index_;  // item id -> position
  store::TimestampFn clock_;
  mutable std::mutex mu_;
  std::map<std::string, store::HumanScoreSet> sets_;
};

}  // namespace pbench::cli
