#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pbench/gateway/gateway.hpp"

namespace pbench::gateway {

struct CacheEntry {
  std::string request_digest;
  std::string response_text;
  TokenUsage usage;
  std::string timestamp;
};

/// Content-addressed response store: `<root>/<2 hex>/<digest>.json`, each
/// file holding {request_digest, response_text, usage, timestamp}. Writes go
/// through a temporary file and a rename, so readers never see partial
/// entries. Access is serialized per key.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  /// SHA-256 over the canonical JSON of provider name, model, sampling
  /// params, system and user message.
  static std::string key(const ChatRequest& request, const ProviderProfile& profile);

  /// nullopt on a miss; GatewayError(CacheCorrupt) when the entry exists but
  /// cannot be read back.
  std::optional<CacheEntry> get(const std::string& key) const;
  void put(const std::string& key, const ChatResponse& response);

  /// Removes unreadable entries and returns their paths.
  std::vector<std::filesystem::path> repair();

  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& root() const { return root_; }

  /// Held by callers around get-then-put so concurrent identical requests
  /// reach the provider once.
  std::unique_lock<std::mutex> lock(const std::string& key);

 private:
  std::filesystem::path root_;
  std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> key_mu_;
};

}  // namespace pbench::gateway
