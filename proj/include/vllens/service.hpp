#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vllens/embedding.hpp"
#include "vllens/registry.hpp"

namespace httplib {
class Server;
}

namespace vllens {

struct ServiceConfig {
  std::filesystem::path dump_path;
  std::string bind_address = "127.0.0.1:8080";
  std::filesystem::path cache_dir;
  std::uint64_t tsne_seed = 42;
  std::optional<std::filesystem::path> stopword_file;
  std::string cors_origin = "*";
};

/// Rounds to 9 significant digits; the shortest representation of the result
/// is what ends up in JSON bodies.
double round_sig9(double v);

/// Memoises values by key; concurrent callers for one key share one computation.
template <typename Key, typename Value>
class OnceCache {
 public:
  Value get(const Key& key, const std::function<Value()>& compute) {
    std::promise<Value> promise;
    std::shared_future<Value> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(compute());
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mutex_);
        entries_.erase(key);
      }
    }
    return future.get();
  }

 private:
  std::mutex mutex_;
  std::map<Key, std::shared_future<Value>> entries_;
};

/// Read-only JSON API over one loaded corpus. Transport-independent: handle()
/// maps (path, query) to a response; mount() wires it into an HTTP server.
class ApiService {
 public:
  using Query = std::multimap<std::string, std::string>;

  struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
  };

  explicit ApiService(ServiceConfig config);
  ApiService(ServiceConfig config, MetricRegistry registry);

  Response handle(std::string_view path, const Query& query);
  void mount(httplib::Server& server);

  const Corpus& corpus() const { return corpus_; }
  const MetricRegistry& registry() const { return registry_; }
  const ServiceConfig& config() const { return config_; }

  /// Head summaries actually computed (cache hits excluded).
  std::size_t summary_computations() const { return summary_computations_.load(); }
  std::size_t tsne_runs() const { return tracker_->tsne_runs(); }

 private:
  Response manifest() const;
  Response example(const ExampleRecord& ex) const;
  Response head_summary(const ExampleRecord& ex, const Query& query);
  Response attention(const ExampleRecord& ex, const Query& query) const;
  Response embeddings(const Query& query);
  Response nearest(const Query& query) const;
  Response image(const ExampleRecord& ex) const;

  std::string summary_body(const ExampleRecord& ex, const std::string& metric, const std::set<int>& exclude);

  ServiceConfig config_;
  Corpus corpus_;
  MetricRegistry registry_;
  std::unique_ptr<EmbeddingTracker> tracker_;
  OnceCache<std::string, std::string> summaries_;
  std::atomic<std::size_t> summary_computations_{0};
};

/// Parses "host:port"; throws Error on malformed input.
std::pair<std::string, int> parse_bind_address(const std::string& bind);

}  // namespace vllens
