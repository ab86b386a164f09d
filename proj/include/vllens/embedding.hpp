#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vllens/dump.hpp"
#include "vllens/tsne.hpp"

namespace vllens {

/// Every example of a dump, loaded and validated. Immutable once built.
struct Corpus {
  CorpusManifest manifest;
  std::vector<ExampleRecord> examples;

  /// nullptr when `id` is not in the corpus.
  const ExampleRecord* find(std::string_view id) const;
};

Corpus load_corpus(const DumpReader& reader);

using StopwordSet = std::set<std::string, std::less<>>;

/// Built-in English stopword list.
const StopwordSet& default_stopwords();
/// One word per line; blank lines and lines starting with '#' are ignored.
StopwordSet load_stopwords(const std::filesystem::path& path);

/// Indices that survive stopword/special/background filtering, in order.
std::vector<int> filter_tokens(const ExampleRecord& ex, const StopwordSet& stopwords);

struct TokenRef {
  std::string example_id;
  int token_index = 0;

  auto operator<=>(const TokenRef&) const = default;
};

struct EmbeddingPoint {
  TokenRef token;
  int layer = 0;
  Eigen::Vector2d position;
  Modality modality = Modality::Language;
};

struct NeighborResult {
  TokenRef query;
  TokenRef neighbor;
  Modality neighbor_modality = Modality::Vision;
  double distance = 0.0;
  int layer = 0;
};

/// 1 - cos(a, b), clamped to [0, 2]. A zero vector is at distance 1 from anything.
template <typename DA, typename DB>
double cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  const double na = a.template cast<double>().squaredNorm();
  const double nb = b.template cast<double>().squaredNorm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double dot = a.template cast<double>().dot(b.template cast<double>());
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

/// Points of one disjoint per-layer t-SNE space over the filtered corpus.
/// Coordinates are rounded to float32, the precision of the cache files.
std::vector<EmbeddingPoint> layer_embeddings(const Corpus& corpus, int layer, const TsneConfig& config, const StopwordSet& stopwords);

/// Exhaustive nearest opposite-modality token in hidden space (cosine distance).
/// Ties go to the smallest (example_id, token_index).
NeighborResult nearest_cross_modal(const Corpus& corpus, const TokenRef& query, int layer, const StopwordSet& stopwords);

std::filesystem::path tsne_cache_path(const std::filesystem::path& cache_dir, int layer, std::uint64_t seed);

/// Caches layer_embeddings in memory and, when a cache directory is given, on
/// disk. Concurrent requests for one layer share a single computation.
class EmbeddingTracker {
 public:
  EmbeddingTracker(const Corpus& corpus, TsneConfig config, StopwordSet stopwords, std::optional<std::filesystem::path> cache_dir);

  std::shared_ptr<const std::vector<EmbeddingPoint>> layer(int layer);
  NeighborResult nearest(const TokenRef& query, int layer) const;

  const StopwordSet& stopwords() const { return stopwords_; }
  const TsneConfig& config() const { return config_; }
  /// Number of t-SNE runs actually performed.
  std::size_t tsne_runs() const { return tsne_runs_.load(); }

 private:
  std::shared_ptr<const std::vector<EmbeddingPoint>> compute(int layer);
  std::optional<std::vector<EmbeddingPoint>> read_cache(int layer) const;
  void write_cache(int layer, const std::vector<EmbeddingPoint>& points) const;

  const Corpus& corpus_;
  TsneConfig config_;
  StopwordSet stopwords_;
  std::optional<std::filesystem::path> cache_dir_;
  std::mutex mutex_;
  std::map<int, std::shared_future<std::shared_ptr<const std::vector<EmbeddingPoint>>>> layers_;
  std::atomic<std::size_t> tsne_runs_{0};
};

}  // namespace vllens
