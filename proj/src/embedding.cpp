#include "vllens/embedding.hpp"

#include <cctype>
#include <fstream>

#include "vllens/error.hpp"

namespace vllens {

namespace fs = std::filesystem;
using nlohmann::json;

const ExampleRecord* Corpus::find(std::string_view id) const {
  for (const auto& ex : examples)
    if (ex.id == id) return &ex;
  return nullptr;
}

Corpus load_corpus(const DumpReader& reader) {
  Corpus corpus{reader.manifest(), {}};
  corpus.examples.reserve(corpus.manifest.example_ids.size());
  for (const auto& id : corpus.manifest.example_ids) corpus.examples.push_back(reader.load(id));
  return corpus;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words = {
      "a",      "about", "above", "after", "again", "against", "all",   "am",    "an",      "and",   "any",   "are",   "as",
      "at",     "be",    "been",  "being", "below", "between", "both",  "but",   "by",      "can",   "could", "did",   "do",
      "does",   "doing", "down",  "during", "each", "few",     "for",   "from",  "further", "had",   "has",   "have",  "having",
      "he",     "her",   "here",  "hers",  "him",   "his",     "how",   "i",     "if",      "in",    "into",  "is",    "it",
      "its",    "me",    "more",  "most",  "my",    "no",      "nor",   "not",   "of",      "off",   "on",    "once",  "only",
      "or",     "other", "our",   "ours",  "out",   "over",    "own",   "same",  "she",     "should", "so",   "some",  "such",
      "than",   "that",  "the",   "their", "theirs", "them",   "then",  "there", "these",   "they",  "this",  "those", "through",
      "to",     "too",   "under", "until", "up",    "very",    "was",   "we",    "were",    "what",  "when",  "where", "which",
      "while",  "who",   "whom",  "why",   "will",  "with",    "would", "you",   "your",    "yours", ".",     ",",     "?",
      "!",      "'s",    "'",     "\"",    "-",     ":",       ";"};
  return words;
}

StopwordSet load_stopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword file " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line.erase(0, start);
    if (line.empty() || line.front() == '#') continue;
    for (auto& ch : line) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    words.insert(line);
  }
  return words;
}

std::vector<int> filter_tokens(const ExampleRecord& ex, const StopwordSet& stopwords) {
  std::vector<int> kept;
  for (const auto& t : ex.tokens) {
    if (t.modality == Modality::Language) {
      if (t.is_stopword || t.is_special) continue;
      std::string lowered = t.text.value_or("");
      for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (stopwords.count(lowered)) continue;
    } else if (t.is_background) {
      continue;
    }
    kept.push_back(t.index);
  }
  return kept;
}

namespace {

void check_hidden_layer(const Corpus& corpus, int layer) {
  if (layer < 0 || layer > corpus.manifest.n_layers)
    throw IndexOutOfRange("layer", "must be in [0, " + std::to_string(corpus.manifest.n_layers) + "]");
}

struct Gathered {
  std::vector<EmbeddingPoint> points;  // positions unset
  RowMatrixXf hidden;
};

Gathered gather(const Corpus& corpus, int layer, const StopwordSet& stopwords) {
  check_hidden_layer(corpus, layer);
  Gathered g;
  for (const auto& ex : corpus.examples)
    for (int idx : filter_tokens(ex, stopwords)) g.points.push_back({{ex.id, idx}, layer, Eigen::Vector2d::Zero(), ex.tokens[idx].modality});
  g.hidden.resize(static_cast<Eigen::Index>(g.points.size()), corpus.manifest.hidden_dim);
  Eigen::Index row = 0;
  for (const auto& ex : corpus.examples) {
    const auto states = hidden_layer(ex, layer);
    for (int idx : filter_tokens(ex, stopwords)) g.hidden.row(row++) = states.row(idx);
  }
  return g;
}

json sidecar_json(int layer, std::uint64_t seed, const std::vector<EmbeddingPoint>& points) {
  json rows = json::array();
  for (const auto& p : points) rows.push_back({{"example_id", p.token.example_id}, {"token_index", p.token.token_index}});
  return json{{"layer", layer}, {"seed", seed}, {"rows", rows}};
}

}  // namespace

std::vector<EmbeddingPoint> layer_embeddings(const Corpus& corpus, int layer, const TsneConfig& config, const StopwordSet& stopwords) {
  auto g = gather(corpus, layer, stopwords);
  if (g.points.size() < 4)
    throw TooFewPoints("layer " + std::to_string(layer) + " has " + std::to_string(g.points.size()) + " retained tokens; t-SNE needs 4");
  const auto result = tsne(g.hidden, config);
  for (std::size_t i = 0; i < g.points.size(); ++i)
    g.points[i].position = result.embedding.row(static_cast<Eigen::Index>(i)).transpose().cast<float>().cast<double>();
  return std::move(g.points);
}

NeighborResult nearest_cross_modal(const Corpus& corpus, const TokenRef& query, int layer, const StopwordSet& stopwords) {
  check_hidden_layer(corpus, layer);
  const auto* qex = corpus.find(query.example_id);
  if (!qex) throw IndexOutOfRange("example", "unknown example '" + query.example_id + "'");
  if (query.token_index < 0 || query.token_index >= qex->length())
    throw IndexOutOfRange("token", "must be in [0, " + std::to_string(qex->length()) + ")");
  const auto qkept = filter_tokens(*qex, stopwords);
  if (std::find(qkept.begin(), qkept.end(), query.token_index) == qkept.end())
    throw FilteredQuery("token " + std::to_string(query.token_index) + " of '" + query.example_id + "' is removed by filtering");

  const auto qmod = qex->tokens[query.token_index].modality;
  const Eigen::VectorXf qvec = hidden_layer(*qex, layer).row(query.token_index).transpose();

  std::optional<NeighborResult> best;
  for (const auto& ex : corpus.examples) {
    const auto states = hidden_layer(ex, layer);
    for (int idx : filter_tokens(ex, stopwords)) {
      if (ex.tokens[idx].modality == qmod) continue;
      const double d = cosine_distance(qvec, states.row(idx).transpose());
      TokenRef ref{ex.id, idx};
      if (!best || d < best->distance || (d == best->distance && ref < best->neighbor))
        best = NeighborResult{query, std::move(ref), ex.tokens[idx].modality, d, layer};
    }
  }
  if (!best) throw EmptyPool("no retained " + std::string(to_string(qmod == Modality::Language ? Modality::Vision : Modality::Language)) +
                             " tokens in the corpus");
  return *best;
}

fs::path tsne_cache_path(const fs::path& cache_dir, int layer, std::uint64_t seed) {
  return cache_dir / ("tsne_layer" + std::to_string(layer) + "_seed" + std::to_string(seed) + ".bin");
}

EmbeddingTracker::EmbeddingTracker(const Corpus& corpus, TsneConfig config, StopwordSet stopwords, std::optional<fs::path> cache_dir)
    : corpus_(corpus), config_(config), stopwords_(std::move(stopwords)), cache_dir_(std::move(cache_dir)) {}

std::shared_ptr<const std::vector<EmbeddingPoint>> EmbeddingTracker::layer(int layer) {
  check_hidden_layer(corpus_, layer);
  std::shared_future<std::shared_ptr<const std::vector<EmbeddingPoint>>> future;
  std::promise<std::shared_ptr<const std::vector<EmbeddingPoint>>> promise;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = layers_.find(layer);
    if (it == layers_.end()) {
      future = promise.get_future().share();
      layers_.emplace(layer, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(compute(layer));
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(mutex_);
      layers_.erase(layer);
    }
  }
  return future.get();
}

NeighborResult EmbeddingTracker::nearest(const TokenRef& query, int layer) const {
  return nearest_cross_modal(corpus_, query, layer, stopwords_);
}

std::shared_ptr<const std::vector<EmbeddingPoint>> EmbeddingTracker::compute(int layer) {
  if (auto cached = read_cache(layer)) return std::make_shared<const std::vector<EmbeddingPoint>>(std::move(*cached));
  ++tsne_runs_;
  auto points = layer_embeddings(corpus_, layer, config_, stopwords_);
  write_cache(layer, points);
  return std::make_shared<const std::vector<EmbeddingPoint>>(std::move(points));
}

std::optional<std::vector<EmbeddingPoint>> EmbeddingTracker::read_cache(int layer) const {
  if (!cache_dir_) return std::nullopt;
  const auto blob_path = tsne_cache_path(*cache_dir_, layer, config_.seed);
  auto sidecar_path = blob_path;
  sidecar_path.replace_extension(".json");
  if (!fs::exists(blob_path) || !fs::exists(sidecar_path)) return std::nullopt;
  try {
    auto g = gather(corpus_, layer, stopwords_);
    const auto bytes = read_file(sidecar_path);
    if (json::parse(bytes.begin(), bytes.end()) != sidecar_json(layer, config_.seed, g.points)) return std::nullopt;
    const auto blob = read_float_blob(blob_path);
    if (blob.shape != std::vector<std::uint32_t>{std::uint32_t(g.points.size()), 2u}) return std::nullopt;
    for (std::size_t i = 0; i < g.points.size(); ++i) g.points[i].position = {blob.values[2 * i], blob.values[2 * i + 1]};
    return std::move(g.points);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void EmbeddingTracker::write_cache(int layer, const std::vector<EmbeddingPoint>& points) const {
  if (!cache_dir_) return;
  fs::create_directories(*cache_dir_);
  const auto blob_path = tsne_cache_path(*cache_dir_, layer, config_.seed);
  auto sidecar_path = blob_path;
  sidecar_path.replace_extension(".json");
  FloatTensor blob{{std::uint32_t(points.size()), 2u}, {}};
  blob.values.reserve(points.size() * 2);
  for (const auto& p : points) {
    blob.values.push_back(static_cast<float>(p.position.x()));
    blob.values.push_back(static_cast<float>(p.position.y()));
  }
  write_float_blob(blob_path, blob);
  write_file(sidecar_path, sidecar_json(layer, config_.seed, points).dump(2) + "\n");
}

}  // namespace vllens
