#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vllens/tensor_blob.hpp"

namespace vllens {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstPlaneMap = Eigen::Map<const RowMatrixXf>;

inline constexpr int kFormatVersion = 1;
/// Attention rows must sum to one within this tolerance.
inline constexpr double kRowSumTolerance = 1e-4;

enum class Modality { Language, Vision };

std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view s);

struct CorpusManifest {
  std::string model_name;
  int n_layers = 1;
  int n_heads = 1;
  int hidden_dim = 1;
  std::vector<std::string> example_ids;
  int format_version = kFormatVersion;

  bool operator==(const CorpusManifest&) const = default;
};

struct TokenInfo {
  int index = 0;
  Modality modality = Modality::Language;
  std::optional<std::string> text;
  std::optional<int> patch_row;
  std::optional<int> patch_col;
  bool is_stopword = false;
  bool is_background = false;
  bool is_special = false;

  static TokenInfo word(int index, std::string text, bool stopword = false, bool special = false);
  static TokenInfo patch(int index, int row, int col, bool background = false);

  bool operator==(const TokenInfo&) const = default;
};

/// One example: joint token sequence plus its attention (n_layers, n_heads, L, L)
/// and hidden-state (n_layers + 1, L, hidden_dim) tensors.
struct ExampleRecord {
  std::string id;
  std::vector<TokenInfo> tokens;
  int grid_rows = 1;
  int grid_cols = 1;
  FloatTensor attention;
  FloatTensor hidden_states;
  /// Encoded PNG, kept verbatim.
  std::optional<std::vector<std::uint8_t>> image_png;
  /// Keyed by LANGUAGE token index; masks are at image resolution.
  std::map<int, BitImage> masks;
  nlohmann::json metadata = nlohmann::json::object();

  int length() const { return static_cast<int>(tokens.size()); }
  int n_layers() const { return attention.shape.empty() ? 0 : static_cast<int>(attention.shape[0]); }
  int n_heads() const { return attention.shape.size() < 2 ? 0 : static_cast<int>(attention.shape[1]); }

  bool operator==(const ExampleRecord&) const = default;
};

/// The (layer, head) attention plane; rows are queries, columns are keys.
ConstPlaneMap attention_plane(const ExampleRecord& ex, int layer, int head);
/// Hidden states at slice `layer` (0 = before the first layer), L x hidden_dim.
ConstPlaneMap hidden_layer(const ExampleRecord& ex, int layer);

/// Indices of tokens with the given modality, in sequence order.
std::vector<int> modality_indices(const ExampleRecord& ex, Modality m);

struct Issue {
  std::string check;
  std::string detail;
};

std::vector<Issue> check_manifest(const CorpusManifest& manifest);
/// Every invariant of `ex` against `manifest`; empty when the record is valid.
std::vector<Issue> check_example(const ExampleRecord& ex, const CorpusManifest& manifest);

nlohmann::json manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json token_to_json(const TokenInfo& token);

/// Streams examples into a dump directory; the manifest is written by finish().
class DumpWriter {
 public:
  DumpWriter(std::filesystem::path root, CorpusManifest manifest);

  void add(const ExampleRecord& ex);
  void finish();

 private:
  std::filesystem::path root_;
  CorpusManifest manifest_;
  std::size_t written_ = 0;
};

void write_dump(const CorpusManifest& manifest, std::span<const ExampleRecord> examples, const std::filesystem::path& root);

/// Opens a dump; example files are only touched by load().
/// Safe for concurrent load() calls.
class DumpReader {
 public:
  explicit DumpReader(std::filesystem::path root);

  const CorpusManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }

  /// Reads and validates one example. Throws FormatError or ValidationError.
  ExampleRecord load(std::string_view id) const;
  /// Reads without invariant checks; throws on unparseable files only.
  ExampleRecord load_unchecked(std::string_view id) const;

 private:
  std::filesystem::path root_;
  CorpusManifest manifest_;
};

struct ExampleReport {
  std::string example_id;
  bool ok = true;
  std::vector<std::string> messages;
};

struct ValidationReport {
  std::vector<ExampleReport> entries;

  std::size_t failure_count() const;
  nlohmann::json to_json() const;
};

/// Checks every example of the dump, collecting all failures. Throws IoError
/// only when the dump directory itself cannot be read.
ValidationReport validate_dump(const std::filesystem::path& root);

}  // namespace vllens
