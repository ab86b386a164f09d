#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vllens/dump.hpp"
#include "vllens/registry.hpp"

namespace vllens {

enum class Direction {
  /// Column slice: who attends to the selected token.
  ToToken,
  /// Row slice: how the selected token distributes its attention.
  FromToken,
};

struct AttentionSelection {
  int layer = 0;
  int head = 0;
  int token_index = 0;
  Direction direction = Direction::ToToken;
};

struct Heatmap {
  Eigen::VectorXd values;
  std::vector<int> token_indices;
  /// Dense patch grid for vision subsets; NaN marks cells with no token.
  std::optional<Eigen::MatrixXd> grid;
};

struct HeadSummaryMatrix {
  std::string metric_name;
  Eigen::MatrixXd values;       // n_layers x n_heads
  Eigen::VectorXd layer_means;  // over non-degenerate cells of each row
  std::vector<std::pair<int, int>> degenerate;
  /// MetricError messages keyed by cell; those cells are also degenerate.
  std::map<std::pair<int, int>, std::string> errors;

  bool is_degenerate(int layer, int head) const;
};

/// Rows restricted to `query` tokens and columns to `key` tokens, both in
/// sequence order. Entry (i, j) is what the i-th query assigns to the j-th key.
Eigen::MatrixXf extract_block(const ExampleRecord& ex, int layer, int head, Modality query, Modality key);

Heatmap attention_heatmap(const ExampleRecord& ex, const AttentionSelection& sel, std::optional<Modality> filter = std::nullopt);

/// Copy of `ex` with the listed tokens deleted from every tensor. Remaining
/// tokens are renumbered; masks of deleted tokens are dropped.
ExampleRecord remove_tokens(const ExampleRecord& ex, const std::set<int>& exclude);

HeadSummaryMatrix head_summary(const ExampleRecord& ex, const MetricRegistry& registry, const std::string& metric_name,
                               const std::set<int>& exclude = {});

/// The eight block-mean metrics, in their canonical order.
std::vector<std::string> builtin_metrics();
void register_builtin_metrics(MetricRegistry& registry);

/// Mean of attention[layer, head] over (query, key) pairs; nullopt when empty.
std::optional<double> block_mean(const ExampleRecord& ex, int layer, int head, Modality query, Modality key);
std::optional<double> mean_all(const ExampleRecord& ex, int layer, int head);
std::optional<double> mean_cross_modal(const ExampleRecord& ex, int layer, int head);
std::optional<double> mean_intra_modal(const ExampleRecord& ex, int layer, int head);
/// V2V mean excluding, for each query patch, keys within Chebyshev distance 1.
std::optional<double> mean_v2v_without_self(const ExampleRecord& ex, int layer, int head);

}  // namespace vllens
