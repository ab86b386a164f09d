#include "vllens/attention.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "vllens/error.hpp"

namespace vllens {

namespace {

void check_head(const ExampleRecord& ex, int layer, int head) {
  if (layer < 0 || layer >= ex.n_layers()) throw IndexOutOfRange("layer", "must be in [0, " + std::to_string(ex.n_layers()) + ")");
  if (head < 0 || head >= ex.n_heads()) throw IndexOutOfRange("head", "must be in [0, " + std::to_string(ex.n_heads()) + ")");
}

std::vector<int> filtered_indices(const ExampleRecord& ex, std::optional<Modality> filter) {
  if (filter) return modality_indices(ex, *filter);
  std::vector<int> all(ex.tokens.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

std::optional<double> mean_of_two(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return 0.5 * (*a + *b);
}

}  // namespace

bool HeadSummaryMatrix::is_degenerate(int layer, int head) const {
  for (const auto& [l, h] : degenerate)
    if (l == layer && h == head) return true;
  return false;
}

Eigen::MatrixXf extract_block(const ExampleRecord& ex, int layer, int head, Modality query, Modality key) {
  check_head(ex, layer, head);
  const auto rows = modality_indices(ex, query);
  const auto cols = modality_indices(ex, key);
  return attention_plane(ex, layer, head)(rows, cols);
}

Heatmap attention_heatmap(const ExampleRecord& ex, const AttentionSelection& sel, std::optional<Modality> filter) {
  check_head(ex, sel.layer, sel.head);
  if (sel.token_index < 0 || sel.token_index >= ex.length())
    throw IndexOutOfRange("token", "must be in [0, " + std::to_string(ex.length()) + ")");

  const auto plane = attention_plane(ex, sel.layer, sel.head);
  Heatmap map;
  map.token_indices = filtered_indices(ex, filter);
  if (sel.direction == Direction::ToToken)
    map.values = plane.col(sel.token_index)(map.token_indices).cast<double>();
  else
    map.values = plane.row(sel.token_index)(map.token_indices).transpose().cast<double>();

  if (filter == Modality::Vision) {
    Eigen::MatrixXd grid = Eigen::MatrixXd::Constant(ex.grid_rows, ex.grid_cols, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < map.token_indices.size(); ++k) {
      const auto& t = ex.tokens[map.token_indices[k]];
      grid(*t.patch_row, *t.patch_col) = map.values[static_cast<Eigen::Index>(k)];
    }
    map.grid = std::move(grid);
  }
  return map;
}

ExampleRecord remove_tokens(const ExampleRecord& ex, const std::set<int>& exclude) {
  const int L = ex.length();
  for (int idx : exclude)
    if (idx < 0 || idx >= L) throw IndexOutOfRange("exclude", "token " + std::to_string(idx) + " not in [0, " + std::to_string(L) + ")");

  std::vector<int> keep;
  std::map<int, int> renumber;
  for (int i = 0; i < L; ++i)
    if (!exclude.count(i)) {
      renumber[i] = static_cast<int>(keep.size());
      keep.push_back(i);
    }
  const auto Lk = static_cast<std::uint32_t>(keep.size());

  ExampleRecord out;
  out.id = ex.id;
  out.grid_rows = ex.grid_rows;
  out.grid_cols = ex.grid_cols;
  out.image_png = ex.image_png;
  out.metadata = ex.metadata;
  for (int i : keep) {
    auto t = ex.tokens[i];
    t.index = renumber[i];
    out.tokens.push_back(std::move(t));
  }

  const auto nl = ex.attention.shape.at(0), nh = ex.attention.shape.at(1);
  out.attention.shape = {nl, nh, Lk, Lk};
  out.attention.values.resize(std::size_t(nl) * nh * Lk * Lk);
  for (std::uint32_t l = 0; l < nl; ++l)
    for (std::uint32_t h = 0; h < nh; ++h) {
      Eigen::Map<RowMatrixXf> dst(out.attention.values.data() + (std::size_t(l) * nh + h) * Lk * Lk, Lk, Lk);
      dst = attention_plane(ex, static_cast<int>(l), static_cast<int>(h))(keep, keep);
    }

  const auto ns = ex.hidden_states.shape.at(0), d = ex.hidden_states.shape.at(2);
  out.hidden_states.shape = {ns, Lk, d};
  out.hidden_states.values.resize(std::size_t(ns) * Lk * d);
  for (std::uint32_t s = 0; s < ns; ++s) {
    Eigen::Map<RowMatrixXf> dst(out.hidden_states.values.data() + std::size_t(s) * Lk * d, Lk, d);
    dst = hidden_layer(ex, static_cast<int>(s))(keep, Eigen::all);
  }

  for (const auto& [idx, mask] : ex.masks)
    if (auto it = renumber.find(idx); it != renumber.end()) out.masks.emplace(it->second, mask);
  return out;
}

HeadSummaryMatrix head_summary(const ExampleRecord& ex, const MetricRegistry& registry, const std::string& metric_name,
                               const std::set<int>& exclude) {
  const auto& metric = registry.at(metric_name);
  const ExampleRecord reduced = exclude.empty() ? ExampleRecord{} : remove_tokens(ex, exclude);
  const ExampleRecord& target = exclude.empty() ? ex : reduced;

  const int nl = ex.n_layers(), nh = ex.n_heads();
  HeadSummaryMatrix summary;
  summary.metric_name = metric_name;
  summary.values = Eigen::MatrixXd::Zero(nl, nh);
  summary.layer_means = Eigen::VectorXd::Zero(nl);

  for (int l = 0; l < nl; ++l) {
    double sum = 0.0;
    int counted = 0;
    for (int h = 0; h < nh; ++h) {
      std::optional<double> value;
      try {
        value = metric.compute(target, l, h);
        if (value && !std::isfinite(*value)) throw MetricError("non-finite metric value");
      } catch (const MetricError& e) {
        value.reset();
        summary.errors[{l, h}] = e.what();
      }
      if (!value) {
        summary.degenerate.emplace_back(l, h);
        continue;
      }
      summary.values(l, h) = *value;
      sum += *value;
      ++counted;
    }
    if (counted > 0) summary.layer_means[l] = sum / counted;
  }
  return summary;
}

std::optional<double> block_mean(const ExampleRecord& ex, int layer, int head, Modality query, Modality key) {
  const auto block = extract_block(ex, layer, head, query, key);
  if (block.size() == 0) return std::nullopt;
  return block.cast<double>().mean();
}

std::optional<double> mean_all(const ExampleRecord& ex, int layer, int head) {
  check_head(ex, layer, head);
  if (ex.length() == 0) return std::nullopt;
  return attention_plane(ex, layer, head).cast<double>().mean();
}

std::optional<double> mean_cross_modal(const ExampleRecord& ex, int layer, int head) {
  return mean_of_two(block_mean(ex, layer, head, Modality::Vision, Modality::Language),
                     block_mean(ex, layer, head, Modality::Language, Modality::Vision));
}

std::optional<double> mean_intra_modal(const ExampleRecord& ex, int layer, int head) {
  return mean_of_two(block_mean(ex, layer, head, Modality::Vision, Modality::Vision),
                     block_mean(ex, layer, head, Modality::Language, Modality::Language));
}

std::optional<double> mean_v2v_without_self(const ExampleRecord& ex, int layer, int head) {
  check_head(ex, layer, head);
  const auto plane = attention_plane(ex, layer, head);
  const auto vision = modality_indices(ex, Modality::Vision);
  double total = 0.0;
  int rows = 0;
  for (int q : vision) {
    const auto& tq = ex.tokens[q];
    double row_sum = 0.0;
    int kept = 0;
    for (int k : vision) {
      const auto& tk = ex.tokens[k];
      const int dist = std::max(std::abs(*tq.patch_row - *tk.patch_row), std::abs(*tq.patch_col - *tk.patch_col));
      if (dist <= 1) continue;
      row_sum += plane(q, k);
      ++kept;
    }
    if (kept == 0) continue;
    total += row_sum / kept;
    ++rows;
  }
  if (rows == 0) return std::nullopt;
  return total / rows;
}

std::vector<std::string> builtin_metrics() {
  return {"mean_all", "mean_l2l", "mean_v2v", "mean_v2l", "mean_l2v", "mean_cross_modal", "mean_intra_modal", "mean_v2v_without_self"};
}

void register_builtin_metrics(MetricRegistry& registry) {
  auto block = [](Modality q, Modality k) -> HeadMetricFn {
    return [q, k](const ExampleRecord& ex, int l, int h) { return block_mean(ex, l, h, q, k); };
  };
  constexpr auto V = Modality::Vision;
  constexpr auto T = Modality::Language;
  registry.register_metric({"mean_all", MetricScope::PerHead, mean_all});
  registry.register_metric({"mean_l2l", MetricScope::PerHead, block(T, T)});
  registry.register_metric({"mean_v2v", MetricScope::PerHead, block(V, V)});
  registry.register_metric({"mean_v2l", MetricScope::PerHead, block(V, T)});
  registry.register_metric({"mean_l2v", MetricScope::PerHead, block(T, V)});
  registry.register_metric({"mean_cross_modal", MetricScope::PerHead, mean_cross_modal});
  registry.register_metric({"mean_intra_modal", MetricScope::PerHead, mean_intra_modal});
  registry.register_metric({"mean_v2v_without_self", MetricScope::PerHead, mean_v2v_without_self});
}

}  // namespace vllens
