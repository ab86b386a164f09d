#include "vllens/metrics.hpp"

#include "vllens/attention.hpp"

namespace vllens {

Eigen::MatrixXd mask_to_patch_grid(const BitImage& mask, int grid_rows, int grid_cols) {
  if (grid_rows < 1 || grid_cols < 1) throw DimensionError("patch grid must be at least 1x1");
  if (mask.height < std::uint32_t(grid_rows) || mask.width < std::uint32_t(grid_cols))
    throw DimensionError("mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) + " is smaller than the " +
                         std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " grid");

  const std::uint64_t H = mask.height, W = mask.width;
  Eigen::MatrixXd grid(grid_rows, grid_cols);
  for (int r = 0; r < grid_rows; ++r) {
    const auto y0 = r * H / grid_rows, y1 = (r + 1) * H / grid_rows;
    for (int c = 0; c < grid_cols; ++c) {
      const auto x0 = c * W / grid_cols, x1 = (c + 1) * W / grid_cols;
      std::uint64_t on = 0;
      for (auto y = y0; y < y1; ++y)
        for (auto x = x0; x < x1; ++x) on += mask.pixels[y * W + x];
      grid(r, c) = static_cast<double>(on) / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return grid;
}

std::optional<double> person_alignment_metric(const ExampleRecord& ex, int layer, int head) {
  if (ex.masks.empty()) return std::nullopt;
  const auto vision = modality_indices(ex, Modality::Vision);
  double total = 0.0;
  int used = 0;
  for (const auto& [token, mask] : ex.masks) {
    const auto grid = mask_to_patch_grid(mask, ex.grid_rows, ex.grid_cols);
    Eigen::VectorXd fractions(static_cast<Eigen::Index>(vision.size()));
    for (std::size_t k = 0; k < vision.size(); ++k) {
      const auto& t = ex.tokens[vision[k]];
      fractions[static_cast<Eigen::Index>(k)] = grid(*t.patch_row, *t.patch_col);
    }
    const auto heat = attention_heatmap(ex, {layer, head, token, Direction::ToToken}, Modality::Vision);
    if (const auto rho = spearman(fractions, heat.values)) {
      total += *rho;
      ++used;
    }
  }
  if (used == 0) return std::nullopt;
  return total / used;
}

MetricRegistry standard_registry() {
  MetricRegistry registry;
  register_builtin_metrics(registry);
  registry.register_metric({kPersonAlignmentMetric, MetricScope::PerHead, person_alignment_metric});
  return registry;
}

}  // namespace vllens
