#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vllens/dump.hpp"

namespace vllens {

/// Per-head metric: a value, or nullopt when the cell is degenerate.
/// Implementations may throw MetricError for a single cell.
using HeadMetricFn = std::function<std::optional<double>(const ExampleRecord&, int layer, int head)>;

enum class MetricScope { PerHead };

struct MetricDescriptor {
  std::string name;
  MetricScope scope = MetricScope::PerHead;
  HeadMetricFn compute;
};

/// Name -> metric table. Populated at startup, read-only afterwards.
class MetricRegistry {
 public:
  void register_metric(MetricDescriptor descriptor);

  bool contains(const std::string& name) const { return metrics_.count(name) != 0; }
  /// Throws UnknownMetric.
  const MetricDescriptor& at(const std::string& name) const;
  /// Names in registration order.
  const std::vector<std::string>& names() const { return order_; }

 private:
  std::map<std::string, MetricDescriptor> metrics_;
  std::vector<std::string> order_;
};

}  // namespace vllens
