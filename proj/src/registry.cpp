#include "vllens/registry.hpp"

#include "vllens/error.hpp"

namespace vllens {

void MetricRegistry::register_metric(MetricDescriptor descriptor) {
  if (descriptor.name.empty()) throw Error("metric name must not be empty");
  if (!descriptor.compute) throw Error("metric '" + descriptor.name + "' has no compute function");
  if (contains(descriptor.name)) throw DuplicateName("metric '" + descriptor.name + "' is already registered");
  order_.push_back(descriptor.name);
  auto name = descriptor.name;
  metrics_.emplace(std::move(name), std::move(descriptor));
}

const MetricDescriptor& MetricRegistry::at(const std::string& name) const {
  const auto it = metrics_.find(name);
  if (it == metrics_.end()) throw UnknownMetric("unknown metric '" + name + "'");
  return it->second;
}

}  // namespace vllens
