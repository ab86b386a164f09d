// vllens: validate dumps, precompute caches, generate synthetic dumps.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "vllens/error.hpp"
#include "vllens/service.hpp"
#include "vllens/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_validate(const fs::path& dump, bool as_json) {
  vllens::ValidationReport report;
  try {
    report = vllens::validate_dump(dump);
  } catch (const vllens::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (as_json) {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    for (const auto& entry : report.entries) {
      std::cout << (entry.ok ? "ok    " : "FAIL  ") << entry.example_id << "\n";
      for (const auto& m : entry.messages) std::cout << "      " << m << "\n";
    }
    std::cout << report.entries.size() << " checked, " << report.failure_count() << " failed\n";
  }
  return report.failure_count() == 0 ? 0 : 1;
}

std::vector<int> parse_layers(const std::string& text, int n_layers) {
  std::vector<int> layers;
  if (text.empty() || text == "all") {
    for (int l = 0; l <= n_layers; ++l) layers.push_back(l);
    return layers;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (const auto dots = item.find(".."); dots != std::string::npos) {
      const int lo = std::stoi(item.substr(0, dots)), hi = std::stoi(item.substr(dots + 2));
      for (int l = lo; l <= hi; ++l) layers.push_back(l);
    } else if (!item.empty()) {
      layers.push_back(std::stoi(item));
    }
  }
  return layers;
}

int run_precompute(const fs::path& dump, std::vector<std::string> metrics, const std::string& layer_spec, fs::path cache,
                   std::uint64_t seed, const std::string& stopwords, bool as_json) {
  try {
    vllens::ServiceConfig config;
    config.dump_path = dump;
    config.cache_dir = cache.empty() ? dump / "cache" : cache;
    config.tsne_seed = seed;
    if (!stopwords.empty()) config.stopword_file = stopwords;
    vllens::ApiService service(config);
    if (metrics.empty()) metrics = service.registry().names();

    json report{{"summaries", 0}, {"layers", json::array()}};
    int summaries = 0;
    for (const auto& ex : service.corpus().examples)
      for (const auto& metric : metrics) {
        const auto res = service.handle("/api/examples/" + ex.id + "/head_summary", {{"metric", metric}});
        if (res.status != 200) throw vllens::Error("head summary " + ex.id + "/" + metric + ": " + res.body);
        ++summaries;
      }
    report["summaries"] = summaries;
    for (int layer : parse_layers(layer_spec, service.corpus().manifest.n_layers)) {
      const auto res = service.handle("/api/embeddings", {{"layer", std::to_string(layer)}});
      if (res.status != 200) throw vllens::Error("embeddings layer " + std::to_string(layer) + ": " + res.body);
      report["layers"].push_back(layer);
    }
    report["cache_dir"] = config.cache_dir.string();
    if (as_json)
      std::cout << report.dump(2) << "\n";
    else
      std::cout << "wrote " << summaries << " head summaries and " << report["layers"].size() << " t-SNE layers to "
                << config.cache_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_synth(const fs::path& spec_path, const fs::path& out, bool as_json) {
  vllens::SynthSpec spec;
  try {
    std::ifstream in(spec_path);
    if (!in) {
      std::cerr << "error: cannot open " << spec_path << "\n";
      return 2;
    }
    spec = vllens::synth_spec_from_json(json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    vllens::synth_dump(spec, out);
  } catch (const vllens::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (as_json)
    std::cout << json{{"out_dir", out.string()}, {"examples", spec.n_examples}}.dump(2) << "\n";
  else
    std::cout << "wrote " << spec.n_examples << " examples to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention and hidden-state workbench for vision-language transformers"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output");

  fs::path dump;
  auto* validate = app.add_subcommand("validate", "Check every example of a dump");
  validate->add_option("dump", dump, "Dump directory")->required();

  std::vector<std::string> metrics;
  std::string layers;
  fs::path cache;
  std::uint64_t seed = 42;
  std::string stopwords;
  auto* precompute = app.add_subcommand("precompute", "Write head-summary and t-SNE caches");
  precompute->add_option("dump", dump, "Dump directory")->required();
  precompute->add_option("--metrics", metrics, "Metric names (default: all)")->delimiter(',');
  precompute->add_option("--layers", layers, "Hidden-state layers, e.g. 0..2 or 0,3,5 (default: all)");
  precompute->add_option("--cache", cache, "Cache directory (default: <dump>/cache)");
  precompute->add_option("--seed", seed, "t-SNE seed");
  precompute->add_option("--stopwords", stopwords, "Stopword file, one word per line");

  fs::path spec_path, out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dump with planted structure");
  synth->add_option("spec", spec_path, "SynthSpec JSON file")->required();
  synth->add_option("out_dir", out_dir, "Output dump directory")->required();

  for (auto* sub : {validate, precompute, synth}) sub->add_flag("--json", as_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*validate) return run_validate(dump, as_json);
  if (*precompute) return run_precompute(dump, metrics, layers, cache, seed, stopwords, as_json);
  return run_synth(spec_path, out_dir, as_json);
}
