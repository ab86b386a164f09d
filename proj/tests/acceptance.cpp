// Acceptance suite: one PASS/FAIL line per criterion, with its wall time
// against the budget. Exit status is nonzero if any criterion fails.
//
//   acceptance                  run everything
//   acceptance --update-golden  rewrite tests/golden from the reference spec

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "fault_injection.hpp"
#include "test_support.hpp"
#include "vllens/attention.hpp"
#include "vllens/embedding.hpp"
#include "vllens/error.hpp"
#include "vllens/metrics.hpp"
#include "vllens/service.hpp"
#include "vllens/synth.hpp"
#include "vllens/tsne.hpp"

using namespace vllens;
using namespace vllens::test;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

using Files = std::map<std::string, std::vector<std::uint8_t>>;

Files snapshot(const fs::path& root) {
  Files out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

// ---------------------------------------------------------------------------

Outcome block_tiling() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> length(2, 32);
  double worst_row = 0.0;
  for (int plane = 0; plane < 500; ++plane) {
    const int L = length(rng);
    const auto ex = random_example(rng, "p", L, 1, 1, 1, 6, 6);
    const auto vision = modality_indices(ex, Modality::Vision);
    const auto language = modality_indices(ex, Modality::Language);
    const Modality mods[] = {Modality::Vision, Modality::Language};

    std::vector<float> tiled;
    for (auto q : mods)
      for (auto k : mods) {
        const auto block = extract_block(ex, 0, 0, q, k);
        const auto& qi = q == Modality::Vision ? vision : language;
        const auto& ki = k == Modality::Vision ? vision : language;
        o.require(block.rows() == Eigen::Index(qi.size()) && block.cols() == Eigen::Index(ki.size()), "block shape mismatch");
        tiled.insert(tiled.end(), block.data(), block.data() + block.size());
      }
    std::vector<float> plane_values(ex.attention.values.begin(), ex.attention.values.end());
    std::sort(tiled.begin(), tiled.end());
    std::sort(plane_values.begin(), plane_values.end());
    o.require(tiled == plane_values, "blocks do not tile plane " + std::to_string(plane));

    // Each query row splits its mass between its two key blocks.
    for (auto q : mods) {
      const Eigen::MatrixXd to_v = extract_block(ex, 0, 0, q, Modality::Vision).cast<double>();
      const Eigen::MatrixXd to_l = extract_block(ex, 0, 0, q, Modality::Language).cast<double>();
      for (Eigen::Index r = 0; r < to_v.rows(); ++r) {
        const double mass = (to_v.cols() ? to_v.row(r).sum() : 0.0) + (to_l.cols() ? to_l.row(r).sum() : 0.0);
        worst_row = std::max(worst_row, std::abs(mass - 1.0));
      }
    }
  }
  o.require(worst_row <= 1e-4, "row mass off by " + fmt(worst_row));
  if (o.pass) o.detail = "500 planes, max |row mass - 1| = " + fmt(worst_row);
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> length(2, 32);
  MetricRegistry registry;
  register_builtin_metrics(registry);
  double worst = 0.0;
  long compared = 0, degenerate = 0;
  for (int i = 0; i < 200; ++i) {
    const auto ex = random_example(rng, "m", length(rng), 2, 2, 1, 6, 6);
    for (const auto& name : builtin_metrics()) {
      const auto& metric = registry.at(name);
      for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 2; ++h) {
          const auto got = metric.compute(ex, l, h);
          const auto want = oracle_metric(name, ex, l, h);
          o.require(got.has_value() == want.has_value(), name + ": degenerate disagreement");
          if (!got || !want) {
            ++degenerate;
            continue;
          }
          const double rel = std::abs(*got - *want) / std::abs(*want);
          worst = std::max(worst, rel);
          ++compared;
        }
    }
  }
  o.require(worst <= 1e-6, "relative error " + fmt(worst));
  if (o.pass)
    o.detail = "200 examples, " + std::to_string(compared) + " cells, " + std::to_string(degenerate) + " degenerate agree, max rel err " +
               fmt(worst);
  return o;
}

Outcome spearman_oracle() {
  Outcome o;
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> length(2, 50), small(0, 4);
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  int with_ties = 0;
  for (int pair = 0; pair < 10000; ++pair) {
    const int n = length(rng);
    std::vector<double> x(n), y(n);
    const bool tied = pair % 2 == 0;
    for (int i = 0; i < n; ++i) {
      x[i] = tied ? small(rng) : gauss(rng);
      y[i] = pair % 4 == 0 ? small(rng) : gauss(rng);
    }
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n), yv(y.data(), n);
    const auto got = spearman(xv, yv);
    const auto want = oracle_spearman(x, y);
    o.require(got.has_value() == want.has_value(), "degenerate disagreement at pair " + std::to_string(pair));
    if (got && want) worst = std::max(worst, std::abs(*got - *want));
    with_ties += tied;
  }
  o.require(worst <= 1e-12, "max abs error " + fmt(worst));

  // Monotone and anti-monotone pairs, with and without ties, must be exact.
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = length(rng);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = trial % 2 ? small(rng) : gauss(rng);
    if (x.maxCoeff() == x.minCoeff()) continue;
    const Eigen::VectorXd up = x * 4.0, down = -x;
    o.require(spearman(x, up) == 1.0, "monotone pair not exactly 1");
    o.require(spearman(x, down) == -1.0, "anti-monotone pair not exactly -1");
  }
  o.require(spearman(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(10, 20, 30, 40)) == 1.0, "(1,2,3,4) vs (10,20,30,40)");
  o.require(spearman(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(4, 3, 2, 1)) == -1.0, "(1,2,3,4) vs (4,3,2,1)");
  if (o.pass) o.detail = "10^4 pairs (" + std::to_string(with_ties) + " tied), max abs err " + fmt(worst) + ", +-1 exact";
  return o;
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  // Nearest rank.
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

Outcome planted_head() {
  Outcome o;
  SynthSpec spec;
  spec.n_examples = 10;
  spec.n_layers = 4;
  spec.n_heads = 4;
  spec.grid_rows = 8;
  spec.grid_cols = 8;
  spec.n_text_tokens = 12;
  spec.hidden_dim = 8;
  spec.seed = 404;
  spec.plants = {{PlantKind::MaskAlignedHead, 2, 1, {{"noise", 0.01}}}};
  TempDir dir;
  synth_dump(spec, dir / "dump");
  const Corpus corpus = load_corpus(DumpReader(dir / "dump"));

  const auto registry = standard_registry();
  std::vector<double> planted, others;
  for (const auto& ex : corpus.examples) {
    const auto s = head_summary(ex, registry, kPersonAlignmentMetric);
    for (int l = 0; l < spec.n_layers; ++l)
      for (int h = 0; h < spec.n_heads; ++h) {
        if (s.is_degenerate(l, h)) {
          o.require(!(l == 2 && h == 1), "planted head degenerate in " + ex.id);
          continue;
        }
        (l == 2 && h == 1 ? planted : others).push_back(s.values(l, h));
      }
  }
  o.require(planted.size() == 10, "planted head missing in some examples");
  const double lowest = planted.empty() ? 0.0 : *std::min_element(planted.begin(), planted.end());
  const double p95 = percentile(others, 0.95);
  const double median = percentile(others, 0.5);
  o.require(lowest > 0.9, "planted head min " + fmt_fixed(lowest));
  o.require(p95 < 0.3, "other heads p95 " + fmt_fixed(p95));
  if (o.pass)
    o.detail = "planted min " + fmt_fixed(lowest) + " (> 0.9), others p95 " + fmt_fixed(p95) + " (< 0.3), median " + fmt_fixed(median);
  return o;
}

Outcome tsne_calibration(double& slowest_run) {
  Outcome o;
  double worst_perp = 0.0, worst_rise = -std::numeric_limits<double>::infinity();
  for (std::uint64_t input = 0; input < 3; ++input) {
    std::mt19937_64 rng(500 + input);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd x(500, 64);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    TsneConfig cfg;
    cfg.track_kl = true;

    std::vector<TsneResult> runs;
    for (int rep = 0; rep < 2; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      runs.push_back(tsne(x, cfg));
      slowest_run = std::max(slowest_run, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    const auto& r = runs[0];
    for (Eigen::Index i = 0; i < r.perplexity.size(); ++i) worst_perp = std::max(worst_perp, std::abs(r.perplexity[i] - 30.0) / 30.0);
    const auto& kl = r.kl_history;
    o.require(kl.size() == std::size_t(cfg.iterations), "KL history length");
    for (std::size_t t = kl.size() - 250; t < kl.size(); ++t) worst_rise = std::max(worst_rise, kl[t] - kl[t - 1]);
    o.require(std::memcmp(runs[0].embedding.data(), runs[1].embedding.data(), sizeof(double) * runs[0].embedding.size()) == 0,
              "runs with one seed differ");
  }
  o.require(worst_perp <= 1e-3, "perplexity rel err " + fmt(worst_perp));
  o.require(worst_rise <= 1e-6, "KL rose by " + fmt(worst_rise));
  o.require(slowest_run < 60.0, "run took " + fmt(slowest_run) + " s");
  if (o.pass)
    o.detail = "3 inputs 500x64, perplexity rel err " + fmt(worst_perp) + ", max KL step " + fmt(worst_rise) + ", bitwise repeatable, slowest run " +
               fmt(slowest_run) + " s";
  return o;
}

Outcome cross_modal_knn() {
  Outcome o;
  std::mt19937_64 rng(606);
  Corpus corpus;
  corpus.manifest = manifest_for(3, 1, 16);
  for (int i = 0; i < 50; ++i) {
    const std::string id = "k" + std::to_string(1000 + i);
    corpus.manifest.example_ids.push_back(id);
    corpus.examples.push_back(random_example(rng, id, 20, 3, 1, 16, 6, 6));
  }
  const StopwordSet words{"w2", "w5", "w17"};
  long queries = 0;
  for (int layer = 0; layer <= 3; ++layer)
    for (const auto& ex : corpus.examples)
      for (const auto& t : ex.tokens) {
        if (!retained(t, words)) continue;
        const auto want = oracle_nearest(corpus, ex, t.index, layer, words);
        const auto got = nearest_cross_modal(corpus, {ex.id, t.index}, layer, words);
        o.require(want && got.neighbor == want->first, "neighbour mismatch for " + ex.id + ":" + std::to_string(t.index));
        o.require(want && std::abs(got.distance - want->second) <= 1e-12, "distance mismatch");
        ++queries;
      }

  SynthSpec spec;
  spec.n_examples = 5;
  spec.n_layers = 6;
  spec.n_heads = 1;
  spec.grid_rows = 4;
  spec.grid_cols = 4;
  spec.n_text_tokens = 8;
  spec.hidden_dim = 32;
  spec.seed = 607;
  spec.plants = {{PlantKind::CrossModalTwin, 5, 0, nlohmann::json::object()}};
  TempDir dir;
  synth_dump(spec, dir / "dump");
  const Corpus twins = load_corpus(DumpReader(dir / "dump"));
  const auto [text, vision] = twin_token_indices(spec, spec.plants[0]);
  for (const auto& ex : twins.examples) {
    const auto r = nearest_cross_modal(twins, {ex.id, text}, 5, default_stopwords());
    o.require(r.neighbor == TokenRef{ex.id, vision} && r.distance == 0.0, "twin not recovered in " + ex.id);
  }
  if (o.pass) o.detail = "1000 tokens x 4 layers, " + std::to_string(queries) + " queries match oracle; twins at distance 0 in 5/5";
  return o;
}

std::vector<ExampleRecord> random_dump_examples(std::mt19937_64& rng, CorpusManifest& manifest) {
  std::uniform_int_distribution<int> count(0, 4), length(1, 20), coin(0, 1);
  const int n = count(rng);
  std::vector<ExampleRecord> out;
  for (int i = 0; i < n; ++i) {
    const std::string id = "r" + std::to_string(i);
    manifest.example_ids.push_back(id);
    auto ex = random_example(rng, id, length(rng), manifest.n_layers, manifest.n_heads, manifest.hidden_dim, 3, 4);
    ex.metadata = {{"n", i}, {"note", "random"}};
    for (const auto& t : ex.tokens)
      if (t.modality == Modality::Language && coin(rng)) {
        BitImage mask{13, 17, std::vector<std::uint8_t>(13 * 17)};
        for (auto& p : mask.pixels) p = static_cast<std::uint8_t>(coin(rng));
        ex.masks.emplace(t.index, mask);
      }
    if (coin(rng)) ex.image_png = std::vector<std::uint8_t>{0x89, 'P', 'N', 'G', std::uint8_t(i), std::uint8_t(rng())};
    out.push_back(std::move(ex));
  }
  return out;
}

Outcome format_round_trip() {
  Outcome o;
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<int> small(1, 3);
  int dumps = 0;
  for (int trial = 0; trial < 100; ++trial) {
    TempDir dir;
    if (trial % 2 == 0) {
      SynthSpec spec;
      spec.n_examples = small(rng);
      spec.n_layers = small(rng);
      spec.n_heads = small(rng);
      spec.grid_rows = small(rng) + 1;
      spec.grid_cols = small(rng) + 1;
      spec.n_text_tokens = small(rng) + 3;
      spec.hidden_dim = small(rng) * 2;
      spec.image_height = spec.image_width = 32;
      spec.seed = rng();
      spec.plants = {{PlantKind::MaskAlignedHead, 0, 0, {{"noise", 0.02}}}};
      synth_dump(spec, dir / "a");
    } else {
      auto manifest = manifest_for(small(rng), small(rng), small(rng));
      const auto examples = random_dump_examples(rng, manifest);
      write_dump(manifest, examples, dir / "a");
    }
    const DumpReader reader(dir / "a");
    std::vector<ExampleRecord> loaded;
    for (const auto& id : reader.manifest().example_ids) loaded.push_back(reader.load(id));
    write_dump(reader.manifest(), loaded, dir / "b");
    o.require(snapshot(dir / "a") == snapshot(dir / "b"), "dump " + std::to_string(trial) + " not byte-identical");
    o.require(validate_dump(dir / "a").failure_count() == 0, "clean dump reported failures");
    ++dumps;
  }

  SynthSpec base;
  base.n_examples = 3;
  base.n_layers = 2;
  base.n_heads = 2;
  base.grid_rows = 3;
  base.grid_cols = 3;
  base.n_text_tokens = 5;
  base.hidden_dim = 4;
  base.image_height = base.image_width = 24;
  base.seed = 708;
  base.plants = {{PlantKind::MaskAlignedHead, 1, 0, {{"noise", 0.0}}}};
  TempDir pristine;
  synth_dump(base, pristine / "dump");
  const auto faults = all_faults();
  int caught = 0;
  for (const auto& fault : faults) {
    TempDir dir;
    fs::copy(pristine / "dump", dir / "dump", fs::copy_options::recursive);
    fault.apply(dir / "dump", "ex001");
    bool ok = false;
    try {
      const auto report = validate_dump(dir / "dump");
      ok = fault.manifest_level ? report.failure_count() >= 1
                                : report.failure_count() == 1 && !report.entries.at(1).ok && report.entries.at(1).example_id == "ex001";
    } catch (const std::exception&) {
      ok = false;
    }
    o.require(ok, "fault not caught: " + fault.name);
    caught += ok;
  }
  if (o.pass) o.detail = std::to_string(dumps) + " dumps byte-identical; " + std::to_string(caught) + "/" + std::to_string(faults.size()) + " faults caught";
  return o;
}

// ---------------------------------------------------------------------------

struct GoldenRequest {
  std::string name;
  std::string path;
  ApiService::Query query;
  int status = 200;
};

std::vector<GoldenRequest> golden_requests(const CorpusManifest& m, const MetricRegistry& registry) {
  std::vector<GoldenRequest> out = {
      {"manifest", "/api/manifest", {}},
      {"example_ex000", "/api/examples/ex000", {}},
      {"example_ex003", "/api/examples/ex003", {}},
      {"example_unknown", "/api/examples/ex999", {}, 404},
      {"image_ex001", "/api/examples/ex001/image", {}},
      {"summary_ex001_person_exclude", "/api/examples/ex001/head_summary", {{"metric", kPersonAlignmentMetric}, {"exclude", "9,14"}}},
      {"summary_ex002_exclude_text", "/api/examples/ex002/head_summary", {{"metric", "mean_cross_modal"}, {"exclude", "0,7"}}},
      {"summary_unknown_metric", "/api/examples/ex000/head_summary", {{"metric", "entropy"}}, 400},
      {"summary_bad_exclude", "/api/examples/ex000/head_summary", {{"metric", "mean_all"}, {"exclude", "24"}}, 400},
      {"attention_to_vision", "/api/examples/ex000/attention", {{"layer", "3"}, {"head", "1"}, {"token", "2"}, {"direction", "to"}, {"filter", "vision"}}},
      {"attention_to_language", "/api/examples/ex000/attention", {{"layer", "3"}, {"head", "1"}, {"token", "2"}, {"filter", "language"}}},
      {"attention_from_patch", "/api/examples/ex002/attention", {{"layer", "1"}, {"head", "2"}, {"token", "12"}, {"direction", "from"}}},
      {"attention_uniform", "/api/examples/ex001/attention", {{"layer", "0"}, {"head", "0"}, {"token", "10"}, {"filter", "vision"}}},
      {"attention_bad_layer", "/api/examples/ex000/attention", {{"layer", "4"}, {"head", "0"}, {"token", "0"}}, 400},
      {"embeddings_layer0", "/api/embeddings", {{"layer", "0"}}},
      {"embeddings_layer" + std::to_string(m.n_layers), "/api/embeddings", {{"layer", std::to_string(m.n_layers)}}},
      {"embeddings_bad_layer", "/api/embeddings", {{"layer", std::to_string(m.n_layers + 1)}}, 400},
      {"nearest_twin", "/api/nearest", {{"example", "ex002"}, {"token", "3"}, {"layer", "3"}}},
      {"nearest_patch", "/api/nearest", {{"example", "ex001"}, {"token", "13"}, {"layer", "1"}}},
      {"nearest_filtered", "/api/nearest", {{"example", "ex000"}, {"token", "0"}, {"layer", "1"}}, 400},
      {"unknown_endpoint", "/api/everything", {}, 404},
  };
  for (const auto& metric : registry.names()) out.push_back({"summary_ex000_" + metric, "/api/examples/ex000/head_summary", {{"metric", metric}}});
  return out;
}

std::string golden_file(const GoldenRequest& r, const std::string& content_type) {
  return r.name + (content_type == "image/png" ? ".png" : ".json");
}

Outcome api_golden(bool update) {
  Outcome o;
  const auto spec_bytes = read_file(VLLENS_REFERENCE_SPEC);
  const auto spec = synth_spec_from_json(json::parse(spec_bytes.begin(), spec_bytes.end()));
  TempDir dir;
  synth_dump(spec, dir / "dump");

  ServiceConfig config;
  config.dump_path = dir / "dump";
  config.cache_dir = dir / "cache";
  ApiService api(config);
  const fs::path golden_dir = VLLENS_GOLDEN_DIR;

  const auto requests = golden_requests(api.corpus().manifest, api.registry());
  int matched = 0;
  for (const auto& r : requests) {
    const auto res = api.handle(r.path, r.query);
    o.require(res.status == r.status, r.name + ": status " + std::to_string(res.status));
    const auto file = golden_dir / golden_file(r, res.content_type);
    if (update) {
      fs::create_directories(golden_dir);
      write_file(file, res.body);
      ++matched;
      continue;
    }
    if (!fs::exists(file)) {
      o.require(false, r.name + ": no golden file");
      continue;
    }
    const auto want = read_file(file);
    const bool same = std::string(want.begin(), want.end()) == res.body;
    o.require(same, r.name + ": body differs from golden");
    matched += same;
  }

  // A fresh service without a disk cache: concurrent identical requests share
  // one computation and see identical bodies.
  ServiceConfig bare;
  bare.dump_path = dir / "dump";
  ApiService fresh(bare);
  const ApiService::Query query{{"metric", kPersonAlignmentMetric}};
  std::vector<std::string> bodies(8), layers(4);
  std::vector<std::thread> threads;
  for (auto& b : bodies) threads.emplace_back([&] { b = fresh.handle("/api/examples/ex003/head_summary", query).body; });
  for (auto& b : layers) threads.emplace_back([&] { b = fresh.handle("/api/embeddings", {{"layer", "2"}}).body; });
  for (auto& t : threads) t.join();
  o.require(fresh.summary_computations() == 1, "summary computed " + std::to_string(fresh.summary_computations()) + " times");
  o.require(fresh.tsne_runs() == 1, "t-SNE ran " + std::to_string(fresh.tsne_runs()) + " times");
  o.require(std::all_of(bodies.begin(), bodies.end(), [&](const auto& b) { return b == bodies[0]; }), "concurrent summary bodies differ");
  o.require(std::all_of(layers.begin(), layers.end(), [&](const auto& b) { return b == layers[0]; }), "concurrent embedding bodies differ");
  o.require(bodies[0] == api.handle("/api/examples/ex003/head_summary", query).body, "cold and warm bodies differ");

  if (o.pass)
    o.detail = std::to_string(matched) + "/" + std::to_string(requests.size()) + (update ? " golden files written" : " bodies match golden") +
               "; 8 concurrent summaries -> 1 computation, 4 concurrent layers -> 1 t-SNE run";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool update_golden = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--update-golden") == 0) {
      update_golden = true;
    } else {
      std::cerr << "usage: acceptance [--update-golden]\n";
      return 2;
    }
  }

  int failures = 0;
  auto run = [&](const std::string& name, double budget_seconds, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_seconds > 0 && seconds >= budget_seconds) o.require(false, "over budget");
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(34) << name << std::right << std::fixed << std::setprecision(2)
              << std::setw(7) << seconds << " s";
    if (budget_seconds > 0) std::cout << " (budget " << std::setprecision(0) << budget_seconds << " s)";
    std::cout << "  " << o.detail << std::endl;
  };

  if (update_golden) {
    run("API golden suite (update)", 0, [] { return api_golden(true); });
    return failures == 0 ? 0 : 1;
  }

  double slowest_tsne = 0.0;
  run("block tiling & conservation", 5, block_tiling);
  run("metric oracle equivalence", 10, metric_oracle);
  run("spearman oracle", 0, spearman_oracle);
  run("planted-head recovery", 30, planted_head);
  // The budget applies to each N=500 run; the criterion runs six of them.
  run("t-SNE calibration", 0, [&] { return tsne_calibration(slowest_tsne); });
  run("cross-modal kNN", 10, cross_modal_knn);
  run("format round-trip & fault injection", 20, format_round_trip);
  run("API golden suite", 0, [] { return api_golden(false); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
