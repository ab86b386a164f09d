#include "vllens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <random>

#include "vllens/error.hpp"
#include "vllens/metrics.hpp"
#include "vllens/png.hpp"

namespace vllens {

using nlohmann::json;

namespace {

const std::vector<std::string> kContentWords = {"person", "dog",   "plants", "car",    "table", "man",  "woman", "tree",
                                                "shirt",  "hat",   "ball",   "street", "window", "horse", "cup",  "bench"};
const std::vector<std::string> kStopWords = {"the", "a", "is", "of", "on", "in", "and", "with"};

std::string plant_name(PlantKind k) {
  switch (k) {
    case PlantKind::MaskAlignedHead: return "MASK_ALIGNED_HEAD";
    case PlantKind::CrossModalTwin: return "CROSS_MODAL_TWIN";
    case PlantKind::UniformHead: return "UNIFORM_HEAD";
  }
  return "";
}

PlantKind parse_plant(const std::string& s) {
  if (s == "MASK_ALIGNED_HEAD") return PlantKind::MaskAlignedHead;
  if (s == "CROSS_MODAL_TWIN") return PlantKind::CrossModalTwin;
  if (s == "UNIFORM_HEAD") return PlantKind::UniformHead;
  throw SpecError("unknown plant kind '" + s + "'");
}

/// Language tokens are [CLS] w1 ... w_k [SEP] when there are at least two.
bool is_special_position(const SynthSpec& spec, int i) { return spec.n_text_tokens >= 2 && (i == 0 || i == spec.n_text_tokens - 1); }

int first_content_position(const SynthSpec& spec) {
  for (int i = 0; i < spec.n_text_tokens; ++i)
    if (!is_special_position(spec, i)) return i;
  throw SpecError("spec has no non-special text token to plant on");
}

std::string example_id(int index) {
  char id[32];
  std::snprintf(id, sizeof id, "ex%03d", index);
  return id;
}

std::mt19937_64 example_rng(const SynthSpec& spec, int index, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(spec.seed), std::uint32_t(spec.seed >> 32), std::uint32_t(index), std::uint32_t(stream)};
  return std::mt19937_64(seq);
}

/// Plant parameter with a default; a null params value means "all defaults".
template <typename T>
T param(const Plant& plant, const char* key, T fallback) {
  if (plant.params.is_null()) return fallback;
  if (!plant.params.is_object()) throw SpecError("plant params must be an object");
  try {
    return plant.params.value(key, fallback);
  } catch (const json::exception&) {
    throw SpecError(std::string("plant param '") + key + "' has the wrong type");
  }
}

BitImage ellipse_mask(const SynthSpec& spec, const Plant& plant, std::mt19937_64& rng) {
  const int count = param(plant, "ellipses", 24);
  const double rmin = param(plant, "min_radius", 0.04), rmax = param(plant, "max_radius", 0.14);
  const double side = std::min(spec.image_height, spec.image_width);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BitImage mask{std::uint32_t(spec.image_height), std::uint32_t(spec.image_width),
                std::vector<std::uint8_t>(std::size_t(spec.image_height) * spec.image_width, 0)};
  for (int e = 0; e < count; ++e) {
    const double cy = unit(rng) * spec.image_height, cx = unit(rng) * spec.image_width;
    const double ry = (rmin + (rmax - rmin) * unit(rng)) * side, rx = (rmin + (rmax - rmin) * unit(rng)) * side;
    const int y0 = std::max(0, int(std::floor(cy - ry))), y1 = std::min(spec.image_height - 1, int(std::ceil(cy + ry)));
    const int x0 = std::max(0, int(std::floor(cx - rx))), x1 = std::min(spec.image_width - 1, int(std::ceil(cx + rx)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) mask.pixels[std::size_t(y) * spec.image_width + x] = 1;
      }
  }
  return mask;
}

template <typename Row>
void random_row(Row&& row, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < row.size(); ++j) row[j] = unit(rng);
  row /= row.sum();
}

}  // namespace

int mask_token_index(const SynthSpec& spec, const Plant& plant) { return param(plant, "token", first_content_position(spec)); }

std::pair<int, int> twin_token_indices(const SynthSpec& spec, const Plant& plant) {
  const int text = param(plant, "text_token", first_content_position(spec));
  const int vision = param(plant, "vision_token", spec.n_text_tokens);
  return {text, vision};
}

void check_synth_spec(const SynthSpec& s) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw SpecError(std::string(name) + " must be positive");
  };
  if (s.n_examples < 0) throw SpecError("n_examples must be nonnegative");
  positive(s.n_layers, "n_layers");
  positive(s.n_heads, "n_heads");
  positive(s.grid_rows, "grid_rows");
  positive(s.grid_cols, "grid_cols");
  positive(s.n_text_tokens, "n_text_tokens");
  positive(s.hidden_dim, "hidden_dim");
  if (s.image_height < s.grid_rows || s.image_width < s.grid_cols) throw SpecError("image smaller than the patch grid");
  if (!(s.background_fraction >= 0.0 && s.background_fraction < 1.0)) throw SpecError("background_fraction must be in [0, 1)");

  const int L = s.n_text_tokens + s.grid_rows * s.grid_cols;
  auto content_word = [&](int idx, const char* what) {
    if (idx < 0 || idx >= s.n_text_tokens || is_special_position(s, idx))
      throw SpecError(std::string(what) + " must be a non-special text token index");
  };
  for (const auto& p : s.plants) {
    if (p.kind == PlantKind::CrossModalTwin) {
      if (p.layer < 0 || p.layer > s.n_layers) throw SpecError("CROSS_MODAL_TWIN layer must be in [0, n_layers]");
      const auto [text, vision] = twin_token_indices(s, p);
      content_word(text, "text_token");
      if (vision < s.n_text_tokens || vision >= L) throw SpecError("vision_token must be a vision token index");
      continue;
    }
    if (p.layer < 0 || p.layer >= s.n_layers) throw SpecError(plant_name(p.kind) + " layer out of range");
    if (p.head < 0 || p.head >= s.n_heads) throw SpecError(plant_name(p.kind) + " head out of range");
    if (p.kind == PlantKind::MaskAlignedHead) {
      content_word(mask_token_index(s, p), "token");
      if (param(p, "noise", 0.0) < 0.0) throw SpecError("noise must be nonnegative");
    }
  }
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  try {
    s.n_examples = j.at("n_examples").get<int>();
    s.n_layers = j.at("n_layers").get<int>();
    s.n_heads = j.at("n_heads").get<int>();
    s.grid_rows = j.at("grid_rows").get<int>();
    s.grid_cols = j.at("grid_cols").get<int>();
    s.n_text_tokens = j.at("n_text_tokens").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.image_height = j.value("image_height", 224);
    s.image_width = j.value("image_width", 224);
    s.background_fraction = j.value("background_fraction", 0.2);
    s.model_name = j.value("model_name", std::string("synthetic-vl"));
    for (const auto& p : j.value("plants", json::array()))
      s.plants.push_back({parse_plant(p.at("kind").get<std::string>()), p.value("layer", 0), p.value("head", 0),
                          p.value("params", json::object())});
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed synth spec: ") + e.what());
  }
  check_synth_spec(s);
  return s;
}

json synth_spec_to_json(const SynthSpec& s) {
  json plants = json::array();
  for (const auto& p : s.plants) plants.push_back({{"kind", plant_name(p.kind)}, {"layer", p.layer}, {"head", p.head}, {"params", p.params}});
  return json{{"n_examples", s.n_examples}, {"n_layers", s.n_layers},       {"n_heads", s.n_heads},
              {"grid_rows", s.grid_rows},   {"grid_cols", s.grid_cols},     {"n_text_tokens", s.n_text_tokens},
              {"hidden_dim", s.hidden_dim}, {"seed", s.seed},               {"image_height", s.image_height},
              {"image_width", s.image_width}, {"background_fraction", s.background_fraction},
              {"model_name", s.model_name}, {"plants", plants}};
}

CorpusManifest synth_manifest(const SynthSpec& spec) {
  CorpusManifest m;
  m.model_name = spec.model_name;
  m.n_layers = spec.n_layers;
  m.n_heads = spec.n_heads;
  m.hidden_dim = spec.hidden_dim;
  for (int i = 0; i < spec.n_examples; ++i) m.example_ids.push_back(example_id(i));
  return m;
}

ExampleRecord synth_example(const SynthSpec& spec, int index) {
  check_synth_spec(spec);
  auto rng = example_rng(spec, index, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int T = spec.n_text_tokens;
  const int V = spec.grid_rows * spec.grid_cols;
  const int L = T + V;

  ExampleRecord ex;
  ex.id = example_id(index);
  ex.grid_rows = spec.grid_rows;
  ex.grid_cols = spec.grid_cols;
  ex.metadata = {{"question", "synthetic example " + std::to_string(index)}, {"source", "synth"}};

  // Positions that plants need as retained content words / foreground patches.
  std::set<int> pinned_words, pinned_patches;
  for (const auto& p : spec.plants) {
    if (p.kind == PlantKind::MaskAlignedHead) pinned_words.insert(mask_token_index(spec, p));
    if (p.kind == PlantKind::CrossModalTwin) {
      const auto [t, v] = twin_token_indices(spec, p);
      pinned_words.insert(t);
      pinned_patches.insert(v);
    }
  }

  for (int i = 0; i < T; ++i) {
    if (is_special_position(spec, i)) {
      ex.tokens.push_back(TokenInfo::word(i, i == 0 ? "[CLS]" : "[SEP]", false, true));
    } else if (!pinned_words.count(i) && unit(rng) < 0.3) {
      ex.tokens.push_back(TokenInfo::word(i, kStopWords[std::size_t(unit(rng) * kStopWords.size())], true));
    } else {
      ex.tokens.push_back(TokenInfo::word(i, kContentWords[std::size_t(unit(rng) * kContentWords.size())]));
    }
  }
  for (const auto& p : spec.plants)
    if (p.kind == PlantKind::MaskAlignedHead) ex.tokens[mask_token_index(spec, p)].text = "person";
  for (int k = 0; k < V; ++k) {
    const bool background = !pinned_patches.count(T + k) && unit(rng) < spec.background_fraction;
    ex.tokens.push_back(TokenInfo::patch(T + k, k / spec.grid_cols, k % spec.grid_cols, background));
  }

  // Masks, one per planted token.
  auto mask_rng = example_rng(spec, index, 1);
  for (const auto& p : spec.plants)
    if (p.kind == PlantKind::MaskAlignedHead) {
      const int token = mask_token_index(spec, p);
      if (!ex.masks.count(token)) ex.masks.emplace(token, ellipse_mask(spec, p, mask_rng));
    }

  // Attention: random row-stochastic planes, then plants.
  ex.attention.shape = {std::uint32_t(spec.n_layers), std::uint32_t(spec.n_heads), std::uint32_t(L), std::uint32_t(L)};
  ex.attention.values.resize(ex.attention.element_count());
  auto att_rng = example_rng(spec, index, 2);
  for (int l = 0; l < spec.n_layers; ++l)
    for (int h = 0; h < spec.n_heads; ++h) {
      Eigen::MatrixXd plane(L, L);
      for (int r = 0; r < L; ++r) random_row(plane.row(r), att_rng);
      for (const auto& p : spec.plants) {
        if (p.layer != l || p.head != h) continue;
        if (p.kind == PlantKind::UniformHead) {
          plane.setConstant(1.0 / L);
        } else if (p.kind == PlantKind::MaskAlignedHead) {
          const int token = mask_token_index(spec, p);
          const auto grid = mask_to_patch_grid(ex.masks.at(token), spec.grid_rows, spec.grid_cols);
          const double half_width = param(p, "noise", 0.0) * std::sqrt(3.0);
          std::uniform_real_distribution<double> noise(-half_width, half_width);
          for (int k = 0; k < V; ++k) {
            auto row = plane.row(T + k);
            // Other keys share one unit of mass; the planted key gets the patch fraction.
            row(token) = 0.0;
            row /= row.sum();
            row(token) = grid(k / spec.grid_cols, k % spec.grid_cols);
            if (half_width > 0.0)
              for (int j = 0; j < L; ++j) row(j) = std::max(0.0, row(j) + noise(att_rng));
            row /= row.sum();
          }
        }
      }
      Eigen::Map<RowMatrixXf>(ex.attention.values.data() + (std::size_t(l) * spec.n_heads + h) * L * L, L, L) = plane.cast<float>();
    }

  // Hidden states: i.i.d. Gaussian, with twins copied.
  ex.hidden_states.shape = {std::uint32_t(spec.n_layers + 1), std::uint32_t(L), std::uint32_t(spec.hidden_dim)};
  ex.hidden_states.values.resize(ex.hidden_states.element_count());
  auto hid_rng = example_rng(spec, index, 3);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (auto& v : ex.hidden_states.values) v = gauss(hid_rng);
  for (const auto& p : spec.plants)
    if (p.kind == PlantKind::CrossModalTwin) {
      const auto [t, v] = twin_token_indices(spec, p);
      auto* slice = ex.hidden_states.values.data() + std::size_t(p.layer) * L * spec.hidden_dim;
      std::copy_n(slice + std::size_t(t) * spec.hidden_dim, spec.hidden_dim, slice + std::size_t(v) * spec.hidden_dim);
    }

  // Image: a soft gradient with mask regions brightened.
  std::vector<std::uint8_t> pixels(std::size_t(spec.image_height) * spec.image_width);
  for (int y = 0; y < spec.image_height; ++y)
    for (int x = 0; x < spec.image_width; ++x) {
      int v = 40 + (80 * (x + y)) / std::max(1, spec.image_height + spec.image_width - 2);
      for (const auto& [token, mask] : ex.masks)
        if (mask.at(y, x)) v = 220;
      pixels[std::size_t(y) * spec.image_width + x] = static_cast<std::uint8_t>(v);
    }
  ex.image_png = encode_gray_png(pixels, spec.image_width, spec.image_height);
  return ex;
}

void synth_dump(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  check_synth_spec(spec);
  DumpWriter writer(out_dir, synth_manifest(spec));
  for (int i = 0; i < spec.n_examples; ++i) writer.add(synth_example(spec, i));
  writer.finish();
}

}  // namespace vllens
