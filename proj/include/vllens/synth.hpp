#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vllens/dump.hpp"

namespace vllens {

enum class PlantKind { MaskAlignedHead, CrossModalTwin, UniformHead };

/// A structure planted into every generated example.
///
/// MaskAlignedHead params: "token" (text token index), "noise" (std-dev of the
///   uniform noise added before row re-normalisation), "ellipses" (count),
///   "min_radius"/"max_radius" (fractions of the shorter image side).
/// CrossModalTwin params: "text_token", "vision_token"; `layer` is the hidden
///   slice index in [0, n_layers] and `head` is ignored.
/// UniformHead: no params.
struct Plant {
  PlantKind kind = PlantKind::UniformHead;
  int layer = 0;
  int head = 0;
  nlohmann::json params = nlohmann::json::object();
};

struct SynthSpec {
  int n_examples = 1;
  int n_layers = 1;
  int n_heads = 1;
  int grid_rows = 2;
  int grid_cols = 2;
  int n_text_tokens = 4;
  int hidden_dim = 8;
  std::uint64_t seed = 0;
  int image_height = 224;
  int image_width = 224;
  double background_fraction = 0.2;
  std::string model_name = "synthetic-vl";
  std::vector<Plant> plants;
};

/// Parses and checks a spec; throws SpecError.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SynthSpec& spec);
void check_synth_spec(const SynthSpec& spec);

CorpusManifest synth_manifest(const SynthSpec& spec);
/// Example `index` of the corpus described by `spec`; a pure function of both.
ExampleRecord synth_example(const SynthSpec& spec, int index);

/// Writes the whole synthetic dump to `out_dir`.
void synth_dump(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Resolved token indices the plants use; handy for tests.
int mask_token_index(const SynthSpec& spec, const Plant& plant);
std::pair<int, int> twin_token_indices(const SynthSpec& spec, const Plant& plant);

}  // namespace vllens
