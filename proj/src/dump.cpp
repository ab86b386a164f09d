#include "vllens/dump.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vllens/error.hpp"

namespace vllens {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Modality m) { return m == Modality::Language ? "LANGUAGE" : "VISION"; }

std::optional<Modality> parse_modality(std::string_view s) {
  if (s == "LANGUAGE") return Modality::Language;
  if (s == "VISION") return Modality::Vision;
  return std::nullopt;
}

TokenInfo TokenInfo::word(int index, std::string text, bool stopword, bool special) {
  TokenInfo t;
  t.index = index;
  t.modality = Modality::Language;
  t.text = std::move(text);
  t.is_stopword = stopword;
  t.is_special = special;
  return t;
}

TokenInfo TokenInfo::patch(int index, int row, int col, bool background) {
  TokenInfo t;
  t.index = index;
  t.modality = Modality::Vision;
  t.patch_row = row;
  t.patch_col = col;
  t.is_background = background;
  return t;
}

ConstPlaneMap attention_plane(const ExampleRecord& ex, int layer, int head) {
  const auto L = ex.length();
  const auto offset = (std::size_t(layer) * ex.n_heads() + head) * L * L;
  return ConstPlaneMap(ex.attention.values.data() + offset, L, L);
}

ConstPlaneMap hidden_layer(const ExampleRecord& ex, int layer) {
  const auto L = ex.length();
  const auto d = static_cast<Eigen::Index>(ex.hidden_states.shape.at(2));
  return ConstPlaneMap(ex.hidden_states.values.data() + std::size_t(layer) * L * d, L, d);
}

std::vector<int> modality_indices(const ExampleRecord& ex, Modality m) {
  std::vector<int> out;
  for (const auto& t : ex.tokens)
    if (t.modality == m) out.push_back(t.index);
  return out;
}

// ---------------------------------------------------------------------------
// Invariant checks

namespace {

bool safe_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find_first_of("/\\") == std::string::npos;
}

std::string shape_string(const std::vector<std::uint32_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ")";
  return os.str();
}

}  // namespace

std::vector<Issue> check_manifest(const CorpusManifest& m) {
  std::vector<Issue> issues;
  if (m.format_version != kFormatVersion) issues.push_back({"format-version", "unsupported version " + std::to_string(m.format_version)});
  if (m.n_layers < 1) issues.push_back({"n_layers", "must be >= 1"});
  if (m.n_heads < 1) issues.push_back({"n_heads", "must be >= 1"});
  if (m.hidden_dim < 1) issues.push_back({"hidden_dim", "must be >= 1"});
  std::set<std::string> seen;
  for (const auto& id : m.example_ids) {
    if (!safe_id(id)) issues.push_back({"example_ids", "invalid example id '" + id + "'"});
    if (!seen.insert(id).second) issues.push_back({"example_ids", "duplicate example id '" + id + "'"});
  }
  return issues;
}

std::vector<Issue> check_example(const ExampleRecord& ex, const CorpusManifest& m) {
  std::vector<Issue> issues;
  auto fail = [&](std::string check, std::string detail) { issues.push_back({std::move(check), std::move(detail)}); };

  if (!safe_id(ex.id)) fail("id", "invalid example id '" + ex.id + "'");
  if (ex.grid_rows < 1 || ex.grid_cols < 1) fail("grid", "grid dimensions must be positive");
  const int L = ex.length();
  if (L < 1) fail("tokens", "token list is empty");

  std::set<std::pair<int, int>> patches;
  int n_vision = 0;
  for (int i = 0; i < L; ++i) {
    const auto& t = ex.tokens[i];
    const auto where = "token " + std::to_string(i);
    if (t.index != i) fail("token-index", where + " declares index " + std::to_string(t.index));
    if (t.modality == Modality::Language) {
      if (!t.text || t.patch_row || t.patch_col) fail("token-payload", where + ": LANGUAGE token must carry text only");
      if (t.is_background) fail("token-flags", where + ": is_background set on a LANGUAGE token");
    } else {
      ++n_vision;
      if (t.text || !t.patch_row || !t.patch_col) fail("token-payload", where + ": VISION token must carry patch coordinates only");
      if (t.is_stopword) fail("token-flags", where + ": is_stopword set on a VISION token");
      if (t.is_special) fail("token-flags", where + ": is_special set on a VISION token");
      if (t.patch_row && t.patch_col) {
        const int r = *t.patch_row, c = *t.patch_col;
        if (r < 0 || r >= ex.grid_rows || c < 0 || c >= ex.grid_cols)
          fail("patch-bounds", where + ": patch (" + std::to_string(r) + ", " + std::to_string(c) + ") outside grid");
        else if (!patches.emplace(r, c).second)
          fail("patch-unique", where + ": patch (" + std::to_string(r) + ", " + std::to_string(c) + ") repeated");
      }
    }
  }
  if (n_vision > ex.grid_rows * ex.grid_cols) fail("vision-count", "more vision tokens than grid cells");

  const std::vector<std::uint32_t> att_shape{std::uint32_t(m.n_layers), std::uint32_t(m.n_heads), std::uint32_t(L), std::uint32_t(L)};
  if (ex.attention.shape != att_shape || ex.attention.values.size() != ex.attention.element_count()) {
    fail("attention-shape", "got " + shape_string(ex.attention.shape) + ", expected " + shape_string(att_shape));
  } else {
    bool bad_value = false;
    for (float v : ex.attention.values)
      if (!std::isfinite(v) || v < 0.0f) bad_value = true;
    if (bad_value) fail("attention-values", "entries must be finite and nonnegative");
    for (int l = 0; l < m.n_layers && issues.size() < 64; ++l)
      for (int h = 0; h < m.n_heads; ++h) {
        const auto plane = attention_plane(ex, l, h);
        for (int r = 0; r < L; ++r) {
          const double sum = plane.row(r).cast<double>().sum();
          if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
            std::ostringstream os;
            os << "layer " << l << " head " << h << " row " << r << " sums to " << sum;
            fail("row-stochastic", os.str());
          }
        }
      }
  }

  const std::vector<std::uint32_t> hid_shape{std::uint32_t(m.n_layers + 1), std::uint32_t(L), std::uint32_t(m.hidden_dim)};
  if (ex.hidden_states.shape != hid_shape || ex.hidden_states.values.size() != ex.hidden_states.element_count()) {
    fail("hidden-shape", "got " + shape_string(ex.hidden_states.shape) + ", expected " + shape_string(hid_shape));
  } else {
    for (float v : ex.hidden_states.values)
      if (!std::isfinite(v)) {
        fail("hidden-values", "non-finite activation");
        break;
      }
  }

  const BitImage* first_mask = nullptr;
  for (const auto& [idx, mask] : ex.masks) {
    const auto where = "mask " + std::to_string(idx);
    if (idx < 0 || idx >= L || ex.tokens[idx].modality != Modality::Language) fail("mask-token", where + " does not refer to a LANGUAGE token");
    if (mask.pixels.size() != std::size_t(mask.height) * mask.width) fail("mask-shape", where + ": pixel buffer size mismatch");
    if (mask.height < std::uint32_t(std::max(ex.grid_rows, 0)) || mask.width < std::uint32_t(std::max(ex.grid_cols, 0)))
      fail("mask-shape", where + ": mask smaller than the patch grid");
    if (first_mask && (mask.height != first_mask->height || mask.width != first_mask->width))
      fail("mask-shape", where + ": masks disagree on image resolution");
    first_mask = first_mask ? first_mask : &mask;
  }
  return issues;
}

// ---------------------------------------------------------------------------
// JSON

json manifest_to_json(const CorpusManifest& m) {
  return json{{"format_version", m.format_version}, {"model_name", m.model_name}, {"n_layers", m.n_layers},
              {"n_heads", m.n_heads},               {"hidden_dim", m.hidden_dim}, {"example_ids", m.example_ids}};
}

CorpusManifest manifest_from_json(const json& j) {
  CorpusManifest m;
  m.format_version = j.at("format_version").get<int>();
  m.model_name = j.at("model_name").get<std::string>();
  m.n_layers = j.at("n_layers").get<int>();
  m.n_heads = j.at("n_heads").get<int>();
  m.hidden_dim = j.at("hidden_dim").get<int>();
  m.example_ids = j.at("example_ids").get<std::vector<std::string>>();
  return m;
}

json token_to_json(const TokenInfo& t) {
  json j{{"index", t.index},
         {"modality", to_string(t.modality)},
         {"is_stopword", t.is_stopword},
         {"is_background", t.is_background},
         {"is_special", t.is_special}};
  if (t.text) j["text"] = *t.text;
  if (t.patch_row) j["patch_row"] = *t.patch_row;
  if (t.patch_col) j["patch_col"] = *t.patch_col;
  return j;
}

namespace {

TokenInfo token_from_json(const json& j) {
  TokenInfo t;
  t.index = j.at("index").get<int>();
  const auto modality = parse_modality(j.at("modality").get<std::string>());
  if (!modality) throw std::invalid_argument("unknown modality '" + j.at("modality").get<std::string>() + "'");
  t.modality = *modality;
  if (j.contains("text")) t.text = j["text"].get<std::string>();
  if (j.contains("patch_row")) t.patch_row = j["patch_row"].get<int>();
  if (j.contains("patch_col")) t.patch_col = j["patch_col"].get<int>();
  t.is_stopword = j.value("is_stopword", false);
  t.is_background = j.value("is_background", false);
  t.is_special = j.value("is_special", false);
  return t;
}

std::string to_file_text(const json& j) { return j.dump(2) + "\n"; }

fs::path example_dir(const fs::path& root, std::string_view id) { return root / "examples" / std::string(id); }

}  // namespace

// ---------------------------------------------------------------------------
// Writer

DumpWriter::DumpWriter(fs::path root, CorpusManifest manifest) : root_(std::move(root)), manifest_(std::move(manifest)) {
  if (auto issues = check_manifest(manifest_); !issues.empty())
    throw InvariantViolation("manifest: " + issues.front().check + ": " + issues.front().detail);
  std::error_code ec;
  fs::create_directories(root_ / "examples", ec);
  if (ec) throw IoError("cannot create " + (root_ / "examples").string() + ": " + ec.message());
}

void DumpWriter::add(const ExampleRecord& ex) {
  if (written_ >= manifest_.example_ids.size() || manifest_.example_ids[written_] != ex.id)
    throw InvariantViolation("example '" + ex.id + "' is not the next id listed in the manifest");
  if (auto issues = check_example(ex, manifest_); !issues.empty())
    throw InvariantViolation("example '" + ex.id + "': " + issues.front().check + ": " + issues.front().detail);

  const auto dir = example_dir(root_, ex.id);
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  write_float_blob(dir / "attention.bin", ex.attention);
  write_float_blob(dir / "hidden.bin", ex.hidden_states);

  json tokens = json::array();
  for (const auto& t : ex.tokens) tokens.push_back(token_to_json(t));
  const json doc{{"id", ex.id}, {"grid_rows", ex.grid_rows}, {"grid_cols", ex.grid_cols}, {"metadata", ex.metadata}, {"tokens", tokens}};
  write_file(dir / "tokens.json", to_file_text(doc));

  if (ex.image_png) write_file(dir / "image.png", *ex.image_png);
  if (!ex.masks.empty()) {
    fs::create_directories(dir / "masks", ec);
    if (ec) throw IoError("cannot create masks directory: " + ec.message());
    for (const auto& [idx, mask] : ex.masks) write_file(dir / "masks" / (std::to_string(idx) + ".bin"), encode_blob(mask));
  }
  ++written_;
}

void DumpWriter::finish() {
  if (written_ != manifest_.example_ids.size())
    throw InvariantViolation("manifest lists " + std::to_string(manifest_.example_ids.size()) + " examples but " +
                             std::to_string(written_) + " were written");
  write_file(root_ / "manifest.json", to_file_text(manifest_to_json(manifest_)));
}

void write_dump(const CorpusManifest& manifest, std::span<const ExampleRecord> examples, const fs::path& root) {
  DumpWriter writer(root, manifest);
  for (const auto& ex : examples) writer.add(ex);
  writer.finish();
}

// ---------------------------------------------------------------------------
// Reader

DumpReader::DumpReader(fs::path root) : root_(std::move(root)) {
  const auto path = root_ / "manifest.json";
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  const auto bytes = read_file(path);
  try {
    manifest_ = manifest_from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw ValidationError("manifest", "manifest-json", e.what());
  }
  if (auto issues = check_manifest(manifest_); !issues.empty())
    throw ValidationError("manifest", issues.front().check, issues.front().detail);
}

ExampleRecord DumpReader::load_unchecked(std::string_view id) const {
  const auto dir = example_dir(root_, id);
  const std::string sid(id);
  for (const char* name : {"tokens.json", "attention.bin", "hidden.bin"})
    if (!fs::exists(dir / name)) throw ValidationError(sid, "missing-file", std::string(name) + " not found");

  ExampleRecord ex;
  const auto tok_bytes = read_file(dir / "tokens.json");
  try {
    const auto doc = json::parse(tok_bytes.begin(), tok_bytes.end());
    ex.id = doc.at("id").get<std::string>();
    ex.grid_rows = doc.at("grid_rows").get<int>();
    ex.grid_cols = doc.at("grid_cols").get<int>();
    ex.metadata = doc.value("metadata", json::object());
    for (const auto& t : doc.at("tokens")) ex.tokens.push_back(token_from_json(t));
  } catch (const std::exception& e) {
    throw ValidationError(sid, "tokens-json", e.what());
  }
  if (ex.id != id) throw ValidationError(sid, "id", "tokens.json declares id '" + ex.id + "'");

  try {
    ex.attention = read_float_blob(dir / "attention.bin");
    ex.hidden_states = read_float_blob(dir / "hidden.bin");
    if (fs::exists(dir / "image.png")) ex.image_png = read_file(dir / "image.png");
    if (fs::is_directory(dir / "masks")) {
      for (const auto& entry : fs::directory_iterator(dir / "masks")) {
        const auto stem = entry.path().stem().string();
        std::size_t used = 0;
        int idx = -1;
        try {
          idx = std::stoi(stem, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != stem.size() || entry.path().extension() != ".bin" || std::to_string(idx) != stem)
          throw ValidationError(sid, "mask-file", "unexpected file masks/" + entry.path().filename().string());
        const auto bytes = read_file(entry.path());
        try {
          ex.masks.emplace(idx, decode_bit_blob(bytes));
        } catch (const FormatError& e) {
          throw FormatError("masks/" + entry.path().filename().string() + ": " + e.what());
        }
      }
    }
  } catch (const FormatError& e) {
    throw FormatError("example '" + sid + "': " + e.what());
  }
  return ex;
}

ExampleRecord DumpReader::load(std::string_view id) const {
  auto ex = load_unchecked(id);
  const auto issues = check_example(ex, manifest_);
  if (!issues.empty()) {
    std::string detail = issues.front().detail;
    if (issues.size() > 1) detail += " (+" + std::to_string(issues.size() - 1) + " more)";
    throw ValidationError(std::string(id), issues.front().check, detail);
  }
  return ex;
}

std::size_t ValidationReport::failure_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.ok ? 0 : 1;
  return n;
}

json ValidationReport::to_json() const {
  json list = json::array();
  for (const auto& e : entries) list.push_back({{"example_id", e.example_id}, {"ok", e.ok}, {"messages", e.messages}});
  return json{{"failures", failure_count()}, {"entries", list}};
}

ValidationReport validate_dump(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  ValidationReport report;
  std::optional<DumpReader> reader;
  try {
    reader.emplace(root);
  } catch (const ValidationError& e) {
    report.entries.push_back({"manifest", false, {e.what()}});
    return report;
  }
  for (const auto& id : reader->manifest().example_ids) {
    ExampleReport entry{id, true, {}};
    try {
      const auto ex = reader->load_unchecked(id);
      for (const auto& issue : check_example(ex, reader->manifest())) entry.messages.push_back(issue.check + ": " + issue.detail);
    } catch (const ValidationError& e) {
      entry.messages.push_back(e.check() + ": " + e.what());
    } catch (const FormatError& e) {
      entry.messages.push_back(std::string("format: ") + e.what());
    } catch (const IoError& e) {
      entry.messages.push_back(std::string("io: ") + e.what());
    }
    entry.ok = entry.messages.empty();
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace vllens
