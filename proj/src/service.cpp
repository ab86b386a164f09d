#include "vllens/service.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "vllens/attention.hpp"
#include "vllens/error.hpp"
#include "vllens/metrics.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>

namespace vllens {

namespace fs = std::filesystem;
using nlohmann::json;

double round_sig9(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::pair<std::string, int> parse_bind_address(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error("bind address must be host:port, got '" + bind + "'");
  int port = 0;
  const auto* first = bind.data() + colon + 1;
  const auto* last = bind.data() + bind.size();
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || ptr != last || port < 0 || port > 65535) throw Error("invalid port in bind address '" + bind + "'");
  return {bind.substr(0, colon), port};
}

namespace {

/// A 4xx/5xx outcome with its machine-readable code.
struct ApiError {
  int status;
  std::string code;
  std::string message;
  std::optional<std::string> field;
};

ApiService::Response json_response(const json& body, int status = 200) { return {status, "application/json", body.dump()}; }

ApiService::Response error_response(const ApiError& e) {
  return json_response({{"code", e.code}, {"message", e.message}, {"field", e.field ? json(*e.field) : json(nullptr)}}, e.status);
}

json number(double v) { return round_sig9(v); }

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

std::optional<std::string> param(const ApiService::Query& q, const std::string& name) {
  const auto it = q.find(name);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

std::string required(const ApiService::Query& q, const std::string& name) {
  auto v = param(q, name);
  if (!v || v->empty()) throw ApiError{400, "BAD_PARAMETER", "missing query parameter '" + name + "'", name};
  return *v;
}

int parse_int(const std::string& text, const std::string& field) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ApiError{400, "BAD_PARAMETER", "'" + text + "' is not an integer", field};
  return value;
}

std::set<int> parse_index_list(const std::string& text, const std::string& field) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(parse_int(item, field));
  return out;
}

std::string exclude_key(const std::set<int>& exclude) {
  if (exclude.empty()) return "none";
  std::string key;
  for (int i : exclude) key += (key.empty() ? "" : "-") + std::to_string(i);
  return key;
}

json token_ref_json(const Corpus& corpus, const TokenRef& ref) {
  const auto* ex = corpus.find(ref.example_id);
  json j{{"example_id", ref.example_id}, {"token_index", ref.token_index}};
  if (ex) {
    const auto& t = ex->tokens[ref.token_index];
    j["modality"] = to_string(t.modality);
    j["text"] = t.text ? json(*t.text) : json(nullptr);
    j["patch"] = t.patch_row ? json::array({*t.patch_row, *t.patch_col}) : json(nullptr);
  }
  return j;
}

}  // namespace

ApiService::ApiService(ServiceConfig config) : ApiService(std::move(config), standard_registry()) {}

ApiService::ApiService(ServiceConfig config, MetricRegistry registry) : config_(std::move(config)), registry_(std::move(registry)) {
  const DumpReader reader(config_.dump_path);
  corpus_ = load_corpus(reader);
  auto stopwords = config_.stopword_file ? load_stopwords(*config_.stopword_file) : default_stopwords();
  TsneConfig tsne;
  tsne.seed = config_.tsne_seed;
  std::optional<fs::path> cache;
  if (!config_.cache_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config_.cache_dir, ec);
    if (ec) throw IoError("cache directory not writable: " + config_.cache_dir.string());
    cache = config_.cache_dir;
  }
  tracker_ = std::make_unique<EmbeddingTracker>(corpus_, tsne, std::move(stopwords), cache);
}

ApiService::Response ApiService::handle(std::string_view path, const Query& query) {
  try {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : path) {
      if (ch == '/') {
        if (!current.empty()) parts.push_back(std::move(current));
        current.clear();
      } else {
        current += ch;
      }
    }
    if (!current.empty()) parts.push_back(std::move(current));

    if (parts.size() < 2 || parts[0] != "api") throw ApiError{404, "NOT_FOUND", "no such endpoint", std::nullopt};
    if (parts.size() == 2 && parts[1] == "manifest") return manifest();
    if (parts.size() == 2 && parts[1] == "embeddings") return embeddings(query);
    if (parts.size() == 2 && parts[1] == "nearest") return nearest(query);
    if (parts[1] == "examples" && (parts.size() == 3 || parts.size() == 4)) {
      const auto* ex = corpus_.find(parts[2]);
      if (!ex) throw ApiError{404, "UNKNOWN_EXAMPLE", "unknown example '" + parts[2] + "'", "id"};
      if (parts.size() == 3) return example(*ex);
      if (parts[3] == "head_summary") return head_summary(*ex, query);
      if (parts[3] == "attention") return attention(*ex, query);
      if (parts[3] == "image") return image(*ex);
    }
    throw ApiError{404, "NOT_FOUND", "no such endpoint", std::nullopt};
  } catch (const ApiError& e) {
    return error_response(e);
  } catch (const IndexOutOfRange& e) {
    return error_response({400, "INDEX_OUT_OF_RANGE", e.what(), e.field()});
  } catch (const UnknownMetric& e) {
    return error_response({400, "UNKNOWN_METRIC", e.what(), "metric"});
  } catch (const TooFewPoints& e) {
    return error_response({400, "TOO_FEW_POINTS", e.what(), "layer"});
  } catch (const EmptyPool& e) {
    return error_response({400, "EMPTY_POOL", e.what(), "token"});
  } catch (const FilteredQuery& e) {
    return error_response({400, "FILTERED_QUERY", e.what(), "token"});
  } catch (const std::exception& e) {
    return error_response({500, "INTERNAL", e.what(), std::nullopt});
  }
}

ApiService::Response ApiService::manifest() const {
  const auto& m = corpus_.manifest;
  return json_response({{"model_name", m.model_name},
                        {"n_layers", m.n_layers},
                        {"n_heads", m.n_heads},
                        {"hidden_dim", m.hidden_dim},
                        {"format_version", m.format_version},
                        {"example_ids", m.example_ids},
                        {"metrics", registry_.names()}});
}

ApiService::Response ApiService::example(const ExampleRecord& ex) const {
  json tokens = json::array();
  for (const auto& t : ex.tokens) tokens.push_back(token_to_json(t));
  json masks = json::array();
  for (const auto& [idx, mask] : ex.masks) masks.push_back(idx);
  return json_response({{"id", ex.id},
                        {"length", ex.length()},
                        {"grid_rows", ex.grid_rows},
                        {"grid_cols", ex.grid_cols},
                        {"tokens", tokens},
                        {"metadata", ex.metadata},
                        {"image_url", ex.image_png ? json("/api/examples/" + ex.id + "/image") : json(nullptr)},
                        {"mask_token_indices", masks}});
}

std::string ApiService::summary_body(const ExampleRecord& ex, const std::string& metric, const std::set<int>& exclude) {
  const auto s = vllens::head_summary(ex, registry_, metric, exclude);
  ++summary_computations_;
  json values = json::array();
  for (Eigen::Index l = 0; l < s.values.rows(); ++l) values.push_back(vector_json(s.values.row(l).transpose()));
  json degenerate = json::array();
  for (const auto& [l, h] : s.degenerate) degenerate.push_back({l, h});
  json errors = json::array();
  for (const auto& [cell, message] : s.errors) errors.push_back({{"layer", cell.first}, {"head", cell.second}, {"message", message}});
  return json{{"example_id", ex.id},
              {"metric", metric},
              {"exclude", exclude},
              {"values", values},
              {"layer_means", vector_json(s.layer_means)},
              {"degenerate", degenerate},
              {"errors", errors}}
      .dump();
}

ApiService::Response ApiService::head_summary(const ExampleRecord& ex, const Query& query) {
  const auto metric = required(query, "metric");
  if (!registry_.contains(metric)) throw ApiError{400, "UNKNOWN_METRIC", "unknown metric '" + metric + "'", "metric"};
  const auto exclude = parse_index_list(param(query, "exclude").value_or(""), "exclude");
  for (int idx : exclude)
    if (idx < 0 || idx >= ex.length()) throw ApiError{400, "INDEX_OUT_OF_RANGE", "exclude index " + std::to_string(idx) + " out of range", "exclude"};

  const auto key = ex.id + "__" + metric + "__" + exclude_key(exclude);
  auto body = summaries_.get(key, [&] {
    if (config_.cache_dir.empty()) return summary_body(ex, metric, exclude);
    const auto dir = config_.cache_dir / "summaries";
    const auto file = dir / (key + ".json");
    if (fs::exists(file)) {
      const auto bytes = read_file(file);
      return std::string(bytes.begin(), bytes.end());
    }
    auto text = summary_body(ex, metric, exclude);
    fs::create_directories(dir);
    write_file(file, text);
    return text;
  });
  return {200, "application/json", std::move(body)};
}

ApiService::Response ApiService::attention(const ExampleRecord& ex, const Query& query) const {
  AttentionSelection sel;
  sel.layer = parse_int(required(query, "layer"), "layer");
  sel.head = parse_int(required(query, "head"), "head");
  sel.token_index = parse_int(required(query, "token"), "token");
  const auto direction = param(query, "direction").value_or("to");
  if (direction == "to" || direction == "TO_TOKEN")
    sel.direction = Direction::ToToken;
  else if (direction == "from" || direction == "FROM_TOKEN")
    sel.direction = Direction::FromToken;
  else
    throw ApiError{400, "BAD_PARAMETER", "direction must be 'to' or 'from'", "direction"};

  std::optional<Modality> filter;
  if (const auto f = param(query, "filter"); f && !f->empty()) {
    std::string upper = *f;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    filter = parse_modality(upper);
    if (!filter) throw ApiError{400, "BAD_PARAMETER", "filter must be 'vision' or 'language'", "filter"};
  }

  const auto map = attention_heatmap(ex, sel, filter);
  json grid = nullptr;
  if (map.grid) {
    grid = json::array();
    for (Eigen::Index r = 0; r < map.grid->rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < map.grid->cols(); ++c) {
        const double v = (*map.grid)(r, c);
        row.push_back(std::isnan(v) ? json(nullptr) : number(v));
      }
      grid.push_back(std::move(row));
    }
  }
  return json_response({{"example_id", ex.id},
                        {"layer", sel.layer},
                        {"head", sel.head},
                        {"token", sel.token_index},
                        {"direction", sel.direction == Direction::ToToken ? "to" : "from"},
                        {"filter", filter ? json(to_string(*filter)) : json(nullptr)},
                        {"values", vector_json(map.values)},
                        {"token_indices", map.token_indices},
                        {"grid", grid}});
}

ApiService::Response ApiService::embeddings(const Query& query) {
  const int layer = parse_int(required(query, "layer"), "layer");
  const auto points = tracker_->layer(layer);
  json list = json::array();
  for (const auto& p : *points)
    list.push_back({{"example_id", p.token.example_id},
                    {"token_index", p.token.token_index},
                    {"modality", to_string(p.modality)},
                    {"x", number(p.position.x())},
                    {"y", number(p.position.y())}});
  return json_response({{"layer", layer}, {"seed", tracker_->config().seed}, {"space", "tsne-2d"}, {"points", list}});
}

ApiService::Response ApiService::nearest(const Query& query) const {
  const auto example_id = required(query, "example");
  if (!corpus_.find(example_id)) throw ApiError{404, "UNKNOWN_EXAMPLE", "unknown example '" + example_id + "'", "example"};
  const int token = parse_int(required(query, "token"), "token");
  const int layer = parse_int(required(query, "layer"), "layer");
  const auto result = tracker_->nearest({example_id, token}, layer);
  return json_response({{"query", token_ref_json(corpus_, result.query)},
                        {"neighbor", token_ref_json(corpus_, result.neighbor)},
                        {"distance", number(result.distance)},
                        {"layer", result.layer},
                        {"space", "hidden"},
                        {"metric", "cosine"}});
}

ApiService::Response ApiService::image(const ExampleRecord& ex) const {
  if (!ex.image_png) throw ApiError{404, "NO_IMAGE", "example '" + ex.id + "' has no image", "id"};
  return {200, "image/png", std::string(ex.image_png->begin(), ex.image_png->end())};
}

void ApiService::mount(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get(R"(/api/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    Query query(req.params.begin(), req.params.end());
    auto out = handle(req.path, query);
    res.status = out.status;
    res.set_content(std::move(out.body), out.content_type);
  });
}

}  // namespace vllens
