// HTTP server for a dump. Flags fall back to VLLENS_* environment variables.

#include <CLI11.hpp>

#include <iostream>

#include "vllens/service.hpp"

#include <httplib.h>

int main(int argc, char** argv) {
  CLI::App app{"Serve a dump to the analysis UI"};
  vllens::ServiceConfig config;
  std::string stopwords;
  app.add_option("--dump", config.dump_path, "Dump directory")->envname("VLLENS_DUMP")->required();
  app.add_option("--bind", config.bind_address, "host:port")->envname("VLLENS_BIND");
  app.add_option("--cache", config.cache_dir, "Cache directory (default: <dump>/cache)")->envname("VLLENS_CACHE");
  app.add_option("--seed", config.tsne_seed, "t-SNE seed")->envname("VLLENS_SEED");
  app.add_option("--stopwords", stopwords, "Stopword file")->envname("VLLENS_STOPWORDS");
  app.add_option("--cors-origin", config.cors_origin, "Allowed CORS origin")->envname("VLLENS_CORS_ORIGIN");
  CLI11_PARSE(app, argc, argv);

  if (!stopwords.empty()) config.stopword_file = stopwords;
  if (config.cache_dir.empty()) config.cache_dir = config.dump_path / "cache";

  try {
    const auto [host, port] = vllens::parse_bind_address(config.bind_address);
    vllens::ApiService service(config);
    httplib::Server server;
    service.mount(server);
    std::cerr << "serving " << service.corpus().examples.size() << " examples on " << host << ":" << port << "\n";
    if (!server.listen(host, port)) {
      std::cerr << "error: cannot bind " << config.bind_address << "\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
