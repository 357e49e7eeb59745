// Command-line scenario runner.
//
//   msdiff CONFIG [--suite NAME]... [--seed N] [--out DIR] [--workers K]
//
// Exit status: 0 when every selected certification passes, 1 on a failed
// certification or runtime error, 2 on a malformed or invalid config.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msdiff/config.hpp"
#include "msdiff/suites.hpp"

namespace {

// Config failures are reported on stderr as a single JSON object so that
// scripts can pick out the offending line and invariant.
int config_failure(const char* kind, const std::string& invariant, int line, const std::string& what) {
  nlohmann::json report{{"error", kind}, {"line", line}, {"message", what}};
  if (!invariant.empty()) report["invariant"] = invariant;
  std::cerr << report.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maxwell-Stefan diffusion scenario runner and certification suites"};
  std::string config_path;
  std::vector<std::string> suites;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 0;
  app.add_option("config", config_path, "Scenario config (YAML)")->required();
  app.add_option("--suite", suites, "Suite to run; repeat to select several (overrides the config)")
      ->take_all();
  auto* seed_opt = app.add_option("--seed", seed, "Seed for randomized certifications");
  auto* out_opt = app.add_option("--out", out, "Output root; each run gets a fresh run-NNNN directory");
  auto* workers_opt =
      app.add_option("--workers", workers, "Number of suites run concurrently")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  msdiff::RunConfig cfg;
  try {
    cfg = msdiff::load_config(config_path);
    if (!suites.empty()) {
      cfg.suites = suites;
      msdiff::validate_suites(cfg);
    }
  } catch (const msdiff::ParseError& e) {
    return config_failure("parse", "", e.line(), e.what());
  } catch (const msdiff::ValidationError& e) {
    return config_failure("validation", e.invariant(), e.line(), e.what());
  }
  if (*seed_opt) cfg.seed = seed;
  if (*out_opt) cfg.output = out;
  if (*workers_opt) cfg.workers = workers;

  try {
    return msdiff::execute(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
