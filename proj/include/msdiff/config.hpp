#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msdiff/sim.hpp"

namespace msdiff {

// Suite names accepted in configs and on the command line.
inline const std::vector<std::string>& known_suites() {
  static const std::vector<std::string> names{
      "flux-certify", "spectral-certify", "identity-study", "mollifier-study",
      "twin-study",   "convergence-study", "simulate"};
  return names;
}

/// Sample counts and refinement ladders for the suites.
struct StudySettings {
  int flux_samples = 10000;
  int operator_samples = 1000;
  int spectral_samples = 10000;
  int error_samples = 1000;
  int ck_points = 1000;  // per axis of the (d, dbar) sweep
  std::vector<int> identity_cells{32, 64, 128};
  std::vector<double> mollifier_eps{0.2, 0.1, 0.05};
  std::vector<int> convergence_cells{64, 128, 256};
};

struct RunConfig {
  Scenario scenario;
  std::vector<std::string> suites;
  std::uint64_t seed = 0;
  std::string output = "out";
  int workers = 1;
  StudySettings studies;
  // Line of the shift entry, reused when the shift is revalidated after
  // command-line suite overrides.
  int delta_line = 0;
};

// Parses the YAML scenario format documented in docs/config.md. Throws
// ParseError for malformed text and ValidationError for violated invariants.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Checks that must be repeated when the suite list changes after parsing
// (the shift admissibility rule for twin-study). ValidationError on failure.
void validate_suites(const RunConfig& cfg);

}  // namespace msdiff
