#pragma once

#include <cstddef>
#include <vector>

#include "msdiff/grid.hpp"

namespace msdiff {

// Cell-centred molar fluxes, one vector field per species.
using FluxField = std::vector<VectorField>;

struct Snapshot {
  ConcentrationState state;
  FluxField flux;
};

/// Snapshots at diagnostic times plus run-wide flux and clipping records.
struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::vector<double> initial_mass;
  double dt = 0.0;
  std::size_t steps = 0;
  // max over steps, faces and species of |J_i|
  double flux_inf_norm = 0.0;
  double max_clipped_mass = 0.0;
  double total_clipped_mass = 0.0;
  // clipped mass of the step that produced each snapshot (0 for the first)
  std::vector<double> clipped_at_snapshot;
  // running flux maximum up to each snapshot
  std::vector<double> flux_norm_at_snapshot;

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(snapshots.size());
    for (const Snapshot& s : snapshots) t.push_back(s.state.time);
    return t;
  }
};

}  // namespace msdiff
