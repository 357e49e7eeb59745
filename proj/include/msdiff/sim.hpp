#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "msdiff/entropy.hpp"
#include "msdiff/grid.hpp"
#include "msdiff/msflux.hpp"
#include "msdiff/trajectory.hpp"

namespace msdiff {

enum class TimeScheme { Euler, Heun };

// p_i(x) = base + amplitude cos(2 pi sum_a mode_a x_a / L_a + phase); the
// initial composition is p normalized to the simplex cell by cell.
struct SpeciesProfile {
  double base = 0.0;
  double amplitude = 0.0;
  std::array<int, 3> mode{1, 0, 0};
  double phase = 0.0;
};

struct InitialData {
  enum class Preset { Uniform, Cosine };
  Preset preset = Preset::Uniform;
  std::vector<SpeciesProfile> species;  // Cosine only, one per species
};

// Adds +amplitude cos(...) to species_plus and subtracts it from species_minus.
struct Perturbation {
  double amplitude = 0.0;
  std::array<int, 3> mode{1, 0, 0};
  int species_plus = 0;
  int species_minus = 1;
};

inline constexpr double kDefaultCfl = 0.25;
// Forward Euler on the diffusive stencil is stable up to h^2 / (2 dim max D);
// steps above this are rejected outright.
inline constexpr double kCflHardLimit = 0.5;
inline constexpr double kPositivityFloor = -1e-12;
inline constexpr double kClipBudget = 1e-8;

struct Scenario {
  int dim = 1;
  std::array<int, 3> cells{64, 1, 1};
  std::array<double, 3> lengths{1.0, 1.0, 1.0};
  DiffusionMatrix D = DiffusionMatrix::uniform(2, 1.0);
  double delta = 0.05;
  InitialData initial;
  double t_final = 0.01;
  double dt = 0.0;  // fixed step if positive, otherwise from cfl
  double cfl = kDefaultCfl;
  int cadence = 1;  // steps between snapshots
  TimeScheme scheme = TimeScheme::Euler;
  Perturbation perturbation;

  PeriodicGrid grid() const { return PeriodicGrid(dim, cells, lengths); }
  int species() const { return D.species(); }
};

// cfl h_min^2 / (dim max D)
double stable_time_step(const PeriodicGrid& grid, const DiffusionMatrix& D, double cfl);

// The step actually used: T / ceil(T / dt_target). CflViolation when it
// exceeds the hard limit.
double resolve_time_step(const Scenario& s);

// Samples the preset at cell centres, optionally with the perturbation, and
// validates the result (InvalidComposition).
ConcentrationState initial_state(const Scenario& s, bool perturbed = false);

struct StepReport {
  double clipped_mass = 0.0;
  double flux_inf_norm = 0.0;  // max over faces and species of |J_i . n|
};

/// Conservative explicit update with face fluxes from the force-flux solve.
///
/// Face compositions are the mean of the two adjacent cells renormalized to
/// the simplex, face gradients are (c_R - c_L)/h projected onto zero sum, and
/// the last species takes minus the sum of the others so the face fluxes sum
/// to zero exactly. Owns its scratch; use one Stepper per thread.
class Stepper {
 public:
  Stepper(const DiffusionMatrix& D, const PeriodicGrid& grid, TimeScheme scheme = TimeScheme::Euler);

  // Advances state by dt in place. PositivityFailure when clipping exceeds
  // the budget.
  StepReport step(ConcentrationState& state, double dt);

  // Face-normal fluxes, one FaceField per species; returns the max |J|.
  double face_fluxes(const ConcentrationState& state, std::vector<FaceField>& out);

 private:
  double apply_update(const ConcentrationState& base, const std::vector<FaceField>& flux,
                      double dt, ConcentrationState& out) const;

  DiffusionMatrix D_;
  PeriodicGrid grid_;
  TimeScheme scheme_;
  FluxWorkspace ws_;
  std::vector<FaceField> flux_, flux2_;
  std::vector<double> face_c_, face_grad_, face_J_;
};

// One Euler step applied to a copy; CflViolation above
// the hard limit.
ConcentrationState step(const ConcentrationState& state, const DiffusionMatrix& D, double dt);

// Cell-centred fluxes from central gradients, zero-sum by construction.
FluxField cell_fluxes(const ConcentrationState& state, const DiffusionMatrix& D);

/// Diagnostics of one run or one twin pair, one row per snapshot.
struct DiagnosticsSeries {
  std::vector<EntropyReport> rows;
  bool entropy_monotone = true;
  double max_entropy_increase = 0.0;  // max_k H(t_{k+1}) - H(t_k)
  double mass_drift = 0.0;            // max_i |int c_i(t) - int c_i(0)| over snapshots
  double simplex_defect = 0.0;        // max over snapshots
};

inline constexpr double kEntropyStepTol = 1e-10;

// Single-run diagnostics; twin-only columns are NaN.
DiagnosticsSeries single_diagnostics(const Trajectory& t, double delta);

struct RunResult {
  Trajectory trajectory;
  DiagnosticsSeries diagnostics;
};

RunResult run(const Scenario& s, bool perturbed = false);

// Trajectory only, from an explicit initial state.
Trajectory simulate(const Scenario& s, ConcentrationState initial);

/// Smooth test function phi(x, t) with its time derivative and gradient.
struct TestFunction {
  SpaceTimeFunction value;
  SpaceTimeFunction time_derivative;
  std::function<Point(const Point&, double)> gradient;

  // eta(t) (1 + a sum_a cos(2 pi x_a / L_a + pi/4)) with eta a bump supported in
  // (t_lo, t_hi) inside (0, T).
  static TestFunction bump(const PeriodicGrid& grid, double t_lo, double t_hi,
                           double amplitude = 0.5);
  static TestFunction zero();
};

// Sum over species of |R_i|, R_i the discrete renormalized weak form
//   int beta(c^0) phi(.,0) + int int beta(c) phi_t + beta'(c) J.grad phi
//     + beta''(c) (grad c . J) phi
// with trapezoidal time integration over the snapshots.
double weak_form_residual(const Trajectory& t, const RenormFunction& beta, const TestFunction& phi);

struct TwinResult {
  Trajectory base;
  Trajectory perturbed;
  double flux_bound = 0.0;
  StabilityConstants constants;
  GronwallReport certificate;
  ErrorTermSeries errors;
  DiagnosticsSeries diagnostics;
};

// Twin diagnostics with the identity residual accumulated from t = 0.
DiagnosticsSeries twin_diagnostics(const Trajectory& a, const Trajectory& b,
                                   const DiffusionMatrix& D, double delta,
                                   const GronwallReport* certificate = nullptr,
                                   const ErrorTermSeries* errors = nullptr);

// Runs base and perturbed scenario (the perturbed run on a second thread when
// parallel is set) and certifies the pair. DeltaOutOfRange when the shift is
// not admissible.
TwinResult twin_experiment(const Scenario& s, const Perturbation& p, bool parallel = false);

}  // namespace msdiff
