#include "msdiff/sim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>

#include "msdiff/numerics.hpp"

namespace msdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double phase_of(const PeriodicGrid& g, const Point& x, const std::array<int, 3>& mode) {
  double p = 0.0;
  for (int a = 0; a < g.dim(); ++a) p += kTwoPi * mode[a] * x[a] / g.length(a);
  return p;
}

double hard_step_limit(const PeriodicGrid& g, const DiffusionMatrix& D) {
  return stable_time_step(g, D, kCflHardLimit);
}

void check_step(const PeriodicGrid& g, const DiffusionMatrix& D, double dt) {
  if (!(dt > 0.0)) throw CflViolation("time step must be positive");
  if (dt > hard_step_limit(g, D) * (1.0 + 1e-12))
    throw CflViolation("time step " + std::to_string(dt) + " exceeds the explicit stability limit " +
                       std::to_string(hard_step_limit(g, D)));
}

std::vector<FaceField> zero_faces(const PeriodicGrid& g, int n) {
  return std::vector<FaceField>(n, zero_vector_field(g));
}

double max_mass_drift(const Trajectory& t) {
  double worst = 0.0;
  for (const Snapshot& s : t.snapshots) {
    const auto m = s.state.masses();
    for (std::size_t i = 0; i < m.size(); ++i)
      worst = std::max(worst, std::abs(m[i] - t.initial_mass[i]));
  }
  return worst;
}

double max_simplex_defect(const Trajectory& t) {
  double worst = 0.0;
  for (const Snapshot& s : t.snapshots) worst = std::max(worst, s.state.simplex_defect());
  return worst;
}

void entropy_monotonicity(DiagnosticsSeries& d, std::span<const double> H) {
  for (std::size_t k = 1; k < H.size(); ++k) {
    const double rise = H[k] - H[k - 1];
    d.max_entropy_increase = k == 1 ? rise : std::max(d.max_entropy_increase, rise);
    if (rise > kEntropyStepTol) d.entropy_monotone = false;
  }
}

EntropyReport blank_row(double t) {
  EntropyReport r;
  r.time = t;
  r.H = r.H_rel = r.H_sym = r.F_delta = r.H_B = r.Q = r.identity_residual = kNaN;
  r.J1 = r.J2 = r.J3 = r.J4 = r.gronwall_lhs = r.gronwall_rhs = kNaN;
  return r;
}

double shift_entropy(const ConcentrationState& s, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) return kNaN;
  return renormalized_entropy(s, RenormFunction::log_shift(delta));
}

}  // namespace

double stable_time_step(const PeriodicGrid& grid, const DiffusionMatrix& D, double cfl) {
  const double h = grid.min_spacing();
  return cfl * h * h / (grid.dim() * D.max_coefficient());
}

double resolve_time_step(const Scenario& s) {
  if (!(s.t_final > 0.0)) throw CflViolation("final time must be positive");
  const PeriodicGrid g = s.grid();
  const double target = s.dt > 0.0 ? s.dt : stable_time_step(g, s.D, s.cfl);
  const double steps = std::max(1.0, std::ceil(s.t_final / target - 1e-9));
  const double dt = s.t_final / steps;
  check_step(g, s.D, dt);
  return dt;
}

ConcentrationState initial_state(const Scenario& s, bool perturbed) {
  const PeriodicGrid g = s.grid();
  const int n = s.species();
  ConcentrationState st{g, std::vector<Field>(n, Field(g.size(), 0.0)), 0.0};
  if (s.initial.preset == InitialData::Preset::Uniform) {
    for (Field& f : st.c) std::fill(f.begin(), f.end(), 1.0 / n);
  } else {
    if (static_cast<int>(s.initial.species.size()) != n)
      throw DimensionMismatch("initial profile count differs from species count");
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      const Point x = g.center(idx);
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const SpeciesProfile& p = s.initial.species[i];
        st.c[i][idx] = p.base + p.amplitude * std::cos(phase_of(g, x, p.mode) + p.phase);
        if (st.c[i][idx] < 0.0) throw InvalidComposition("initial profile is negative somewhere");
        total += st.c[i][idx];
      }
      if (!(total > 0.0)) throw InvalidComposition("initial profile vanishes identically in a cell");
      if (total != 1.0)
        for (int i = 0; i < n; ++i) st.c[i][idx] /= total;
    }
  }
  if (perturbed && s.perturbation.amplitude != 0.0) {
    const Perturbation& p = s.perturbation;
    if (p.species_plus < 0 || p.species_plus >= n || p.species_minus < 0 ||
        p.species_minus >= n || p.species_plus == p.species_minus)
      throw DimensionMismatch("perturbation species out of range");
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      const double w = p.amplitude * std::cos(phase_of(g, g.center(idx), p.mode));
      st.c[p.species_plus][idx] += w;
      st.c[p.species_minus][idx] -= w;
    }
  }
  st.validate(kSimplexTol);
  return st;
}

Stepper::Stepper(const DiffusionMatrix& D, const PeriodicGrid& grid, TimeScheme scheme)
    : D_(D),
      grid_(grid),
      scheme_(scheme),
      ws_(D.species()),
      flux_(zero_faces(grid, D.species())),
      flux2_(zero_faces(grid, D.species())),
      face_c_(D.species()),
      face_grad_(D.species()),
      face_J_(D.species()) {}

double Stepper::face_fluxes(const ConcentrationState& state, std::vector<FaceField>& out) {
  const int n = D_.species();
  if (state.species() != n || state.grid != grid_)
    throw GridMismatch("state does not match the stepper");
  double largest = 0.0;
  for (int a = 0; a < grid_.dim(); ++a) {
    const double inv_h = 1.0 / grid_.spacing(a);
    for (std::size_t idx = 0; idx < grid_.size(); ++idx) {
      const std::size_t nb = grid_.neighbor(idx, a, 1);
      double sum = 0.0, gsum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double l = state.c[i][idx], r = state.c[i][nb];
        face_c_[i] = 0.5 * (l + r);
        face_grad_[i] = (r - l) * inv_h;
        sum += face_c_[i];
        gsum += face_grad_[i];
      }
      for (int i = 0; i < n; ++i) {
        face_c_[i] /= sum;
        face_grad_[i] -= gsum / n;
      }
      ws_.solve_component(face_c_, face_grad_, D_, face_J_);
      double rest = 0.0;
      for (int i = 0; i + 1 < n; ++i) rest += face_J_[i];
      face_J_[n - 1] = -rest;
      for (int i = 0; i < n; ++i) {
        out[i].components[a][idx] = face_J_[i];
        largest = std::max(largest, std::abs(face_J_[i]));
      }
    }
  }
  return largest;
}

double Stepper::apply_update(const ConcentrationState& base, const std::vector<FaceField>& flux,
                             double dt, ConcentrationState& out) const {
  const int n = D_.species();
  for (int i = 0; i < n; ++i) {
    const Field div = face_divergence(flux[i], grid_);
    for (std::size_t idx = 0; idx < grid_.size(); ++idx)
      out.c[i][idx] = base.c[i][idx] - dt * div[idx];
  }
  // Positivity policy: clip undershoots, renormalize the cell, track the mass.
  double clipped = 0.0;
  for (std::size_t idx = 0; idx < grid_.size(); ++idx) {
    bool hit = false;
    for (int i = 0; i < n; ++i)
      if (out.c[i][idx] < kPositivityFloor) hit = true;
    if (!hit) continue;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double& v = out.c[i][idx];
      if (v < 0.0) {
        clipped += -v * grid_.cell_volume();
        v = 0.0;
      }
      sum += v;
    }
    for (int i = 0; i < n; ++i) out.c[i][idx] /= sum;
  }
  return clipped;
}

StepReport Stepper::step(ConcentrationState& state, double dt) {
  StepReport rep;
  rep.flux_inf_norm = face_fluxes(state, flux_);
  ConcentrationState next = state;
  if (scheme_ == TimeScheme::Heun) {
    ConcentrationState stage = state;
    apply_update(state, flux_, dt, stage);
    rep.flux_inf_norm = std::max(rep.flux_inf_norm, face_fluxes(stage, flux2_));
    for (std::size_t i = 0; i < flux_.size(); ++i)
      for (int a = 0; a < grid_.dim(); ++a)
        for (std::size_t idx = 0; idx < grid_.size(); ++idx)
          flux2_[i].components[a][idx] =
              0.5 * (flux_[i].components[a][idx] + flux2_[i].components[a][idx]);
    rep.clipped_mass = apply_update(state, flux2_, dt, next);
  } else {
    rep.clipped_mass = apply_update(state, flux_, dt, next);
  }
  if (rep.clipped_mass > kClipBudget)
    throw PositivityFailure("clipped mass " + std::to_string(rep.clipped_mass) +
                            " exceeds the per-step budget");
  next.time = state.time + dt;
  state = std::move(next);
  return rep;
}

ConcentrationState step(const ConcentrationState& state, const DiffusionMatrix& D, double dt) {
  check_step(state.grid, D, dt);
  Stepper s(D, state.grid);
  ConcentrationState out = state;
  s.step(out, dt);
  return out;
}

FluxField cell_fluxes(const ConcentrationState& state, const DiffusionMatrix& D) {
  const int n = state.species();
  if (n != D.species()) throw DimensionMismatch("state and diffusion matrix differ in species");
  const PeriodicGrid& g = state.grid;
  const int dim = g.dim();
  std::vector<VectorField> grads;
  grads.reserve(n);
  for (const Field& f : state.c) grads.push_back(gradient(f, g));
  FluxField J(n, zero_vector_field(g));
  FluxWorkspace ws(n);
  std::vector<double> c(n);
  Eigen::MatrixXd G(n, dim), out(n, dim);
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    for (int i = 0; i < n; ++i) {
      c[i] = state.c[i][idx];
      for (int a = 0; a < dim; ++a) G(i, a) = grads[i].components[a][idx];
    }
    G.rowwise() -= G.colwise().mean();
    ws.solve(c, G, D, out);
    out.row(n - 1) = -out.topRows(n - 1).colwise().sum();
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < dim; ++a) J[i].components[a][idx] = out(i, a);
  }
  return J;
}

namespace {

double cell_flux_norm(const FluxField& J, std::size_t cells) {
  double worst = 0.0;
  for (const VectorField& Ji : J)
    for (std::size_t idx = 0; idx < cells; ++idx) {
      double sq = 0.0;
      for (const Field& comp : Ji.components) sq += comp[idx] * comp[idx];
      worst = std::max(worst, std::sqrt(sq));
    }
  return worst;
}

}  // namespace

Trajectory simulate(const Scenario& s, ConcentrationState state) {
  const double dt = resolve_time_step(s);
  const auto steps = static_cast<std::size_t>(std::llround(s.t_final / dt));
  const int cadence = std::max(1, s.cadence);
  Trajectory traj;
  traj.dt = dt;
  traj.steps = steps;
  traj.initial_mass = state.masses();
  state.time = 0.0;

  auto record = [&](double clipped) {
    FluxField J = cell_fluxes(state, s.D);
    traj.flux_inf_norm = std::max(traj.flux_inf_norm, cell_flux_norm(J, state.grid.size()));
    traj.clipped_at_snapshot.push_back(clipped);
    traj.flux_norm_at_snapshot.push_back(traj.flux_inf_norm);
    traj.snapshots.push_back({state, std::move(J)});
  };
  record(0.0);

  Stepper stepper(s.D, state.grid, s.scheme);
  for (std::size_t k = 1; k <= steps; ++k) {
    const StepReport rep = stepper.step(state, dt);
    // Times come from the step index so twin runs share the exact mesh.
    state.time = k == steps ? s.t_final : static_cast<double>(k) * dt;
    traj.flux_inf_norm = std::max(traj.flux_inf_norm, rep.flux_inf_norm);
    traj.max_clipped_mass = std::max(traj.max_clipped_mass, rep.clipped_mass);
    traj.total_clipped_mass += rep.clipped_mass;
    if (k % cadence == 0 || k == steps) record(rep.clipped_mass);
  }
  return traj;
}

DiagnosticsSeries single_diagnostics(const Trajectory& t, double delta) {
  DiagnosticsSeries d;
  std::vector<double> H;
  for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
    const ConcentrationState& s = t.snapshots[k].state;
    EntropyReport r = blank_row(s.time);
    r.H = entropy(s);
    r.H_B = shift_entropy(s, delta);
    r.flux_inf_norm = t.flux_norm_at_snapshot[k];
    r.clipped_mass = t.clipped_at_snapshot[k];
    H.push_back(r.H);
    d.rows.push_back(r);
  }
  entropy_monotonicity(d, H);
  d.mass_drift = max_mass_drift(t);
  d.simplex_defect = max_simplex_defect(t);
  return d;
}

RunResult run(const Scenario& s, bool perturbed) {
  RunResult r;
  r.trajectory = simulate(s, initial_state(s, perturbed));
  r.diagnostics = single_diagnostics(r.trajectory, s.delta);
  return r;
}

TestFunction TestFunction::bump(const PeriodicGrid& grid, double t_lo, double t_hi,
                                double amplitude) {
  if (!(t_hi > t_lo)) throw MeshMismatch("test-function time window is empty");
  const int dim = grid.dim();
  const std::array<double, 3> L{grid.length(0), grid.length(1), grid.length(2)};
  const double mid = 0.5 * (t_lo + t_hi), half = 0.5 * (t_hi - t_lo);
  auto eta = [=](double t) {
    const double s = (t - mid) / half;
    const double q = 1.0 - s * s;
    return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
  };
  auto eta_prime = [=](double t) {
    const double s = (t - mid) / half;
    const double q = 1.0 - s * s;
    return q > 0.0 ? std::exp(-1.0 / q) * (-2.0 * s / (q * q)) / half : 0.0;
  };
  // The phase keeps the spatial factor from being orthogonal to pure sine
  // or pure cosine modes along any axis.
  constexpr double kPhase = 0.25 * std::numbers::pi;
  auto space = [=](const Point& x) {
    double p = 0.0;
    for (int a = 0; a < dim; ++a) p += std::cos(kTwoPi * x[a] / L[a] + kPhase);
    return 1.0 + amplitude * p;
  };
  TestFunction phi;
  phi.value = [=](const Point& x, double t) { return eta(t) * space(x); };
  phi.time_derivative = [=](const Point& x, double t) { return eta_prime(t) * space(x); };
  phi.gradient = [=](const Point& x, double t) {
    Point g{0.0, 0.0, 0.0};
    const double e = eta(t);
    if (e == 0.0) return g;
    for (int a = 0; a < dim; ++a)
      g[a] = -e * amplitude * kTwoPi / L[a] * std::sin(kTwoPi * x[a] / L[a] + kPhase);
    return g;
  };
  return phi;
}

TestFunction TestFunction::zero() {
  TestFunction phi;
  phi.value = [](const Point&, double) { return 0.0; };
  phi.time_derivative = [](const Point&, double) { return 0.0; };
  phi.gradient = [](const Point&, double) { return Point{0.0, 0.0, 0.0}; };
  return phi;
}

double weak_form_residual(const Trajectory& t, const RenormFunction& beta,
                          const TestFunction& phi) {
  if (t.snapshots.empty()) return 0.0;
  const PeriodicGrid& g = t.snapshots.front().state.grid;
  const int n = t.snapshots.front().state.species();
  const int dim = g.dim();
  const std::size_t cells = g.size();

  std::vector<double> residual(n, 0.0);
  std::vector<std::vector<double>> integrand(n);
  std::vector<double> times;
  Field phi_v(cells), phi_t(cells);
  std::vector<Point> phi_g(cells);
  Field cellwise(cells);
  for (const Snapshot& snap : t.snapshots) {
    const ConcentrationState& s = snap.state;
    times.push_back(s.time);
    bool active = false;
    for (std::size_t idx = 0; idx < cells; ++idx) {
      const Point x = g.center(idx);
      phi_v[idx] = phi.value(x, s.time);
      phi_t[idx] = phi.time_derivative(x, s.time);
      phi_g[idx] = phi.gradient(x, s.time);
      active = active || phi_v[idx] != 0.0 || phi_t[idx] != 0.0;
    }
    for (int i = 0; i < n; ++i) {
      if (!active) {
        integrand[i].push_back(0.0);
        continue;
      }
      const VectorField grad = gradient(s.c[i], g);
      const VectorField& J = snap.flux[i];
      for (std::size_t idx = 0; idx < cells; ++idx) {
        const double c = s.c[i][idx];
        double j_dot_gphi = 0.0, gc_dot_j = 0.0;
        for (int a = 0; a < dim; ++a) {
          j_dot_gphi += J.components[a][idx] * phi_g[idx][a];
          gc_dot_j += grad.components[a][idx] * J.components[a][idx];
        }
        cellwise[idx] = beta.value(c) * phi_t[idx] + beta.first(c) * j_dot_gphi +
                        beta.second(c) * gc_dot_j * phi_v[idx];
      }
      integrand[i].push_back(integrate(cellwise, g));
    }
  }
  const ConcentrationState& s0 = t.snapshots.front().state;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t idx = 0; idx < cells; ++idx)
      cellwise[idx] = beta.value(s0.c[i][idx]) * phi.value(g.center(idx), s0.time);
    double r = integrate(cellwise, g);
    std::vector<double> pieces;
    for (std::size_t k = 1; k < times.size(); ++k)
      pieces.push_back(0.5 * (times[k] - times[k - 1]) * (integrand[i][k] + integrand[i][k - 1]));
    r += pairwise_sum(pieces);
    total += std::abs(r);
  }
  return total;
}

DiagnosticsSeries twin_diagnostics(const Trajectory& a, const Trajectory& b,
                                   const DiffusionMatrix& D, double delta,
                                   const GronwallReport* certificate,
                                   const ErrorTermSeries* errors) {
  if (a.snapshots.size() != b.snapshots.size() || a.snapshots.empty())
    throw MeshMismatch("twin trajectories have different snapshot counts");
  DiagnosticsSeries d;
  std::vector<double> Ha, Hb;
  double q_int = 0.0, rhs_int = 0.0, prev_q = 0.0, prev_rhs = 0.0, hsym0 = 0.0;
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    const Snapshot& sa = a.snapshots[k];
    const Snapshot& sb = b.snapshots[k];
    if (sa.state.time != sb.state.time) throw MeshMismatch("twin snapshot times differ");
    EntropyReport r = blank_row(sa.state.time);
    r.H = entropy(sa.state);
    Ha.push_back(r.H);
    Hb.push_back(entropy(sb.state));
    r.H_rel = relative_entropy(sa.state, sb.state);
    r.H_sym = symmetrized_relative_entropy(sa.state, sb.state);
    r.F_delta = delta > 0.0 ? regularized_symrelen(sa.state, sb.state, delta) : kNaN;
    r.H_B = shift_entropy(sa.state, delta);
    const FluxField ua = velocities(sa.state, sa.flux);
    const FluxField ub = velocities(sb.state, sb.flux);
    r.Q = dissipation(sa.state, sb.state, ua, ub, D);
    const double rhs = identity_rhs(sa.state, sb.state, ua, ub, D);
    if (k == 0) {
      hsym0 = r.H_sym;
    } else {
      const double dt = sa.state.time - a.snapshots[k - 1].state.time;
      q_int += 0.5 * dt * (r.Q + prev_q);
      rhs_int += 0.5 * dt * (rhs + prev_rhs);
    }
    prev_q = r.Q;
    prev_rhs = rhs;
    const double dh = k == 0 ? 0.0 : r.H_sym - hsym0;
    r.identity_residual = std::abs(dh + q_int - rhs_int);
    if (errors != nullptr) {
      const ErrorTerms& e = errors->at_time[k];
      r.J1 = e.J1;
      r.J2 = e.J2;
      r.J3 = e.J3;
      r.J4 = e.J4;
    }
    if (certificate != nullptr) {
      r.gronwall_lhs = certificate->samples[k].F;
      r.gronwall_rhs = certificate->samples[k].F_bound;
    }
    r.flux_inf_norm = std::max(a.flux_norm_at_snapshot[k], b.flux_norm_at_snapshot[k]);
    r.clipped_mass = a.clipped_at_snapshot[k] + b.clipped_at_snapshot[k];
    d.rows.push_back(r);
  }
  DiagnosticsSeries da, db;
  entropy_monotonicity(da, Ha);
  entropy_monotonicity(db, Hb);
  d.entropy_monotone = da.entropy_monotone && db.entropy_monotone;
  d.max_entropy_increase = std::max(da.max_entropy_increase, db.max_entropy_increase);
  d.mass_drift = std::max(max_mass_drift(a), max_mass_drift(b));
  d.simplex_defect = std::max(max_simplex_defect(a), max_simplex_defect(b));
  return d;
}

TwinResult twin_experiment(const Scenario& s, const Perturbation& p, bool parallel) {
  Scenario perturbed = s;
  perturbed.perturbation = p;
  // Validate the shift before spending time on the runs.
  stability_constants(s.D, s.delta, 0.0);
  ConcentrationState a0 = initial_state(s, false);
  ConcentrationState b0 = initial_state(perturbed, true);

  TwinResult r;
  if (parallel) {
    auto other = std::async(std::launch::async, [&] { return simulate(perturbed, b0); });
    r.base = simulate(s, std::move(a0));
    r.perturbed = other.get();
  } else {
    r.base = simulate(s, std::move(a0));
    r.perturbed = simulate(perturbed, std::move(b0));
  }
  r.flux_bound = std::max(r.base.flux_inf_norm, r.perturbed.flux_inf_norm);
  r.constants = stability_constants(s.D, s.delta, r.flux_bound);
  r.certificate = gronwall_certificate(r.base, r.perturbed, s.D, s.delta, r.constants);
  r.errors = error_terms(r.base, r.perturbed, s.D, s.delta);
  r.diagnostics = twin_diagnostics(r.base, r.perturbed, s.D, s.delta, &r.certificate, &r.errors);
  return r;
}

}  // namespace msdiff
