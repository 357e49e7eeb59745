#include "msdiff/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "msdiff/numerics.hpp"

namespace msdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Cellwise integrand summed over species, then midpoint quadrature.
template <typename Cell>
double integrate_cells(const PeriodicGrid& grid, Cell&& cell) {
  Field values(grid.size());
  for (std::size_t idx = 0; idx < grid.size(); ++idx) values[idx] = cell(idx);
  return integrate(values, grid);
}

double trapezoid(std::span<const double> t, std::span<const double> f) {
  std::vector<double> pieces;
  pieces.reserve(t.size());
  for (std::size_t k = 1; k < t.size(); ++k) pieces.push_back(0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]));
  return pairwise_sum(pieces);
}

void gather(const ConcentrationState& s, std::size_t idx, std::vector<double>& out) {
  for (int i = 0; i < s.species(); ++i) out[i] = s.c[i][idx];
}

void gather(const FluxField& f, std::size_t idx, Eigen::MatrixXd& out) {
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int a = 0; a < f[i].dim(); ++a) out(static_cast<Eigen::Index>(i), a) = f[i].components[a][idx];
}

void require_mesh(const Trajectory& a, const Trajectory& b) {
  if (a.snapshots.empty() || a.snapshots.size() != b.snapshots.size())
    throw MeshMismatch("trajectories have different snapshot counts");
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    require_same_grid(a.snapshots[k].state, b.snapshots[k].state);
    if (a.snapshots[k].state.time != b.snapshots[k].state.time)
      throw MeshMismatch("trajectories have different snapshot times");
  }
}

std::size_t snapshot_at(const Trajectory& a, double t) {
  const double scale = std::max(1.0, std::abs(a.snapshots.back().state.time));
  for (std::size_t k = 0; k < a.snapshots.size(); ++k)
    if (std::abs(a.snapshots[k].state.time - t) <= 1e-12 * scale) return k;
  throw MeshMismatch("window endpoint is not a snapshot time");
}

double snapshot_flux_norm(const Trajectory& t) {
  double worst = 0.0;
  for (const Snapshot& s : t.snapshots)
    for (const VectorField& Ji : s.flux)
      for (std::size_t idx = 0; idx < s.state.grid.size(); ++idx) {
        double sq = 0.0;
        for (const Field& comp : Ji.components) sq += comp[idx] * comp[idx];
        worst = std::max(worst, std::sqrt(sq));
      }
  return worst;
}

}  // namespace

RenormFunction RenormFunction::identity() {
  return {"identity", [](double s) { return s; }, [](double) { return 1.0; },
          [](double) { return 0.0; }, [](double s) { return 0.5 * s * s; }};
}

RenormFunction RenormFunction::log_shift(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DeltaOutOfRange("log shift needs delta in (0, 1)");
  const double base = delta * std::log(delta) - delta;
  return {"log_shift(" + std::to_string(delta) + ")",
          [delta](double s) { return std::log(s + delta); },
          [delta](double s) { return 1.0 / (s + delta); },
          [delta](double s) { return -1.0 / ((s + delta) * (s + delta)); },
          [delta, base](double s) { return (s + delta) * std::log(s + delta) - (s + delta) - base; }};
}

RenormFunction RenormFunction::square() {
  return {"square", [](double s) { return s * s; }, [](double s) { return 2.0 * s; },
          [](double) { return 2.0; }, [](double s) { return s * s * s / 3.0; }};
}

double entropy(const ConcentrationState& state) {
  return integrate_cells(state.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (const Field& f : state.c) {
      const double v = f[idx];
      s += v > 0.0 ? v * (std::log(v) - 1.0) : 0.0;
    }
    return s;
  });
}

double relative_entropy(const ConcentrationState& a, const ConcentrationState& b) {
  require_same_grid(a, b);
  return integrate_cells(a.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (int i = 0; i < a.species(); ++i) {
      const double x = a.c[i][idx], y = b.c[i][idx];
      if (x > 0.0) {
        if (y <= 0.0) return kInf;
        s += x * std::log(x / y);
      }
      s -= x - y;
    }
    return s;
  });
}

double symmetrized_relative_entropy(const ConcentrationState& a, const ConcentrationState& b,
                                    BothZeroConvention both_zero) {
  require_same_grid(a, b);
  return integrate_cells(a.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (int i = 0; i < a.species(); ++i) {
      const double x = a.c[i][idx], y = b.c[i][idx];
      const bool x0 = x <= 0.0, y0 = y <= 0.0;
      if (x0 && y0) {
        if (both_zero == BothZeroConvention::Infinite) return kInf;
        continue;
      }
      if (x0 || y0) return kInf;
      s += (std::log(x) - std::log(y)) * (x - y);
    }
    return s;
  });
}

double regularized_symrelen(const ConcentrationState& a, const ConcentrationState& b,
                            double delta) {
  if (!(delta > 0.0)) throw DeltaNonpositive("regularization shift must be positive");
  require_same_grid(a, b);
  return integrate_cells(a.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (int i = 0; i < a.species(); ++i) {
      const double x = a.c[i][idx], y = b.c[i][idx];
      s += (std::log(x + delta) - std::log(y + delta)) * (x - y);
    }
    return s;
  });
}

double renormalized_entropy(const ConcentrationState& state, const RenormFunction& beta) {
  return integrate_cells(state.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (const Field& f : state.c) s += beta.antiderivative(f[idx]);
    return s;
  });
}

double renorm_symrelen(const ConcentrationState& a, const ConcentrationState& b,
                       const RenormFunction& beta) {
  require_same_grid(a, b);
  return integrate_cells(a.grid, [&](std::size_t idx) {
    double s = 0.0;
    for (int i = 0; i < a.species(); ++i) {
      const double x = a.c[i][idx], y = b.c[i][idx];
      s += (beta.value(x) - beta.value(y)) * (x - y);
    }
    return s;
  });
}

FluxField velocities(const ConcentrationState& state, const FluxField& flux, double threshold) {
  FluxField u(flux.size());
  for (std::size_t i = 0; i < flux.size(); ++i) {
    u[i] = zero_vector_field(state.grid);
    for (int a = 0; a < flux[i].dim(); ++a)
      for (std::size_t idx = 0; idx < state.grid.size(); ++idx) {
        const double c = state.c[i][idx];
        if (c > threshold) u[i].components[a][idx] = flux[i].components[a][idx] / c;
      }
  }
  return u;
}

double dissipation_density(std::span<const double> c, std::span<const double> cbar,
                           const Eigen::Ref<const Eigen::MatrixXd>& u,
                           const Eigen::Ref<const Eigen::MatrixXd>& ubar,
                           const DiffusionMatrix& D) {
  const int n = D.species();
  double q = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double w = (c[i] * c[j] + cbar[i] * cbar[j]) * D.inverse(i, j);
      const double diff = ((u.row(i) - ubar.row(i)) - (u.row(j) - ubar.row(j))).squaredNorm();
      // (i,j) and (j,i) each carry 1/(2 D_ij)
      q += w * diff;
    }
  return q;
}

double identity_rhs_density(std::span<const double> c, std::span<const double> cbar,
                            const Eigen::Ref<const Eigen::MatrixXd>& u,
                            const Eigen::Ref<const Eigen::MatrixXd>& ubar,
                            const DiffusionMatrix& D) {
  const int n = D.species();
  double r = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto du_i = u.row(i) - ubar.row(i);
      const double inner = du_i.dot(c[i] * (ubar.row(i) - ubar.row(j)) + cbar[i] * (u.row(i) - u.row(j)));
      r -= (c[j] - cbar[j]) * inner * D.inverse(i, j);
    }
  return r;
}

namespace {

template <typename Density>
double integrate_pair(const ConcentrationState& a, const ConcentrationState& b, const FluxField& u,
                      const FluxField& ubar, const DiffusionMatrix& D, Density density) {
  require_same_grid(a, b);
  const int n = a.species();
  if (n != D.species() || static_cast<int>(u.size()) != n || static_cast<int>(ubar.size()) != n)
    throw GridMismatch("velocity fields do not match the states");
  const int dim = a.grid.dim();
  std::vector<double> c(n), cb(n);
  Eigen::MatrixXd U(n, dim), Ub(n, dim);
  return integrate_cells(a.grid, [&](std::size_t idx) {
    gather(a, idx, c);
    gather(b, idx, cb);
    gather(u, idx, U);
    gather(ubar, idx, Ub);
    return density(std::span<const double>(c), std::span<const double>(cb), U, Ub, D);
  });
}

}  // namespace

double dissipation(const ConcentrationState& a, const ConcentrationState& b, const FluxField& u,
                   const FluxField& ubar, const DiffusionMatrix& D) {
  return integrate_pair(a, b, u, ubar, D, dissipation_density);
}

double identity_rhs(const ConcentrationState& a, const ConcentrationState& b, const FluxField& u,
                    const FluxField& ubar, const DiffusionMatrix& D) {
  return integrate_pair(a, b, u, ubar, D, identity_rhs_density);
}

IdentityResidual identity_residual(const Trajectory& a, const Trajectory& b,
                                   const DiffusionMatrix& D, double t0, double t1) {
  require_mesh(a, b);
  const std::size_t k0 = snapshot_at(a, t0), k1 = snapshot_at(a, t1);
  if (k1 < k0) throw MeshMismatch("window is reversed");
  std::vector<double> t, q, r;
  for (std::size_t k = k0; k <= k1; ++k) {
    const Snapshot& sa = a.snapshots[k];
    const Snapshot& sb = b.snapshots[k];
    const FluxField ua = velocities(sa.state, sa.flux);
    const FluxField ub = velocities(sb.state, sb.flux);
    t.push_back(sa.state.time);
    q.push_back(dissipation(sa.state, sb.state, ua, ub, D));
    r.push_back(identity_rhs(sa.state, sb.state, ua, ub, D));
  }
  IdentityResidual out;
  out.t0 = a.snapshots[k0].state.time;
  out.t1 = a.snapshots[k1].state.time;
  out.delta_hsym = symmetrized_relative_entropy(a.snapshots[k1].state, b.snapshots[k1].state) -
                   symmetrized_relative_entropy(a.snapshots[k0].state, b.snapshots[k0].state);
  if (k0 == k1 && !std::isfinite(out.delta_hsym)) out.delta_hsym = 0.0;
  out.q_integral = trapezoid(t, q);
  out.rhs_integral = trapezoid(t, r);
  out.residual = std::abs(out.delta_hsym + out.q_integral - out.rhs_integral);
  return out;
}

bool ErrorTerms::within_bounds(double slack) const {
  return J1 + J2 <= bound12 + slack && J3 <= bound3 + slack && J4 <= bound4 + slack;
}

ErrorTerms& ErrorTerms::operator+=(const ErrorTerms& o) {
  J1 += o.J1;
  J2 += o.J2;
  J3 += o.J3;
  J4 += o.J4;
  bound12 += o.bound12;
  bound3 += o.bound3;
  bound4 += o.bound4;
  Y += o.Y;
  X += o.X;
  return *this;
}

ErrorTerms operator*(double s, ErrorTerms t) {
  t.J1 *= s;
  t.J2 *= s;
  t.J3 *= s;
  t.J4 *= s;
  t.bound12 *= s;
  t.bound3 *= s;
  t.bound4 *= s;
  t.Y *= s;
  t.X *= s;
  return t;
}

ErrorTerms error_term_density(std::span<const double> d, std::span<const double> dbar,
                              const Eigen::Ref<const Eigen::MatrixXd>& v,
                              const Eigen::Ref<const Eigen::MatrixXd>& vbar,
                              const DiffusionMatrix& D, const StabilityConstants& k) {
  const int n = D.species();
  const double delta = k.delta;
  ErrorTerms e;
  for (int i = 0; i < n; ++i) {
    const auto dv_i = v.row(i) - vbar.row(i);
    const double dv2 = dv_i.squaredNorm();
    double inv_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv = D.inverse(i, j);
      const double dd_j = d[j] - dbar[j];
      inv_sum += inv;
      e.J1 -= d[i] * inv * dd_j * dv_i.dot(vbar.row(i) - vbar.row(j));
      e.J2 -= dbar[i] * inv * dd_j * dv_i.dot(v.row(i) - v.row(j));
      e.J4 -= delta * inv * (d[i] + dbar[i]) *
              dv_i.dot(d[j] / d[i] * v.row(j) - dbar[j] / dbar[i] * vbar.row(j));
    }
    e.J3 += delta * inv_sum * (d[i] + dbar[i]) * dv2;
    e.Y += (d[i] + dbar[i]) * dv2;
    e.X += (d[i] - dbar[i]) * (d[i] - dbar[i]);
  }
  const double d2 = delta * delta;
  e.bound12 = 0.25 * k.mu * e.Y + k.C1 / d2 * e.X;
  e.bound3 = delta * k.row_max * e.Y;
  e.bound4 = (0.5 * k.mu + k.C2 * delta) * e.Y + k.C3 / (d2 * d2) * e.X;
  return e;
}

ErrorTerms error_terms(const ConcentrationState& a, const FluxField& Ja,
                       const ConcentrationState& b, const FluxField& Jb,
                       const DiffusionMatrix& D, const StabilityConstants& k) {
  require_same_grid(a, b);
  const int n = a.species();
  const int dim = a.grid.dim();
  const double delta = k.delta;
  std::vector<double> d(n), db(n);
  Eigen::MatrixXd V(n, dim), Vb(n, dim);
  std::vector<ErrorTerms> cells(a.grid.size());
  for (std::size_t idx = 0; idx < a.grid.size(); ++idx) {
    gather(a, idx, d);
    gather(b, idx, db);
    gather(Ja, idx, V);
    gather(Jb, idx, Vb);
    for (int i = 0; i < n; ++i) {
      d[i] += delta;
      db[i] += delta;
      V.row(i) /= d[i];
      Vb.row(i) /= db[i];
    }
    cells[idx] = error_term_density(d, db, V, Vb, D, k);
  }
  // Pairwise reduction per component keeps the result reproducible.
  auto reduce = [&](double ErrorTerms::*member) {
    Field vals(cells.size());
    for (std::size_t idx = 0; idx < cells.size(); ++idx) vals[idx] = cells[idx].*member;
    return integrate(vals, a.grid);
  };
  ErrorTerms out;
  out.J1 = reduce(&ErrorTerms::J1);
  out.J2 = reduce(&ErrorTerms::J2);
  out.J3 = reduce(&ErrorTerms::J3);
  out.J4 = reduce(&ErrorTerms::J4);
  out.bound12 = reduce(&ErrorTerms::bound12);
  out.bound3 = reduce(&ErrorTerms::bound3);
  out.bound4 = reduce(&ErrorTerms::bound4);
  out.Y = reduce(&ErrorTerms::Y);
  out.X = reduce(&ErrorTerms::X);
  return out;
}

ErrorTermSeries error_terms(const Trajectory& a, const Trajectory& b, const DiffusionMatrix& D,
                            double delta) {
  if (!(delta > 0.0)) throw DeltaNonpositive("error terms need a positive shift");
  require_mesh(a, b);
  const double flux_bound = std::max({a.flux_inf_norm, b.flux_inf_norm, snapshot_flux_norm(a),
                                      snapshot_flux_norm(b)});
  ErrorTermSeries s;
  s.constants = evaluate_constants(D, delta, flux_bound);
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    const Snapshot& sa = a.snapshots[k];
    const Snapshot& sb = b.snapshots[k];
    s.times.push_back(sa.state.time);
    s.at_time.push_back(error_terms(sa.state, sa.flux, sb.state, sb.flux, D, s.constants));
  }
  for (std::size_t k = 1; k < s.times.size(); ++k) {
    ErrorTerms mid = s.at_time[k];
    mid += s.at_time[k - 1];
    s.integrated += (0.5 * (s.times[k] - s.times[k - 1])) * mid;
  }
  return s;
}

bool csiszar_kullback_check(double d, double dbar) {
  const double diff = d - dbar;
  return diff * diff <= diff * (std::log(d) - std::log(dbar));
}

double logarithmic_mean(double d, double dbar) {
  if (d == dbar) return d;
  return (d - dbar) / (std::log(d) - std::log(dbar));
}

GronwallReport gronwall_certificate(const Trajectory& a, const Trajectory& b,
                                    const DiffusionMatrix& D, double delta,
                                    const StabilityConstants& constants) {
  if (!(delta > 0.0 && delta < 1.0) || constants.delta != delta || !constants.admissible)
    throw DeltaOutOfRange("constants are not admissible for this delta");
  require_mesh(a, b);
  if (D.species() != a.snapshots.front().state.species())
    throw DimensionMismatch("diffusion matrix and trajectories differ in species count");
  GronwallReport rep;
  rep.constants = constants;
  const double d4 = delta * delta * delta * delta;
  const double growth = constants.C5 / d4;
  std::vector<double> t, x;
  double F0 = 0.0;
  rep.holds = true;
  rep.min_bound_margin = kInf;
  rep.min_log_envelope_margin = kInf;
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    const ConcentrationState& sa = a.snapshots[k].state;
    const ConcentrationState& sb = b.snapshots[k].state;
    GronwallSample g;
    g.t = sa.time;
    g.F = regularized_symrelen(sa, sb, delta);
    g.X = integrate_cells(sa.grid, [&](std::size_t idx) {
      double s = 0.0;
      for (int i = 0; i < sa.species(); ++i) {
        const double diff = sa.c[i][idx] - sb.c[i][idx];
        s += diff * diff;
      }
      return s;
    });
    t.push_back(g.t);
    x.push_back(g.X);
    if (k == 0) F0 = g.F;
    g.X_integral = trapezoid(t, x);
    g.F_bound = F0 + growth * g.X_integral;
    g.bound_holds = g.F <= g.F_bound;
    g.envelope_applies = F0 > 0.0;
    if (g.envelope_applies) {
      g.log_envelope = std::log((1.0 + delta) * F0) + (1.0 + delta) * growth * (g.t - t.front());
      g.envelope_holds = g.X == 0.0 || std::log(g.X) <= g.log_envelope;
      if (g.X > 0.0)
        rep.min_log_envelope_margin = std::min(rep.min_log_envelope_margin, g.log_envelope - std::log(g.X));
    } else {
      g.log_envelope = -kInf;
      g.envelope_holds = true;
    }
    rep.min_bound_margin = std::min(rep.min_bound_margin, g.F_bound - g.F);
    rep.holds = rep.holds && g.bound_holds && g.envelope_holds;
    rep.samples.push_back(g);
  }
  return rep;
}

void write_diagnostics_csv(std::ostream& out, std::span<const EntropyReport> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "t,H,H_sym,F_delta,Q,J1,J2,J3,J4,gronwall_lhs,gronwall_rhs,flux_inf_norm,clipped_mass\n";
  for (const EntropyReport& r : rows) {
    os << r.time << ',' << r.H << ',' << r.H_sym << ',' << r.F_delta << ',' << r.Q << ',' << r.J1
       << ',' << r.J2 << ',' << r.J3 << ',' << r.J4 << ',' << r.gronwall_lhs << ','
       << r.gronwall_rhs << ',' << r.flux_inf_norm << ',' << r.clipped_mass << '\n';
  }
  out << os.str();
}

namespace {
// JSON has no NaN or infinity; those become null.
nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json to_json(const EntropyReport& r) {
  return {{"t", num(r.time)},       {"H", num(r.H)},
          {"H_rel", num(r.H_rel)},  {"H_sym", num(r.H_sym)},
          {"F_delta", num(r.F_delta)}, {"H_B", num(r.H_B)},
          {"Q", num(r.Q)},          {"identity_residual", num(r.identity_residual)},
          {"J1", num(r.J1)},        {"J2", num(r.J2)},
          {"J3", num(r.J3)},        {"J4", num(r.J4)},
          {"gronwall_lhs", num(r.gronwall_lhs)}, {"gronwall_rhs", num(r.gronwall_rhs)},
          {"flux_inf_norm", num(r.flux_inf_norm)}, {"clipped_mass", num(r.clipped_mass)}};
}

nlohmann::json to_json(const StabilityConstants& k) {
  return {{"n", k.n},           {"delta", k.delta},   {"mu", k.mu},
          {"M", k.M},           {"row_max", k.row_max}, {"flux_bound", k.flux_bound},
          {"velocity_bound", k.velocity_bound},
          {"C1", k.C1},         {"C2", k.C2},         {"C3", k.C3},
          {"C4", k.C4},         {"C5", k.C5},
          {"dissipation_correction", k.dissipation_correction},
          {"delta_max", k.delta_max}, {"admissible", k.admissible}};
}

nlohmann::json to_json(const GronwallReport& rep) {
  nlohmann::json samples = nlohmann::json::array();
  for (const GronwallSample& g : rep.samples)
    samples.push_back({{"t", num(g.t)},
                       {"F", num(g.F)},
                       {"X", num(g.X)},
                       {"X_integral", num(g.X_integral)},
                       {"F_bound", num(g.F_bound)},
                       {"log_envelope", num(g.log_envelope)},
                       {"bound_holds", g.bound_holds},
                       {"envelope_applies", g.envelope_applies},
                       {"envelope_holds", g.envelope_holds}});
  return {{"constants", to_json(rep.constants)},
          {"holds", rep.holds},
          {"min_bound_margin", num(rep.min_bound_margin)},
          {"min_log_envelope_margin", num(rep.min_log_envelope_margin)},
          {"samples", samples}};
}

}  // namespace msdiff
