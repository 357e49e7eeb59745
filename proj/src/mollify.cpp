#include "msdiff/mollify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace msdiff {

namespace {

double raw_bump(double s) {
  const double q = 1.0 - s * s;
  return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
}

// Midpoint nodes on [lo, hi] with rho weights folded in.
struct Nodes {
  std::vector<double> at;
  std::vector<double> weight;
};

Nodes kernel_nodes(int m, double lo, double hi) {
  Nodes n;
  const double w = (hi - lo) / m;
  for (int k = 0; k < m; ++k) {
    const double s = lo + (k + 0.5) * w;
    n.at.push_back(s);
    n.weight.push_back(Mollifier::profile(s) * w);
  }
  return n;
}

void check_resolution(const Mollifier& m, const MollifyQuadrature& q) {
  const double h = std::max(q.grid.min_spacing(), q.time_step());
  if (m.epsilon() < 2.0 * h)
    throw EpsilonTooSmallForGrid("mollifier scale is below two grid cells");
  if (q.kernel_nodes < 2) throw EpsilonTooSmallForGrid("need at least two kernel nodes per axis");
}

double wrap_coord(double v, double period) {
  double r = std::fmod(v, period);
  if (r < 0.0) r += period;
  return r;
}

// Sum over the tensor grid of spatial kernel nodes: body(offset, weight).
template <typename Body>
void for_each_spatial_node(int dim, const Nodes& z, Body&& body) {
  const int m = static_cast<int>(z.at.size());
  int total = 1;
  for (int a = 0; a < dim; ++a) total *= m;
  for (int flat = 0; flat < total; ++flat) {
    Point off{0.0, 0.0, 0.0};
    double w = 1.0;
    int rest = flat;
    for (int a = 0; a < dim; ++a) {
      const int k = rest % m;
      rest /= m;
      off[a] = z.at[k];
      w *= z.weight[k];
    }
    body(off, w);
  }
}

}  // namespace

Mollifier::Mollifier(double epsilon) : eps_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw EpsilonTooSmallForGrid("mollifier scale must be positive");
}

double Mollifier::normalization() {
  // The bump is flat to all orders at +-1, so the midpoint rule converges
  // faster than any power of the node count.
  static const double z = [] {
    constexpr int m = 4096;
    std::vector<double> v(m);
    for (int k = 0; k < m; ++k) v[k] = raw_bump(-1.0 + (k + 0.5) * 2.0 / m) * 2.0 / m;
    return pairwise_sum(v);
  }();
  return z;
}

double Mollifier::profile(double s) { return raw_bump(s) / normalization(); }

double mollify_spacetime(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                         const Mollifier& m, const MollifyQuadrature& q) {
  check_resolution(m, q);
  const PeriodicGrid& g = q.grid;
  const int dim = g.dim();
  const double eps = m.epsilon();
  const double dt = q.time_step();
  const int nt = static_cast<int>(std::ceil((q.t_max + eps) / dt));
  const Nodes z = kernel_nodes(q.kernel_nodes, -1.0, 1.0);

  std::vector<double> per_time(nt);
  std::vector<double> per_cell(g.size());
  for (int k = 0; k < nt; ++k) {
    const double t = (k + 0.5) * dt;
    // tau = t + eps s must stay positive: f is extended by zero before t = 0.
    const Nodes s = kernel_nodes(q.kernel_nodes, std::max(-1.0, -t / eps), 1.0);
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      const Point x = g.center(idx);
      double acc = 0.0;
      for_each_spatial_node(dim, z, [&](const Point& off, double wz) {
        Point y{}, mid{};
        for (int a = 0; a < 3; ++a) {
          y[a] = a < dim ? wrap_coord(x[a] + eps * off[a], g.length(a)) : 0.0;
          mid[a] = a < dim ? wrap_coord(x[a] + 0.5 * eps * off[a], g.length(a)) : 0.0;
        }
        for (std::size_t ks = 0; ks < s.at.size(); ++ks) {
          const double tau = t + eps * s.at[ks];
          acc += wz * s.weight[ks] * f(y, tau) * phi(mid, 0.5 * (t + tau));
        }
      });
      per_cell[idx] = acc;
    }
    per_time[k] = integrate(per_cell, g) * dt;
  }
  return pairwise_sum(per_time);
}

double plain_spacetime_integral(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                                const MollifyQuadrature& q) {
  const PeriodicGrid& g = q.grid;
  const double dt = q.time_step();
  const int nt = static_cast<int>(std::ceil(q.t_max / dt));
  std::vector<double> per_time(nt);
  Field cell(g.size());
  for (int k = 0; k < nt; ++k) {
    const double t = (k + 0.5) * dt;
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      const Point x = g.center(idx);
      cell[idx] = f(x, t) * phi(x, t);
    }
    per_time[k] = integrate(cell, g) * dt;
  }
  return pairwise_sum(per_time);
}

double initial_trace_mollification(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                                   const Mollifier& m, const MollifyQuadrature& q) {
  check_resolution(m, q);
  const PeriodicGrid& g = q.grid;
  const int dim = g.dim();
  const double eps = m.epsilon();
  const Nodes z = kernel_nodes(q.kernel_nodes, -1.0, 1.0);
  // tau = eps sigma with sigma in [0, 1]; rho(-sigma) = rho(sigma).
  const Nodes sigma = kernel_nodes(q.kernel_nodes, 0.0, 1.0);
  Field cell(g.size());
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const Point x = g.center(idx);
    double acc = 0.0;
    for_each_spatial_node(dim, z, [&](const Point& off, double wz) {
      Point y{}, mid{};
      for (int a = 0; a < 3; ++a) {
        y[a] = a < dim ? wrap_coord(x[a] + eps * off[a], g.length(a)) : 0.0;
        mid[a] = a < dim ? wrap_coord(x[a] + 0.5 * eps * off[a], g.length(a)) : 0.0;
      }
      for (std::size_t k = 0; k < sigma.at.size(); ++k) {
        const double tau = eps * sigma.at[k];
        acc += wz * sigma.weight[k] * f(y, tau) * phi(mid, 0.5 * tau);
      }
    });
    cell[idx] = acc;
  }
  return integrate(cell, g);
}

double initial_trace_integral(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                              const MollifyQuadrature& q) {
  Field cell(q.grid.size());
  for (std::size_t idx = 0; idx < q.grid.size(); ++idx) {
    const Point x = q.grid.center(idx);
    cell[idx] = f(x, 0.0) * phi(x, 0.0);
  }
  return integrate(cell, q.grid);
}

DoubledTestFunction::DoubledTestFunction(SpaceTimeFunction phi, Mollifier m, int dim,
                                         std::array<double, 3> period)
    : phi_(std::move(phi)), m_(m), dim_(dim), period_(period) {
  if (dim < 1 || dim > 3) throw DimensionMismatch("test function dimension must be 1, 2 or 3");
}

double DoubledTestFunction::wrap(double v, int axis) const { return wrap_coord(v, period_[axis]); }

double DoubledTestFunction::minimal_image(double v, int axis) const {
  const double p = period_[axis];
  return v - p * std::round(v / p);
}

double DoubledTestFunction::kernel(const Point& x, double t, const Point& y, double tau) const {
  double k = m_.kernel(t - tau);
  for (int a = 0; a < dim_; ++a) k *= m_.kernel(minimal_image(wrap(x[a], a) - wrap(y[a], a), a));
  return k;
}

double DoubledTestFunction::base(const Point& x, double t, const Point& y, double tau) const {
  Point mid{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) {
    const double ya = wrap(y[a], a);
    mid[a] = wrap(ya + 0.5 * minimal_image(wrap(x[a], a) - ya, a), a);
  }
  return phi_(mid, 0.5 * (t + tau));
}

double DoubledTestFunction::operator()(const Point& x, double t, const Point& y,
                                       double tau) const {
  const double k = kernel(x, t, y, tau);
  return k == 0.0 ? 0.0 : k * base(x, t, y, tau);
}

RateStudy fit_rate(std::vector<RateRow> rows) {
  RateStudy study;
  std::vector<double> eps, err;
  for (const RateRow& r : rows) {
    eps.push_back(r.epsilon);
    err.push_back(r.error);
  }
  study.fit = fit_power_law(eps, err);
  study.rows = std::move(rows);
  return study;
}

void write_rate_csv(std::ostream& out, std::span<const RateRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "epsilon,value,reference,error\n";
  for (const RateRow& r : rows)
    os << r.epsilon << ',' << r.value << ',' << r.reference << ',' << r.error << '\n';
  out << os.str();
}

}  // namespace msdiff
