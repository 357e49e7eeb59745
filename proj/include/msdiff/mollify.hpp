#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "msdiff/grid.hpp"
#include "msdiff/numerics.hpp"

namespace msdiff {

/// Symmetric bump rho(s) = exp(-1/(1 - s^2)) / Z on (-1, 1), scaled by epsilon.
class Mollifier {
 public:
  explicit Mollifier(double epsilon);

  double epsilon() const { return eps_; }
  // Normalized profile rho on [-1, 1]; zero outside.
  static double profile(double s);
  // Z = int_{-1}^{1} exp(-1/(1 - s^2)) ds, computed once by quadrature.
  static double normalization();
  // (1/eps) rho(s / eps)
  double kernel(double s) const { return profile(s / eps_) / eps_; }

 private:
  double eps_;
};

/// Outer sampling for the mollified integrals: midpoint cells of `grid` in
/// space and uniform steps of the same size in time over [0, t_max], where
/// t_max bounds the time support of phi. The kernel variables are integrated
/// with `kernel_nodes` midpoint nodes per axis on the part of the support band
/// that lies in the domain.
struct MollifyQuadrature {
  PeriodicGrid grid;
  double t_max = 1.0;
  int kernel_nodes = 16;

  double time_step() const { return grid.min_spacing(); }
};

// int_0^inf int_x int_0^inf int_y f(y,tau) phi((x+y)/2, (t+tau)/2)
//   (1/eps) rho((t-tau)/eps) prod_a (1/eps) rho((x_a-y_a)/eps)
// EpsilonTooSmallForGrid when eps < 2h.
double mollify_spacetime(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                         const Mollifier& m, const MollifyQuadrature& q);

// int_0^T int_x f phi on the same outer sampling (the eps -> 0 limit above).
double plain_spacetime_integral(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                                const MollifyQuadrature& q);

// int_x int_0^inf int_y f(y,tau) phi((x+y)/2, tau/2) (1/eps) rho(-tau/eps)
//   prod_a (1/eps) rho((x_a-y_a)/eps); tends to half of int f(x,0) phi(x,0).
double initial_trace_mollification(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                                   const Mollifier& m, const MollifyQuadrature& q);

// int_x f(x,0) phi(x,0) on the outer spatial cells.
double initial_trace_integral(const SpaceTimeFunction& f, const SpaceTimeFunction& phi,
                              const MollifyQuadrature& q);

/// Phi(x,t; y,tau) = phi(mid(x,y), (t+tau)/2) * phi_eps(x,y,t,tau) on a
/// periodic box. The spatial midpoint and difference use the minimal periodic
/// image, which makes Phi jointly periodic.
class DoubledTestFunction {
 public:
  DoubledTestFunction(SpaceTimeFunction phi, Mollifier m, int dim,
                      std::array<double, 3> period = {1.0, 1.0, 1.0});

  double operator()(const Point& x, double t, const Point& y, double tau) const;
  // phi_eps only.
  double kernel(const Point& x, double t, const Point& y, double tau) const;
  // phi evaluated at the doubled midpoint.
  double base(const Point& x, double t, const Point& y, double tau) const;

  const Mollifier& mollifier() const { return m_; }
  int dim() const { return dim_; }

 private:
  double wrap(double v, int axis) const;
  double minimal_image(double v, int axis) const;

  SpaceTimeFunction phi_;
  Mollifier m_;
  int dim_;
  std::array<double, 3> period_;
};

struct RateRow {
  double epsilon = 0;
  double value = 0;
  double reference = 0;
  double error = 0;  // |value - reference|
};

struct RateStudy {
  std::vector<RateRow> rows;
  PowerFit fit;  // log error against log epsilon
};

RateStudy fit_rate(std::vector<RateRow> rows);

// Header "epsilon,value,reference,error".
void write_rate_csv(std::ostream& out, std::span<const RateRow> rows);

}  // namespace msdiff
