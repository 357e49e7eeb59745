#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "msdiff/grid.hpp"
#include "msdiff/msflux.hpp"
#include "msdiff/trajectory.hpp"

namespace msdiff {

/// A C^2 function on [0, inf) with closed-form derivatives and antiderivative
/// B(s) = int_0^s beta.
struct RenormFunction {
  std::string label;
  std::function<double(double)> value;
  std::function<double(double)> first;
  std::function<double(double)> second;
  std::function<double(double)> antiderivative;

  static RenormFunction identity();
  // s -> ln(s + delta), delta in (0, 1)
  static RenormFunction log_shift(double delta);
  static RenormFunction square();
};

// Value used when both concentrations vanish in a cell of H_sym.
enum class BothZeroConvention { Infinite, Zero };

// int sum_i c_i (ln c_i - 1), with 0 ln 0 = 0.
double entropy(const ConcentrationState& state);

// H(a|b) = int sum_i a_i ln(a_i/b_i) - (a_i - b_i); +inf where b_i = 0 < a_i.
double relative_entropy(const ConcentrationState& a, const ConcentrationState& b);

// int sum_i (ln a_i - ln b_i)(a_i - b_i). Returns +inf when exactly one of
// a_i, b_i vanishes in some cell; cells where both vanish follow `both_zero`.
double symmetrized_relative_entropy(const ConcentrationState& a, const ConcentrationState& b,
                                    BothZeroConvention both_zero = BothZeroConvention::Infinite);

// F(a, b) = int sum_i (ln(a_i + delta) - ln(b_i + delta))(a_i - b_i).
double regularized_symrelen(const ConcentrationState& a, const ConcentrationState& b,
                            double delta);

// H_B(c) = int sum_i B(c_i).
double renormalized_entropy(const ConcentrationState& state, const RenormFunction& beta);

// int sum_i (beta(a_i) - beta(b_i))(a_i - b_i).
double renorm_symrelen(const ConcentrationState& a, const ConcentrationState& b,
                       const RenormFunction& beta);

// u_i = J_i / c_i where c_i > threshold, zero elsewhere.
FluxField velocities(const ConcentrationState& state, const FluxField& flux,
                     double threshold = 1e-14);

// Pointwise Q and the right-hand side of the symmetrized identity.
// c, cbar have n entries; u, ubar are n x dim.
double dissipation_density(std::span<const double> c, std::span<const double> cbar,
                           const Eigen::Ref<const Eigen::MatrixXd>& u,
                           const Eigen::Ref<const Eigen::MatrixXd>& ubar,
                           const DiffusionMatrix& D);
double identity_rhs_density(std::span<const double> c, std::span<const double> cbar,
                            const Eigen::Ref<const Eigen::MatrixXd>& u,
                            const Eigen::Ref<const Eigen::MatrixXd>& ubar,
                            const DiffusionMatrix& D);

// Q = int sum_{i,j} (c_i c_j + cbar_i cbar_j) / (2 D_ij) |(u_i - ubar_i) - (u_j - ubar_j)|^2
double dissipation(const ConcentrationState& a, const ConcentrationState& b, const FluxField& u,
                   const FluxField& ubar, const DiffusionMatrix& D);

// int -sum_{i,j} (c_j - cbar_j)(u_i - ubar_i).(c_i (ubar_i - ubar_j) + cbar_i (u_i - u_j)) / D_ij
double identity_rhs(const ConcentrationState& a, const ConcentrationState& b, const FluxField& u,
                    const FluxField& ubar, const DiffusionMatrix& D);

struct IdentityResidual {
  double t0 = 0.0, t1 = 0.0;
  double delta_hsym = 0.0;     // H_sym(t1) - H_sym(t0)
  double q_integral = 0.0;     // int_{t0}^{t1} Q dt
  double rhs_integral = 0.0;   // int_{t0}^{t1} RHS dt
  double residual = 0.0;       // |delta_hsym + q_integral - rhs_integral|
};

// Both trajectories must share grid and snapshot times (MeshMismatch).
// t0 and t1 must coincide with snapshot times; time integrals are trapezoidal.
IdentityResidual identity_residual(const Trajectory& a, const Trajectory& b,
                                   const DiffusionMatrix& D, double t0, double t1);

/// Error terms J1..J4 of the shifted identity and their analytic bounds.
struct ErrorTerms {
  double J1 = 0, J2 = 0, J3 = 0, J4 = 0;
  double bound12 = 0;  // mu/4 Y + C1/delta^2 X
  double bound3 = 0;   // delta row_max Y
  double bound4 = 0;   // (mu/2 + C2 delta) Y + C3/delta^4 X
  double Y = 0;        // sum (d_i + dbar_i)|v_i - vbar_i|^2
  double X = 0;        // sum |d_i - dbar_i|^2
  // J1 + J2 <= bound12, J3 <= bound3, J4 <= bound4 (absolute slack)
  bool within_bounds(double slack = 1e-12) const;
  ErrorTerms& operator+=(const ErrorTerms& o);
};
ErrorTerms operator*(double s, ErrorTerms t);

// Pointwise: d, dbar in [delta, 1 + delta]; v, vbar are n x dim shifted
// velocities with |d_i v_i| <= constants.flux_bound.
ErrorTerms error_term_density(std::span<const double> d, std::span<const double> dbar,
                              const Eigen::Ref<const Eigen::MatrixXd>& v,
                              const Eigen::Ref<const Eigen::MatrixXd>& vbar,
                              const DiffusionMatrix& D, const StabilityConstants& constants);

// Space integral at one time, from concentrations and cell-centred fluxes.
ErrorTerms error_terms(const ConcentrationState& a, const FluxField& Ja,
                       const ConcentrationState& b, const FluxField& Jb,
                       const DiffusionMatrix& D, const StabilityConstants& constants);

struct ErrorTermSeries {
  StabilityConstants constants;
  std::vector<double> times;
  std::vector<ErrorTerms> at_time;  // space integrals per snapshot
  ErrorTerms integrated;            // trapezoidal time integral
};

// Constants use the larger flux_inf_norm of the two trajectories.
// DeltaNonpositive for delta <= 0.
ErrorTermSeries error_terms(const Trajectory& a, const Trajectory& b, const DiffusionMatrix& D,
                            double delta);

// |d - dbar|^2 <= (d - dbar)(ln d - ln dbar)
bool csiszar_kullback_check(double d, double dbar);
// (d - dbar) / (ln d - ln dbar), d for d == dbar
double logarithmic_mean(double d, double dbar);

struct GronwallSample {
  double t = 0;
  double F = 0;           // regularized symmetrized relative entropy
  double X = 0;           // sum_i int |d_i - dbar_i|^2
  double X_integral = 0;  // int_0^t X
  double F_bound = 0;     // F(0) + C5/delta^4 int_0^t X
  double log_envelope = 0;  // log((1+delta) F(0)) + (1+delta) C5 t / delta^4
  bool bound_holds = false;
  bool envelope_applies = false;  // F(0) > 0
  bool envelope_holds = false;
};

struct GronwallReport {
  StabilityConstants constants;
  std::vector<GronwallSample> samples;
  bool holds = false;
  double min_bound_margin = 0;     // min (F_bound - F)
  double min_log_envelope_margin = 0;  // min (log_envelope - log X), envelope samples only
};

// Verifies F(t) <= F(0) + C5/delta^4 int_0^t X and, when F(0) > 0, the
// exponential envelope X(t) <= (1+delta) F(0) exp((1+delta) C5 t / delta^4).
// DeltaOutOfRange unless constants are admissible for this delta.
GronwallReport gronwall_certificate(const Trajectory& a, const Trajectory& b,
                                    const DiffusionMatrix& D, double delta,
                                    const StabilityConstants& constants);

/// One diagnostics row. Twin-only quantities are NaN for single runs.
struct EntropyReport {
  double time = 0;
  double H = 0;
  double H_rel = 0;
  double H_sym = 0;
  double F_delta = 0;
  double H_B = 0;
  double Q = 0;
  double identity_residual = 0;
  double J1 = 0, J2 = 0, J3 = 0, J4 = 0;
  double gronwall_lhs = 0, gronwall_rhs = 0;
  double flux_inf_norm = 0;
  double clipped_mass = 0;
};

// Diagnostics CSV, schema v1:
// t,H,H_sym,F_delta,Q,J1,J2,J3,J4,gronwall_lhs,gronwall_rhs,flux_inf_norm,clipped_mass
void write_diagnostics_csv(std::ostream& out, std::span<const EntropyReport> rows);
nlohmann::json to_json(const EntropyReport& row);
nlohmann::json to_json(const StabilityConstants& k);
nlohmann::json to_json(const GronwallReport& report);

}  // namespace msdiff
