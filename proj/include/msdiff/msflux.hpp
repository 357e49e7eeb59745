#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>
#include <span>
#include <utility>
#include <vector>

#include "msdiff/errors.hpp"

namespace msdiff {

// Tolerances shared by the pointwise algebra.
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kConsistencyTol = 1e-10;
inline constexpr double kIdentityTol = 1e-12;

/// Symmetric pairwise Maxwell-Stefan diffusivities D_ij (i != j).
///
/// Immutable once built. The reciprocal extremes mu = min 1/D_ij and
/// M = max 1/D_ij are computed at construction; the diagonal is ignored.
class DiffusionMatrix {
 public:
  // Every off-diagonal entry must be positive and finite, and D == D^T exactly.
  explicit DiffusionMatrix(const Eigen::MatrixXd& entries);

  // All pairs share one coefficient.
  static DiffusionMatrix uniform(int n, double value);
  // Upper-triangle list in row order: D_12, D_13, ..., D_1n, D_23, ...
  static DiffusionMatrix from_upper(int n, std::span<const double> upper);

  int species() const { return n_; }
  double operator()(int i, int j) const { return d_(i, j); }
  double inverse(int i, int j) const { return inv_(i, j); }
  const Eigen::MatrixXd& inverse_matrix() const { return inv_; }

  double mu() const { return mu_; }                  // min_{i!=j} 1/D_ij
  double max_inverse() const { return max_inv_; }    // M = max_{i!=j} 1/D_ij
  double max_coefficient() const { return max_d_; }  // max_{i!=j} D_ij
  // max_i sum_{j!=i} 1/D_ij
  double max_row_inverse_sum() const { return row_max_; }

 private:
  int n_;
  Eigen::MatrixXd d_;
  Eigen::MatrixXd inv_;  // zero diagonal
  double mu_ = 0, max_inv_ = 0, max_d_ = 0, row_max_ = 0;
};

/// Concentrations at one point, with an optional shift d_i = c_i + delta.
struct PointComposition {
  Eigen::VectorXd c;
  double delta = 0.0;

  // Checks 0 <= c_i <= 1 and |sum c - 1| <= kSimplexTol; delta >= 0.
  static PointComposition make(Eigen::VectorXd c, double delta = 0.0);

  int species() const { return static_cast<int>(c.size()); }
  Eigen::VectorXd shifted() const { return c.array() + delta; }
};

/// The symmetric friction matrix A(d), its perturbation B(d), the projections
/// onto L(d) = {x : sqrt(d).x = 0} and its complement, and mu.
struct MsOperator {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd P_L;
  Eigen::MatrixXd P_Lperp;
  Eigen::VectorXd sqrt_d;
  double mu = 0.0;
  double delta = 0.0;

  int species() const { return static_cast<int>(sqrt_d.size()); }
};

MsOperator assemble_operator(const PointComposition& comp, const DiffusionMatrix& D);

// Entries of A for arbitrary positive d (no simplex requirement).
Eigen::MatrixXd friction_matrix(const Eigen::VectorXd& d, const DiffusionMatrix& D);

struct SpectralCheck {
  double lhs = 0.0;  // z^T A z
  double rhs = 0.0;  // (1 + n delta) mu |P_L z|^2
  bool holds = false;
};

// Coercivity of A on L(d), with absolute slack 1e-12.
SpectralCheck spectral_gap_check(const MsOperator& op, const Eigen::VectorXd& z);

/// Molar fluxes at a point; row i is J_i (length = spatial dimension).
struct PointFlux {
  Eigen::MatrixXd J;
  // u_i = J_i / c_i where c_i > threshold, zero elsewhere.
  Eigen::MatrixXd velocities(const Eigen::VectorXd& c, double threshold = 1e-14) const;
};

/// Reusable scratch for the force-flux solve at fixed species count.
///
/// The constrained singular system K J = grad c, sum J = 0 is solved as the
/// square bordered system
///
///   [ K    s 1 ] [ J ]   [ grad c ]
///   [ s 1^T  0 ] [ l ] = [   0    ]
///
/// which is nonsingular whenever sum c = 1 (ker K = span c, 1^T K = 0). The
/// multiplier l equals (1^T grad c) / (n s), so consistent input returns l = 0.
/// Buffers are sized once; solve() does not allocate for up to 3 columns.
class FluxWorkspace {
 public:
  explicit FluxWorkspace(int n);

  int species() const { return n_; }

  // c and grad (n x dim, dim <= 3) in; J (n x dim) out. No validation beyond
  // the gradient consistency check and the singularity guard.
  void solve(std::span<const double> c, const Eigen::Ref<const Eigen::MatrixXd>& grad,
             const DiffusionMatrix& D, Eigen::Ref<Eigen::MatrixXd> J);

  // Scalar-gradient variant used by the face loop: one spatial component.
  double solve_component(std::span<const double> c, std::span<const double> grad,
                         const DiffusionMatrix& D, std::span<double> J);

  // Shifted system 2 grad sqrt(d) = -(A + delta B) w, sqrt(d).w = 0.
  void solve_shifted(std::span<const double> d, double delta,
                     const Eigen::Ref<const Eigen::MatrixXd>& grad_sqrt_d,
                     const DiffusionMatrix& D, Eigen::Ref<Eigen::MatrixXd> w);

 private:
  void factor_and_check();

  int n_;
  Eigen::MatrixXd bordered_;
  Eigen::MatrixXd rhs_;
  Eigen::MatrixXd sol_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// Solves -sum_{j!=i} (c_j J_i - c_i J_j) / D_ij = grad c_i with sum_i J_i = 0.
// grad_c is n x dim. Throws InconsistentGradient when |sum_i grad c_i| exceeds
// kConsistencyTol, SingularComposition if the bordered system is singular.
PointFlux solve_fluxes(const PointComposition& comp, const Eigen::MatrixXd& grad_c,
                       const DiffusionMatrix& D);

// Residual of the force-flux equations, max over species and components.
double force_flux_residual(const Eigen::VectorXd& c, const Eigen::MatrixXd& grad_c,
                           const Eigen::MatrixXd& J, const DiffusionMatrix& D);

/// Shifted velocities v_i = c_i u_i / d_i (rows), from grad sqrt(d_i) (rows).
/// Requires every d_i > 0; consistency is sum_i sqrt(d_i) grad sqrt(d_i) = 0.
Eigen::MatrixXd solve_shifted_fluxes(const PointComposition& comp,
                                     const Eigen::MatrixXd& grad_sqrt_d,
                                     const DiffusionMatrix& D);

/// Constants entering the error-term bounds and the Gronwall estimate.
///
/// flux_bound is ||cu||_inf over both solutions; velocity_bound = flux_bound/delta.
///   C1 = 16 n^2 M^2 |cu|^2 / mu                 J1 + J2 <= mu/4 Y + C1/delta^2 X
///   C2 = n (1 + n delta) M^2 / mu               J4 <= (mu/2 + C2 delta) Y + C3/delta^4 X
///   C3 = (16 (1+delta) n^2 + 4 n (1 + n delta)) M^2 |cu|^2 / mu
///   J3 <= delta * row_max * Y,   row_max = max_i sum_{j!=i} 1/D_ij  (<= n M)
///   dissipation correction 2 n mu |cu|^2 / delta^2 X
///   C4 = row_max + C2 - n mu, C5 = 2 n mu |cu|^2 + C1 + C3
/// with Y = sum (d + dbar)|v - vbar|^2 and X = sum |d - dbar|^2. The rule
/// 0 < delta < min(1, mu / (4 C4)) makes the Y coefficient nonnegative.
struct StabilityConstants {
  int n = 0;
  double delta = 0.0;
  double mu = 0.0;
  double M = 0.0;
  double row_max = 0.0;
  double flux_bound = 0.0;
  double velocity_bound = 0.0;
  double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0, C5 = 0.0;
  double dissipation_correction = 0.0;  // 2 n mu |cu|^2 (times X / delta^2)
  double delta_max = 0.0;               // min(1, mu / (4 C4))
  bool admissible = false;
};

// Evaluates the constants for any delta in (0, 1). DeltaNonpositive for
// delta <= 0, DeltaOutOfRange for delta >= 1.
StabilityConstants evaluate_constants(const DiffusionMatrix& D, double delta,
                                      double flux_bound);

// As evaluate_constants, but also throws DeltaOutOfRange when delta violates
// the selection rule.
StabilityConstants stability_constants(const DiffusionMatrix& D, double delta,
                                       double flux_bound);

}  // namespace msdiff
