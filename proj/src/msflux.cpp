#include "msdiff/msflux.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace msdiff {

DiffusionMatrix::DiffusionMatrix(const Eigen::MatrixXd& entries)
    : n_(static_cast<int>(entries.rows())), d_(entries), inv_(Eigen::MatrixXd::Zero(n_, n_)) {
  if (entries.rows() != entries.cols())
    throw DimensionMismatch("diffusion matrix must be square");
  if (n_ < 2) throw InvalidDiffusionMatrix("need at least two species");
  mu_ = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_; ++i) {
    double row = 0.0;
    for (int j = 0; j < n_; ++j) {
      if (i == j) continue;
      const double v = entries(i, j);
      if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidDiffusionMatrix("D_" + std::to_string(i + 1) + std::to_string(j + 1) +
                                     " must be positive and finite");
      if (v != entries(j, i))
        throw InvalidDiffusionMatrix("symmetry: D_" + std::to_string(i + 1) +
                                     std::to_string(j + 1) + " != D_" + std::to_string(j + 1) +
                                     std::to_string(i + 1));
      inv_(i, j) = 1.0 / v;
      row += inv_(i, j);
      mu_ = std::min(mu_, inv_(i, j));
      max_inv_ = std::max(max_inv_, inv_(i, j));
      max_d_ = std::max(max_d_, v);
    }
    row_max_ = std::max(row_max_, row);
  }
}

DiffusionMatrix DiffusionMatrix::uniform(int n, double value) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, value);
  return DiffusionMatrix(m);
}

DiffusionMatrix DiffusionMatrix::from_upper(int n, std::span<const double> upper) {
  if (static_cast<int>(upper.size()) != n * (n - 1) / 2)
    throw DimensionMismatch("upper-triangle list has wrong length");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      m(i, j) = upper[k];
      m(j, i) = upper[k];
      ++k;
    }
  return DiffusionMatrix(m);
}

PointComposition PointComposition::make(Eigen::VectorXd c, double delta) {
  if (c.size() < 2) throw InvalidComposition("need at least two species");
  if (!(delta >= 0.0)) throw InvalidComposition("shift must be nonnegative");
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (!(c[i] >= -kSimplexTol && c[i] <= 1.0 + kSimplexTol))
      throw InvalidComposition("concentration outside [0,1]");
  if (std::abs(c.sum() - 1.0) > kSimplexTol)
    throw InvalidComposition("concentrations do not sum to one");
  return PointComposition{std::move(c), delta};
}

Eigen::MatrixXd friction_matrix(const Eigen::VectorXd& d, const DiffusionMatrix& D) {
  const int n = static_cast<int>(d.size());
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int k = 0; k < n; ++k)
      if (k != i) diag += d[k] * D.inverse(i, k);
    A(i, i) = diag;
    for (int j = 0; j < n; ++j)
      if (j != i) A(i, j) = -std::sqrt(d[i] * d[j]) * D.inverse(i, j);
  }
  return A;
}

MsOperator assemble_operator(const PointComposition& comp, const DiffusionMatrix& D) {
  const int n = comp.species();
  if (n != D.species()) throw DimensionMismatch("composition and diffusion matrix sizes differ");
  const Eigen::VectorXd d = comp.shifted();

  MsOperator op;
  op.delta = comp.delta;
  op.mu = D.mu();
  op.sqrt_d = d.array().sqrt();
  op.A = friction_matrix(d, D);
  op.B.resize(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int k = 0; k < n; ++k)
      if (k != i) diag += D.inverse(i, k);
    op.B(i, i) = -diag;
    for (int j = 0; j < n; ++j)
      if (j != i) op.B(i, j) = op.sqrt_d[j] / (D(i, j) * op.sqrt_d[i]);
  }
  const double total = 1.0 + n * comp.delta;
  op.P_Lperp = op.sqrt_d * op.sqrt_d.transpose() / total;
  op.P_L = Eigen::MatrixXd::Identity(n, n) - op.P_Lperp;
  return op;
}

SpectralCheck spectral_gap_check(const MsOperator& op, const Eigen::VectorXd& z) {
  SpectralCheck out;
  out.lhs = z.dot(op.A * z);
  const double total = 1.0 + op.species() * op.delta;
  out.rhs = total * op.mu * (op.P_L * z).squaredNorm();
  out.holds = out.lhs >= out.rhs - kIdentityTol;
  return out;
}

Eigen::MatrixXd PointFlux::velocities(const Eigen::VectorXd& c, double threshold) const {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(J.rows(), J.cols());
  for (Eigen::Index i = 0; i < J.rows(); ++i)
    if (c[i] > threshold) u.row(i) = J.row(i) / c[i];
  return u;
}

FluxWorkspace::FluxWorkspace(int n)
    : n_(n),
      bordered_(n + 1, n + 1),
      rhs_(n + 1, 3),
      sol_(n + 1, 3),
      lu_(n + 1) {}

void FluxWorkspace::factor_and_check() {
  lu_.compute(bordered_);
  const auto diag = lu_.matrixLU().diagonal().cwiseAbs();
  if (!(diag.minCoeff() > 1e-13 * diag.maxCoeff()))
    throw SingularComposition("bordered force-flux system is singular");
}

namespace {

// K_ii = -sum_{j!=i} c_j / D_ij, K_ij = c_i / D_ij; border scaled by M.
void fill_force_flux(Eigen::MatrixXd& b, std::span<const double> c, const DiffusionMatrix& D) {
  const int n = D.species();
  const double s = D.max_inverse();
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv = D.inverse(i, j);
      diag += c[j] * inv;
      b(i, j) = c[i] * inv;
    }
    b(i, i) = -diag;
    b(i, n) = s;
    b(n, i) = s;
  }
  b(n, n) = 0.0;
}

}  // namespace

void FluxWorkspace::solve(std::span<const double> c, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                          const DiffusionMatrix& D, Eigen::Ref<Eigen::MatrixXd> J) {
  const int dim = static_cast<int>(grad.cols());
  for (int a = 0; a < dim; ++a) {
    const double defect = grad.col(a).sum();
    if (!(std::abs(defect) <= kConsistencyTol))
      throw InconsistentGradient("sum of concentration gradients is " + std::to_string(defect));
  }
  fill_force_flux(bordered_, c, D);
  factor_and_check();
  rhs_.topLeftCorner(n_, dim) = grad;
  rhs_.block(n_, 0, 1, dim).setZero();
  auto sol = sol_.leftCols(dim);
  sol.noalias() = lu_.solve(rhs_.leftCols(dim));
  J = sol.topRows(n_);
}

double FluxWorkspace::solve_component(std::span<const double> c, std::span<const double> grad,
                                      const DiffusionMatrix& D, std::span<double> J) {
  double defect = 0.0;
  for (int i = 0; i < n_; ++i) defect += grad[i];
  if (!(std::abs(defect) <= kConsistencyTol))
    throw InconsistentGradient("sum of concentration gradients is " + std::to_string(defect));
  fill_force_flux(bordered_, c, D);
  factor_and_check();
  for (int i = 0; i < n_; ++i) rhs_(i, 0) = grad[i];
  rhs_(n_, 0) = 0.0;
  sol_.col(0).noalias() = lu_.solve(rhs_.col(0));
  double largest = 0.0;
  for (int i = 0; i < n_; ++i) {
    J[i] = sol_(i, 0);
    largest = std::max(largest, std::abs(J[i]));
  }
  return largest;
}

void FluxWorkspace::solve_shifted(std::span<const double> d, double delta,
                                  const Eigen::Ref<const Eigen::MatrixXd>& grad_sqrt_d,
                                  const DiffusionMatrix& D, Eigen::Ref<Eigen::MatrixXd> w) {
  const int dim = static_cast<int>(grad_sqrt_d.cols());
  for (int i = 0; i < n_; ++i)
    if (!(d[i] > 0.0)) throw SingularComposition("shifted concentration must be positive");
  for (int a = 0; a < dim; ++a) {
    double defect = 0.0;
    for (int i = 0; i < n_; ++i) defect += std::sqrt(d[i]) * grad_sqrt_d(i, a);
    if (!(std::abs(defect) <= kConsistencyTol))
      throw InconsistentGradient("sum of shifted gradients is " + std::to_string(defect));
  }
  // -(A + delta B) bordered by sqrt(d).
  const double s = D.max_inverse();
  for (int i = 0; i < n_; ++i) {
    const double si = std::sqrt(d[i]);
    double diag_a = 0.0, diag_b = 0.0;
    for (int j = 0; j < n_; ++j) {
      if (j == i) continue;
      const double inv = D.inverse(i, j);
      const double sj = std::sqrt(d[j]);
      diag_a += d[j] * inv;
      diag_b += inv;
      const double a_ij = -si * sj * inv;
      const double b_ij = sj * inv / si;
      bordered_(i, j) = -(a_ij + delta * b_ij);
    }
    bordered_(i, i) = -(diag_a - delta * diag_b);
    bordered_(i, n_) = s * si;
    bordered_(n_, i) = s * si;
  }
  bordered_(n_, n_) = 0.0;
  factor_and_check();
  rhs_.topLeftCorner(n_, dim) = 2.0 * grad_sqrt_d;
  rhs_.block(n_, 0, 1, dim).setZero();
  auto sol = sol_.leftCols(dim);
  sol.noalias() = lu_.solve(rhs_.leftCols(dim));
  w = sol.topRows(n_);
}

PointFlux solve_fluxes(const PointComposition& comp, const Eigen::MatrixXd& grad_c,
                       const DiffusionMatrix& D) {
  const int n = comp.species();
  if (n != D.species() || grad_c.rows() != n)
    throw DimensionMismatch("species count differs between inputs");
  if (grad_c.cols() < 1 || grad_c.cols() > 3)
    throw DimensionMismatch("gradient must have 1 to 3 components");
  FluxWorkspace ws(n);
  PointFlux out;
  out.J.resize(n, grad_c.cols());
  ws.solve(std::span<const double>(comp.c.data(), n), grad_c, D, out.J);
  return out;
}

double force_flux_residual(const Eigen::VectorXd& c, const Eigen::MatrixXd& grad_c,
                           const Eigen::MatrixXd& J, const DiffusionMatrix& D) {
  const int n = static_cast<int>(c.size());
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd lhs = Eigen::RowVectorXd::Zero(J.cols());
    for (int j = 0; j < n; ++j)
      if (j != i) lhs -= (c[j] * J.row(i) - c[i] * J.row(j)) / D(i, j);
    worst = std::max(worst, (lhs - grad_c.row(i)).cwiseAbs().maxCoeff());
  }
  return worst;
}

Eigen::MatrixXd solve_shifted_fluxes(const PointComposition& comp,
                                     const Eigen::MatrixXd& grad_sqrt_d,
                                     const DiffusionMatrix& D) {
  const int n = comp.species();
  if (n != D.species() || grad_sqrt_d.rows() != n)
    throw DimensionMismatch("species count differs between inputs");
  const Eigen::VectorXd d = comp.shifted();
  FluxWorkspace ws(n);
  Eigen::MatrixXd w(n, grad_sqrt_d.cols());
  ws.solve_shifted(std::span<const double>(d.data(), n), comp.delta, grad_sqrt_d, D, w);
  Eigen::MatrixXd v(n, grad_sqrt_d.cols());
  for (int i = 0; i < n; ++i) v.row(i) = w.row(i) / std::sqrt(d[i]);
  return v;
}

StabilityConstants evaluate_constants(const DiffusionMatrix& D, double delta, double flux_bound) {
  if (!(delta > 0.0)) throw DeltaNonpositive("shift must be positive");
  if (!(delta < 1.0)) throw DeltaOutOfRange("shift must be below 1");
  if (!(flux_bound >= 0.0)) throw Error("flux bound must be nonnegative");
  StabilityConstants k;
  const double n = D.species();
  k.n = D.species();
  k.delta = delta;
  k.mu = D.mu();
  k.M = D.max_inverse();
  k.row_max = D.max_row_inverse_sum();
  k.flux_bound = flux_bound;
  k.velocity_bound = flux_bound / delta;
  const double cu2 = flux_bound * flux_bound;
  const double M2 = k.M * k.M;
  k.C1 = 16.0 * n * n * M2 * cu2 / k.mu;
  k.C2 = n * (1.0 + n * delta) * M2 / k.mu;
  k.C3 = (16.0 * (1.0 + delta) * n * n + 4.0 * n * (1.0 + n * delta)) * M2 * cu2 / k.mu;
  k.dissipation_correction = 2.0 * n * k.mu * cu2;
  k.C4 = k.row_max + k.C2 - n * k.mu;
  k.C5 = k.dissipation_correction + k.C1 + k.C3;
  k.delta_max = k.C4 > 0.0 ? std::min(1.0, k.mu / (4.0 * k.C4)) : 1.0;
  k.admissible = delta < k.delta_max;
  return k;
}

StabilityConstants stability_constants(const DiffusionMatrix& D, double delta, double flux_bound) {
  StabilityConstants k = evaluate_constants(D, delta, flux_bound);
  if (!k.admissible)
    throw DeltaOutOfRange("delta = " + std::to_string(delta) +
                          " violates 0 < delta < min(1, mu/(4 C4)) = " +
                          std::to_string(k.delta_max));
  return k;
}

}  // namespace msdiff
