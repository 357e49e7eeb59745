#pragma once
// Reference computations used by the tests. Each one is written from the
// defining formula, without calling the library routine it is compared with.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "msdiff/grid.hpp"
#include "msdiff/msflux.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 1/D_ij with zero diagonal, straight from the entries.
inline MatrixXd inverse_coefficients(const MatrixXd& D) {
  const int n = static_cast<int>(D.rows());
  MatrixXd inv = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) inv(i, j) = 1.0 / D(i, j);
  return inv;
}

// Residual of  grad c_i = sum_{j != i} (c_i J_j - c_j J_i) / D_ij,  max norm.
inline double force_flux_residual(const VectorXd& c, const MatrixXd& g, const MatrixXd& J,
                                  const MatrixXd& D) {
  const int n = static_cast<int>(c.size());
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < g.cols(); ++a) {
      double rhs = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) rhs += (c[i] * J(j, a) - c[j] * J(i, a)) / D(i, j);
      worst = std::max(worst, std::abs(g(i, a) - rhs));
    }
  return worst;
}

// Minimum-norm least-squares solution of the stacked (n+1) x n system
//   [K; 1^T] J = [g; 0]
// through the SVD pseudo-inverse.
inline MatrixXd flux_pinv(const VectorXd& c, const MatrixXd& g, const MatrixXd& D) {
  const int n = static_cast<int>(c.size());
  MatrixXd S = MatrixXd::Zero(n + 1, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      S(i, j) += c[i] / D(i, j);
      S(i, i) -= c[j] / D(i, j);
    }
  S.row(n).setOnes();
  MatrixXd rhs = MatrixXd::Zero(n + 1, g.cols());
  rhs.topRows(n) = g;
  Eigen::JacobiSVD<MatrixXd> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-13);
  return svd.solve(rhs);
}

// Symmetric friction matrix in shifted variables.
inline MatrixXd A_of(const VectorXd& d, const MatrixXd& D) {
  const int n = static_cast<int>(d.size());
  MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k)
          if (k != i) s += d[k] / D(i, k);
        A(i, i) = s;
      } else {
        A(i, j) = -std::sqrt(d[i] * d[j]) / D(i, j);
      }
    }
  return A;
}

inline MatrixXd B_of(const VectorXd& d, const MatrixXd& D) {
  const int n = static_cast<int>(d.size());
  MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k)
          if (k != i) s += 1.0 / D(i, k);
        B(i, i) = -s;
      } else {
        B(i, j) = std::sqrt(d[j]) / (D(i, j) * std::sqrt(d[i]));
      }
    }
  return B;
}

inline MatrixXd P_L(const VectorXd& d, double delta) {
  const int n = static_cast<int>(d.size());
  const VectorXd r = d.array().sqrt();
  return MatrixXd::Identity(n, n) - r * r.transpose() / (1.0 + n * delta);
}

inline double mu_of(const MatrixXd& D) {
  double m = INFINITY;
  for (int i = 0; i < D.rows(); ++i)
    for (int j = 0; j < D.cols(); ++j)
      if (i != j) m = std::min(m, 1.0 / D(i, j));
  return m;
}

// Constants of the stability estimate, recomputed from their definitions.
struct Constants {
  double mu, M, row_max, C1, C2, C3, C4, C5, delta_max;
};

inline Constants constants(const MatrixXd& D, double delta, double flux_bound) {
  const int n = static_cast<int>(D.rows());
  const MatrixXd inv = inverse_coefficients(D);
  Constants k{};
  k.mu = mu_of(D);
  k.M = 0.0;
  k.row_max = 0.0;
  for (int i = 0; i < n; ++i) {
    k.row_max = std::max(k.row_max, inv.row(i).sum());
    for (int j = 0; j < n; ++j)
      if (i != j) k.M = std::max(k.M, inv(i, j));
  }
  const double q = flux_bound * flux_bound * k.M * k.M / k.mu;
  k.C1 = 16.0 * n * n * q;
  k.C2 = n * (1.0 + n * delta) * k.M * k.M / k.mu;
  k.C3 = (16.0 * (1.0 + delta) * n * n + 4.0 * n * (1.0 + n * delta)) * q;
  k.C4 = k.row_max + k.C2 - n * k.mu;
  k.C5 = 2.0 * n * k.mu * flux_bound * flux_bound + k.C1 + k.C3;
  k.delta_max = std::min(1.0, k.mu / (4.0 * k.C4));
  return k;
}

// Error terms of the stability estimate for one pair of shifted states
// d, dbar (n) and velocities v, vbar (n x dim), evaluated term by term.
struct Terms {
  double J1 = 0, J2 = 0, J3 = 0, J4 = 0, X = 0, Y = 0;
};

inline Terms terms(const VectorXd& d, const VectorXd& db, const MatrixXd& v, const MatrixXd& vb,
                   const MatrixXd& D, double delta) {
  const int n = static_cast<int>(d.size());
  Terms t;
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd dvi = v.row(i) - vb.row(i);
    double inv_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      inv_sum += 1.0 / D(i, j);
      t.J1 += -(d[i] / D(i, j)) * (d[j] - db[j]) * dvi.dot(vb.row(i) - vb.row(j));
      t.J2 += -(db[i] / D(i, j)) * (d[j] - db[j]) * dvi.dot(v.row(i) - v.row(j));
      const Eigen::RowVectorXd w = (d[j] / d[i]) * v.row(j) - (db[j] / db[i]) * vb.row(j);
      t.J4 += -delta / D(i, j) * (d[i] + db[i]) * dvi.dot(w);
    }
    t.J3 += delta * inv_sum * (d[i] + db[i]) * dvi.squaredNorm();
    t.Y += (d[i] + db[i]) * dvi.squaredNorm();
    t.X += (d[i] - db[i]) * (d[i] - db[i]);
  }
  return t;
}

// Entropy int sum c (ln c - 1) in extended precision.
inline double entropy(const msdiff::ConcentrationState& s) {
  long double acc = 0.0L;
  for (const auto& f : s.c)
    for (double v : f)
      if (v > 0.0) acc += static_cast<long double>(v) * (std::log(static_cast<long double>(v)) - 1.0L);
  return static_cast<double>(acc * s.grid.cell_volume());
}

inline double mass(const msdiff::Field& f, const msdiff::PeriodicGrid& g) {
  long double acc = 0.0L;
  for (double v : f) acc += v;
  return static_cast<double>(acc * g.cell_volume());
}

inline double symmetrized(const msdiff::ConcentrationState& a, const msdiff::ConcentrationState& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.c.size(); ++i)
    for (std::size_t k = 0; k < a.grid.size(); ++k)
      acc += (std::log(static_cast<long double>(a.c[i][k])) - std::log(static_cast<long double>(b.c[i][k]))) *
             (a.c[i][k] - b.c[i][k]);
  return static_cast<double>(acc * a.grid.cell_volume());
}

// Composite Gauss-Legendre (5 nodes per panel) on [a, b].
template <typename F>
double integrate_1d(F f, double a, double b, int panels = 400) {
  static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                              0.9061798459386640};
  static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                              0.2369268850561891, 0.2369268850561891};
  const double h = (b - a) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int q = 0; q < 5; ++q) acc += w[q] * f(mid + 0.5 * h * x[q]);
  }
  return 0.5 * h * acc;
}

inline VectorXd random_simplex(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = e(rng);
  return c / c.sum();
}

inline MatrixXd random_D(std::mt19937_64& rng, int n, double lo = 0.1, double hi = 10.0) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  MatrixXd D = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) D(i, j) = D(j, i) = std::exp(u(rng));
  return D;
}

inline MatrixXd random_zero_sum(std::mt19937_64& rng, int n, int dim, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(n, dim);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < dim; ++a) m(i, a) = g(rng);
  for (int a = 0; a < dim; ++a) m.col(a).array() -= m.col(a).mean();
  return m;
}

// Least-squares slope of log y against log x.
inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (sxy - sx * sy / n) / (sxx - sx * sx / n);
}

}  // namespace oracle
