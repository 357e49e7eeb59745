#include <random>

#include "../oracles.hpp"
#include "doctest.h"
#include "msdiff/msflux.hpp"

using namespace msdiff;

TEST_SUITE("msflux") {
  TEST_CASE("binary fluxes reduce to Fick's law") {
    // [DERIVED] for n = 2 the system gives J_1 = -D_12 grad c_1.
    const DiffusionMatrix D = DiffusionMatrix::uniform(2, 2.5);
    Eigen::VectorXd c(2);
    c << 0.3, 0.7;
    Eigen::MatrixXd g(2, 2);
    g << 0.4, -1.0, -0.4, 1.0;
    const PointFlux f = solve_fluxes(PointComposition::make(c), g, D);
    CHECK(f.J(0, 0) == doctest::Approx(-2.5 * 0.4).epsilon(1e-13));
    CHECK(f.J(0, 1) == doctest::Approx(2.5).epsilon(1e-13));
    CHECK(std::abs(f.J(0, 0) + f.J(1, 0)) < 1e-15);
  }

  TEST_CASE("fluxes match the pseudo-inverse oracle, including vanishing species") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 200; ++k) {
      const int n = 2 + k % 5;
      Eigen::VectorXd c = oracle::random_simplex(rng, n);
      if (k % 4 == 0) {
        c[0] = 0.0;
        c /= c.sum();
      }
      const Eigen::MatrixXd Dm = oracle::random_D(rng, n);
      const Eigen::MatrixXd g = oracle::random_zero_sum(rng, n, 2);
      const PointFlux f = solve_fluxes(PointComposition::make(c), g, DiffusionMatrix(Dm));
      CHECK((f.J - oracle::flux_pinv(c, g, Dm)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(force_flux_residual(c, g, f.J, DiffusionMatrix(Dm)) < 1e-10);
    }
  }

  TEST_CASE("inconsistent input is rejected") {
    const DiffusionMatrix D = DiffusionMatrix::uniform(3, 1.0);
    Eigen::VectorXd c(3);
    c << 0.2, 0.3, 0.4;  // sums to 0.9
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 1);
    CHECK_THROWS_AS(solve_fluxes(PointComposition::make(c), g, D), InvalidComposition);
    c << 0.2, 0.3, 0.5;
    g << 1.0, 0.0, 0.0;  // gradients do not sum to zero
    CHECK_THROWS_AS(solve_fluxes(PointComposition::make(c), g, D), InconsistentGradient);
  }

  TEST_CASE("diffusion matrix validation") {
    Eigen::MatrixXd m(2, 2);
    m << 0, 1, 2, 0;
    CHECK_THROWS_AS(DiffusionMatrix{m}, InvalidDiffusionMatrix);
    m << 0, -1, -1, 0;
    CHECK_THROWS_AS(DiffusionMatrix{m}, InvalidDiffusionMatrix);
    m << 0, 4, 4, 0;
    const DiffusionMatrix D(m);
    CHECK(D.mu() == doctest::Approx(0.25));  // [TRIVIAL]
  }

  TEST_CASE("operator entries follow the defining formulas") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd Dm = oracle::random_D(rng, 4);
    const Eigen::VectorXd c = oracle::random_simplex(rng, 4);
    const double delta = 0.1;
    const MsOperator op = assemble_operator(PointComposition::make(c, delta), DiffusionMatrix(Dm));
    const Eigen::VectorXd d = c.array() + delta;
    CHECK((op.A - oracle::A_of(d, Dm)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((op.B - oracle::B_of(d, Dm)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((op.P_L - oracle::P_L(d, delta)).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("shifted system reproduces the shifted identity") {
    // [DERIVED] 2 grad sqrt(d) = -(A + delta B) w with w_j = sqrt(d_j) v_j.
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd Dm = oracle::random_D(rng, 3);
    const Eigen::VectorXd c = oracle::random_simplex(rng, 3);
    const double delta = 0.05;
    const Eigen::VectorXd d = c.array() + delta;
    const Eigen::MatrixXd g = oracle::random_zero_sum(rng, 3, 1);
    const Eigen::MatrixXd grad_sqrt = (g.array().colwise() / (2.0 * d.array().sqrt())).matrix();
    const Eigen::MatrixXd v =
        solve_shifted_fluxes(PointComposition::make(c, delta), grad_sqrt, DiffusionMatrix(Dm));
    const Eigen::MatrixXd w = (v.array().colwise() * d.array().sqrt()).matrix();
    CHECK(std::abs(d.array().sqrt().matrix().dot(w.col(0))) < 1e-13);
    const Eigen::MatrixXd lhs = 2.0 * grad_sqrt;
    const Eigen::MatrixXd rhs = -(oracle::A_of(d, Dm) + delta * oracle::B_of(d, Dm)) * w;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("stability constants and admissibility") {
    const DiffusionMatrix D = DiffusionMatrix::uniform(3, 1.0);
    const StabilityConstants k = evaluate_constants(D, 0.05, 2.0);
    const auto o = oracle::constants(Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3), 0.05, 2.0);
    CHECK(k.C1 == doctest::Approx(o.C1));
    CHECK(k.C3 == doctest::Approx(o.C3));
    CHECK(k.C5 == doctest::Approx(o.C5));
    // [DERIVED] uniform D = 1, n = 3: C4 = 2 + 3(1.15) - 3 = 2.45.
    CHECK(k.C4 == doctest::Approx(2.45));
    CHECK(k.delta_max == doctest::Approx(1.0 / (4 * 2.45)));
    CHECK(k.admissible);
    CHECK_THROWS_AS(stability_constants(D, 0.2, 0.0), DeltaOutOfRange);
    CHECK_THROWS_AS(stability_constants(D, 1.0, 0.0), DeltaOutOfRange);
    CHECK_THROWS_AS(evaluate_constants(D, 0.0, 0.0), DeltaNonpositive);
  }
}
