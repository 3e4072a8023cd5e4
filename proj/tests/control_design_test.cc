#include "relaxmpc/control_design.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "relaxmpc/errors.h"
#include "relaxmpc/models.h"

namespace relaxmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd random_schur(int n, std::mt19937_64* rng, double radius = 0.95) {
  std::normal_distribution<double> N(0.0, 1.0);
  MatrixXd A(n, n);
  for (int i = 0; i < n * n; ++i) A.data()[i] = N(*rng);
  return A * (radius / spectral_radius(A));
}

TEST(Dlyap, ZeroDynamics) {
  const MatrixXd P = dlyap(MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3));
  EXPECT_TRUE(P.isApprox(MatrixXd::Identity(3, 3), 1e-14));
}

TEST(Dlyap, ScalarFixedPoint) {
  const MatrixXd P = dlyap(MatrixXd::Constant(1, 1, 0.5),
                           MatrixXd::Identity(1, 1));
  EXPECT_NEAR(P(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Dlyap, MatchesTruncatedSeries) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd A = random_schur(2, &rng, 0.8);
    MatrixXd series = MatrixXd::Zero(2, 2);
    MatrixXd Ak = MatrixXd::Identity(2, 2);
    for (int k = 0; k <= 200; ++k) {
      series += Ak.transpose() * Ak;
      Ak = A * Ak;
    }
    const MatrixXd P = dlyap(A, MatrixXd::Identity(2, 2));
    EXPECT_LE((P - series).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Dlyap, ResidualOnRandomSystems) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(rng);
    const MatrixXd A = random_schur(n, &rng, 0.99);
    MatrixXd M = MatrixXd::Random(n, n);
    const MatrixXd Q = M * M.transpose();
    const MatrixXd P = dlyap(A, Q);
    EXPECT_LE((A.transpose() * P * A + Q - P).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(P, P.transpose());
  }
}

TEST(Dlyap, RejectsMarginalSystems) {
  const LinearSystem osc = harmonic_oscillator(M_PI / 2);
  EXPECT_THROW(dlyap(osc.A, MatrixXd::Identity(2, 2)), SpectralRadiusError);
}

TEST(DareLqr, ZeroInputReducesToLyapunov) {
  std::mt19937_64 rng(3);
  const MatrixXd A = random_schur(3, &rng, 0.7);
  const MatrixXd Q = MatrixXd::Identity(3, 3);
  const LqrSolution s =
      dare_lqr(A, MatrixXd::Zero(3, 1), Q, MatrixXd::Identity(1, 1));
  EXPECT_LE((s.P - dlyap(A, Q)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(s.K.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(DareLqr, ScalarGoldenRatio) {
  const MatrixXd one = MatrixXd::Ones(1, 1);
  const LqrSolution s = dare_lqr(one, one, one, one);
  EXPECT_NEAR(s.P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-12);
}

TEST(DareLqr, MassSpringDamperMatchesValueIteration) {
  const LinearSystem sys = mass_spring_damper();
  const MatrixXd Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  const MatrixXd R = MatrixXd::Constant(1, 1, 0.2);
  MatrixXd P = Q;
  MatrixXd K;
  for (int k = 0; k < 500; ++k) {
    const MatrixXd S = R + sys.B.transpose() * P * sys.B;
    K = -S.ldlt().solve(sys.B.transpose() * P * sys.A);
    P = Q + sys.A.transpose() * P * sys.A +
        sys.A.transpose() * P * sys.B * K;
  }
  const LqrSolution s = dare_lqr(sys.A, sys.B, Q, R);
  EXPECT_LE((s.K - K).cwiseAbs().maxCoeff(), 1e-6);
  // Riccati residual and closed-loop Lyapunov consistency.
  const MatrixXd& Pf = s.P;
  const MatrixXd res =
      sys.A.transpose() * Pf * sys.A - Pf + Q -
      sys.A.transpose() * Pf * sys.B *
          (R + sys.B.transpose() * Pf * sys.B)
              .ldlt()
              .solve(sys.B.transpose() * Pf * sys.A);
  EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-8);
  const MatrixXd Acl = sys.A + sys.B * s.K;
  EXPECT_LT(spectral_radius(Acl), 1.0);
  EXPECT_LE((dlyap(Acl, Q + s.K.transpose() * R * s.K) - Pf)
                .cwiseAbs()
                .maxCoeff(),
            1e-7);
}

TEST(ContractionConstants, DeadbeatCase) {
  const QuadIncLyap L =
      contraction_constants(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2),
                            MatrixXd::Identity(2, 2));
  EXPECT_DOUBLE_EQ(L.c[0], 1.0);
  EXPECT_DOUBLE_EQ(L.c[1], 1.0);
  EXPECT_DOUBLE_EQ(L.c[2], 1.0);
  EXPECT_DOUBLE_EQ(L.c[3], 2.0);
  EXPECT_DOUBLE_EQ(L.rho_delta, 0.0);
}

TEST(ContractionConstants, ScalarAnalytic) {
  const QuadIncLyap L = contraction_constants(
      MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 4.0 / 3.0),
      MatrixXd::Ones(1, 1));
  EXPECT_NEAR(L.c[2], 1.0, 1e-14);
  EXPECT_NEAR(L.rho_delta * L.rho_delta, 0.25, 1e-14);
}

TEST(ContractionConstants, RejectsNonContractive) {
  EXPECT_THROW(contraction_constants(MatrixXd::Constant(1, 1, 0.9),
                                     MatrixXd::Ones(1, 1),
                                     MatrixXd::Ones(1, 1)),
               NotContractive);
}

TEST(ContractionConstants, SampledDecreaseOnMassSpringDamper) {
  const LinearSystem sys = mass_spring_damper();
  const MatrixXd I = MatrixXd::Identity(2, 2);
  const QuadIncLyap L = contraction_constants(sys.A, dlyap(sys.A, I), I);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int s = 0; s < 1000; ++s) {
    const VectorXd x = 3.0 * Eigen::Vector2d(N(rng), N(rng));
    const VectorXd z = 3.0 * Eigen::Vector2d(N(rng), N(rng));
    const VectorXd u = Eigen::VectorXd::Constant(1, N(rng));
    const VectorXd w = 0.1 * Eigen::Vector2d(N(rng), N(rng));
    const VectorXd xp = sys.step(x, u) + w;
    const VectorXd zp = sys.step(z, u);
    const double V = L(x, z);
    const double e2 = (x - z).squaredNorm();
    EXPECT_GE(V, L.c[0] * e2 * (1 - 1e-12));
    EXPECT_LE(V, L.c[1] * e2 * (1 + 1e-12));
    // Undisturbed decrease with c₃ and the disturbed exponential form.
    EXPECT_LE(L(sys.step(x, u), zp) - V, -L.c[2] * e2 + 1e-9);
    EXPECT_LE(L(xp, zp), L.one_step_rate() * V + L.c[3] * w.squaredNorm() +
                             1e-9);
  }
}

TEST(RpiLevel, Formula) {
  QuadIncLyap L;
  L.c = {1.0, 1.0, 1.0, 2.0};
  L.rho_delta = 0.0;
  EXPECT_DOUBLE_EQ(rpi_level(L, 0.0), 0.0);
  EXPECT_NEAR(rpi_level(L, 1.0), std::sqrt(2.0), 1e-15);
}

TEST(RpiLevel, SampledInvariance) {
  const LinearSystem sys = mass_spring_damper();
  const MatrixXd I = MatrixXd::Identity(2, 2);
  const QuadIncLyap L = contraction_constants(sys.A, dlyap(sys.A, I), I);
  const double w_bar = 0.01;
  const double delta = rpi_level(L, w_bar);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Eigen::LLT<MatrixXd> llt(L.P);
  for (int s = 0; s < 1000; ++s) {
    // e on or inside the level set, w on or inside the ball.
    VectorXd d = Eigen::Vector2d(N(rng), N(rng));
    VectorXd e = llt.matrixU().solve(d.normalized()) * delta * std::sqrt(U(rng) > 0.5 ? 1.0 : U(rng));
    VectorXd w = Eigen::Vector2d(N(rng), N(rng)).normalized() * w_bar;
    ASSERT_LE(e.dot(L.P * e), delta * delta * (1 + 1e-12));
    const VectorXd ep = sys.A * e + w;
    EXPECT_LE(ep.dot(L.P * ep), delta * delta);
  }
}

TEST(LqrTerminal, InvarianceAndDecreaseOnMassSpringDamper) {
  const LinearSystem sys = mass_spring_damper();
  const MatrixXd Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  const MatrixXd R = MatrixXd::Constant(1, 1, 0.2);
  const Polytope X = Polytope::box(-VectorXd::Ones(2), VectorXd::Ones(2));
  const Polytope U = Polytope::box(-2 * VectorXd::Ones(1), 2 * VectorXd::Ones(1));
  const TerminalIngredients t = lqr_terminal(sys.A, sys.B, Q, R, X, U);
  const MatrixXd Acl = sys.A + sys.B * t.K;
  std::vector<VectorXd> pts = vertices(t.X_f);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> Ub(-1.0, 1.0);
  while (pts.size() < 1000 + vertices(t.X_f).size()) {
    const VectorXd x = Eigen::Vector2d(Ub(rng), Ub(rng));
    if (contains(t.X_f, x)) pts.push_back(x);
  }
  for (const VectorXd& x : pts) {
    EXPECT_TRUE(contains(t.X_f, Acl * x, 1e-7));
    EXPECT_TRUE(contains(X, x, 1e-7));
    EXPECT_TRUE(contains(U, t.K * x, 1e-7));
    const VectorXd u = t.K * x;
    const double ell = x.dot(Q * x) + u.dot(R * u);
    const VectorXd xp = Acl * x;
    EXPECT_LE(xp.dot(t.P_f * xp) - x.dot(t.P_f * x), -ell + 1e-9);
  }
}

}  // namespace
}  // namespace relaxmpc
