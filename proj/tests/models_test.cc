#include "relaxmpc/models.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "relaxmpc/control_design.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd msd_continuous() {
  return (MatrixXd(2, 2) << 0.0, 1.0, -1.0, -0.1).finished();
}

TEST(MassSpringDamper, SmallStepLimit) {
  const double dt = 1e-6;
  const LinearSystem s = mass_spring_damper(dt);
  const MatrixXd first = MatrixXd::Identity(2, 2) + dt * msd_continuous();
  EXPECT_LE((s.A - first).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(MassSpringDamper, SchurStable) {
  const LinearSystem s = mass_spring_damper();
  EXPECT_NEAR(spectral_radius(s.A), std::exp(-0.05 * 0.05), 1e-12);
  EXPECT_LT(spectral_radius(s.A), 1.0);
}

TEST(MassSpringDamper, MatchesSeriesExponential) {
  const LinearSystem s = mass_spring_damper();
  // Scaling and squaring with a truncated Taylor series.
  const MatrixXd M = msd_continuous() * 0.05 / 16.0;
  MatrixXd E = MatrixXd::Identity(2, 2), term = MatrixXd::Identity(2, 2);
  for (int k = 1; k < 20; ++k) {
    term = term * M / k;
    E += term;
  }
  for (int k = 0; k < 4; ++k) E = E * E;
  EXPECT_LE((s.A - E).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MassSpringDamper, ZohMatchesFineRk4) {
  const LinearSystem s = mass_spring_damper();
  NonlinearModel m;
  m.n = 2;
  m.m = 1;
  const MatrixXd Ac = msd_continuous();
  m.f_cont = [Ac](const VectorXd& x, const VectorXd& u) {
    return VectorXd(Ac * x + Eigen::Vector2d(0.0, 1.0) * u(0));
  };
  m.dt = 0.05;
  m.substeps = 100;
  const VectorXd x = Eigen::Vector2d(0.7, -0.4);
  const VectorXd u = VectorXd::Constant(1, 1.3);
  EXPECT_LE((s.step(x, u) - m.step(x, u)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FourTank, ConstraintSets) {
  const NonlinearModel t = four_tank(four_tank_default_params());
  EXPECT_TRUE(contains(t.U, Eigen::Vector2d(3.6, 4.0)));
  EXPECT_FALSE(contains(t.U, Eigen::Vector2d(3.61, 0.0)));
  EXPECT_FALSE(contains(t.U, Eigen::Vector2d(0.0, 4.01)));
  EXPECT_FALSE(contains(t.U, Eigen::Vector2d(-0.01, 0.0)));
  EXPECT_TRUE(contains(t.X, Eigen::Vector4d(1.36, 1.4, 1.36, 1.4)));
  EXPECT_TRUE(contains(t.X, Eigen::Vector4d(0.2, 0.2, 0.2, 0.2)));
  EXPECT_FALSE(contains(t.X, Eigen::Vector4d(1.37, 1.0, 1.0, 1.0)));
  EXPECT_FALSE(contains(t.X, Eigen::Vector4d(1.0, 1.41, 1.0, 1.0)));
  EXPECT_FALSE(contains(t.X, Eigen::Vector4d(1.0, 1.0, 0.19, 1.0)));
  EXPECT_EQ(t.dt, 10.0);
  EXPECT_EQ(t.substeps, 10);
}

TEST(FourTank, DrainageWithoutInflow) {
  const NonlinearModel t = four_tank(four_tank_default_params());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.02, 2.0);
  for (int s = 0; s < 100; ++s) {
    const VectorXd x = Eigen::Vector4d(U(rng), 0.0, U(rng), 0.0);
    const VectorXd dx = t.f_cont(x, VectorXd::Zero(2));
    // No inflow: every tank is non-increasing.
    EXPECT_LE(dx.maxCoeff(), 0.0);
  }
}

TEST(FourTank, AnalyticSteadyStateIsFixedPoint) {
  const FourTankParams p = four_tank_default_params();
  const NonlinearModel t = four_tank(p);
  for (const Eigen::Vector2d u :
       {Eigen::Vector2d(1.0, 1.5), Eigen::Vector2d(2.0, 2.0),
        Eigen::Vector2d(0.5, 3.0)}) {
    const VectorXd xs = four_tank_steady_state(p, u);
    EXPECT_LE(t.f_cont(xs, u).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((t.step(xs, u) - xs).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FourTank, DefaultsPositiveAndBounded) {
  const FourTankParams p = four_tank_default_params();
  for (int i = 0; i < 4; ++i) {
    EXPECT_GT(p.c[i], 0.0);
    EXPECT_GT(p.cu[i], 0.0);
  }
  const NonlinearModel t = four_tank(p);
  VectorXd x = VectorXd::Ones(4);
  for (int k = 0; k < 100; ++k) {
    x = t.step(x, Eigen::Vector2d(2.0, 2.0));
    EXPECT_GT(x.minCoeff(), 0.0);
    EXPECT_LE(x.maxCoeff(), 2.0);
  }
}

TEST(FourTank, DefaultTargetOnUpperTankBound) {
  const VectorXd xs =
      four_tank_steady_state(four_tank_default_params(), Eigen::Vector2d(2, 2));
  EXPECT_NEAR(xs(0), 1.3, 1e-3);
  EXPECT_NEAR(xs(1), 1.4, 1e-3);
  EXPECT_NEAR(xs(2), 1.3, 1e-3);
  EXPECT_NEAR(xs(3), 1.4, 1e-3);
}

TEST(FourTank, Rk4FourthOrder) {
  const NonlinearModel t = four_tank(four_tank_default_params());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.2, 1.8);
  std::uniform_real_distribution<double> Uu(0.0, 3.6);
  auto with_substeps = [&](int k) {
    NonlinearModel m = t;
    m.substeps = k;
    return m;
  };
  const NonlinearModel coarse = with_substeps(1), fine = with_substeps(2),
                       ref = with_substeps(1000);
  for (int s = 0; s < 10; ++s) {
    const VectorXd x = Eigen::Vector4d(U(rng), U(rng), U(rng), U(rng));
    const VectorXd u = Eigen::Vector2d(Uu(rng), Uu(rng));
    const VectorXd xref = ref.step(x, u);
    const double ratio = (coarse.step(x, u) - xref).norm() /
                         (fine.step(x, u) - xref).norm();
    EXPECT_GE(ratio, 12.0) << "sample " << s;
    EXPECT_LE(ratio, 20.0) << "sample " << s;
  }
}

TEST(FourTank, StepJacobianMatchesFiniteDifferences) {
  const NonlinearModel t = four_tank(four_tank_default_params());
  const VectorXd x = Eigen::Vector4d(0.7, 1.1, 0.5, 0.9);
  const VectorXd u = Eigen::Vector2d(1.2, 2.1);
  VectorXd xn;
  MatrixXd A, B;
  t.step_with_jacobian(x, u, &xn, &A, &B);
  EXPECT_LE((xn - t.step(x, u)).norm(), 1e-14);
  for (int i = 0; i < 4; ++i) {
    const double e = 1e-6;
    VectorXd xp = x, xm = x;
    xp(i) += e;
    xm(i) -= e;
    const VectorXd col = (t.step(xp, u) - t.step(xm, u)) / (2 * e);
    EXPECT_LE((A.col(i) - col).cwiseAbs().maxCoeff(), 1e-7);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = 1e-6;
    VectorXd up = u, um = u;
    up(i) += e;
    um(i) -= e;
    const VectorXd col = (t.step(x, up) - t.step(x, um)) / (2 * e);
    EXPECT_LE((B.col(i) - col).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(CheckContraction, ReferenceMatrixPasses) {
  const FourTankParams p = four_tank_default_params();
  const ContractionReport r = check_contraction(p, 2.0, 2.0, 0.02, 2.0);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.margin, 0.0);
}

TEST(CheckContraction, LargeWeightLimitAndSmallWeightFailure) {
  const FourTankParams p = four_tank_default_params();
  EXPECT_TRUE(check_contraction(p, 1e6, 1e6, 0.02, 2.0).pass);
  EXPECT_FALSE(check_contraction(p, 0.01, 0.01, 0.02, 2.0).pass);
}

TEST(CheckContraction, CornerEqualsGridWorstCase) {
  const FourTankParams p = four_tank_default_params();
  const ContractionReport r = check_contraction(p, 2.0, 2.0, 0.02, 2.0, 0);
  double lmax = -1e300;
  const int G = 20;
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      for (int c = 0; c < G; ++c)
        for (int d = 0; d < G; ++d) {
          const Eigen::Vector4d idx(a, b, c, d);
          const Eigen::Vector4d x =
              (0.02 + (2.0 - 0.02) * idx.array() / (G - 1)).matrix();
          const MatrixXd A = four_tank_jacobian(p, x);
          const MatrixXd P = Eigen::Vector4d(1, 2, 1, 2).asDiagonal();
          // The 2×2 block conditions equal 2·(AᵀP + PA) blockwise.
          const MatrixXd S = 2.0 * (A.transpose() * P + P * A);
          Eigen::Matrix2d s1, s2;
          s1 << S(0, 0), S(0, 1), S(1, 0), S(1, 1);
          s2 << S(2, 2), S(2, 3), S(3, 2), S(3, 3);
          lmax = std::max(
              {lmax,
               Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s1)
                   .eigenvalues()
                   .maxCoeff(),
               Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s2)
                   .eigenvalues()
                   .maxCoeff()});
        }
  EXPECT_NEAR(-lmax, r.margin, 1e-9);
}

TEST(FourTank, JacobianStructureAtUnitLevels) {
  const FourTankParams p = four_tank_default_params();
  const MatrixXd A = four_tank_jacobian(p, VectorXd::Ones(4));
  EXPECT_DOUBLE_EQ(A(0, 0), -0.5 * p.c[0]);
  EXPECT_DOUBLE_EQ(A(0, 1), 0.5 * p.c[1]);
  EXPECT_DOUBLE_EQ(A(1, 1), -0.5 * p.c[1]);
  EXPECT_DOUBLE_EQ(A(2, 2), -0.5 * p.c[2]);
  EXPECT_DOUBLE_EQ(A(2, 3), 0.5 * p.c[3]);
  EXPECT_DOUBLE_EQ(A(3, 3), -0.5 * p.c[3]);
  EXPECT_THROW(four_tank_jacobian(p, Eigen::Vector4d(1, 0, 1, 1)), DomainError);
}

TEST(HarmonicOscillator, RotationIsometry) {
  const LinearSystem s = harmonic_oscillator(M_PI / 2);
  EXPECT_LE((s.A - (MatrixXd(2, 2) << 0, -1, 1, 0).finished())
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  const VectorXd x = Eigen::Vector2d(0.3, -1.7);
  EXPECT_NEAR((s.A * x).norm(), x.norm(), 1e-15);
  const LinearSystem r = harmonic_oscillator(0.3);
  EXPECT_LE((r.A.transpose() * r.A - MatrixXd::Identity(2, 2))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  EXPECT_THROW(dlyap(r.A, MatrixXd::Identity(2, 2)), SpectralRadiusError);
}

}  // namespace
}  // namespace relaxmpc
