#include "relaxmpc/polytope.h"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "relaxmpc/control_design.h"
#include "relaxmpc/errors.h"
#include "relaxmpc/models.h"

namespace relaxmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Polytope unit_box(int n) {
  return Polytope::box(-VectorXd::Ones(n), VectorXd::Ones(n));
}

// Normalized-row violation max_i (H_i x − h_i)/‖H_i‖.
double margin(const Polytope& p, const VectorXd& x) {
  return ((p.H * x - p.h).array() / p.H.rowwise().norm().array()).maxCoeff();
}

TEST(Contains, Examples) {
  EXPECT_TRUE(contains(unit_box(2), VectorXd::Zero(2)));
  EXPECT_FALSE(contains(unit_box(2), Eigen::Vector2d(1.0001, 0.0)));
  EXPECT_TRUE(contains(unit_box(2), Eigen::Vector2d(0.832, 1.0)));
  EXPECT_THROW(contains(unit_box(2), VectorXd::Zero(3)), DimensionMismatch);
}

TEST(Distance, Examples) {
  const Polytope B = unit_box(2);
  EXPECT_DOUBLE_EQ(distance(B, Eigen::Vector2d(0.3, -0.2)), 0.0);
  EXPECT_NEAR(distance(B, Eigen::Vector2d(2.0, 0.0)), 1.0, 1e-7);
  EXPECT_NEAR(distance(B, Eigen::Vector2d(2.0, 2.0)), std::sqrt(2.0), 1e-7);
  Polytope empty = B;
  empty.h(0) = -2.0;
  EXPECT_THROW(distance(empty, Eigen::Vector2d(3.0, 0.0)), EmptySet);
}

TEST(Distance, LipschitzAndZeroOnMembership) {
  MatrixXd H(5, 2);
  H << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1;
  const Polytope P(H, Eigen::VectorXd((VectorXd(5) << 1, 1, 1, 1, 1.5).finished()));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int s = 0; s < 200; ++s) {
    const VectorXd x = Eigen::Vector2d(U(rng), U(rng));
    const VectorXd y = Eigen::Vector2d(U(rng), U(rng));
    const double dx = distance(P, x), dy = distance(P, y);
    EXPECT_LE(std::abs(dx - dy), (x - y).norm() + 1e-6);
    EXPECT_EQ(dx == 0.0, contains(P, x));
  }
}

TEST(TightenByBall, Examples) {
  const Polytope B = unit_box(2);
  const Polytope same = tighten_by_ball(B, 0.0);
  EXPECT_EQ(same.h, B.h);
  const Polytope half = tighten_by_ball(B, 0.5);
  EXPECT_TRUE(half.h.isApprox(VectorXd::Constant(4, 0.5)));
  EXPECT_FALSE(half.is_empty);
  EXPECT_FALSE(half.is_degenerate);
  EXPECT_TRUE(tighten_by_ball(B, 2.0).is_empty);
  EXPECT_TRUE(tighten_by_ball(B, 1.0).is_degenerate);
}

TEST(TightenByEllipsoid, Examples) {
  const Polytope B = unit_box(2);
  const Polytope ball = tighten_by_ball(B, 0.3);
  const Polytope ell = tighten_by_ellipsoid(B, MatrixXd::Identity(2, 2), 0.3);
  EXPECT_LE((ball.h - ell.h).cwiseAbs().maxCoeff(), 1e-15);
  const Polytope seg =
      tighten_by_ellipsoid(B, Eigen::Vector2d(4.0, 1.0).asDiagonal(), 1.0);
  // x-rows tightened by 0.5, y-rows by 1: the segment [−0.5, 0.5] × {0}.
  EXPECT_NEAR(seg.h(0), 0.5, 1e-15);
  EXPECT_NEAR(seg.h(1), 0.5, 1e-15);
  EXPECT_NEAR(seg.h(2), 0.0, 1e-15);
  EXPECT_NEAR(seg.h(3), 0.0, 1e-15);
  EXPECT_TRUE(seg.is_degenerate);
  EXPECT_FALSE(seg.is_empty);
}

TEST(TightenByEllipsoid, FourTankRowMargins) {
  const NonlinearModel tank = four_tank(four_tank_default_params());
  const MatrixXd P = Eigen::Vector4d(1, 2, 1, 2).asDiagonal();
  const Polytope t = tighten_by_ellipsoid(tank.X, P, 0.05);
  for (int i = 0; i < t.rows(); ++i) {
    const double m = tank.X.h(i) - t.h(i);
    const bool tank_13 = tank.X.H(i, 0) != 0.0 || tank.X.H(i, 2) != 0.0;
    EXPECT_NEAR(m, tank_13 ? 0.05 : 0.05 / std::sqrt(2.0), 1e-15);
  }
}

TEST(TightenByEllipsoid, MinkowskiSumStaysInside) {
  MatrixXd H(6, 2);
  H << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1, -1, 2;
  const Polytope P =
      Polytope(H, (VectorXd(6) << 2, 1, 1, 1.5, 2.5, 2).finished()).normalized();
  const MatrixXd S = (MatrixXd(2, 2) << 3, 1, 1, 2).finished();
  const double delta = 0.4;
  const Polytope T = tighten_by_ellipsoid(P, S, delta);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  std::normal_distribution<double> N(0.0, 1.0);
  const Eigen::LLT<MatrixXd> llt(S);
  int n_inside = 0;
  while (n_inside < 1000) {
    const VectorXd xb = Eigen::Vector2d(U(rng), U(rng));
    if (!contains(T, xb)) continue;
    ++n_inside;
    // e on the boundary of {eᵀSe ≤ δ²}.
    const VectorXd e = llt.matrixU().solve(
        Eigen::Vector2d(N(rng), N(rng)).normalized() * delta);
    EXPECT_TRUE(contains(P, xb + e, 1e-12));
  }
}

TEST(TightenByBall, GridOracle) {
  MatrixXd H(5, 2);
  H << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1;
  const Polytope P =
      Polytope(H, (VectorXd(5) << 1, 1, 1, 1, 1.2).finished()).normalized();
  const double r = 0.25;
  const Polytope T = tighten_by_ball(P, r);
  int wrong = 0;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      const VectorXd x = Eigen::Vector2d(-1.2 + 2.4 * i / 99, -1.2 + 2.4 * j / 99);
      // Oracle: ball of radius r around x is inside P ⇔ distance to the
      // complement ≥ r, i.e. every normalized row has slack ≥ r.
      const double slack = -margin(P, x);
      if (std::abs(slack - r) < 1e-6) continue;
      wrong += contains(T, x, 0.0) != (slack >= r);
    }
  }
  EXPECT_EQ(wrong, 0);
}

TEST(MaxPositiveInvariant, Deadbeat) {
  const Polytope B = unit_box(2);
  const Polytope O = max_positive_invariant(MatrixXd::Zero(2, 2), B);
  for (int i = 0; i < 4; ++i) {
    const VectorXd v = vertices(O)[i];
    EXPECT_NEAR(v.cwiseAbs().maxCoeff(), 1.0, 1e-9);
  }
  EXPECT_EQ(O.rows(), 4);
}

TEST(MaxPositiveInvariant, ContractionKeepsBox) {
  const Polytope O = max_positive_invariant(0.5 * MatrixXd::Identity(2, 2),
                                            unit_box(2));
  EXPECT_EQ(O.rows(), 4);
  EXPECT_EQ(vertices(O).size(), 4u);
}

TEST(MaxPositiveInvariant, MassSpringDamperSimulationOracle) {
  const LinearSystem sys = mass_spring_damper();
  const MatrixXd Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  const LqrSolution lqr =
      dare_lqr(sys.A, sys.B, Q, MatrixXd::Constant(1, 1, 0.2));
  const MatrixXd Acl = sys.A + sys.B * lqr.K;
  const Polytope U = Polytope::box(-2 * VectorXd::Ones(1), 2 * VectorXd::Ones(1));
  const Polytope C = unit_box(2).intersect(U.preimage(lqr.K)).normalized();
  const Polytope O = max_positive_invariant(Acl, C);
  for (const VectorXd& v : vertices(O)) {
    EXPECT_TRUE(contains(O, Acl * v, 1e-9));
    EXPECT_TRUE(contains(C, v, 1e-9));
  }
  int wrong = 0;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      VectorXd x = Eigen::Vector2d(-1.1 + 2.2 * i / 99, -1.1 + 2.2 * j / 99);
      const double mo = margin(O.normalized(), x);
      double ms = -std::numeric_limits<double>::infinity();
      VectorXd xt = x;
      for (int t = 0; t <= 200; ++t) {
        ms = std::max(ms, margin(C, xt));
        xt = Acl * xt;
      }
      if (std::abs(mo) < 1e-6 || std::abs(ms) < 1e-6) continue;
      wrong += (mo <= 0.0) != (ms <= 0.0);
    }
  }
  EXPECT_EQ(wrong, 0);
}

TEST(MaxRhoContractive, Examples) {
  const PolyIncLyap dead =
      max_rho_contractive(MatrixXd::Zero(2, 2), 0.5, unit_box(2));
  EXPECT_EQ(dead.F.rows(), 4);
  EXPECT_NEAR(minkowski_eval(dead, Eigen::Vector2d(0.5, -0.25)), 0.5, 1e-12);

  const Polytope I1 = unit_box(1);
  const PolyIncLyap s = max_rho_contractive(MatrixXd::Constant(1, 1, 0.5), 0.6, I1);
  ASSERT_EQ(s.F.rows(), 2);
  EXPECT_NEAR(s.F.cwiseAbs().maxCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(minkowski_eval(s, VectorXd::Constant(1, 0.5)), 0.5, 1e-12);
  EXPECT_NEAR(minkowski_eval(s, VectorXd::Constant(1, -2.0)), 2.0, 1e-12);
  EXPECT_THROW(max_rho_contractive(MatrixXd::Constant(1, 1, 0.5), 0.4, I1),
               NoConvergence);
}

TEST(MaxRhoContractive, VertexContraction) {
  MatrixXd A(2, 2);
  A << 0.9, 0.3, -0.2, 0.8;
  const double rho = 0.95;
  ASSERT_LT(spectral_radius(A), rho);
  const PolyIncLyap L = max_rho_contractive(A, rho, unit_box(2));
  const Polytope S(L.F, VectorXd::Ones(L.F.rows()));
  for (const VectorXd& v : vertices(S)) {
    EXPECT_LE(minkowski_eval(L, A * v), rho * minkowski_eval(L, v) + 1e-9);
  }
  // Grid oracle: x ∈ S ⇔ ρ^{-t} A^t x stays in the box for all t.
  int wrong = 0;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      VectorXd x = Eigen::Vector2d(-1.05 + 2.1 * i / 99, -1.05 + 2.1 * j / 99);
      const double mo = margin(S, x);
      double ms = -std::numeric_limits<double>::infinity();
      VectorXd xt = x;
      for (int t = 0; t <= 400; ++t) {
        ms = std::max(ms, margin(unit_box(2), xt));
        xt = A * xt / rho;
      }
      if (std::abs(mo) < 1e-6 || std::abs(ms) < 1e-6) continue;
      wrong += (mo <= 0.0) != (ms <= 0.0);
    }
  }
  EXPECT_EQ(wrong, 0);
  EXPECT_GT(L.lower_constant(), 0.0);
  EXPECT_LE(L.lower_constant(), 1.0 + 1e-12);
}

TEST(MinkowskiEval, Origin) {
  PolyIncLyap L;
  L.F = (MatrixXd(2, 1) << 1, -1).finished();
  EXPECT_EQ(minkowski_eval(L, VectorXd::Zero(1)), 0.0);
}

TEST(Vertices, Square) {
  EXPECT_EQ(vertices(unit_box(2)).size(), 4u);
  EXPECT_EQ(vertices(unit_box(3)).size(), 8u);
  EXPECT_THROW(vertices(unit_box(4)), DomainError);
}

TEST(RemoveRedundant, DropsImpliedRows) {
  MatrixXd H(5, 2);
  H << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1;
  const Polytope P(H, (VectorXd(5) << 1, 1, 1, 1, 3).finished());
  EXPECT_EQ(remove_redundant(P).rows(), 4);
}

TEST(PolytopeIo, RoundTrip) {
  MatrixXd H(3, 2);
  H << 1, 0, 0, 1, -1, -1;
  const Polytope P(H, Eigen::Vector3d(1, 2, 0.5));
  std::stringstream ss;
  write_polytope(ss, P);
  const Polytope Q = read_polytope(ss);
  EXPECT_EQ(Q.H, P.H);
  EXPECT_EQ(Q.h, P.h);
}

}  // namespace
}  // namespace relaxmpc
