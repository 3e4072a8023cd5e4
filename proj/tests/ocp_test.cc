#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "relaxmpc/errors.h"
#include "relaxmpc/experiments.h"
#include "relaxmpc/ocp.h"

namespace relaxmpc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fm = formulation;

class MsdOcp : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bench_ = new LinearBenchmark(msd_benchmark()); }
  static void TearDownTestSuite() {
    delete bench_;
    bench_ = nullptr;
  }
  static const LinearBenchmark& b() { return *bench_; }
  static VectorXd ray(double c) { return c * b().ray; }

  static LinearBenchmark* bench_;
};

LinearBenchmark* MsdOcp::bench_ = nullptr;

TEST_F(MsdOcp, OriginHasZeroValueForEveryVariant) {
  const std::vector<Formulation> all = {
      fm::Nominal{},        fm::SlackInit{1e3},     fm::ImplicitSlack{1e3, 3},
      fm::Tube{0.05, {}},   fm::TubeSlack{0.05, 1e3, {}}, fm::SoftP{},
      fm::SoftT{},          fm::SoftG{}};
  for (const Formulation& f : all) {
    const StepResult r = mpc_step(b().spec(f), VectorXd::Zero(2));
    ASSERT_EQ(r.status, SolveStatus::Optimal) << formulation_name(f);
    EXPECT_NEAR(r.value, 0.0, 1e-7) << formulation_name(f);
    EXPECT_LE(r.u_applied.cwiseAbs().maxCoeff(), 1e-5) << formulation_name(f);
  }
}

TEST_F(MsdOcp, NominalFeasibilityOnTheRay) {
  const OcpSpec s = b().spec(fm::Nominal{});
  EXPECT_EQ(mpc_step(s, ray(1.0)).status, SolveStatus::Optimal);
  EXPECT_EQ(mpc_step(s, ray(1.52)).status, SolveStatus::Infeasible);
  EXPECT_TRUE(std::isinf(nominal_value(s, ray(1.52))));
}

// Relaxing the initial state can only lower the optimal value, and the
// relaxed problem is feasible far outside the state constraints.
TEST_F(MsdOcp, SlackInitBoundsNominalAndIsGloballyFeasible) {
  const OcpSpec nom = b().spec(fm::Nominal{});
  const OcpSpec sl = b().spec(fm::SlackInit{b().lambda});
  for (double c : {0.2, 0.6, 1.0}) {
    const StepResult r = mpc_step(sl, ray(c));
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_LE(r.value, nominal_value(nom, ray(c)) * (1.0 + 1e-7) + 1e-9);
  }
  EXPECT_EQ(mpc_step(sl, ray(4.0)).status, SolveStatus::Optimal);

}

TEST_F(MsdOcp, RelaxedVariantsAreGloballyFeasible) {
  const std::vector<Formulation> relaxed = {
      fm::SlackInit{b().lambda}, fm::ImplicitSlack{b().lambda, 3},
      fm::ImplicitSlackSoftInput{b().lambda, 3},
      fm::TubeSlack{0.05, b().lambda, {}}, fm::SoftG{b().q_xi}};
  for (const Formulation& f : relaxed) {
    const OcpSpec s = b().spec(f);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> G(0.0, 1.0);
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    int failures = 0;
    for (int i = 0; i < 1000; ++i) {
      const VectorXd x =
          100.0 * std::sqrt(U01(rng)) * Eigen::Vector2d(G(rng), G(rng)).normalized();
      const StepResult r = mpc_step(s, x);
      if (r.status != SolveStatus::Optimal) {
        ++failures;
        ADD_FAILURE() << formulation_name(f) << " at " << x.transpose();
        if (failures > 3) break;
      }
    }
  }
}

TEST(ImplicitPenalty, ClosedForms) {
  EXPECT_LE((implicit_penalty_matrix(MatrixXd::Zero(3, 3), 4) -
             MatrixXd::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  // 1 + 0.5² + 0.25² for M = 3.
  EXPECT_NEAR(implicit_penalty_matrix(MatrixXd::Constant(1, 1, 0.5), 3)(0, 0),
              1.3125, 1e-15);
  EXPECT_THROW(implicit_penalty_matrix(MatrixXd::Identity(2, 2), 0), IllFormed);
}

// With M = 1 the implicit penalty is λ‖x − x̄‖², i.e. the explicit slack
// with V_δ = ‖·‖².
TEST_F(MsdOcp, ImplicitWithUnitHorizonIsSlackInit) {
  OcpSpec explicit_spec = b().spec(fm::SlackInit{b().lambda});
  QuadIncLyap identity = b().lyap;
  identity.P = MatrixXd::Identity(2, 2);
  explicit_spec.lyap = identity;
  const OcpSpec implicit_spec = b().spec(fm::ImplicitSlack{b().lambda, 1});
  for (double c : {0.5, 1.3, 3.0}) {
    const StepResult a = mpc_step(explicit_spec, ray(c));
    const StepResult i = mpc_step(implicit_spec, ray(c));
    ASSERT_EQ(a.status, SolveStatus::Optimal);
    ASSERT_EQ(i.status, SolveStatus::Optimal);
    EXPECT_NEAR(a.value, i.value, 1e-6 * (1.0 + a.value)) << c;
    EXPECT_LE((a.u_applied - i.u_applied).cwiseAbs().maxCoeff(), 1e-4) << c;
  }
}

TEST_F(MsdOcp, ImplicitBeyondHorizonNeedsTerminalLaw) {
  OcpSpec s = b().spec(fm::ImplicitSlack{b().lambda, b().N + 5});
  EXPECT_EQ(mpc_step(s, ray(2.0)).status, SolveStatus::Optimal);
  s.terminal = GlobalQuadratic{b().P_g};
  EXPECT_THROW(mpc_step(s, ray(2.0)), MissingTerminalLaw);
}

// Freeing the second input trajectory relaxes the implicit variant (v = ū
// is always a candidate), so its value can only be lower.
TEST_F(MsdOcp, SoftInputRelaxesImplicit) {
  const OcpSpec soft = b().spec(fm::ImplicitSlackSoftInput{b().lambda, 3});
  const OcpSpec hard = b().spec(fm::ImplicitSlack{b().lambda, 3});
  const StepResult z = mpc_step(soft, VectorXd::Zero(2));
  ASSERT_EQ(z.status, SolveStatus::Optimal);
  EXPECT_NEAR(z.value, 0.0, 1e-7);
  const StepResult a = mpc_step(soft, ray(0.4));
  const StepResult h = mpc_step(hard, ray(0.4));
  ASSERT_EQ(a.status, SolveStatus::Optimal);
  EXPECT_LE(a.value, h.value * (1.0 + 1e-6) + 1e-9);
  EXPECT_GT(a.value, 0.0);
}

TEST_F(MsdOcp, TubeWithZeroWidthIsNominal) {
  const OcpSpec nom = b().spec(fm::Nominal{});
  const OcpSpec tube = b().spec(fm::Tube{0.0, {}});
  for (double c : {0.3, 0.9}) {
    const StepResult a = mpc_step(nom, ray(c));
    const StepResult t = mpc_step(tube, ray(c));
    ASSERT_EQ(t.status, SolveStatus::Optimal);
    EXPECT_NEAR(a.value, t.value, 1e-6 * (1.0 + a.value));
    EXPECT_LE((t.x_bar - ray(c)).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_EQ(mpc_step(tube, ray(1.52)).status, SolveStatus::Infeasible);
}

TEST_F(MsdOcp, TubeSlackGrowsWithDistance) {
  const OcpSpec s = b().spec(fm::TubeSlack{0.05, b().lambda, {}});
  // λs² has zero slope at s = 0, so the slack is small but not zero
  // whenever the tube boundary is active; it grows with the distance to
  // the tube-feasible set.
  const StepResult inside = mpc_step(s, ray(0.2));
  ASSERT_EQ(inside.status, SolveStatus::Optimal);
  EXPECT_LE(inside.slack_s, 1e-3);
  double prev = inside.slack_s;
  for (double c : {1.5, 3.0, 8.0}) {
    const StepResult r = mpc_step(s, ray(c));
    ASSERT_EQ(r.status, SolveStatus::Optimal) << c;
    EXPECT_GT(r.slack_s, prev) << c;
    prev = r.slack_s;
  }
}

TEST_F(MsdOcp, SoftBaselines) {
  // Inside the nominal domain with inactive state constraints the soft
  // problem coincides with the nominal one.
  const OcpSpec nom = b().spec(fm::Nominal{});
  const OcpSpec soft_p = b().spec(fm::SoftP{b().q_xi});
  const double v_nom = nominal_value(nom, ray(0.3));
  const StepResult p = mpc_step(soft_p, ray(0.3));
  ASSERT_EQ(p.status, SolveStatus::Optimal);
  EXPECT_NEAR(p.value, v_nom, 1e-3 * v_nom);
  // Soft-P keeps the hard terminal set, so it has a finite domain.
  EXPECT_EQ(mpc_step(soft_p, ray(1.02)).status, SolveStatus::Optimal);
  EXPECT_EQ(mpc_step(soft_p, ray(1.52)).status, SolveStatus::Infeasible);
  // Soft-G has no terminal set.
  EXPECT_EQ(mpc_step(b().spec(fm::SoftG{b().q_xi}), ray(4.0)).status,
            SolveStatus::Optimal);
  EXPECT_EQ(mpc_step(b().spec(fm::SoftT{b().q_xi, b().M_tail, {}}), ray(1.52))
                .status,
            SolveStatus::Optimal);
}

TEST_F(MsdOcp, SpecValidation) {
  OcpSpec s = b().spec(fm::SlackInit{b().lambda});
  s.lyap.reset();
  EXPECT_THROW(mpc_step(s, ray(1.0)), MissingLyap);
  s = b().spec(fm::Nominal{});
  EXPECT_THROW(mpc_step(s, VectorXd::Zero(3)), DimensionMismatch);
  s.N = 0;
  EXPECT_THROW(s.validate(), IllFormed);
  s = b().spec(fm::SlackInit{-1.0});
  EXPECT_THROW(s.validate(), IllFormed);
}

// Above the threshold λ_min the exact penalty leaves the initial state in
// place wherever the nominal problem is feasible.
TEST_F(MsdOcp, ExactPenaltyRecoversNominal) {
  const OcpSpec nom = b().spec(fm::Nominal{});
  const PolyIncLyap gauge = max_rho_contractive(b().sys.A, 0.999, b().X);
  std::vector<VectorXd> samples;
  for (double a = -0.5; a <= 0.5001; a += 0.25) {
    for (double v = -0.5; v <= 0.5001; v += 0.25) {
      samples.push_back(Eigen::Vector2d(a, v));
    }
  }
  const double lambda_min = exact_penalty_threshold(nom, gauge, samples);
  ASSERT_GT(lambda_min, 0.0);
  ASSERT_TRUE(std::isfinite(lambda_min));

  OcpSpec exact = b().spec(fm::SlackInit{2.0 * lambda_min});
  exact.lyap = gauge;
  for (const VectorXd& x : {samples[6], samples[12], samples[18]}) {
    const StepResult r = mpc_step(exact, x);
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_LE((r.x_bar - x).cwiseAbs().maxCoeff(), 1e-5) << x.transpose();
    EXPECT_NEAR(r.value, nominal_value(nom, x),
                1e-5 * (1.0 + r.value))
        << x.transpose();
  }
  samples.push_back(ray(3.0));
  EXPECT_THROW(exact_penalty_threshold(nom, gauge, samples), InfeasibleSample);
}

TEST(FourTankOcp, NominalTrackingProblemSolves) {
  const FourTankBenchmark b = four_tank_benchmark();
  const StepResult r = mpc_step(b.spec(fm::SlackInit{b.lambda}), b.x0);
  ASSERT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_TRUE(contains(b.model.X, r.x_bar, 1e-6));
  EXPECT_TRUE(contains(b.model.U, r.u_applied, 1e-6));
  const StepResult n = mpc_step(b.spec(fm::Nominal{}), b.x0);
  ASSERT_EQ(n.status, SolveStatus::Optimal);
  EXPECT_LE(r.value, n.value * (1.0 + 1e-6));
}

}  // namespace
}  // namespace relaxmpc
