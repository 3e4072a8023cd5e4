#include "relaxmpc/experiments.h"

#include <cmath>
#include <limits>
#include <random>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fm = formulation;

LinearBenchmark msd_benchmark(Discretization method, double dt) {
  LinearBenchmark b;
  b.sys = mass_spring_damper(dt, method);
  b.Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  b.R = MatrixXd::Constant(1, 1, 0.2);
  b.X = Polytope::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0));
  b.U = Polytope::box(VectorXd::Constant(1, -2.0), VectorXd::Constant(1, 2.0));
  b.lqr = lqr_terminal(b.sys.A, b.sys.B, b.Q, b.R, b.X, b.U);
  b.lyap = contraction_constants(b.sys.A, dlyap(b.sys.A, b.Q), b.Q);
  b.soft_t_terminal = input_only_terminal_set(b.sys.A, b.sys.B, b.lqr.K, b.U);
  b.P_g = soft_global_terminal(b.sys.A, b.Q, b.X, b.q_xi);
  b.ray = Eigen::Vector2d(0.832, 1.0);
  return b;
}

LinearBenchmark harmonic_benchmark(double theta) {
  LinearBenchmark b;
  b.sys = harmonic_oscillator(theta);
  b.Q = MatrixXd::Identity(2, 2);
  b.R = MatrixXd::Identity(1, 1);
  b.X = Polytope::box(VectorXd::Constant(2, -2.0), VectorXd::Constant(2, 2.0));
  b.U = Polytope::box(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
  b.lqr = lqr_terminal(b.sys.A, b.sys.B, b.Q, b.R, b.X, b.U);
  // Marginal: AᵀA − I = 0, no strict contraction.
  b.lyap.P = MatrixXd::Identity(2, 2);
  b.lyap.c = {1.0, 1.0, 0.0, 2.0};
  b.lyap.rho_delta = 1.0;
  b.lyap.epsilon = 1.0;
  b.lambda = 1e4;
  b.soft_t_terminal = input_only_terminal_set(b.sys.A, b.sys.B, b.lqr.K, b.U);
  b.ray = Eigen::Vector2d(1.0, 1.0);
  return b;
}

OcpSpec LinearBenchmark::spec(const Formulation& f) const {
  OcpSpec s;
  s.model = sys;
  s.N = N;
  s.Q = Q;
  s.R = R;
  s.X = X;
  s.U = U;
  s.terminal = lqr;
  s.lyap = lyap;
  s.formulation = f;
  if (std::holds_alternative<fm::SoftG>(f)) {
    if (P_g.size() == 0) throw IllFormed("benchmark has no global terminal weight");
    s.terminal = GlobalQuadratic{P_g};
  } else if (const auto* t = std::get_if<fm::SoftT>(&f)) {
    if (!t->input_terminal_set) {
      fm::SoftT st = *t;
      st.input_terminal_set = soft_t_terminal;
      s.formulation = st;
    }
  }
  return s;
}

FourTankBenchmark four_tank_benchmark(const FourTankParams& params) {
  FourTankBenchmark b;
  b.params = params;
  b.model = four_tank(b.params);
  b.Q = MatrixXd::Identity(4, 4);
  b.R = 1e-2 * MatrixXd::Identity(2, 2);
  MatrixXd C = MatrixXd::Zero(2, 4);
  C(0, 0) = 1.0;
  C(1, 2) = 1.0;
  b.terminal = TerminalEquality{C, Eigen::Vector2d(1.3, 1.3), 1e4};
  // Only c₁ (tightening) and c₂ enter the tracking experiments.
  b.lyap.P = Eigen::Vector4d(1.0, 2.0, 1.0, 2.0).asDiagonal();
  b.lyap.c = {1.0, 2.0, 0.0, 0.0};
  b.lyap.rho_delta = 1.0;
  b.x0 = four_tank_steady_state(b.params, Eigen::Vector2d(1.5, 1.5));
  return b;
}

OcpSpec FourTankBenchmark::spec(const Formulation& f) const {
  OcpSpec s;
  s.model = model;
  s.N = N;
  s.Q = Q;
  s.R = R;
  s.X = model.X;
  s.U = model.U;
  s.terminal = terminal;
  s.lyap = lyap;
  s.formulation = f;
  return s;
}

DisturbanceProfile FourTankBenchmark::disturbance(std::uint64_t seed) const {
  return DisturbanceProfile::ramp(5e-2, seed);
}

AuditConstants slack_audit_constants(const LinearBenchmark& bench,
                                     double lambda, int samples,
                                     std::uint64_t seed) {
  const OcpSpec nom = bench.spec(fm::Nominal{});
  const int n = static_cast<int>(bench.Q.rows());
  // Near the origin V_nom = ‖x‖²_{P_f}.
  double c2 = Eigen::SelfAdjointEigenSolver<MatrixXd>(bench.lqr.P_f)
                  .eigenvalues()
                  .maxCoeff();
  VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    hi(i) = support(bench.X, VectorXd::Unit(n, i));
    lo(i) = -support(bench.X, -VectorXd::Unit(n, i));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  for (int k = 0; k < samples; ++k) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = lo(i) + (hi(i) - lo(i)) * U01(rng);
    const double v = nominal_value(nom, x);
    if (std::isfinite(v) && x.squaredNorm() > 1e-12) {
      c2 = std::max(c2, v / x.squaredNorm());
    }
  }
  c2 *= 1.1;
  const double c_ell =
      Eigen::SelfAdjointEigenSolver<MatrixXd>(bench.Q).eigenvalues().minCoeff();
  AuditConstants c;
  c.rho_tilde = std::max(bench.lyap.one_step_rate(),
                         1.0 - c_ell * bench.lqr.alpha_N / c2);
  c.gain = lambda * bench.lyap.c[3];
  return c;
}

double feasibility_boundary(const OcpSpec& spec, const VectorXd& dir,
                            double lo, double hi, double tol) {
  auto ok = [&](double c) {
    return mpc_step(spec, c * dir).status == SolveStatus::Optimal;
  };
  if (!ok(lo)) return lo;
  if (ok(hi)) return hi;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CostRow relative_cost(const LinearBenchmark& bench, const Formulation& variant,
                      double c, int T) {
  CostRow row;
  row.c = c;
  const VectorXd x0 = c * bench.ray;
  const Trace ref = simulate(bench.spec(fm::SlackInit{bench.lambda}), x0,
                             DisturbanceProfile::zero(), T);
  row.proposed = closed_loop_cost(ref);
  const Trace tr = simulate(bench.spec(variant), x0, DisturbanceProfile::zero(), T);
  row.completed = tr.termination == Termination::Completed;
  row.relative_percent =
      row.completed ? 100.0 * closed_loop_cost(tr) / row.proposed
                    : std::numeric_limits<double>::infinity();
  return row;
}

}  // namespace relaxmpc
