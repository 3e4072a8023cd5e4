#pragma once

#include <vector>

#include <Eigen/Dense>

#include "relaxmpc/ocp.h"
#include "relaxmpc/sim.h"

namespace relaxmpc {

/// Mass-spring-damper regulation benchmark with every ingredient the
/// variants need precomputed once (LQR terminal set, soft-T and soft-G
/// terminal ingredients, V_δ).
struct LinearBenchmark {
  LinearSystem sys;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Polytope X;
  Polytope U;
  int N = 10;
  TerminalIngredients lqr;
  /// V_δ = ‖x − z‖²_P with AᵀPA − P = −Q.
  QuadIncLyap lyap;
  double lambda = 1e3;
  double q_xi = 1e5;
  int M_tail = 50;
  Polytope soft_t_terminal;
  Eigen::MatrixXd P_g;
  /// Initial states are c · ray.
  Eigen::VectorXd ray;

  /// Spec of the given variant. Soft-G gets the global quadratic terminal
  /// cost; soft-T the precomputed input-only set; all others the LQR set.
  OcpSpec spec(const Formulation& f) const;
};

LinearBenchmark msd_benchmark(
    Discretization method = Discretization::ZeroOrderHold, double dt = 0.05);

/// Undamped oscillator rotating by θ per step with the marginal incremental
/// Lyapunov function V_δ = ‖x − z‖² (AᵀA = I). Q = I, R = 1,
/// X = [−2, 2]², U = [−1, 1], λ = 10⁴.
LinearBenchmark harmonic_benchmark(double theta = 0.3);

/// Four-tank setpoint-tracking benchmark under the ramp disturbance.
struct FourTankBenchmark {
  FourTankParams params;
  NonlinearModel model;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  int N = 10;
  TerminalEquality terminal;
  /// V_δ = ‖x − z‖²_P with P = diag(1, 2, 1, 2).
  QuadIncLyap lyap;
  double lambda = 1e5;
  double q_xi = 1e4;
  double delta = 5e-2;
  double w_ball = 7e-4;
  Eigen::VectorXd x0;
  int T = 550;

  OcpSpec spec(const Formulation& f) const;
  DisturbanceProfile disturbance(std::uint64_t seed) const;
};

FourTankBenchmark four_tank_benchmark(
    const FourTankParams& params = four_tank_default_params());

/// Decrease constants of the slack value function on the linear benchmark:
/// ρ̃ = max{(1 + ε)ρ_δ², 1 − c_ℓ α_N / c₂} and gain λ c_{δ,4}, with c_ℓ the
/// smallest eigenvalue of Q and c₂ ≥ V_nom(x)/‖x‖² on the nominal domain,
/// estimated from λ_max(P_f) and `samples` uniform draws in X, inflated by
/// 1.1.
AuditConstants slack_audit_constants(const LinearBenchmark& bench,
                                     double lambda, int samples = 400,
                                     std::uint64_t seed = 1);

/// Largest c ∈ [lo, hi] with the first problem at c · dir solved to
/// optimality (bisection to `tol`). Returns lo if lo itself fails.
double feasibility_boundary(const OcpSpec& spec, const Eigen::VectorXd& dir,
                            double lo, double hi, double tol = 1e-3);

/// Closed-loop cost of each variant relative to the proposed one, in
/// percent; +∞ if the variant stops before T.
struct CostRow {
  double c = 0.0;
  double proposed = 0.0;
  double relative_percent = 0.0;
  bool completed = false;
};

CostRow relative_cost(const LinearBenchmark& bench, const Formulation& variant,
                      double c, int T);

}  // namespace relaxmpc
