#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "relaxmpc/ocp.h"

namespace relaxmpc {

/// Additive disturbance w(k) for the closed loop x⁺ = f(x, u) + w.
struct DisturbanceProfile {
  enum class Kind { Zero, UniformBall, RampUniform, Fixed };

  Kind kind = Kind::Zero;
  /// UniformBall: Euclidean radius.
  double radius = 0.0;
  /// RampUniform: zero on [0, k1], linear up to `peak` on [k1, k2], down to
  /// zero on [k2, k3], zero on [k3, k4]; draws uniform in the ∞-ball.
  int k1 = 50, k2 = 250, k3 = 450, k4 = 550;
  double peak = 5e-2;
  std::vector<Eigen::VectorXd> sequence;
  std::uint64_t seed = 0;

  static DisturbanceProfile zero();
  static DisturbanceProfile uniform_ball(double radius, std::uint64_t seed);
  static DisturbanceProfile ramp(double peak, std::uint64_t seed);
  static DisturbanceProfile fixed(std::vector<Eigen::VectorXd> sequence);

  /// Throws IllFormed if the ramp breakpoints are unordered or peak < 0.
  void validate() const;
};

/// Bound w̄(k) of the ramp profile.
double ramp_bound(const DisturbanceProfile& dist, int k);

/// Deterministic per seed.
std::vector<Eigen::VectorXd> generate(const DisturbanceProfile& dist, int n,
                                      int T);

enum class Termination { Completed, StoppedInfeasible };

struct TraceStep {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd x_bar;
  Eigen::VectorXd w;
  double s = 0.0;
  double value = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  /// distance(X, x(k)).
  double violation = 0.0;
  double solve_time = 0.0;
};

struct Trace {
  std::vector<TraceStep> steps;
  /// State after the last applied input (x(T) for completed runs).
  Eigen::VectorXd x_final;
  double final_violation = 0.0;
  Termination termination = Termination::Completed;
  /// First non-optimal step for StoppedInfeasible runs.
  int stopped_at = -1;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
};

/// Closed loop u(k) = π(x(k)), x(k+1) = f(x(k), u(k)) + w(k). A step whose
/// problem is not solved to optimality ends the run (no fallback input).
Trace simulate(const OcpSpec& spec, const Eigen::VectorXd& x0,
               const DisturbanceProfile& dist, int T);

/// Σ_k distance(X, x(k))² including x(T). Throws IncompleteTrace.
double cumulative_violation(const Trace& trace);

/// Σ_k ℓ(x(k), u(k)). Throws IncompleteTrace.
double closed_loop_cost(const Trace& trace);

struct AuditConstants {
  /// ρ̃ of V(k+1) ≤ ρ̃ V(k) + gain · ω(w(k))².
  double rho_tilde = 1.0;
  double gain = 0.0;
  /// ω(w) = max{‖w‖ − w_bar, 0}; w_bar = 0 gives the plain norm.
  double w_bar = 0.0;
  /// Violations are measured relative to max{1, V(k)}.
  double tol = 1e-7;
};

struct AuditReport {
  bool pass = true;
  double max_violation = 0.0;
  int worst_step = -1;
};

AuditReport lyapunov_audit(const Trace& trace, const AuditConstants& c);

/// One row per step: k, x_1..x_n, u_1..u_m, xbar_1..xbar_n, s, V, status,
/// violation, solve_time_s. With `timing` false the last column is 0 so
/// that runs are byte-reproducible.
void write_trace_csv(std::ostream& os, const Trace& trace, bool timing = true);

}  // namespace relaxmpc
