#pragma once

#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "relaxmpc/conic.h"
#include "relaxmpc/control_design.h"
#include "relaxmpc/models.h"
#include "relaxmpc/nlp.h"
#include "relaxmpc/polytope.h"

namespace relaxmpc {

using Model = std::variant<LinearSystem, NonlinearModel>;
using IncLyap = std::variant<QuadIncLyap, PolyIncLyap>;

/// Setpoint tracking with an artificial steady state (x_s, u_s):
/// stage cost ‖x − x_s‖²_Q + ‖u − u_s‖²_R, terminal equality x_N = x_s,
/// steady-state condition f(x_s, u_s) = x_s and offset cost
/// V_o‖C x_s − y_target‖².
struct TerminalEquality {
  Eigen::MatrixXd C;
  Eigen::VectorXd y_target;
  double offset_weight = 1e4;
};

/// Global quadratic terminal cost ‖x‖²_{P_g} with no terminal set (k_f = 0).
struct GlobalQuadratic {
  Eigen::MatrixXd P_g;
};

using Terminal = std::variant<TerminalIngredients, TerminalEquality,
                              GlobalQuadratic>;

namespace formulation {

struct Nominal {};
/// Initial state x̄ free, penalty λ V_δ(x, x̄).
struct SlackInit {
  double lambda = 1e3;
};
/// Penalty λ Σ_{k<M} ‖x_u(k, x) − x_u(k, x̄)‖² under the same inputs.
struct ImplicitSlack {
  double lambda = 1e3;
  int M = 1;
};
/// Like ImplicitSlack, but the true-state trajectory has its own
/// (unconstrained) inputs, regularized towards the nominal ones.
struct ImplicitSlackSoftInput {
  double lambda = 1e3;
  int M = 1;
};
/// Hard tube ‖L(x − x̄)‖ ≤ δ with tightened constraints. If
/// `terminal_set` is empty the terminal set is tightened by the same ball.
struct Tube {
  double delta = 0.0;
  std::optional<Polytope> terminal_set;
};
/// Relaxed tube ‖L(x − x̄)‖ ≤ δ + s with cost λ s².
struct TubeSlack {
  double delta = 0.0;
  double lambda = 1e3;
  std::optional<Polytope> terminal_set;
};
/// Soft state constraints with the hard terminal ingredients.
struct SoftP {
  double q_xi = 1e5;
};
/// Soft state constraints, terminal set accounting for inputs only, and a
/// peak-violation penalty along an M_tail-step closed-loop tail.
struct SoftT {
  double q_xi = 1e5;
  int M_tail = 50;
  std::optional<Polytope> input_terminal_set;
};
/// Soft state constraints with a global quadratic terminal cost.
struct SoftG {
  double q_xi = 1e5;
};

}  // namespace formulation

using Formulation =
    std::variant<formulation::Nominal, formulation::SlackInit,
                 formulation::ImplicitSlack,
                 formulation::ImplicitSlackSoftInput, formulation::Tube,
                 formulation::TubeSlack, formulation::SoftP,
                 formulation::SoftT, formulation::SoftG>;

const char* formulation_name(const Formulation& f);

struct OcpSpec {
  Model model;
  int N = 10;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Polytope X;
  Polytope U;
  Terminal terminal;
  Formulation formulation;
  std::optional<IncLyap> lyap;
  /// Optional cap J_N(x̄, u) ≤ V̄ on the nominal cost.
  std::optional<double> sublevel_cap;

  int n() const;
  int m() const;
  bool is_linear() const {
    return std::holds_alternative<LinearSystem>(model);
  }
  /// Throws DimensionMismatch, IllFormed or MissingLyap.
  void validate() const;
};

/// One-step prediction of the model (no disturbance).
Eigen::VectorXd model_step(const Model& model, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u);

/// Optimal-control problem for the variant at the measured state x. For
/// linear models the program is a ConicProgram; nonlinear models give an
/// NlpProblem whose base carries every linear/cone constraint. Blocks:
/// "xbar", "x1".."xN", "u0".."u{N-1}" plus variant-specific ones ("s", "t",
/// "xi0".., "eta", "xs", "us", "y1".., "v0"..).
using OcpProblem = std::variant<ConicProgram, NlpProblem>;

OcpProblem build(const OcpSpec& spec, const Eigen::VectorXd& x);

ConicProgram build_nominal(const OcpSpec& spec, const Eigen::VectorXd& x);
ConicProgram build_slack_init(const OcpSpec& spec, const Eigen::VectorXd& x);
OcpProblem build_implicit(const OcpSpec& spec, const Eigen::VectorXd& x);
NlpProblem build_implicit_soft_input(const OcpSpec& spec,
                                     const Eigen::VectorXd& x);
ConicProgram build_tube(const OcpSpec& spec, const Eigen::VectorXd& x);
ConicProgram build_tube_slack(const OcpSpec& spec, const Eigen::VectorXd& x);
ConicProgram build_soft_baseline(const OcpSpec& spec,
                                 const Eigen::VectorXd& x);

/// P_M = Σ_{k<M} (A^k)ᵀ A^k.
Eigen::MatrixXd implicit_penalty_matrix(const Eigen::MatrixXd& A, int M);

/// Global soft terminal weight: AᵀPA − P + Q + Hᵀ(q_xi I)H = 0.
Eigen::MatrixXd soft_global_terminal(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& Q,
                                     const Polytope& X, double q_xi);

/// Terminal set for soft-T: maximal invariant subset of {Kx ∈ U} under
/// A + BK.
Polytope input_only_terminal_set(const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B,
                                 const Eigen::MatrixXd& K, const Polytope& U);

/// Tightened state set used by the tube variants: X ⊖ {‖e‖ ≤ δ/√c₁}.
/// Throws DegenerateTightening if the result is empty or degenerate.
Polytope tube_state_set(const OcpSpec& spec, double delta);

struct StepResult {
  Eigen::VectorXd u_applied;
  Eigen::VectorXd x_bar;
  double slack_s = 0.0;
  double value = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  double solve_time = 0.0;
  int iterations = 0;
  /// Full decision vector (for warm starts and diagnostics).
  Eigen::VectorXd z;
};

/// Builds, solves and extracts the first nominal input. `warm` is the
/// decision vector of a previous step (shifted by one stage internally).
StepResult mpc_step(const OcpSpec& spec, const Eigen::VectorXd& x,
                    const std::optional<Eigen::VectorXd>& warm = std::nullopt);

/// Stateful controller holding the warm start between steps.
class MpcController {
 public:
  explicit MpcController(OcpSpec spec);
  StepResult step(const Eigen::VectorXd& x);
  void reset() { warm_.reset(); }
  const OcpSpec& spec() const { return spec_; }

 private:
  OcpSpec spec_;
  std::optional<Eigen::VectorXd> warm_;
};

/// Optimal value of the nominal problem at x, or +∞ if infeasible.
double nominal_value(const OcpSpec& spec, const Eigen::VectorXd& x);

/// λ_min = 2 L̂_V / c₁, with L̂_V the largest finite-difference slope of
/// V_nom over all sample pairs and c₁ the lower constant of the gauge.
/// Throws InfeasibleSample.
double exact_penalty_threshold(const OcpSpec& nominal,
                               const PolyIncLyap& lyap,
                               const std::vector<Eigen::VectorXd>& samples);

}  // namespace relaxmpc
