#pragma once

#include <array>
#include <functional>

#include <Eigen/Dense>

#include "relaxmpc/polytope.h"

namespace relaxmpc {

/// x⁺ = A x + B u.
struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double dt = 0.0;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const {
    return A * x + B * u;
  }
};

/// Sampled-data nonlinear model: the continuous vector field is integrated
/// over dt with `substeps` fixed RK4 steps.
struct NonlinearModel {
  using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&,
                                              const Eigen::VectorXd&)>;
  using FieldJacobian =
      std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                         Eigen::MatrixXd*, Eigen::MatrixXd*)>;

  int n = 0;
  int m = 0;
  Field f_cont;
  /// Optional analytic ∂f/∂x, ∂f/∂u; central differences otherwise.
  FieldJacobian jac_cont;
  double dt = 0.0;
  int substeps = 1;
  Eigen::VectorXd box_lo;
  Eigen::VectorXd box_hi;
  /// Constraint sets attached to the model.
  Polytope X;
  Polytope U;
  /// Returns true if the state left the validity box (e.g. a √ was clamped).
  std::function<bool(const Eigen::VectorXd&)> clamped;

  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const;
  /// Discrete step with sensitivities A = ∂x⁺/∂x, B = ∂x⁺/∂u, obtained by
  /// integrating the variational equations with the same RK4 scheme.
  void step_with_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          Eigen::VectorXd* x_next, Eigen::MatrixXd* A,
                          Eigen::MatrixXd* B) const;
  void field_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                      Eigen::MatrixXd* Jx, Eigen::MatrixXd* Ju) const;
};

enum class Discretization { ZeroOrderHold, ForwardEuler };

/// Unit mass, unit spring, damping 0.1, sampled at dt.
LinearSystem mass_spring_damper(
    double dt = 0.05, Discretization method = Discretization::ZeroOrderHold);

/// Exact zero-order-hold discretization of (A_c, B_c).
LinearSystem zoh(const Eigen::MatrixXd& A_c, const Eigen::MatrixXd& B_c,
                 double dt);

/// Rotation by θ per step (undamped oscillator), B = (0, dt)ᵀ.
LinearSystem harmonic_oscillator(double theta, double dt = 0.1);

/// Four-tank constants: drainage c₁..c₄ and pump gains c_{1,u}..c_{4,u}.
struct FourTankParams {
  std::array<double, 4> c{};
  std::array<double, 4> cu{};
};

/// Documented non-reference defaults (levels in m, time in s). Any positive
/// set with c₂/c₁, c₄/c₃ < 0.8 keeps P = diag(1,2,1,2) contractive on
/// [0.02, 2]⁴; these also make the level (1.3, 1.3) reachable inside U.
FourTankParams four_tank_default_params();

/// Four-tank vector field
///   ẋ₁ = −c₁√x₁ + c₂√x₂ + c_{1,u}u₁,  ẋ₂ = −c₂√x₂ + c_{2,u}u₂,
///   ẋ₃ = −c₃√x₃ + c₄√x₄ + c_{3,u}u₂,  ẋ₄ = −c₄√x₄ + c_{4,u}u₁,
/// dt = 10 s, RK4 with 10 substeps, √ arguments clamped at 1e−3.
NonlinearModel four_tank(const FourTankParams& params);

/// Continuous-time Jacobian A(x). Throws DomainError if some x_i ≤ 0.
Eigen::MatrixXd four_tank_jacobian(const FourTankParams& params,
                                   const Eigen::VectorXd& x);

/// Steady state of the vector field for a constant input (closed form).
Eigen::VectorXd four_tank_steady_state(const FourTankParams& params,
                                       const Eigen::VectorXd& u);

struct ContractionReport {
  bool pass = false;
  /// min over evaluated points of −λ_max of the two 2×2 conditions.
  double margin = 0.0;
};

/// Checks AᵀP + PA ≺ 0 for P = diag(1, p₂, 1, p₄) on the box [lo, hi]⁴ via
/// the two 2×2 conditions, evaluated at the box corners (where the worst case
/// lies) plus `samples` random interior points.
ContractionReport check_contraction(const FourTankParams& params, double p2,
                                    double p4, double lo, double hi,
                                    int samples = 1000);

}  // namespace relaxmpc
