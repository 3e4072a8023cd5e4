#pragma once

#include <functional>

#include <Eigen/Dense>

#include "relaxmpc/conic.h"

namespace relaxmpc {

/// Nonlinear program with an exactly quadratic objective:
///
///   min  ½ zᵀ H z + fᵀ z + constant            (from `base`)
///   s.t. all linear and cone constraints of `base`,
///        c_eq(z) = 0,  c_in(z) ≤ 0.
///
/// The smooth maps return their value and Jacobian; JacobianFn may be left
/// empty, in which case central differences are used.
struct NlpProblem {
  using ValueFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  ConicProgram base;
  ValueFn eq;
  JacobianFn eq_jacobian;
  ValueFn in;
  JacobianFn in_jacobian;

  int dim() const { return base.num_vars(); }
};

enum class SqpHessian {
  /// Objective Hessian only: cheap, linear convergence when constraints
  /// are curved.
  GaussNewton,
  /// Adds a damped-BFGS estimate of the constraint curvature (dense).
  DampedBfgs,
};

struct SqpSettings {
  double tol = 1e-6;
  int max_iter = 100;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  /// Proximal term added to the subproblem Hessian.
  double regularization = 1e-8;
  SqpHessian hessian = SqpHessian::GaussNewton;
  SolverSettings qp;
};

struct SqpReport {
  Eigen::VectorXd z;
  /// Scaled KKT residual: max of constraint violation and stationarity,
  /// both relative to 1 + ‖∇f‖∞.
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  /// Status of the last QP subproblem; Infeasible when the linearization
  /// admits no point.
  SolveStatus qp_status = SolveStatus::Optimal;
  double objective = 0.0;
  double solve_time = 0.0;
};

/// SQP with an ℓ1 merit function and Armijo backtracking.
SqpReport sqp_solve(const NlpProblem& prob, const Eigen::VectorXd& z0,
                    const SqpSettings& settings = {});

/// Central-difference Jacobian with step 1e−6·(1 + |z_i|).
Eigen::MatrixXd jacobian(const NlpProblem::ValueFn& map,
                         const Eigen::VectorXd& z);

/// Analytic Jacobian when provided, else central differences.
Eigen::MatrixXd jacobian(const NlpProblem::ValueFn& map,
                         const NlpProblem::JacobianFn& analytic,
                         const Eigen::VectorXd& z);

}  // namespace relaxmpc
