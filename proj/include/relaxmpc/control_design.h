#pragma once

#include <array>

#include <Eigen/Dense>

#include "relaxmpc/polytope.h"

namespace relaxmpc {

/// Quadratic incremental Lyapunov function V(x, z) = ‖x − z‖²_P with
///   c[0]‖e‖² ≤ V ≤ c[1]‖e‖²,
///   V(Ax + w, Az) ≤ (1 + ε) ρ² V(x, z) + c[3]‖w‖²,
/// where ρ² = 1 − c[2]/c[1] is the raw contraction rate and ε the Young split.
struct QuadIncLyap {
  Eigen::MatrixXd P;
  std::array<double, 4> c{};
  double rho_delta = 0.0;
  double epsilon = 1.0;

  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
    const Eigen::VectorXd e = x - z;
    return e.dot(P * e);
  }
  /// Rate (1 + ε) ρ² of the disturbed one-step bound.
  double one_step_rate() const {
    return (1.0 + epsilon) * rho_delta * rho_delta;
  }
};

/// Solves AᵀPA + Q − P = 0 by Smith doubling. Throws SpectralRadiusError
/// when ρ(A) ≥ 1 − 1e−9.
Eigen::MatrixXd dlyap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

struct LqrSolution {
  Eigen::MatrixXd P;  // Riccati solution (terminal weight)
  Eigen::MatrixXd K;  // u = K x
};

/// Discrete algebraic Riccati equation via structured doubling, polished by
/// Newton-Kleinman steps. Throws NoConvergence.
LqrSolution dare_lqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// Contraction constants of V = ‖x − z‖²_P given AᵀPA − P ⪯ −Q_dec.
/// Throws NotContractive.
QuadIncLyap contraction_constants(const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& P,
                                  const Eigen::MatrixXd& Q_dec);

/// Level δ such that {V ≤ δ²} is robustly invariant for ‖w‖ ≤ w_bar:
/// δ = √c₄ · w_bar / (1 − ρ_δ).
double rpi_level(const QuadIncLyap& lyap, double w_bar);

/// Terminal cost V_f(x) = ‖x‖²_{P_f}, local law u = K x and terminal set.
struct TerminalIngredients {
  Eigen::MatrixXd P_f;
  Eigen::MatrixXd K;
  Polytope X_f;
  double alpha_N = 1.0;
};

/// LQR terminal ingredients; X_f is the maximal positively invariant subset
/// of {x ∈ X, Kx ∈ U} under A + BK.
TerminalIngredients lqr_terminal(const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B,
                                 const Eigen::MatrixXd& Q,
                                 const Eigen::MatrixXd& R, const Polytope& X,
                                 const Polytope& U, int max_iter = 500);

double spectral_radius(const Eigen::MatrixXd& A);

}  // namespace relaxmpc
