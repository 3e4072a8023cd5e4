#include "relaxmpc/control_design.h"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;

double spectral_radius(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd dlyap(const MatrixXd& A, const MatrixXd& Q) {
  if (A.rows() != A.cols() || Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw DimensionMismatch("dlyap: A and Q must be square of equal size");
  }
  const double rho = spectral_radius(A);
  if (rho >= 1.0 - 1e-9) {
    throw SpectralRadiusError(
        "dlyap: spectral radius " + std::to_string(rho) +
        " is not below 1; the system is only marginally stable, use a "
        "semidefinite (non-strict) incremental Lyapunov function instead");
  }
  MatrixXd P = 0.5 * (Q + Q.transpose());
  MatrixXd Ak = A;
  for (int it = 0; it < 100; ++it) {
    const MatrixXd update = Ak.transpose() * P * Ak;
    P += update;
    Ak = Ak * Ak;
    if (update.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, P.norm())) break;
  }
  // One refinement step on the residual removes doubling round-off.
  for (int r = 0; r < 2; ++r) {
    const MatrixXd E = A.transpose() * P * A + Q - P;
    MatrixXd D = E;
    MatrixXd Ar = A;
    for (int it = 0; it < 100; ++it) {
      const MatrixXd update = Ar.transpose() * D * Ar;
      D += update;
      Ar = Ar * Ar;
      if (update.cwiseAbs().maxCoeff() <=
          1e-16 * std::max(1.0, D.cwiseAbs().maxCoeff())) {
        break;
      }
    }
    P += D;
  }
  return 0.5 * (P + P.transpose());
}

LqrSolution dare_lqr(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || R.rows() != m) {
    throw DimensionMismatch("dare_lqr: inconsistent dimensions");
  }
  const MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd Ak = A;
  MatrixXd Gk = B * R.llt().solve(B.transpose());
  MatrixXd Hk = Q;
  bool converged = false;
  for (int it = 0; it < 10000; ++it) {
    const Eigen::PartialPivLU<MatrixXd> W(I + Gk * Hk);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(Gk);
    const MatrixXd Hn = Hk + Ak.transpose() * Hk * WA;
    Gk = Gk + Ak * WG * Ak.transpose();
    Ak = Ak * WA;
    const double diff = (Hn - Hk).cwiseAbs().maxCoeff();
    Hk = 0.5 * (Hn + Hn.transpose());
    if (!Hk.allFinite()) break;
    if (diff <= 1e-12 * std::max(1.0, Hk.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NoConvergence("dare_lqr: doubling did not converge");

  LqrSolution out;
  out.P = Hk;
  auto gain = [&](const MatrixXd& P) -> MatrixXd {
    return -(R + B.transpose() * P * B)
                .ldlt()
                .solve(B.transpose() * P * A);
  };
  // Newton-Kleinman polish: P = dlyap(A + BK, Q + KᵀRK).
  for (int it = 0; it < 3; ++it) {
    const MatrixXd K = gain(out.P);
    const MatrixXd Acl = A + B * K;
    if (spectral_radius(Acl) >= 1.0) break;
    out.P = dlyap(Acl, Q + K.transpose() * R * K);
  }
  out.K = gain(out.P);
  if (spectral_radius(A + B * out.K) >= 1.0) {
    throw NoConvergence("dare_lqr: closed loop is not stable");
  }
  return out;
}

QuadIncLyap contraction_constants(const MatrixXd& A, const MatrixXd& P,
                                  const MatrixXd& Q_dec) {
  const int n = static_cast<int>(A.rows());
  if (P.rows() != n || Q_dec.rows() != n) {
    throw DimensionMismatch("contraction_constants: dimensions");
  }
  const MatrixXd S = A.transpose() * P * A - P + Q_dec;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es_s(0.5 * (S + S.transpose()));
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (es_s.eigenvalues().maxCoeff() > 1e-9 * scale) {
    throw NotContractive("AᵀPA − P + Q_dec has a positive eigenvalue " +
                         std::to_string(es_s.eigenvalues().maxCoeff()));
  }
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es_p(P);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es_q(Q_dec);
  if (es_p.eigenvalues().minCoeff() <= 0.0 ||
      es_q.eigenvalues().minCoeff() <= 0.0) {
    throw NotContractive("P and Q_dec must be positive definite");
  }
  QuadIncLyap L;
  L.P = P;
  L.c[0] = es_p.eigenvalues().minCoeff();
  L.c[1] = es_p.eigenvalues().maxCoeff();
  L.c[2] = std::min(es_q.eigenvalues().minCoeff(), L.c[1]);
  const double rho2 = std::max(0.0, 1.0 - L.c[2] / L.c[1]);
  L.rho_delta = std::sqrt(rho2);
  // Largest ε with (1 + ε) ρ² ≤ (1 + ρ²)/2, capped at 1.
  L.epsilon = rho2 > 0.0 ? std::min(1.0, (1.0 - rho2) / (2.0 * rho2)) : 1.0;
  L.c[3] = (1.0 + 1.0 / L.epsilon) * L.c[1];
  return L;
}

double rpi_level(const QuadIncLyap& lyap, double w_bar) {
  if (w_bar < 0.0) throw DomainError("rpi_level: w_bar must be nonnegative");
  return std::sqrt(lyap.c[3]) * w_bar / (1.0 - lyap.rho_delta);
}

TerminalIngredients lqr_terminal(const MatrixXd& A, const MatrixXd& B,
                                 const MatrixXd& Q, const MatrixXd& R,
                                 const Polytope& X, const Polytope& U,
                                 int max_iter) {
  const LqrSolution lqr = dare_lqr(A, B, Q, R);
  TerminalIngredients t;
  t.P_f = lqr.P;
  t.K = lqr.K;
  const Polytope admissible = X.intersect(U.preimage(lqr.K));
  t.X_f = max_positive_invariant(A + B * lqr.K, admissible, max_iter);
  t.alpha_N = 1.0;
  return t;
}

}  // namespace relaxmpc
