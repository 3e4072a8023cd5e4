#include "relaxmpc/nlp.h"

#include <chrono>
#include <cmath>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd jacobian(const NlpProblem::ValueFn& map,
                         const Eigen::VectorXd& z) {
  const VectorXd f0 = map(z);
  MatrixXd J(f0.size(), z.size());
  for (int i = 0; i < z.size(); ++i) {
    const double e = 1e-6 * (1.0 + std::abs(z(i)));
    VectorXd zp = z, zm = z;
    zp(i) += e;
    zm(i) -= e;
    J.col(i) = (map(zp) - map(zm)) / (2.0 * e);
  }
  return J;
}

Eigen::MatrixXd jacobian(const NlpProblem::ValueFn& map,
                         const NlpProblem::JacobianFn& analytic,
                         const Eigen::VectorXd& z) {
  return analytic ? analytic(z) : jacobian(map, z);
}

namespace {

struct Linearization {
  VectorXd ce, ci;
  MatrixXd Je, Ji;
};

Linearization linearize(const NlpProblem& p, const VectorXd& z) {
  const int n = p.dim();
  Linearization L;
  if (p.eq) {
    L.ce = p.eq(z);
    L.Je = jacobian(p.eq, p.eq_jacobian, z);
  } else {
    L.ce.resize(0);
    L.Je.resize(0, n);
  }
  if (p.in) {
    L.ci = p.in(z);
    L.Ji = jacobian(p.in, p.in_jacobian, z);
  } else {
    L.ci.resize(0);
    L.Ji.resize(0, n);
  }
  return L;
}

// ℓ1 violation of every constraint (linear, cone and smooth).
double violation(const NlpProblem& p, const VectorXd& z, const VectorXd& ce,
                 const VectorXd& ci) {
  const ConicProgram& b = p.base;
  double v = 0.0;
  if (b.A_eq.rows() > 0) v += (b.A_eq * z - b.b_eq).lpNorm<1>();
  if (b.A_in.rows() > 0) {
    v += (b.A_in * z - b.b_in).cwiseMax(0.0).sum();
  }
  for (const SocConstraint& c : b.socs) {
    v += std::max(0.0, (c.G * z + c.g).norm() - c.c.dot(z) - c.d);
  }
  v += ce.lpNorm<1>();
  if (ci.size() > 0) v += ci.cwiseMax(0.0).sum();
  return v;
}


// Subproblem in the new iterate z': linearized smooth constraints appended
// below the base rows; `shift_e`/`shift_i` move the right-hand side (used by
// the second-order correction).
ConicProgram subproblem(const NlpProblem& prob, const VectorXd& z,
                        const Linearization& L, const VectorXd& shift_e,
                        const VectorXd& shift_i, double regularization,
                        const MatrixXd* curvature) {
  const ConicProgram& base = prob.base;
  const int n = prob.dim();
  const int n_beq = static_cast<int>(base.A_eq.rows());
  const int n_bin = static_cast<int>(base.A_in.rows());
  const int me = static_cast<int>(L.ce.size());
  const int mi = static_cast<int>(L.ci.size());
  ConicProgram qp = base;
  qp.H_cost += regularization * MatrixXd::Identity(n, n);
  qp.f_cost -= regularization * z;
  if (curvature != nullptr) {
    qp.H_cost += *curvature;
    qp.f_cost -= *curvature * z;
  }
  if (me > 0) {
    qp.A_eq.conservativeResize(n_beq + me, n);
    qp.b_eq.conservativeResize(n_beq + me);
    qp.A_eq.bottomRows(me) = L.Je;
    qp.b_eq.tail(me) = L.Je * z - L.ce + shift_e;
  }
  if (mi > 0) {
    qp.A_in.conservativeResize(n_bin + mi, n);
    qp.b_in.conservativeResize(n_bin + mi);
    qp.A_in.bottomRows(mi) = L.Ji;
    qp.b_in.tail(mi) = L.Ji * z - L.ci + shift_i;
  }
  return qp;
}

// First-order optimality of z with the subproblem multipliers: scaled
// stationarity of the Lagrangian and complementarity.
double kkt_measure(const NlpProblem& prob, const VectorXd& z,
                   const Linearization& L, const Solution& sol, double viol) {
  const ConicProgram& b = prob.base;
  const int n_beq = static_cast<int>(b.A_eq.rows());
  const int n_bin = static_cast<int>(b.A_in.rows());
  const int me = static_cast<int>(L.ce.size());
  const int mi = static_cast<int>(L.ci.size());
  const VectorXd grad = b.H_cost * z + b.f_cost;
  VectorXd cons = VectorXd::Zero(z.size());
  double comp = 0.0;
  if (n_beq > 0) cons += b.A_eq.transpose() * sol.y_eq.head(n_beq);
  if (me > 0) cons += L.Je.transpose() * sol.y_eq.tail(me);
  if (n_bin > 0) {
    const VectorXd y = sol.y_in.head(n_bin);
    cons += b.A_in.transpose() * y;
    comp = std::max(comp, (y.array() * (b.A_in * z - b.b_in).array()).abs().maxCoeff());
  }
  if (mi > 0) {
    const VectorXd y = sol.y_in.tail(mi);
    cons += L.Ji.transpose() * y;
    comp = std::max(comp, (y.array() * L.ci.array()).abs().maxCoeff());
  }
  for (size_t j = 0; j < b.socs.size(); ++j) {
    const SocConstraint& c = b.socs[j];
    const VectorXd& y = sol.y_soc[j];
    cons -= c.c * y(0) + c.G.transpose() * y.tail(y.size() - 1);
    VectorXd slack(y.size());
    slack(0) = c.c.dot(z) + c.d;
    slack.tail(y.size() - 1) = c.G * z + c.g;
    comp = std::max(comp, std::abs(y.dot(slack)));
  }
  const double gscale = 1.0 + grad.lpNorm<Eigen::Infinity>();
  const double dscale = std::max(gscale, cons.lpNorm<Eigen::Infinity>());
  const double stat = (grad + cons).lpNorm<Eigen::Infinity>() / dscale;
  return std::max({viol / gscale, stat,
                   comp / (1.0 + std::abs(b.objective(z)))});
}

// Powell-damped BFGS update of W = H + B with the Lagrangian gradient change
// H s + r, so that W stays positive definite.
void update_curvature(MatrixXd* B, const MatrixXd& H, const VectorXd& s,
                      const VectorXd& r) {
  const MatrixXd W = H + *B;
  const VectorXd Ws = W * s;
  const double sWs = s.dot(Ws);
  if (!(sWs > 1e-14 * std::max(1.0, s.squaredNorm()))) return;
  VectorXd y = H * s + r;
  const double sy = s.dot(y);
  if (sy < 0.2 * sWs) {
    const double theta = 0.8 * sWs / (sWs - sy);
    y = theta * y + (1.0 - theta) * Ws;
  }
  *B += y * y.transpose() / s.dot(y) - Ws * Ws.transpose() / sWs;
  *B = 0.5 * (*B + B->transpose()).eval();
}

}  // namespace

SqpReport sqp_solve(const NlpProblem& prob, const Eigen::VectorXd& z0,
                    const SqpSettings& settings) {
  if (z0.size() != prob.dim()) {
    throw DimensionMismatch("sqp_solve: initial point has wrong size");
  }
  if (!z0.allFinite()) throw IllFormed("sqp_solve: initial point not finite");
  const auto t0 = std::chrono::steady_clock::now();
  const ConicProgram& base = prob.base;

  SqpReport rep;
  VectorXd z = z0;
  double mu = 1.0;
  Linearization L = linearize(prob, z);
  const VectorXd no_shift_e = VectorXd::Zero(L.ce.size());
  const VectorXd no_shift_i = VectorXd::Zero(L.ci.size());

  // Damped-BFGS model B of Σ yᵢ∇²cᵢ; H + B stays positive definite.
  const bool bfgs = settings.hessian == SqpHessian::DampedBfgs;
  MatrixXd B = MatrixXd::Zero(bfgs ? z.size() : 0, bfgs ? z.size() : 0);
  const MatrixXd* B_ptr = bfgs ? &B : nullptr;

  auto finish = [&]() {
    rep.z = z;
    rep.objective = base.objective(z);
    rep.solve_time = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return rep;
  };
  auto merit = [&](const VectorXd& zt) {
    const VectorXd ce = prob.eq ? prob.eq(zt) : VectorXd(0);
    const VectorXd ci = prob.in ? prob.in(zt) : VectorXd(0);
    return base.objective(zt) + mu * violation(prob, zt, ce, ci);
  };

  for (int it = 1; it <= settings.max_iter; ++it) {
    rep.iterations = it;
    const VectorXd grad = base.H_cost * z + base.f_cost;
    const Solution sol = solve(
        subproblem(prob, z, L, no_shift_e, no_shift_i, settings.regularization, B_ptr),
        z, settings.qp);
    rep.qp_status = sol.status;
    if (sol.status != SolveStatus::Optimal) return finish();

    const VectorXd d = sol.z - z;
    double ymax = 0.0;
    if (sol.y_eq.size() > 0) ymax = std::max(ymax, sol.y_eq.lpNorm<Eigen::Infinity>());
    if (sol.y_in.size() > 0) ymax = std::max(ymax, sol.y_in.lpNorm<Eigen::Infinity>());
    for (const VectorXd& y : sol.y_soc) ymax = std::max(ymax, y.norm());
    mu = std::max(mu, 1.1 * ymax + 1e-3);

    const double v0 = violation(prob, z, L.ce, L.ci);
    const double phi0 = base.objective(z) + mu * v0;
    const double D = std::min(grad.dot(d) - mu * v0, 0.0);
    // The QP is solved to finite accuracy; merit changes below that noise
    // level are not a rejection criterion.
    const double noise = 1e-10 * (1.0 + std::abs(phi0));
    auto acceptable = [&](const VectorXd& zt, double alpha) {
      return merit(zt) <= phi0 + settings.armijo * alpha * D + noise;
    };

    VectorXd zt = sol.z;
    bool accepted = acceptable(zt, 1.0);
    if (!accepted && (prob.eq || prob.in)) {
      // Second-order correction against the curvature of the constraints.
      const VectorXd ce = prob.eq ? prob.eq(sol.z) : VectorXd(0);
      const VectorXd ci = prob.in ? prob.in(sol.z) : VectorXd(0);
      const VectorXd se = L.ce + L.Je * d - ce;
      const VectorXd si = L.ci + L.Ji * d - ci;
      const Solution corr = solve(
          subproblem(prob, z, L, se, si, settings.regularization, B_ptr), sol.z,
          settings.qp);
      if (corr.status == SolveStatus::Optimal && acceptable(corr.z, 1.0)) {
        zt = corr.z;
        accepted = true;
      }
    }
    double alpha = 1.0;
    for (int bt = 1; !accepted && bt <= settings.max_backtracks; ++bt) {
      alpha *= settings.backtrack;
      zt = z + alpha * d;
      accepted = acceptable(zt, alpha);
    }
    if (!accepted) {
      // A rejected step that is itself negligible means z is already a
      // (numerically) stationary feasible point.
      const double scale = 1.0 + grad.lpNorm<Eigen::Infinity>();
      const bool negligible =
          d.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + z.lpNorm<Eigen::Infinity>());
      if (negligible && v0 / scale <= settings.tol) {
        rep.kkt_residual = v0 / scale;
        rep.converged = true;
      } else {
        rep.line_search_failed = true;
      }
      return finish();
    }

    const VectorXd step = zt - z;
    const Linearization L_new = linearize(prob, zt);
    if (bfgs) {
      VectorXd r = VectorXd::Zero(z.size());
      const int me = static_cast<int>(L.ce.size());
      const int mi = static_cast<int>(L.ci.size());
      if (me > 0) r += (L_new.Je - L.Je).transpose() * sol.y_eq.tail(me);
      if (mi > 0) r += (L_new.Ji - L.Ji).transpose() * sol.y_in.tail(mi);
      update_curvature(&B, base.H_cost, step, r);
    }
    z = zt;
    L = L_new;
    rep.kkt_residual =
        kkt_measure(prob, z, L, sol, violation(prob, z, L.ce, L.ci));
    if (rep.kkt_residual <= settings.tol) {
      rep.converged = true;
      return finish();
    }
  }
  return finish();
}

}  // namespace relaxmpc
