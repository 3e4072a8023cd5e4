#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "cone_ops.h"
#include "relaxmpc/conic.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {

using internal::Cones;
using internal::NtScaling;
using SpMat = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

namespace {

// Internal standard form:  min ½xᵀPx + qᵀx  s.t.  Ax = b,  Gx + s = h,  s ∈ K.
struct StdForm {
  SpMat P, A, G;
  VectorXd q, b, h;
  Cones K;
};

StdForm to_std_form(const ConicProgram& prog) {
  StdForm f;
  const int n = prog.num_vars();
  f.P = prog.H_cost.sparseView();
  f.q = prog.f_cost;
  f.A = prog.A_eq.rows() > 0 ? SpMat(prog.A_eq.sparseView())
                             : SpMat(0, n);
  f.b = prog.b_eq;
  int rows = static_cast<int>(prog.A_in.rows());
  f.K.l = rows;
  for (const auto& c : prog.socs) {
    f.K.q.push_back(1 + static_cast<int>(c.G.rows()));
    rows += f.K.q.back();
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, n);
  f.h.resize(rows);
  if (prog.A_in.rows() > 0) G.topRows(prog.A_in.rows()) = prog.A_in;
  f.h.head(prog.A_in.rows()) = prog.b_in;
  int at = static_cast<int>(prog.A_in.rows());
  for (const auto& c : prog.socs) {
    const int k = static_cast<int>(c.G.rows());
    G.row(at) = -c.c.transpose();
    f.h(at) = c.d;
    G.middleRows(at + 1, k) = -c.G;
    f.h.segment(at + 1, k) = c.g;
    at += k + 1;
  }
  f.G = G.sparseView();
  return f;
}

// Reduced KKT system [[P + GᵀW⁻²G, Aᵀ], [A, 0]] factored as a regularized
// quasi-definite LDLᵀ, with iterative refinement against the exact matrix.
class KktSolver {
 public:
  bool factor(const StdForm& f, const SpMat& Gs) {
    const int n = static_cast<int>(f.P.rows());
    const int p = static_cast<int>(f.A.rows());
    SpMat H = f.P + SpMat(Gs.transpose() * Gs);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(H.nonZeros() + 2 * f.A.nonZeros() + n + p);
    for (int k = 0; k < H.outerSize(); ++k) {
      for (SpMat::InnerIterator it(H, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < f.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(f.A, k); it; ++it) {
        trip.emplace_back(n + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n + it.row(), it.value());
      }
    }
    exact_.resize(n + p, n + p);
    exact_.setFromTriplets(trip.begin(), trip.end());
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, kReg);
    for (int i = 0; i < p; ++i) trip.emplace_back(n + i, n + i, -kReg);
    SpMat reg(n + p, n + p);
    reg.setFromTriplets(trip.begin(), trip.end());
    ldlt_.compute(reg);
    return ldlt_.info() == Eigen::Success;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd x = ldlt_.solve(rhs);
    for (int i = 0; i < 5; ++i) {
      const VectorXd r = rhs - exact_ * x;
      if (r.lpNorm<Eigen::Infinity>() <=
          1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
        break;
      }
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  static constexpr double kReg = 1e-10;
  SpMat exact_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

SpMat scale_rows_winv(const StdForm& f, const NtScaling& W) {
  const Cones& K = f.K;
  SpMat Gs = f.G;
  Eigen::VectorXd rowscale = Eigen::VectorXd::Ones(f.G.rows());
  rowscale.head(K.l) = W.d.cwiseInverse();
  Gs = rowscale.asDiagonal() * Gs;
  if (K.q.empty()) return Gs;
  // SOC blocks mix rows; handle them densely (blocks are small).
  std::vector<Eigen::Triplet<double>> trip;
  SpMat linear = Gs.topRows(K.l);
  for (int k = 0; k < linear.outerSize(); ++k) {
    for (SpMat::InnerIterator it(linear, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  int at = K.l;
  for (size_t j = 0; j < K.q.size(); ++j) {
    const int k = K.q[j];
    const Eigen::MatrixXd blk =
        internal::soc_winv_block(W, static_cast<int>(j)) *
        Eigen::MatrixXd(f.G.middleRows(at, k));
    for (int c = 0; c < blk.cols(); ++c) {
      for (int r = 0; r < k; ++r) {
        if (blk(r, c) != 0.0) trip.emplace_back(at + r, c, blk(r, c));
      }
    }
    at += k;
  }
  SpMat out(f.G.rows(), f.G.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

enum class IpmStatus { Optimal, Infeasible, Unbounded, Failed };

struct IpmResult {
  VectorXd x, y, z, s;
  IpmStatus status = IpmStatus::Failed;
  int iterations = 0;
  double pres = 0.0, dres = 0.0, gap = 0.0;
  // Farkas certificate (only when status == Infeasible).
  VectorXd cert_y, cert_z;
};

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

// Pushes x into the interior of K if it is not already well inside.
void shift_into_cone(const Cones& K, VectorXd* x) {
  const double t = -internal::min_eig(K, *x);
  if (t >= -1e-8 * std::max(inf_norm(*x), 1.0)) {
    *x += (1.0 + t) * internal::identity(K);
  }
}

IpmResult run_ipm(const StdForm& f, const std::optional<VectorXd>& warm,
                  const SolverSettings& settings) {
  const Cones& K = f.K;
  const int n = static_cast<int>(f.q.size());
  const int p = static_cast<int>(f.b.size());
  const VectorXd e = internal::identity(K);
  IpmResult res;

  KktSolver kkt;
  VectorXd x, y, z, s;
  {
    // Least-squares initialization with W = I.
    if (!kkt.factor(f, f.G)) return res;
    VectorXd rhs(n + p);
    rhs.head(n) = -f.q + f.G.transpose() * f.h;
    rhs.tail(p) = f.b;
    const VectorXd sol = kkt.solve(rhs);
    x = sol.head(n);
    y = sol.tail(p);
    if (warm && warm->size() == n && warm->allFinite()) x = *warm;
    s = f.h - f.G * x;
    z = -s;
    if (warm) z = e;
    shift_into_cone(K, &s);
    shift_into_cone(K, &z);
  }

  const double bnorm = std::max(1.0, std::max(inf_norm(f.b), inf_norm(f.h)));
  const double qnorm = std::max(1.0, inf_norm(f.q));
  const double degree = std::max(1, K.degree());
  double best_merit = std::numeric_limits<double>::infinity();
  int stall = 0;
  // Dual residuals are measured against the largest term of the
  // stationarity equation (heavily weighted costs make ‖Px‖ ≫ ‖q‖).
  double dscale = qnorm;

  auto contract_ok = [&](double pres, double dres, double gap, double pobj) {
    return pres <= settings.abs_tol && dres <= settings.abs_tol * dscale &&
           (gap <= settings.abs_tol ||
            gap <= settings.rel_tol * std::abs(pobj));
  };

  for (int iter = 0;; ++iter) {
    const VectorXd Px = f.P * x;
    const VectorXd Aty = f.A.transpose() * y;
    const VectorXd Gtz = f.G.transpose() * z;
    const VectorXd rx = Px + f.q + Aty + Gtz;
    dscale = std::max({qnorm, inf_norm(Px), inf_norm(Aty), inf_norm(Gtz)});
    const VectorXd ry = f.A * x - f.b;
    const VectorXd rz = f.G * x + s - f.h;
    const double gap = s.dot(z);
    const double pobj = 0.5 * x.dot(Px) + f.q.dot(x);
    const double pres = std::max(inf_norm(ry), inf_norm(rz));
    const double dres = inf_norm(rx);
    res.x = x;
    res.y = y;
    res.z = z;
    res.s = s;
    res.iterations = iter;
    res.pres = pres;
    res.dres = dres;
    res.gap = gap;

    // Primal infeasibility certificate.
    const double denom = -(f.h.dot(z) + f.b.dot(y));
    if (denom > 0.0) {
      const VectorXd farkas = f.A.transpose() * y + f.G.transpose() * z;
      if (inf_norm(farkas) <= 1e-8 * denom) {
        res.status = IpmStatus::Infeasible;
        res.cert_y = y / denom;
        res.cert_z = z / denom;
        return res;
      }
    }
    if (inf_norm(x) > 1e10) {
      res.status = IpmStatus::Unbounded;
      return res;
    }

    // The gap target is absolute: costs with large offsets (heavy
    // penalties around a far-away point) cancel to small optimal values,
    // and a gap relative to ½xᵀPx + qᵀx would be far too loose there.
    const double tgt = settings.target_tol;
    if (pres <= tgt * bnorm && dres <= tgt * dscale &&
        gap <= std::max(tgt, 1e-15 * std::abs(pobj))) {
      res.status = IpmStatus::Optimal;
      return res;
    }
    // Early iterations may trade gap for feasibility; only a long run
    // without any decrease counts as a stall.
    const double merit = std::max(
        {pres / bnorm, dres / dscale, gap / std::max(1.0, std::abs(pobj))});
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      stall = 0;
    } else if (++stall >= 15) {
      break;
    }
    if (iter >= settings.max_iter) break;

    VectorXd lambda;
    const NtScaling W = internal::nt_scaling(K, s, z, &lambda);
    const SpMat Gs = scale_rows_winv(f, W);
    if (!kkt.factor(f, Gs)) break;

    // Newton step for right-hand sides (bx, by, bz) and q = λ ⋄ bs.
    struct Dir {
      VectorXd dx, dy, dz, ds, ds_scaled, dz_scaled;
    };
    auto newton = [&](const VectorXd& bx, const VectorXd& by,
                      const VectorXd& bz, const VectorXd& qs) {
      const VectorXd bzs = internal::apply_winv(K, W, bz);
      VectorXd rhs(n + p);
      rhs.head(n) = bx + Gs.transpose() * (bzs - qs);
      rhs.tail(p) = by;
      const VectorXd sol = kkt.solve(rhs);
      Dir d;
      d.dx = sol.head(n);
      d.dy = sol.tail(p);
      d.dz_scaled = Gs * d.dx - bzs + qs;
      d.dz = internal::apply_winv(K, W, d.dz_scaled);
      d.ds_scaled = qs - d.dz_scaled;
      d.ds = internal::apply_w(K, W, d.ds_scaled);
      return d;
    };

    const double mu = gap / degree;
    const Dir aff = newton(-rx, -ry, -rz, -lambda);
    const double a_aff = std::min(
        1.0, std::min(internal::max_step(K, s, aff.ds),
                      internal::max_step(K, z, aff.dz)));
    const double gap_aff = (s + a_aff * aff.ds).dot(z + a_aff * aff.dz);
    const double sigma = std::clamp(std::pow(gap_aff / gap, 3), 0.0, 1.0);

    const VectorXd bs =
        -internal::jordan_prod(K, lambda, lambda) -
        internal::jordan_prod(K, aff.ds_scaled, aff.dz_scaled) +
        sigma * mu * e;
    const Dir d = newton(-rx, -ry, -rz, internal::jordan_div(K, lambda, bs));
    const double a_max = std::min(internal::max_step(K, s, d.ds),
                                  internal::max_step(K, z, d.dz));
    const double alpha = std::min(1.0, 0.99 * a_max);
    if (!(alpha > 1e-12) || !d.dx.allFinite()) break;
    x += alpha * d.dx;
    y += alpha * d.dy;
    z += alpha * d.dz;
    s += alpha * d.ds;
  }

  res.status = contract_ok(res.pres, res.dres, res.gap,
                           0.5 * res.x.dot(f.P * res.x) + f.q.dot(res.x))
                   ? IpmStatus::Optimal
                   : IpmStatus::Failed;
  return res;
}

// Problems without cone constraints reduce to one KKT solve.
IpmResult solve_equality_qp(const StdForm& f) {
  const int n = static_cast<int>(f.q.size());
  const int p = static_cast<int>(f.b.size());
  IpmResult res;
  Eigen::MatrixXd Kd = Eigen::MatrixXd::Zero(n + p, n + p);
  Kd.topLeftCorner(n, n) = Eigen::MatrixXd(f.P);
  Kd.topRightCorner(n, p) = Eigen::MatrixXd(f.A.transpose());
  Kd.bottomLeftCorner(p, n) = Eigen::MatrixXd(f.A);
  VectorXd rhs(n + p);
  rhs << -f.q, f.b;
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Kd);
  const VectorXd sol = cod.solve(rhs);
  res.x = sol.head(n);
  res.y = sol.tail(p);
  res.z = VectorXd(0);
  res.s = VectorXd(0);
  const VectorXd ry = f.A * res.x - f.b;
  const VectorXd rx = f.P * res.x + f.q + f.A.transpose() * res.y;
  res.pres = inf_norm(ry);
  res.dres = inf_norm(rx);
  const double scale = 1e-9 * (1.0 + inf_norm(rhs));
  if (res.pres <= scale && res.dres <= scale) {
    res.status = IpmStatus::Optimal;
    return res;
  }
  if (res.pres > scale) {
    // b ∉ range(A): y = −(b − A x_ls) is a Farkas certificate.
    const Eigen::MatrixXd Ad(f.A);
    const VectorXd xls = Ad.completeOrthogonalDecomposition().solve(f.b);
    const VectorXd r = f.b - Ad * xls;
    if (r.norm() > scale) {
      res.status = IpmStatus::Infeasible;
      res.cert_y = -r / r.squaredNorm();
      res.cert_z = VectorXd(0);
      return res;
    }
  }
  res.status = IpmStatus::Unbounded;
  return res;
}

// Phase I: min t s.t. Ax = b, Gx + s − t e = h, s ∈ K, t ≥ −1.  A positive
// optimum proves infeasibility and its dual is a Farkas certificate.
std::optional<IpmResult> phase_one(const StdForm& f,
                                   const SolverSettings& settings) {
  const int n = static_cast<int>(f.q.size());
  const Cones& K = f.K;
  StdForm g;
  g.K.l = K.l + 1;
  g.K.q = K.q;
  g.P = SpMat(n + 1, n + 1);
  g.q = VectorXd::Zero(n + 1);
  g.q(n) = 1.0;
  g.A = SpMat(f.A.rows(), n + 1);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < f.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(f.A, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    g.A.setFromTriplets(trip.begin(), trip.end());
  }
  g.b = f.b;
  const int m = K.dim();
  g.G = SpMat(m + 1, n + 1);
  g.h.resize(m + 1);
  std::vector<Eigen::Triplet<double>> trip;
  auto new_row = [&](int r) { return r < K.l ? r : r + 1; };
  for (int k = 0; k < f.G.outerSize(); ++k) {
    for (SpMat::InnerIterator it(f.G, k); it; ++it) {
      trip.emplace_back(new_row(static_cast<int>(it.row())), it.col(),
                        it.value());
    }
  }
  const VectorXd e = internal::identity(K);
  for (int r = 0; r < m; ++r) {
    if (e(r) != 0.0) trip.emplace_back(new_row(r), n, -1.0);
    g.h(new_row(r)) = f.h(r);
  }
  trip.emplace_back(K.l, n, -1.0);
  g.h(K.l) = 1.0;
  g.G.setFromTriplets(trip.begin(), trip.end());

  IpmResult r = run_ipm(g, std::nullopt, settings);
  if (r.status != IpmStatus::Optimal && r.status != IpmStatus::Infeasible) {
    return std::nullopt;
  }
  if (r.status == IpmStatus::Infeasible) {
    // Ax = b alone is inconsistent; the certificate carries over.
    IpmResult out;
    out.status = IpmStatus::Infeasible;
    out.cert_y = r.cert_y;
    out.cert_z = VectorXd(m);
    for (int i = 0; i < m; ++i) out.cert_z(i) = r.cert_z(new_row(i));
    return out;
  }
  const double t = r.x(n);
  if (t <= 10.0 * settings.abs_tol) return std::nullopt;
  IpmResult out;
  out.status = IpmStatus::Infeasible;
  VectorXd zk(m);
  for (int i = 0; i < m; ++i) zk(i) = r.z(new_row(i));
  const double denom = -(f.h.dot(zk) + f.b.dot(r.y));
  if (!(denom > 0.0)) return std::nullopt;
  out.cert_y = r.y / denom;
  out.cert_z = zk / denom;
  return out;
}

double constraint_violation(const ConicProgram& prog,
                            const Eigen::VectorXd& z) {
  double v = 0.0;
  if (prog.A_eq.rows() > 0) {
    v = std::max(v, inf_norm(prog.A_eq * z - prog.b_eq));
  }
  if (prog.A_in.rows() > 0) {
    v = std::max(v, (prog.A_in * z - prog.b_in).maxCoeff());
  }
  for (const auto& c : prog.socs) {
    v = std::max(v, (c.G * z + c.g).norm() - c.c.dot(z) - c.d);
  }
  return v;
}

}  // namespace

Solution solve(const ConicProgram& prog,
               const std::optional<Eigen::VectorXd>& warm_start,
               const SolverSettings& settings) {
  prog.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StdForm f = to_std_form(prog);

  IpmResult r;
  if (f.K.dim() == 0) {
    r = solve_equality_qp(f);
  } else {
    r = run_ipm(f, warm_start, settings);
    if (r.status == IpmStatus::Failed && warm_start) {
      r = run_ipm(f, std::nullopt, settings);
    }
    if (r.status == IpmStatus::Failed) {
      const int iters = r.iterations;
      if (auto p1 = phase_one(f, settings)) {
        r = *p1;
        r.iterations = iters;
      }
    }
  }

  Solution sol;
  sol.iterations = r.iterations;
  switch (r.status) {
    case IpmStatus::Optimal:
      sol.status = SolveStatus::Optimal;
      break;
    case IpmStatus::Infeasible:
      sol.status = SolveStatus::Infeasible;
      break;
    case IpmStatus::Unbounded:
      sol.status = SolveStatus::Unbounded;
      break;
    case IpmStatus::Failed:
      sol.status = SolveStatus::MaxIter;
      break;
  }

  const int n_in = static_cast<int>(prog.A_in.rows());
  auto split_duals = [&](const VectorXd& y, const VectorXd& z,
                         VectorXd* y_eq, VectorXd* y_in,
                         std::vector<VectorXd>* y_soc) {
    *y_eq = y;
    *y_in = z.size() > 0 ? VectorXd(z.head(n_in)) : VectorXd(0);
    y_soc->clear();
    int at = n_in;
    for (int k : f.K.q) {
      y_soc->push_back(z.segment(at, k));
      at += k;
    }
  };

  if (sol.status == SolveStatus::Infeasible) {
    sol.z = VectorXd::Constant(prog.num_vars(),
                               std::numeric_limits<double>::quiet_NaN());
    sol.objective = std::numeric_limits<double>::infinity();
    InfeasibilityCertificate cert;
    split_duals(r.cert_y, r.cert_z, &cert.y_eq, &cert.y_in, &cert.y_soc);
    cert.dual_objective = f.b.dot(r.cert_y) + f.h.dot(r.cert_z);
    sol.certificate = cert;
  } else {
    sol.z = r.x.size() == prog.num_vars() ? r.x
                                          : VectorXd::Zero(prog.num_vars());
    sol.objective = prog.objective(sol.z);
    if (r.y.size() == f.b.size() && r.z.size() == f.K.dim()) {
      split_duals(r.y, r.z, &sol.y_eq, &sol.y_in, &sol.y_soc);
    }
    sol.primal_residual = std::max(0.0, constraint_violation(prog, sol.z));
    sol.dual_residual = r.dres;
    sol.gap = r.gap;
  }
  sol.solve_time = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return sol;
}

}  // namespace relaxmpc
