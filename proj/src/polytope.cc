#include "relaxmpc/polytope.h"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include <Eigen/Eigenvalues>

#include "relaxmpc/conic.h"
#include "relaxmpc/control_design.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kBig = 1e6;
constexpr double kInf = std::numeric_limits<double>::infinity();

// max cᵀx s.t. Hx ≤ h, |x_i| ≤ kBig. Returns nullopt if infeasible.
std::optional<std::pair<double, VectorXd>> lp_max(const MatrixXd& H,
                                                  const VectorXd& h,
                                                  const VectorXd& c) {
  const int n = static_cast<int>(c.size());
  ProgramBuilder b;
  const int x = b.add_block("x", n);
  b.add_linear(x, -c);
  if (H.rows() > 0) b.add_le({{x, H}}, h);
  b.add_le({{x, MatrixXd::Identity(n, n)}}, VectorXd::Constant(n, kBig));
  b.add_le({{x, -MatrixXd::Identity(n, n)}}, VectorXd::Constant(n, kBig));
  const Solution sol = solve(b.build());
  if (sol.status == SolveStatus::Infeasible) return std::nullopt;
  if (sol.status != SolveStatus::Optimal) {
    throw NoConvergence("polytope LP did not converge");
  }
  return std::make_pair(c.dot(sol.z), sol.z);
}

// Invariance-type fixed point: rows of C.H·M^t ≤ C.h for all t ≥ 0.
Polytope predecessor_fixed_point(const MatrixXd& M, const Polytope& C,
                                 int max_iter) {
  const int n = C.dim();
  Polytope cur = remove_redundant(C.normalized());
  const Polytope base = C.normalized();
  int pruned_rows = cur.rows();
  MatrixXd Mpow = MatrixXd::Identity(n, n);
  for (int t = 1; t <= max_iter; ++t) {
    Mpow = Mpow * M;
    const MatrixXd cand = base.H * Mpow;
    std::vector<int> keep;
    for (int j = 0; j < cand.rows(); ++j) {
      const double nrm = cand.row(j).norm();
      if (nrm < 1e-14) {
        if (base.h(j) < 0.0) {
          Polytope empty = cur;
          empty.is_empty = true;
          return empty;
        }
        continue;
      }
      const VectorXd dir = cand.row(j).transpose() / nrm;
      const auto val = lp_max(cur.H, cur.h, dir);
      if (!val) {
        cur.is_empty = true;
        return cur;
      }
      if (val->first > base.h(j) / nrm + 1e-9) keep.push_back(j);
    }
    if (keep.empty()) return remove_redundant(cur);
    MatrixXd H(cur.rows() + keep.size(), n);
    VectorXd h(cur.rows() + keep.size());
    H.topRows(cur.rows()) = cur.H;
    h.head(cur.rows()) = cur.h;
    for (size_t k = 0; k < keep.size(); ++k) {
      const double nrm = cand.row(keep[k]).norm();
      H.row(cur.rows() + k) = cand.row(keep[k]) / nrm;
      h(cur.rows() + k) = base.h(keep[k]) / nrm;
    }
    cur = Polytope(H, h);
    if (cur.rows() > 2 * pruned_rows) {
      cur = remove_redundant(cur);
      pruned_rows = cur.rows();
    }
  }
  throw NoConvergence("invariant-set iteration did not reach a fixed point in " +
                      std::to_string(max_iter) + " steps");
}

// Boundary points of a bounded polytope containing the origin.
std::vector<VectorXd> certification_points(const Polytope& poly) {
  if (poly.dim() <= 3) return vertices(poly);
  std::vector<VectorXd> pts;
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int s = 0; s < 10000; ++s) {
    VectorXd d(poly.dim());
    for (int i = 0; i < d.size(); ++i) d(i) = N(rng);
    double t = kInf;
    const VectorXd Hd = poly.H * d;
    for (int i = 0; i < Hd.size(); ++i) {
      if (Hd(i) > 0.0) t = std::min(t, poly.h(i) / Hd(i));
    }
    if (std::isfinite(t)) pts.push_back(t * d);
  }
  return pts;
}

}  // namespace

Polytope::Polytope(MatrixXd H_in, VectorXd h_in)
    : H(std::move(H_in)), h(std::move(h_in)) {
  if (H.rows() != h.size()) {
    throw DimensionMismatch("polytope: H and h row counts differ");
  }
}

Polytope Polytope::box(const VectorXd& lo, const VectorXd& hi) {
  const int n = static_cast<int>(lo.size());
  if (hi.size() != n) throw DimensionMismatch("box bounds differ in size");
  std::vector<std::pair<VectorXd, double>> rows;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(hi(i))) rows.emplace_back(VectorXd::Unit(n, i), hi(i));
    if (std::isfinite(lo(i))) rows.emplace_back(-VectorXd::Unit(n, i), -lo(i));
  }
  MatrixXd H(rows.size(), n);
  VectorXd h(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    H.row(r) = rows[r].first.transpose();
    h(r) = rows[r].second;
  }
  return Polytope(H, h);
}

Polytope Polytope::normalized() const {
  Polytope out = *this;
  for (int i = 0; i < rows(); ++i) {
    const double nrm = H.row(i).norm();
    if (nrm == 0.0) throw IllFormed("polytope has an all-zero row");
    out.H.row(i) /= nrm;
    out.h(i) /= nrm;
  }
  return out;
}

Polytope Polytope::intersect(const Polytope& other) const {
  if (other.dim() != dim()) throw DimensionMismatch("intersect: dimensions");
  MatrixXd Hn(rows() + other.rows(), dim());
  VectorXd hn(rows() + other.rows());
  Hn << H, other.H;
  hn << h, other.h;
  return Polytope(Hn, hn);
}

Polytope Polytope::preimage(const MatrixXd& M) const {
  if (M.rows() != dim()) throw DimensionMismatch("preimage: dimensions");
  return Polytope(H * M, h);
}

bool contains(const Polytope& poly, const VectorXd& x, double tol) {
  if (x.size() != poly.dim()) {
    throw DimensionMismatch("contains: point has dimension " +
                            std::to_string(x.size()) + ", polytope " +
                            std::to_string(poly.dim()));
  }
  if (poly.rows() == 0) return true;
  return ((poly.H * x - poly.h).array() <= tol).all();
}

double distance(const Polytope& poly, const VectorXd& x) {
  if (x.size() != poly.dim()) throw DimensionMismatch("distance: dimensions");
  if (contains(poly, x, 0.0)) return 0.0;
  const int n = poly.dim();
  ProgramBuilder b;
  const int y = b.add_block("y", n);
  b.add_quadratic(y, MatrixXd::Identity(n, n), x);
  b.add_le({{y, poly.H}}, poly.h);
  const Solution sol = solve(b.build());
  if (sol.status == SolveStatus::Infeasible) {
    throw EmptySet("distance to an empty polytope");
  }
  if (sol.status != SolveStatus::Optimal) {
    throw NoConvergence("distance projection did not converge");
  }
  // Snap to zero when the projection is within solver tolerance.
  const double d = (sol.z - x).norm();
  return contains(poly, x) ? 0.0 : d;
}

double chebyshev_ball(const Polytope& poly, VectorXd* center, double cap) {
  const int n = poly.dim();
  ProgramBuilder b;
  const int x = b.add_block("x", n);
  const int r = b.add_block("r", 1);
  b.add_linear(r, -VectorXd::Ones(1));
  if (poly.rows() > 0) {
    b.add_le({{x, poly.H}, {r, poly.H.rowwise().norm()}}, poly.h);
  }
  b.add_le({{r, MatrixXd::Ones(1, 1)}}, VectorXd::Constant(1, cap));
  b.add_le({{r, -MatrixXd::Ones(1, 1)}}, VectorXd::Constant(1, kBig));
  b.add_le({{x, MatrixXd::Identity(n, n)}}, VectorXd::Constant(n, kBig));
  b.add_le({{x, -MatrixXd::Identity(n, n)}}, VectorXd::Constant(n, kBig));
  const ConicProgram prog = b.build();
  const Solution sol = solve(prog);
  if (sol.status != SolveStatus::Optimal) {
    throw NoConvergence("Chebyshev-ball LP did not converge");
  }
  if (center) *center = extract(sol, prog, "x");
  return extract(sol, prog, "r")(0);
}

double support(const Polytope& poly, const VectorXd& c) {
  const auto val = lp_max(poly.H, poly.h, c);
  if (!val) throw EmptySet("support function of an empty polytope");
  if ((val->second.array().abs() > 0.999 * kBig).any()) return kInf;
  return val->first;
}

Polytope remove_redundant(const Polytope& poly, double tol) {
  Polytope cur = poly;
  int i = 0;
  while (i < cur.rows()) {
    // Relax row i by 1 so the LP stays bounded in its direction.
    VectorXd h_relaxed = cur.h;
    h_relaxed(i) += 1.0;
    const auto val = lp_max(cur.H, h_relaxed, cur.H.row(i).transpose());
    if (!val) {
      cur.is_empty = true;
      return cur;
    }
    const double scale = std::max(1.0, cur.H.row(i).norm());
    if (val->first <= cur.h(i) + tol * scale) {
      const int m = cur.rows();
      MatrixXd H(m - 1, cur.dim());
      VectorXd h(m - 1);
      H << cur.H.topRows(i), cur.H.bottomRows(m - i - 1);
      h << cur.h.head(i), cur.h.tail(m - i - 1);
      cur.H = H;
      cur.h = h;
    } else {
      ++i;
    }
  }
  return cur;
}

Polytope tighten_by_ball(const Polytope& poly, double radius) {
  Polytope out = poly;
  out.h = poly.h - radius * poly.H.rowwise().norm();
  if (radius > 0.0) {
    const double r = chebyshev_ball(out);
    out.is_empty = r < -1e-9;
    out.is_degenerate = !out.is_empty && r <= 1e-9;
  }
  return out;
}

Polytope tighten_by_ellipsoid(const Polytope& poly, const MatrixXd& P,
                              double delta) {
  const Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw IllFormed("tighten_by_ellipsoid: P is not positive definite");
  }
  Polytope out = poly;
  for (int i = 0; i < poly.rows(); ++i) {
    const VectorXd hi = poly.H.row(i).transpose();
    out.h(i) -= delta * std::sqrt(hi.dot(llt.solve(hi)));
  }
  if (delta > 0.0) {
    const double r = chebyshev_ball(out);
    out.is_empty = r < -1e-9;
    out.is_degenerate = !out.is_empty && r <= 1e-9;
  }
  return out;
}

Polytope max_positive_invariant(const MatrixXd& A_cl,
                                const Polytope& constraint, int max_iter) {
  if (A_cl.rows() != constraint.dim() || A_cl.cols() != constraint.dim()) {
    throw DimensionMismatch("max_positive_invariant: dimensions");
  }
  if (spectral_radius(A_cl) >= 1.0) {
    throw SpectralRadiusError("max_positive_invariant needs a Schur A_cl");
  }
  Polytope O = predecessor_fixed_point(A_cl, constraint, max_iter);
  if (O.is_empty) return O;
  for (const VectorXd& v : certification_points(O)) {
    if (!contains(O, A_cl * v, 1e-7 * std::max(1.0, v.norm()))) {
      throw NoConvergence("invariant set failed vertex certification");
    }
  }
  return O;
}

double PolyIncLyap::lower_constant() const {
  const Polytope S(F, VectorXd::Ones(F.rows()));
  double rmax = 0.0;
  if (F.cols() <= 3) {
    for (const VectorXd& v : vertices(S)) rmax = std::max(rmax, v.norm());
  } else {
    for (int i = 0; i < F.cols(); ++i) {
      const VectorXd e = VectorXd::Unit(F.cols(), i);
      rmax = std::max({rmax, support(S, e), support(S, -e)});
    }
    rmax *= std::sqrt(static_cast<double>(F.cols()));
  }
  return rmax > 0.0 ? 1.0 / rmax : 0.0;
}

PolyIncLyap max_rho_contractive(const MatrixXd& A, double rho,
                                const Polytope& constraint, int max_iter) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw DomainError("max_rho_contractive: rho must lie in (0, 1)");
  }
  if (spectral_radius(A) >= rho) {
    throw NoConvergence(
        "max_rho_contractive: spectral radius of A is not below rho");
  }
  const MatrixXd M = A / rho;
  const Polytope O = predecessor_fixed_point(M, constraint, max_iter);
  if (O.is_empty) throw EmptySet("max_rho_contractive: empty set");
  if ((O.h.array() <= 0.0).any()) {
    throw DomainError("max_rho_contractive: origin not in the interior");
  }
  PolyIncLyap lyap;
  lyap.rho = rho;
  lyap.F = O.h.cwiseInverse().asDiagonal() * O.H;
  for (const VectorXd& v : certification_points(O)) {
    if (minkowski_eval(lyap, A * v) > rho * minkowski_eval(lyap, v) + 1e-7) {
      throw NoConvergence("contractive set failed vertex certification");
    }
  }
  return lyap;
}

double minkowski_eval(const PolyIncLyap& lyap, const VectorXd& v) {
  if (lyap.F.rows() == 0) return 0.0;
  return std::max(0.0, (lyap.F * v).maxCoeff());
}

std::vector<VectorXd> vertices(const Polytope& poly) {
  const int n = poly.dim();
  if (n < 1 || n > 3) {
    throw DomainError("vertex enumeration is implemented for n <= 3 only");
  }
  const Polytope P = poly.normalized();
  const int m = P.rows();
  std::vector<VectorXd> out;
  auto try_subset = [&](const std::vector<int>& idx) {
    MatrixXd M(n, n);
    VectorXd r(n);
    for (int k = 0; k < n; ++k) {
      M.row(k) = P.H.row(idx[k]);
      r(k) = P.h(idx[k]);
    }
    const Eigen::FullPivLU<MatrixXd> lu(M);
    if (lu.rank() < n) return;
    const VectorXd v = lu.solve(r);
    if (!contains(P, v, 1e-9 * std::max(1.0, v.norm()))) return;
    for (const VectorXd& w : out) {
      if ((w - v).norm() <= 1e-8 * std::max(1.0, v.norm())) return;
    }
    out.push_back(v);
  };
  std::vector<int> idx(n);
  if (n == 1) {
    for (int i = 0; i < m; ++i) try_subset({i});
  } else if (n == 2) {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) try_subset({i, j});
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        for (int k = j + 1; k < m; ++k) try_subset({i, j, k});
  }
  return out;
}

void write_polytope(std::ostream& os, const Polytope& poly) {
  const auto prec = os.precision(17);
  os << poly.rows() << ' ' << poly.dim() << '\n';
  for (int i = 0; i < poly.rows(); ++i) {
    for (int j = 0; j < poly.dim(); ++j) {
      os << (j ? " " : "") << poly.H(i, j);
    }
    os << '\n';
  }
  for (int i = 0; i < poly.rows(); ++i) os << (i ? " " : "") << poly.h(i);
  os << '\n';
  os.precision(prec);
}

Polytope read_polytope(std::istream& is) {
  int m = 0, n = 0;
  if (!(is >> m >> n) || m < 0 || n < 0) {
    throw IllFormed("polytope text: bad header");
  }
  MatrixXd H(m, n);
  VectorXd h(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (!(is >> H(i, j))) throw IllFormed("polytope text: short H");
  for (int i = 0; i < m; ++i)
    if (!(is >> h(i))) throw IllFormed("polytope text: short h");
  return Polytope(H, h);
}

}  // namespace relaxmpc
