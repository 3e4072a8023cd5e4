#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace relaxmpc {

/// Half-space representation {x : H x ≤ h}.
struct Polytope {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;
  /// Set by operations that may produce an empty or lower-dimensional set
  /// (tightening); callers decide whether to reject.
  bool is_empty = false;
  bool is_degenerate = false;

  Polytope() = default;
  Polytope(Eigen::MatrixXd H_in, Eigen::VectorXd h_in);

  int dim() const { return static_cast<int>(H.cols()); }
  int rows() const { return static_cast<int>(H.rows()); }

  /// Axis-aligned box lo ≤ x ≤ hi (infinite bounds are dropped).
  static Polytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  /// Rows scaled to unit Euclidean norm.
  Polytope normalized() const;
  Polytope intersect(const Polytope& other) const;
  /// {x : M x ∈ this}.
  Polytope preimage(const Eigen::MatrixXd& M) const;
};

/// True iff H x ≤ h + tol componentwise. Throws DimensionMismatch.
bool contains(const Polytope& poly, const Eigen::VectorXd& x,
              double tol = 1e-9);

/// Euclidean distance to the set via a projection QP. Throws EmptySet.
double distance(const Polytope& poly, const Eigen::VectorXd& x);

/// Largest inscribed ball (Chebyshev centre). Returns the radius (negative if
/// the polytope is empty); `center` optional. Radius is capped at `cap`.
double chebyshev_ball(const Polytope& poly, Eigen::VectorXd* center = nullptr,
                      double cap = 1e6);

/// max cᵀx over the polytope; +inf when unbounded (within |x_i| ≤ 1e6).
double support(const Polytope& poly, const Eigen::VectorXd& c);

/// Drops rows implied by the others (per-row LP). Keeps rows whose removal
/// would enlarge the set by more than `tol`.
Polytope remove_redundant(const Polytope& poly, double tol = 1e-9);

/// {x : H x ≤ h − r·‖H_i‖}. Sets is_empty / is_degenerate instead of throwing.
Polytope tighten_by_ball(const Polytope& poly, double radius);

/// Pontryagin difference with the ellipsoid {e : eᵀPe ≤ δ²}:
/// h_i ← h_i − δ √(H_i P⁻¹ H_iᵀ).
Polytope tighten_by_ellipsoid(const Polytope& poly, const Eigen::MatrixXd& P,
                              double delta);

/// Maximal positively invariant subset of `constraint` for x⁺ = A_cl x.
/// Throws NoConvergence after max_iter prediction steps.
Polytope max_positive_invariant(const Eigen::MatrixXd& A_cl,
                                const Polytope& constraint,
                                int max_iter = 500);

/// Polytopic incremental Lyapunov function V(x, z) = max_i F_i (x − z), whose
/// unit sublevel set {F x ≤ 1} is ρ-contractive.
struct PolyIncLyap {
  Eigen::MatrixXd F;
  double rho = 0.0;

  /// c₁ with V(v) ≥ c₁‖v‖ (1 / largest vertex norm of {F x ≤ 1}).
  double lower_constant() const;
};

/// Maximal ρ-contractive subset of `constraint` for x⁺ = A x, returned as
/// its gauge rows F (constraint must contain the origin in its interior).
PolyIncLyap max_rho_contractive(const Eigen::MatrixXd& A, double rho,
                                const Polytope& constraint,
                                int max_iter = 500);

/// max_i F_i v clamped below at 0.
double minkowski_eval(const PolyIncLyap& lyap, const Eigen::VectorXd& v);

/// Vertex enumeration for bounded polytopes with n ≤ 3.
std::vector<Eigen::VectorXd> vertices(const Polytope& poly);

/// Plain text: "rows cols", then the rows of H, then h.
void write_polytope(std::ostream& os, const Polytope& poly);
Polytope read_polytope(std::istream& is);

}  // namespace relaxmpc
