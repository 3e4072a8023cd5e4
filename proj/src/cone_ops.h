#pragma once

// Jordan-algebra helpers for products of the nonnegative orthant and
// second-order cones, plus Nesterov-Todd scaling. Internal to the solver;
// exposed in a private header so the scaling identities can be tested.

#include <vector>

#include <Eigen/Dense>

namespace relaxmpc {
namespace internal {

/// Cone K = R₊^l × Q^{q[0]} × … ; each SOC block is (t, x̄) with t ≥ ‖x̄‖.
struct Cones {
  int l = 0;
  std::vector<int> q;

  int dim() const;
  int degree() const { return l + static_cast<int>(q.size()); }
};

/// Nesterov-Todd scaling W with W z = W⁻¹ s = λ.
struct NtScaling {
  Eigen::VectorXd d;               // linear part: W = diag(d)
  std::vector<double> beta;        // SOC part: W = β (2 v vᵀ − J)
  std::vector<Eigen::VectorXd> v;
};

/// Identity element e.
Eigen::VectorXd identity(const Cones& K);

/// Largest t with x − t·e ∈ K, i.e. the minimal "eigenvalue" of x.
double min_eig(const Cones& K, const Eigen::VectorXd& x);

/// u ∘ v.
Eigen::VectorXd jordan_prod(const Cones& K, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& v);
/// The x with λ ∘ x = u (λ in the interior of K).
Eigen::VectorXd jordan_div(const Cones& K, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& u);

/// Requires s, z in the interior of K. Also returns λ.
NtScaling nt_scaling(const Cones& K, const Eigen::VectorXd& s,
                     const Eigen::VectorXd& z, Eigen::VectorXd* lambda);

Eigen::VectorXd apply_w(const Cones& K, const NtScaling& W,
                        const Eigen::VectorXd& u);
Eigen::VectorXd apply_winv(const Cones& K, const NtScaling& W,
                           const Eigen::VectorXd& u);
/// Dense W⁻¹ block for the SOC block `j`.
Eigen::MatrixXd soc_winv_block(const NtScaling& W, int j);

/// Largest α ≥ 0 (possibly +inf) with x + α d ∈ K, x in the interior.
double max_step(const Cones& K, const Eigen::VectorXd& x,
                const Eigen::VectorXd& d);

}  // namespace internal
}  // namespace relaxmpc
