#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace relaxmpc {

/// Second-order cone constraint ‖G z + g‖₂ ≤ cᵀz + d.
struct SocConstraint {
  Eigen::MatrixXd G;
  Eigen::VectorXd g;
  Eigen::VectorXd c;
  double d = 0.0;
};

/// A named, contiguous block of decision variables.
struct VarBlock {
  std::string name;
  int offset = 0;
  int size = 0;
};

/// Canonical convex program
///
///   min  ½ zᵀ H z + fᵀ z + constant
///   s.t. A_eq z = b_eq,  A_in z ≤ b_in,  ‖G_j z + g_j‖ ≤ c_jᵀ z + d_j.
///
/// Every MPC variant over a linear model is expressed in this form.
struct ConicProgram {
  Eigen::MatrixXd H_cost;
  Eigen::VectorXd f_cost;
  double constant = 0.0;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  std::vector<SocConstraint> socs;
  std::vector<VarBlock> var_names;

  int num_vars() const { return static_cast<int>(f_cost.size()); }
  double objective(const Eigen::VectorXd& z) const;
  const VarBlock& block(std::string_view name) const;
  bool has_block(std::string_view name) const;

  /// Throws IllFormed on inconsistent dimensions, an indefinite cost or a
  /// var_names map that does not tile [0, num_vars) exactly once.
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string to_string(SolveStatus status);

/// Farkas certificate of primal infeasibility: y_in ≥ 0, cone duals in the
/// second-order cone, A_eqᵀy_eq + A_inᵀy_in − Σ [c_j G_jᵀ] y_soc_j = 0 and
/// b_eqᵀy_eq + b_inᵀy_in + Σ [d_j; g_j]ᵀ y_soc_j = dual_objective < 0.
struct InfeasibilityCertificate {
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  std::vector<Eigen::VectorXd> y_soc;
  double dual_objective = 0.0;
};

struct Solution {
  Eigen::VectorXd z;
  double objective = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double solve_time = 0.0;

  // Multipliers of the equality, inequality and cone constraints.
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  std::vector<Eigen::VectorXd> y_soc;

  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;

  std::optional<InfeasibilityCertificate> certificate;
};

struct SolverSettings {
  /// Contract tolerances: a returned Optimal point satisfies these.
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  /// The interior-point loop keeps iterating until this tighter target is
  /// met or progress stalls.
  double target_tol = 1e-10;
  int max_iter = 100;
};

/// Primal-dual interior-point method (Nesterov-Todd scaling, Mehrotra
/// predictor-corrector) with a phase-I fallback that certifies infeasibility.
Solution solve(const ConicProgram& prog,
               const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
               const SolverSettings& settings = {});

/// Sub-vector of `sol.z` for the block called `name`.
Eigen::VectorXd extract(const Solution& sol, const ConicProgram& prog,
                        std::string_view name);

/// Incremental assembly of a ConicProgram from named variable blocks.
class ProgramBuilder {
 public:
  using Term = std::pair<int, Eigen::MatrixXd>;

  int add_block(std::string name, int size);
  int block_size(int block) const { return blocks_.at(block).size; }
  int num_vars() const { return num_vars_; }

  void add_eq(const std::vector<Term>& terms, const Eigen::VectorXd& rhs);
  void add_le(const std::vector<Term>& terms, const Eigen::VectorXd& rhs);
  /// ‖Σ G_t z_t + g‖ ≤ Σ c_tᵀ z_t + d, where the c-terms are row vectors.
  void add_soc(const std::vector<Term>& g_terms, const Eigen::VectorXd& g,
               const std::vector<Term>& c_terms, double d);

  /// cost += (z_b − target)ᵀ W (z_b − target)
  void add_quadratic(int block, const Eigen::MatrixXd& W,
                     const Eigen::VectorXd& target);
  void add_quadratic(int block, const Eigen::MatrixXd& W);
  /// cost += (Σ M_t z_t − r)ᵀ W (Σ M_t z_t − r)
  void add_quadratic_expr(const std::vector<Term>& terms,
                          const Eigen::VectorXd& r, const Eigen::MatrixXd& W);
  void add_linear(int block, const Eigen::VectorXd& f);
  void add_constant(double c) { constant_ += c; }

  ConicProgram build() const;

 private:
  struct LinRows {
    std::vector<Term> terms;
    Eigen::VectorXd rhs;
  };
  struct SocRows {
    std::vector<Term> g_terms;
    Eigen::VectorXd g;
    std::vector<Term> c_terms;
    double d;
  };
  struct QuadExpr {
    std::vector<Term> terms;
    Eigen::VectorXd r;
    Eigen::MatrixXd W;
  };

  Eigen::MatrixXd dense(const std::vector<Term>& terms, int rows) const;

  std::vector<VarBlock> blocks_;
  int num_vars_ = 0;
  std::vector<LinRows> eq_;
  std::vector<LinRows> in_;
  std::vector<SocRows> soc_;
  std::vector<QuadExpr> quad_;
  std::vector<std::pair<int, Eigen::VectorXd>> lin_;
  double constant_ = 0.0;
};

/// Plain-text sparse format: header line, then `section rows cols nnz`
/// followed by `i j value` triplets for each matrix.
void write_program(std::ostream& os, const ConicProgram& prog);
ConicProgram read_program(std::istream& is);

}  // namespace relaxmpc
