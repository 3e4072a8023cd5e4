#include <algorithm>
#include <sstream>

#include "relaxmpc/conic.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::Infeasible:
      return "Infeasible";
    case SolveStatus::Unbounded:
      return "Unbounded";
    case SolveStatus::MaxIter:
      return "MaxIter";
  }
  return "Unknown";
}

double ConicProgram::objective(const Eigen::VectorXd& z) const {
  return 0.5 * z.dot(H_cost * z) + f_cost.dot(z) + constant;
}

const VarBlock& ConicProgram::block(std::string_view name) const {
  for (const auto& b : var_names) {
    if (b.name == name) return b;
  }
  throw UnknownVariable("unknown variable block '" + std::string(name) + "'");
}

bool ConicProgram::has_block(std::string_view name) const {
  return std::any_of(var_names.begin(), var_names.end(),
                     [&](const VarBlock& b) { return b.name == name; });
}

void ConicProgram::validate() const {
  const int n = num_vars();
  auto fail = [](const std::string& what) { throw IllFormed(what); };
  if (H_cost.rows() != n || H_cost.cols() != n) fail("H_cost is not n x n");
  if (A_eq.cols() != n && A_eq.rows() > 0) fail("A_eq column count");
  if (A_eq.rows() != b_eq.size()) fail("A_eq / b_eq row mismatch");
  if (A_in.cols() != n && A_in.rows() > 0) fail("A_in column count");
  if (A_in.rows() != b_in.size()) fail("A_in / b_in row mismatch");
  for (const auto& c : socs) {
    if (c.G.cols() != n || c.c.size() != n) fail("SOC column count");
    if (c.G.rows() != c.g.size()) fail("SOC G / g row mismatch");
  }
  if (!H_cost.allFinite() || !f_cost.allFinite()) fail("non-finite cost");
  if (n > 0) {
    const Eigen::MatrixXd sym = 0.5 * (H_cost + H_cost.transpose());
    if ((sym - H_cost).cwiseAbs().maxCoeff() >
        1e-9 * std::max(1.0, H_cost.cwiseAbs().maxCoeff())) {
      fail("H_cost is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym,
                                                      Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
      fail("H_cost is not positive semidefinite");
    }
  }
  std::vector<VarBlock> sorted = var_names;
  std::sort(sorted.begin(), sorted.end(),
            [](const VarBlock& a, const VarBlock& b) {
              return a.offset < b.offset;
            });
  int next = 0;
  for (const auto& b : sorted) {
    if (b.offset != next || b.size < 0) fail("var_names do not tile z");
    next += b.size;
  }
  if (next != n) fail("var_names do not cover z");
  for (size_t i = 0; i < var_names.size(); ++i) {
    for (size_t j = i + 1; j < var_names.size(); ++j) {
      if (var_names[i].name == var_names[j].name) {
        fail("duplicate block name " + var_names[i].name);
      }
    }
  }
}

Eigen::VectorXd extract(const Solution& sol, const ConicProgram& prog,
                        std::string_view name) {
  const VarBlock& b = prog.block(name);
  return sol.z.segment(b.offset, b.size);
}

int ProgramBuilder::add_block(std::string name, int size) {
  for (const auto& b : blocks_) {
    if (b.name == name) throw IllFormed("duplicate block " + name);
  }
  blocks_.push_back({std::move(name), num_vars_, size});
  num_vars_ += size;
  return static_cast<int>(blocks_.size()) - 1;
}

void ProgramBuilder::add_eq(const std::vector<Term>& terms,
                            const Eigen::VectorXd& rhs) {
  eq_.push_back({terms, rhs});
}

void ProgramBuilder::add_le(const std::vector<Term>& terms,
                            const Eigen::VectorXd& rhs) {
  in_.push_back({terms, rhs});
}

void ProgramBuilder::add_soc(const std::vector<Term>& g_terms,
                             const Eigen::VectorXd& g,
                             const std::vector<Term>& c_terms, double d) {
  soc_.push_back({g_terms, g, c_terms, d});
}

void ProgramBuilder::add_quadratic(int block, const Eigen::MatrixXd& W,
                                   const Eigen::VectorXd& target) {
  const int n = blocks_.at(block).size;
  quad_.push_back({{{block, Eigen::MatrixXd::Identity(n, n)}}, target, W});
}

void ProgramBuilder::add_quadratic(int block, const Eigen::MatrixXd& W) {
  add_quadratic(block, W, Eigen::VectorXd::Zero(blocks_.at(block).size));
}

void ProgramBuilder::add_quadratic_expr(const std::vector<Term>& terms,
                                        const Eigen::VectorXd& r,
                                        const Eigen::MatrixXd& W) {
  quad_.push_back({terms, r, W});
}

void ProgramBuilder::add_linear(int block, const Eigen::VectorXd& f) {
  lin_.emplace_back(block, f);
}

Eigen::MatrixXd ProgramBuilder::dense(const std::vector<Term>& terms,
                                      int rows) const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, num_vars_);
  for (const auto& [block, coeff] : terms) {
    const VarBlock& b = blocks_.at(block);
    if (coeff.rows() != rows || coeff.cols() != b.size) {
      throw IllFormed("term shape mismatch for block " + b.name);
    }
    M.middleCols(b.offset, b.size) += coeff;
  }
  return M;
}

ConicProgram ProgramBuilder::build() const {
  ConicProgram p;
  const int n = num_vars_;
  p.var_names = blocks_;
  p.H_cost = Eigen::MatrixXd::Zero(n, n);
  p.f_cost = Eigen::VectorXd::Zero(n);
  p.constant = constant_;
  for (const auto& q : quad_) {
    const Eigen::MatrixXd M = dense(q.terms, static_cast<int>(q.r.size()));
    const Eigen::MatrixXd Ws = 0.5 * (q.W + q.W.transpose());
    p.H_cost += 2.0 * M.transpose() * Ws * M;
    p.f_cost -= 2.0 * M.transpose() * (Ws * q.r);
    p.constant += q.r.dot(Ws * q.r);
  }
  for (const auto& [block, f] : lin_) {
    const VarBlock& b = blocks_.at(block);
    p.f_cost.segment(b.offset, b.size) += f;
  }
  p.H_cost = 0.5 * (p.H_cost + p.H_cost.transpose()).eval();

  auto stack = [&](const std::vector<LinRows>& rows, Eigen::MatrixXd& A,
                   Eigen::VectorXd& b) {
    int total = 0;
    for (const auto& r : rows) total += static_cast<int>(r.rhs.size());
    A = Eigen::MatrixXd::Zero(total, n);
    b = Eigen::VectorXd::Zero(total);
    int at = 0;
    for (const auto& r : rows) {
      const int m = static_cast<int>(r.rhs.size());
      A.middleRows(at, m) = dense(r.terms, m);
      b.segment(at, m) = r.rhs;
      at += m;
    }
  };
  stack(eq_, p.A_eq, p.b_eq);
  stack(in_, p.A_in, p.b_in);
  for (const auto& s : soc_) {
    SocConstraint c;
    c.G = dense(s.g_terms, static_cast<int>(s.g.size()));
    c.g = s.g;
    c.c = dense(s.c_terms, 1).transpose();
    c.d = s.d;
    p.socs.push_back(std::move(c));
  }
  return p;
}

}  // namespace relaxmpc
