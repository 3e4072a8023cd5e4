#include <iomanip>
#include <istream>
#include <ostream>
#include <vector>

#include "relaxmpc/conic.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {

namespace {

constexpr const char* kHeader = "relaxmpc-conic-program 1";

void write_matrix(std::ostream& os, const char* tag, const Eigen::MatrixXd& M) {
  int nnz = 0;
  for (int j = 0; j < M.cols(); ++j) {
    for (int i = 0; i < M.rows(); ++i) nnz += M(i, j) != 0.0;
  }
  os << tag << ' ' << M.rows() << ' ' << M.cols() << ' ' << nnz << '\n';
  for (int j = 0; j < M.cols(); ++j) {
    for (int i = 0; i < M.rows(); ++i) {
      if (M(i, j) != 0.0) os << i << ' ' << j << ' ' << M(i, j) << '\n';
    }
  }
}

void write_vector(std::ostream& os, const char* tag, const Eigen::VectorXd& v) {
  os << tag << ' ' << v.size();
  for (int i = 0; i < v.size(); ++i) os << ' ' << v(i);
  os << '\n';
}

void expect(std::istream& is, const std::string& tag) {
  std::string word;
  if (!(is >> word) || word != tag) {
    throw IllFormed("conic program text: expected '" + tag + "', got '" +
                    word + "'");
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, const std::string& tag) {
  expect(is, tag);
  int rows = 0, cols = 0, nnz = 0;
  if (!(is >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
    throw IllFormed("conic program text: bad header for " + tag);
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, cols);
  for (int k = 0; k < nnz; ++k) {
    int i = 0, j = 0;
    double v = 0.0;
    if (!(is >> i >> j >> v) || i < 0 || i >= rows || j < 0 || j >= cols) {
      throw IllFormed("conic program text: bad entry in " + tag);
    }
    M(i, j) = v;
  }
  return M;
}

Eigen::VectorXd read_vector(std::istream& is, const std::string& tag) {
  expect(is, tag);
  int n = 0;
  if (!(is >> n) || n < 0) throw IllFormed("conic program text: bad " + tag);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    if (!(is >> v(i))) throw IllFormed("conic program text: short " + tag);
  }
  return v;
}

}  // namespace

void write_program(std::ostream& os, const ConicProgram& prog) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17);
  os << kHeader << '\n';
  os << "blocks " << prog.var_names.size() << '\n';
  for (const auto& b : prog.var_names) {
    os << b.name << ' ' << b.offset << ' ' << b.size << '\n';
  }
  os << "constant " << prog.constant << '\n';
  write_matrix(os, "H", prog.H_cost);
  write_vector(os, "f", prog.f_cost);
  write_matrix(os, "A_eq", prog.A_eq);
  write_vector(os, "b_eq", prog.b_eq);
  write_matrix(os, "A_in", prog.A_in);
  write_vector(os, "b_in", prog.b_in);
  os << "socs " << prog.socs.size() << '\n';
  for (const auto& c : prog.socs) {
    write_matrix(os, "G", c.G);
    write_vector(os, "g", c.g);
    write_vector(os, "c", c.c);
    os << "d " << c.d << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

ConicProgram read_program(std::istream& is) {
  std::string line;
  while (std::getline(is, line) && line.empty()) {
  }
  if (line != kHeader) throw IllFormed("conic program text: missing header");
  ConicProgram p;
  expect(is, "blocks");
  size_t nb = 0;
  if (!(is >> nb)) throw IllFormed("conic program text: bad block count");
  for (size_t i = 0; i < nb; ++i) {
    VarBlock b;
    if (!(is >> b.name >> b.offset >> b.size)) {
      throw IllFormed("conic program text: bad block entry");
    }
    p.var_names.push_back(b);
  }
  expect(is, "constant");
  if (!(is >> p.constant)) throw IllFormed("conic program text: constant");
  p.H_cost = read_matrix(is, "H");
  p.f_cost = read_vector(is, "f");
  p.A_eq = read_matrix(is, "A_eq");
  p.b_eq = read_vector(is, "b_eq");
  p.A_in = read_matrix(is, "A_in");
  p.b_in = read_vector(is, "b_in");
  expect(is, "socs");
  size_t ns = 0;
  if (!(is >> ns)) throw IllFormed("conic program text: bad soc count");
  for (size_t i = 0; i < ns; ++i) {
    SocConstraint c;
    c.G = read_matrix(is, "G");
    c.g = read_vector(is, "g");
    c.c = read_vector(is, "c");
    expect(is, "d");
    if (!(is >> c.d)) throw IllFormed("conic program text: soc offset");
    p.socs.push_back(std::move(c));
  }
  p.validate();
  return p;
}

}  // namespace relaxmpc
