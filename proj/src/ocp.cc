#include "relaxmpc/ocp.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fm = formulation;

const char* formulation_name(const Formulation& f) {
  static constexpr const char* kNames[] = {
      "nominal", "slack_init", "implicit_slack", "implicit_slack_soft_input",
      "tube",    "tube_slack", "soft_p",         "soft_t",
      "soft_g"};
  return kNames[f.index()];
}

namespace {
int model_n(const LinearSystem& s) { return s.n(); }
int model_n(const NonlinearModel& s) { return s.n; }
int model_m(const LinearSystem& s) { return s.m(); }
int model_m(const NonlinearModel& s) { return s.m; }
}  // namespace

int OcpSpec::n() const {
  return std::visit([](const auto& s) { return model_n(s); }, model);
}

int OcpSpec::m() const {
  return std::visit([](const auto& s) { return model_m(s); }, model);
}

void OcpSpec::validate() const {
  const int nx = n();
  const int nu = m();
  if (N < 1) throw IllFormed("OcpSpec: horizon must be >= 1");
  if (Q.rows() != nx || Q.cols() != nx || R.rows() != nu || R.cols() != nu) {
    throw DimensionMismatch("OcpSpec: cost weights do not match the model");
  }
  if (X.dim() != nx || U.dim() != nu) {
    throw DimensionMismatch("OcpSpec: constraint sets do not match the model");
  }
  if (sublevel_cap && !(*sublevel_cap > 0.0)) {
    throw IllFormed("OcpSpec: sublevel cap must be positive");
  }
  if (const auto* t = std::get_if<TerminalIngredients>(&terminal)) {
    if (t->P_f.rows() != nx || t->K.rows() != nu || t->K.cols() != nx ||
        t->X_f.dim() != nx) {
      throw DimensionMismatch("OcpSpec: terminal ingredients");
    }
  } else if (const auto* g = std::get_if<GlobalQuadratic>(&terminal)) {
    if (g->P_g.rows() != nx || g->P_g.cols() != nx) {
      throw DimensionMismatch("OcpSpec: global terminal weight");
    }
  } else if (const auto* e = std::get_if<TerminalEquality>(&terminal)) {
    if (e->C.cols() != nx || e->C.rows() != e->y_target.size()) {
      throw DimensionMismatch("OcpSpec: tracking output map");
    }
  }
  auto need_lyap = [&](const char* what) {
    if (!lyap) throw MissingLyap(std::string(what) + " needs an incremental Lyapunov function");
  };
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw IllFormed(std::string(what) + " must be positive");
  };
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, fm::SlackInit>) {
          need_lyap("SlackInit");
          positive(f.lambda, "lambda");
        } else if constexpr (std::is_same_v<F, fm::ImplicitSlack> ||
                             std::is_same_v<F, fm::ImplicitSlackSoftInput>) {
          positive(f.lambda, "lambda");
          if (f.M < 1) throw IllFormed("implicit horizon M must be >= 1");
        } else if constexpr (std::is_same_v<F, fm::Tube>) {
          need_lyap("Tube");
          if (!(f.delta >= 0.0)) throw IllFormed("delta must be >= 0");
        } else if constexpr (std::is_same_v<F, fm::TubeSlack>) {
          need_lyap("TubeSlack");
          positive(f.lambda, "lambda");
          if (!(f.delta >= 0.0)) throw IllFormed("delta must be >= 0");
        } else if constexpr (std::is_same_v<F, fm::SoftP> ||
                             std::is_same_v<F, fm::SoftG>) {
          positive(f.q_xi, "Q_xi");
        } else if constexpr (std::is_same_v<F, fm::SoftT>) {
          positive(f.q_xi, "Q_xi");
          if (f.M_tail < 0) throw IllFormed("M_tail must be >= 0");
        }
      },
      formulation);
  if ((std::holds_alternative<fm::Tube>(formulation) ||
       std::holds_alternative<fm::TubeSlack>(formulation)) &&
      !std::holds_alternative<QuadIncLyap>(*lyap)) {
    throw MissingLyap("tube variants need a quadratic incremental Lyapunov function");
  }
  if (!is_linear() && (std::holds_alternative<fm::SoftT>(formulation) ||
                       std::holds_alternative<fm::SoftG>(formulation))) {
    throw IllFormed("soft-T and soft-G are defined for linear models only");
  }
  if (std::holds_alternative<fm::SoftT>(formulation) &&
      !std::holds_alternative<TerminalIngredients>(terminal)) {
    throw IllFormed("soft-T needs LQR terminal ingredients");
  }
}

VectorXd model_step(const Model& model, const VectorXd& x, const VectorXd& u) {
  return std::visit([&](const auto& s) { return VectorXd(s.step(x, u)); },
                    model);
}

MatrixXd implicit_penalty_matrix(const MatrixXd& A, int M) {
  if (M < 1) throw IllFormed("implicit_penalty_matrix: M must be >= 1");
  const int n = static_cast<int>(A.rows());
  MatrixXd P = MatrixXd::Zero(n, n);
  MatrixXd Ak = MatrixXd::Identity(n, n);
  for (int k = 0; k < M; ++k) {
    P += Ak.transpose() * Ak;
    Ak = A * Ak;
  }
  return P;
}

MatrixXd soft_global_terminal(const MatrixXd& A, const MatrixXd& Q,
                              const Polytope& X, double q_xi) {
  return dlyap(A, Q + q_xi * X.H.transpose() * X.H);
}

Polytope input_only_terminal_set(const MatrixXd& A, const MatrixXd& B,
                                 const MatrixXd& K, const Polytope& U) {
  return max_positive_invariant(A + B * K, U.preimage(K));
}

Polytope tube_state_set(const OcpSpec& spec, double delta) {
  if (!spec.lyap || !std::holds_alternative<QuadIncLyap>(*spec.lyap)) {
    throw MissingLyap("tube tightening needs a quadratic Lyapunov function");
  }
  const double c1 = std::get<QuadIncLyap>(*spec.lyap).c[0];
  Polytope Xb = tighten_by_ball(spec.X.normalized(), delta / std::sqrt(c1));
  if (Xb.is_empty || Xb.is_degenerate) {
    throw DegenerateTightening("tightened state constraints are empty or degenerate");
  }
  return Xb;
}

namespace {

MatrixXd eye(int n) { return MatrixXd::Identity(n, n); }

// Assembles a variant on top of the common nominal trajectory.
class Transcriber {
 public:
  Transcriber(const OcpSpec& spec, const VectorXd& x)
      : spec_(spec), x_(x), n_(spec.n()), m_(spec.m()) {
    spec.validate();
    if (x.size() != n_) throw DimensionMismatch("initial state has wrong size");
    if (!x.allFinite()) throw DomainError("initial state is not finite");
  }

  ProgramBuilder pb;
  int xbar = -1;
  std::vector<int> xs;  // xs[k] for k = 0..N (xs[0] = xbar)
  std::vector<int> us;
  int x_ss = -1, u_ss = -1;

  const OcpSpec& spec() const { return spec_; }
  const VectorXd& x() const { return x_; }
  int n() const { return n_; }
  int m() const { return m_; }
  int N() const { return spec_.N; }
  bool tracking() const {
    return std::holds_alternative<TerminalEquality>(spec_.terminal);
  }

  // next = f(prev, u); prev = -1 means the measured state.
  void dynamics(int prev, int u, int next) {
    if (const auto* lin = std::get_if<LinearSystem>(&spec_.model)) {
      if (prev < 0) {
        pb.add_eq({{next, eye(n_)}, {u, -lin->B}}, lin->A * x_);
      } else {
        pb.add_eq({{next, eye(n_)}, {prev, -lin->A}, {u, -lin->B}},
                  VectorXd::Zero(n_));
      }
    } else {
      links_.push_back({prev, u, next});
    }
  }

  void add_trajectory() {
    xbar = pb.add_block("xbar", n_);
    xs.push_back(xbar);
    for (int k = 1; k <= N(); ++k) {
      xs.push_back(pb.add_block("x" + std::to_string(k), n_));
    }
    for (int k = 0; k < N(); ++k) {
      us.push_back(pb.add_block("u" + std::to_string(k), m_));
    }
    if (tracking()) {
      x_ss = pb.add_block("xs", n_);
      u_ss = pb.add_block("us", m_);
    }
    for (int k = 0; k < N(); ++k) dynamics(xs[k], us[k], xs[k + 1]);
    for (int k = 0; k < N(); ++k) {
      pb.add_le({{us[k], spec_.U.H}}, spec_.U.h);
    }
  }

  // J_N(x̄, u): stage costs, terminal cost and tracking offset.
  void add_cost() {
    const auto& Q = spec_.Q;
    const auto& R = spec_.R;
    if (tracking()) {
      const auto& te = std::get<TerminalEquality>(spec_.terminal);
      for (int k = 0; k < N(); ++k) {
        pb.add_quadratic_expr({{xs[k], eye(n_)}, {x_ss, -eye(n_)}},
                              VectorXd::Zero(n_), Q);
        pb.add_quadratic_expr({{us[k], eye(m_)}, {u_ss, -eye(m_)}},
                              VectorXd::Zero(m_), R);
      }
      const int p = static_cast<int>(te.C.rows());
      pb.add_quadratic_expr({{x_ss, te.C}}, te.y_target,
                            te.offset_weight * eye(p));
      return;
    }
    for (int k = 0; k < N(); ++k) {
      pb.add_quadratic(xs[k], Q);
      pb.add_quadratic(us[k], R);
    }
    if (const auto* t = std::get_if<TerminalIngredients>(&spec_.terminal)) {
      pb.add_quadratic(xs[N()], t->P_f);
    } else if (const auto* g = std::get_if<GlobalQuadratic>(&spec_.terminal)) {
      pb.add_quadratic(xs[N()], g->P_g);
    }
  }

  // Snapshot of the cost J_N for the optional sublevel cap.
  void snapshot_cost() {
    if (spec_.sublevel_cap) cost_snapshot_ = pb;
  }

  void hard_states(const Polytope& X) {
    for (int k = 0; k < N(); ++k) pb.add_le({{xs[k], X.H}}, X.h);
  }

  void soft_states(double q_xi) {
    const int p = spec_.X.rows();
    for (int k = 0; k < N(); ++k) {
      const int xi = pb.add_block("xi" + std::to_string(k), p);
      pb.add_le({{xs[k], spec_.X.H}, {xi, -eye(p)}}, spec_.X.h);
      pb.add_le({{xi, -eye(p)}}, VectorXd::Zero(p));
      pb.add_quadratic(xi, q_xi * eye(p));
    }
  }

  // Terminal constraint for the variant; `X_state` is the (possibly
  // tightened) state set used for the artificial steady state.
  void terminal(const Polytope* X_f, const Polytope& X_state) {
    if (tracking()) {
      pb.add_eq({{xs[N()], eye(n_)}, {x_ss, -eye(n_)}}, VectorXd::Zero(n_));
      pb.add_le({{x_ss, X_state.H}}, X_state.h);
      pb.add_le({{u_ss, spec_.U.H}}, spec_.U.h);
      if (const auto* lin = std::get_if<LinearSystem>(&spec_.model)) {
        pb.add_eq({{x_ss, eye(n_) - lin->A}, {u_ss, -lin->B}},
                  VectorXd::Zero(n_));
      } else {
        steady_ = true;
      }
      return;
    }
    if (X_f) pb.add_le({{xs[N()], X_f->H}}, X_f->h);
  }

  void fix_initial_state() { pb.add_eq({{xbar, eye(n_)}}, x_); }

  // ‖Lᵀ(x − x̄)‖ ≤ δ + s (s < 0 means no slack block).
  void tube_cone(double delta, int s_block) {
    const auto& lyap = std::get<QuadIncLyap>(*spec_.lyap);
    const MatrixXd Lt = lyap.P.llt().matrixU();
    std::vector<ProgramBuilder::Term> c_terms;
    if (s_block >= 0) c_terms.push_back({s_block, MatrixXd::Ones(1, 1)});
    pb.add_soc({{xbar, -Lt}}, Lt * x_, c_terms, delta);
  }

  void penalty(double lambda) {
    const IncLyap& lyap = *spec_.lyap;
    if (const auto* q = std::get_if<QuadIncLyap>(&lyap)) {
      pb.add_quadratic(xbar, lambda * q->P, x_);
      return;
    }
    const auto& F = std::get<PolyIncLyap>(lyap).F;
    const int t = pb.add_block("t", 1);
    const int r = static_cast<int>(F.rows());
    // F(x − x̄) ≤ t·1.
    pb.add_le({{xbar, -F}, {t, -MatrixXd::Ones(r, 1)}}, -F * x_);
    pb.add_le({{t, -MatrixXd::Ones(1, 1)}}, VectorXd::Zero(1));
    pb.add_linear(t, VectorXd::Constant(1, lambda));
  }

  // Extends the nominal trajectory beyond N with u_k = K x_k up to
  // state index `last`.
  void terminal_law_tail(int last) {
    const auto* t = std::get_if<TerminalIngredients>(&spec_.terminal);
    if (!t) {
      throw MissingTerminalLaw("implicit horizon beyond N+1 needs a terminal control law");
    }
    for (int k = N(); k < last; ++k) {
      const int u = pb.add_block("u" + std::to_string(k), m_);
      const int xn = pb.add_block("x" + std::to_string(k + 1), n_);
      pb.add_eq({{u, eye(m_)}, {xs[k], -t->K}}, VectorXd::Zero(m_));
      us.push_back(u);
      xs.push_back(xn);
      dynamics(xs[k], u, xn);
    }
  }

  OcpProblem finish() {
    ConicProgram prog = pb.build();
    if (spec_.sublevel_cap) add_cap(&prog);
    if (links_.empty() && !steady_) return prog;
    NlpProblem nlp;
    nlp.base = std::move(prog);
    const NonlinearModel model = std::get<NonlinearModel>(spec_.model);
    struct Link {
      int prev, u, next;  // offsets, prev < 0 for the measured state
    };
    std::vector<Link> links;
    for (const auto& l : links_) {
      links.push_back({l.prev < 0 ? -1 : nlp.base.var_names[l.prev].offset,
                       nlp.base.var_names[l.u].offset,
                       nlp.base.var_names[l.next].offset});
    }
    if (steady_) {
      const int o_x = nlp.base.var_names[x_ss].offset;
      links.push_back({o_x, nlp.base.var_names[u_ss].offset, o_x});
    }
    const int n = n_, m = m_, dim = nlp.base.num_vars();
    const VectorXd x0 = x_;
    auto eval = [=](const VectorXd& z, MatrixXd* J) {
      VectorXd c(n * static_cast<int>(links.size()));
      if (J) *J = MatrixXd::Zero(c.size(), dim);
      for (size_t i = 0; i < links.size(); ++i) {
        const Link& l = links[i];
        const VectorXd xp = l.prev < 0 ? x0 : VectorXd(z.segment(l.prev, n));
        const VectorXd u = z.segment(l.u, m);
        const int r = static_cast<int>(i) * n;
        if (J) {
          VectorXd xn;
          MatrixXd A, B;
          model.step_with_jacobian(xp, u, &xn, &A, &B);
          c.segment(r, n) = z.segment(l.next, n) - xn;
          J->block(r, l.next, n, n) += eye(n);
          if (l.prev >= 0) J->block(r, l.prev, n, n) -= A;
          J->block(r, l.u, n, m) -= B;
        } else {
          c.segment(r, n) = z.segment(l.next, n) - model.step(xp, u);
        }
      }
      return c;
    };
    nlp.eq = [eval](const VectorXd& z) { return eval(z, nullptr); };
    nlp.eq_jacobian = [eval](const VectorXd& z) {
      MatrixXd J;
      eval(z, &J);
      return J;
    };
    return nlp;
  }

 private:
  // ½zᵀHz + fᵀz + c ≤ V̄ as ‖(2Rz, 1 − t)‖ ≤ 1 + t, t = V̄ − fᵀz − c.
  void add_cap(ConicProgram* prog) const {
    const ConicProgram J = cost_snapshot_.build();
    const int nz = prog->num_vars();
    const int nj = J.num_vars();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(J.H_cost);
    const VectorXd d = es.eigenvalues().cwiseMax(0.0);
    MatrixXd Rm = MatrixXd::Zero(nj, nz);
    Rm.leftCols(nj) =
        (0.5 * d).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    VectorXd f = VectorXd::Zero(nz);
    f.head(nj) = J.f_cost;
    const double vbar = *spec_.sublevel_cap;
    SocConstraint s;
    s.G = MatrixXd::Zero(nj + 1, nz);
    s.G.topRows(nj) = 2.0 * Rm;
    s.G.row(nj) = f.transpose();
    s.g = VectorXd::Zero(nj + 1);
    s.g(nj) = 1.0 - vbar + J.constant;
    s.c = -f;
    s.d = 1.0 + vbar - J.constant;
    prog->socs.push_back(std::move(s));
  }

  struct PendingLink {
    int prev, u, next;  // block indices
  };

  const OcpSpec& spec_;
  VectorXd x_;
  int n_, m_;
  std::vector<PendingLink> links_;
  bool steady_ = false;
  ProgramBuilder cost_snapshot_;
};

const TerminalIngredients* lqr_ingredients(const OcpSpec& spec) {
  return std::get_if<TerminalIngredients>(&spec.terminal);
}

const Polytope* terminal_set(const OcpSpec& spec) {
  const auto* t = lqr_ingredients(spec);
  return t ? &t->X_f : nullptr;
}

ConicProgram as_conic(OcpProblem p, const char* what) {
  if (auto* c = std::get_if<ConicProgram>(&p)) return std::move(*c);
  throw IllFormed(std::string(what) + " requires a linear model");
}

OcpProblem nominal_problem(const OcpSpec& spec, const VectorXd& x) {
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.fix_initial_state();
  t.hard_states(spec.X);
  t.terminal(terminal_set(spec), spec.X);
  return t.finish();
}

OcpProblem slack_problem(const OcpSpec& spec, const VectorXd& x) {
  const auto& f = std::get<fm::SlackInit>(spec.formulation);
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.penalty(f.lambda);
  t.hard_states(spec.X);
  t.terminal(terminal_set(spec), spec.X);
  return t.finish();
}

OcpProblem implicit_problem(const OcpSpec& spec, const VectorXd& x) {
  const auto& f = std::get<fm::ImplicitSlack>(spec.formulation);
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.hard_states(spec.X);
  t.terminal(terminal_set(spec), spec.X);
  if (f.M > spec.N + 1 && !lqr_ingredients(spec)) {
    throw MissingTerminalLaw("implicit horizon beyond N+1 needs a terminal control law");
  }
  if (const auto* lin = std::get_if<LinearSystem>(&spec.model)) {
    // Same inputs on both trajectories: the difference evolves as A^k e.
    t.pb.add_quadratic(t.xbar, f.lambda * implicit_penalty_matrix(lin->A, f.M),
                       x);
    return t.finish();
  }
  if (f.M > spec.N + 1) t.terminal_law_tail(f.M - 1);
  const int n = t.n();
  int prev = -1;
  for (int k = 0; k < f.M; ++k) {
    int yk = -1;
    if (k > 0) {
      yk = t.pb.add_block("y" + std::to_string(k), n);
      t.dynamics(prev, t.us[k - 1], yk);
      t.pb.add_quadratic_expr({{yk, eye(n)}, {t.xs[k], -eye(n)}},
                              VectorXd::Zero(n), f.lambda * eye(n));
    } else {
      t.pb.add_quadratic(t.xbar, f.lambda * eye(n), x);
    }
    prev = yk;
  }
  return t.finish();
}

}  // namespace

ConicProgram build_nominal(const OcpSpec& spec, const VectorXd& x) {
  return as_conic(nominal_problem(spec, x), "build_nominal");
}

ConicProgram build_slack_init(const OcpSpec& spec, const VectorXd& x) {
  if (!spec.lyap) throw MissingLyap("SlackInit needs an incremental Lyapunov function");
  return as_conic(slack_problem(spec, x), "build_slack_init");
}

OcpProblem build_implicit(const OcpSpec& spec, const VectorXd& x) {
  return implicit_problem(spec, x);
}

NlpProblem build_implicit_soft_input(const OcpSpec& spec, const VectorXd& x) {
  const auto& f = std::get<fm::ImplicitSlackSoftInput>(spec.formulation);
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.hard_states(spec.X);
  t.terminal(terminal_set(spec), spec.X);
  if (f.M > spec.N + 1) t.terminal_law_tail(f.M - 1);
  const int n = t.n(), m = t.m();
  t.pb.add_quadratic(t.xbar, f.lambda * eye(n), x);
  int prev = -1;
  for (int k = 1; k < f.M; ++k) {
    const int v = t.pb.add_block("v" + std::to_string(k - 1), m);
    const int y = t.pb.add_block("y" + std::to_string(k), n);
    t.dynamics(prev, v, y);
    t.pb.add_quadratic_expr({{v, eye(m)}, {t.us[k - 1], -eye(m)}},
                            VectorXd::Zero(m), eye(m));
    t.pb.add_quadratic_expr({{y, eye(n)}, {t.xs[k], -eye(n)}},
                            VectorXd::Zero(n), f.lambda * eye(n));
    prev = y;
  }
  OcpProblem p = t.finish();
  if (auto* nlp = std::get_if<NlpProblem>(&p)) return std::move(*nlp);
  NlpProblem out;
  out.base = std::move(std::get<ConicProgram>(p));
  return out;
}

namespace {

OcpProblem tube_problem(const OcpSpec& spec, const VectorXd& x, double delta,
                        const std::optional<Polytope>& X_f_tight,
                        std::optional<double> lambda) {
  const Polytope Xb = tube_state_set(spec, delta);
  std::optional<Polytope> Xf;
  if (const Polytope* X_f = terminal_set(spec)) {
    if (X_f_tight) {
      Xf = *X_f_tight;
    } else {
      const double c1 = std::get<QuadIncLyap>(*spec.lyap).c[0];
      Xf = tighten_by_ball(X_f->normalized(), delta / std::sqrt(c1));
      if (Xf->is_empty) {
        throw DegenerateTightening("tightened terminal set is empty");
      }
    }
  }
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.hard_states(Xb);
  t.terminal(Xf ? &*Xf : nullptr, Xb);
  if (lambda) {
    const int s = t.pb.add_block("s", 1);
    t.pb.add_le({{s, -MatrixXd::Ones(1, 1)}}, VectorXd::Zero(1));
    t.pb.add_quadratic(s, *lambda * MatrixXd::Ones(1, 1));
    t.tube_cone(delta, s);
  } else if (delta == 0.0) {
    t.fix_initial_state();
  } else {
    t.tube_cone(delta, -1);
  }
  return t.finish();
}

OcpProblem soft_problem(const OcpSpec& spec, const VectorXd& x) {
  Transcriber t(spec, x);
  t.add_trajectory();
  t.add_cost();
  t.snapshot_cost();
  t.fix_initial_state();
  if (const auto* f = std::get_if<fm::SoftP>(&spec.formulation)) {
    t.soft_states(f->q_xi);
    t.terminal(terminal_set(spec), spec.X);
  } else if (const auto* f = std::get_if<fm::SoftG>(&spec.formulation)) {
    if (!std::holds_alternative<GlobalQuadratic>(spec.terminal)) {
      throw IllFormed("soft-G needs a global quadratic terminal cost");
    }
    t.soft_states(f->q_xi);
  } else {
    const auto& st = std::get<fm::SoftT>(spec.formulation);
    const auto& lin = std::get<LinearSystem>(spec.model);
    const auto& ti = std::get<TerminalIngredients>(spec.terminal);
    t.soft_states(st.q_xi);
    const Polytope Xf =
        st.input_terminal_set
            ? *st.input_terminal_set
            : input_only_terminal_set(lin.A, lin.B, ti.K, spec.U);
    t.terminal(&Xf, spec.X);
    // Peak violation of every row along the LQR tail from x_N.
    const int p = spec.X.rows();
    const int eta = t.pb.add_block("eta", p);
    const MatrixXd Acl = lin.A + lin.B * ti.K;
    MatrixXd Ak = eye(t.n());
    for (int j = 0; j <= st.M_tail; ++j) {
      t.pb.add_le({{t.xs[t.N()], spec.X.H * Ak}, {eta, -eye(p)}}, spec.X.h);
      Ak = Acl * Ak;
    }
    t.pb.add_le({{eta, -eye(p)}}, VectorXd::Zero(p));
    t.pb.add_quadratic(eta, st.q_xi * eye(p));
  }
  return t.finish();
}

}  // namespace

ConicProgram build_tube(const OcpSpec& spec, const VectorXd& x) {
  const auto& f = std::get<fm::Tube>(spec.formulation);
  return as_conic(tube_problem(spec, x, f.delta, f.terminal_set, std::nullopt),
                  "build_tube");
}

ConicProgram build_tube_slack(const OcpSpec& spec, const VectorXd& x) {
  const auto& f = std::get<fm::TubeSlack>(spec.formulation);
  return as_conic(tube_problem(spec, x, f.delta, f.terminal_set, f.lambda),
                  "build_tube_slack");
}

ConicProgram build_soft_baseline(const OcpSpec& spec, const VectorXd& x) {
  return as_conic(soft_problem(spec, x), "build_soft_baseline");
}

OcpProblem build(const OcpSpec& spec, const VectorXd& x) {
  return std::visit(
      [&](const auto& f) -> OcpProblem {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, fm::Nominal>) {
          return nominal_problem(spec, x);
        } else if constexpr (std::is_same_v<F, fm::SlackInit>) {
          return slack_problem(spec, x);
        } else if constexpr (std::is_same_v<F, fm::ImplicitSlack>) {
          return implicit_problem(spec, x);
        } else if constexpr (std::is_same_v<F, fm::ImplicitSlackSoftInput>) {
          return build_implicit_soft_input(spec, x);
        } else if constexpr (std::is_same_v<F, fm::Tube>) {
          return tube_problem(spec, x, f.delta, f.terminal_set, std::nullopt);
        } else if constexpr (std::is_same_v<F, fm::TubeSlack>) {
          return tube_problem(spec, x, f.delta, f.terminal_set, f.lambda);
        } else {
          return soft_problem(spec, x);
        }
      },
      spec.formulation);
}

namespace {

// Splits "x12" into ("x", 12); returns false for names without an index.
bool split_index(const std::string& name, std::string* prefix, int* index) {
  size_t i = name.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(name[i - 1]))) --i;
  if (i == name.size() || i == 0) return false;
  *prefix = name.substr(0, i);
  *index = std::stoi(name.substr(i));
  return true;
}

// Shifts a previous solution by one stage: block "p{k}" takes the value of
// "p{k+1}" (the last stage is repeated) and "xbar" takes "x1".
VectorXd shift(const std::vector<VarBlock>& blocks, const VectorXd& z) {
  std::map<std::string, const VarBlock*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b;
  VectorXd out = z;
  for (const auto& b : blocks) {
    std::string src;
    std::string prefix;
    int k = 0;
    if (b.name == "xbar") {
      src = "x1";
    } else if (split_index(b.name, &prefix, &k)) {
      src = prefix + std::to_string(k + 1);
    }
    auto it = by_name.find(src);
    if (it != by_name.end() && it->second->size == b.size) {
      out.segment(b.offset, b.size) = z.segment(it->second->offset, b.size);
    }
  }
  return out;
}

// Cold start for the SQP: open-loop rollout with the central input.
VectorXd initial_guess(const OcpSpec& spec, const std::vector<VarBlock>& blocks,
                       const VectorXd& x) {
  VectorXd uc;
  chebyshev_ball(spec.U, &uc);
  std::map<std::string, VectorXd> value;
  VectorXd xk = x;
  value["xbar"] = x;
  for (int k = 1; k < 1000; ++k) {
    bool any = false;
    for (const char* p : {"x", "y"}) {
      if (std::any_of(blocks.begin(), blocks.end(), [&](const VarBlock& b) {
            return b.name == p + std::to_string(k);
          })) {
        any = true;
      }
    }
    if (!any) break;
    xk = model_step(spec.model, xk, uc);
    value["x" + std::to_string(k)] = xk;
    value["y" + std::to_string(k)] = xk;
  }
  value["xs"] = xk;
  VectorXd z = VectorXd::Zero(blocks.empty() ? 0 : blocks.back().offset + blocks.back().size);
  for (const auto& b : blocks) {
    std::string prefix;
    int k = 0;
    auto it = value.find(b.name);
    if (it != value.end() && it->second.size() == b.size) {
      z.segment(b.offset, b.size) = it->second;
    } else if (b.name == "us" ||
               (split_index(b.name, &prefix, &k) && (prefix == "u" || prefix == "v"))) {
      if (uc.size() == b.size) z.segment(b.offset, b.size) = uc;
    }
  }
  return z;
}

}  // namespace

StepResult mpc_step(const OcpSpec& spec, const VectorXd& x,
                    const std::optional<VectorXd>& warm) {
  const OcpProblem problem = build(spec, x);
  StepResult r;
  const std::vector<VarBlock>& blocks =
      std::holds_alternative<ConicProgram>(problem)
          ? std::get<ConicProgram>(problem).var_names
          : std::get<NlpProblem>(problem).base.var_names;
  auto get = [&](const char* name) -> VectorXd {
    for (const auto& b : blocks) {
      if (b.name == name) return r.z.segment(b.offset, b.size);
    }
    return VectorXd();
  };

  if (const auto* prog = std::get_if<ConicProgram>(&problem)) {
    const Solution sol = solve(*prog);
    r.status = sol.status;
    r.solve_time = sol.solve_time;
    r.iterations = sol.iterations;
    r.z = sol.z;
    r.value = sol.objective;
  } else {
    const auto& nlp = std::get<NlpProblem>(problem);
    VectorXd z0;
    if (warm && warm->size() == nlp.dim() && warm->allFinite()) {
      z0 = shift(blocks, *warm);
    } else {
      z0 = initial_guess(spec, blocks, x);
    }
    const SqpReport rep = sqp_solve(nlp, z0);
    r.status = rep.qp_status;
    if (r.status == SolveStatus::Optimal && !rep.converged &&
        rep.kkt_residual > 1e-3) {
      r.status = SolveStatus::MaxIter;
    }
    r.solve_time = rep.solve_time;
    r.iterations = rep.iterations;
    r.z = rep.z;
    r.value = rep.objective;
  }
  if (r.status == SolveStatus::Infeasible) {
    r.value = std::numeric_limits<double>::infinity();
    r.u_applied = VectorXd::Constant(spec.m(), std::numeric_limits<double>::quiet_NaN());
    r.x_bar = VectorXd::Constant(spec.n(), std::numeric_limits<double>::quiet_NaN());
    return r;
  }
  r.x_bar = get("xbar");
  r.u_applied = get("u0");
  if (std::holds_alternative<fm::ImplicitSlackSoftInput>(spec.formulation)) {
    const VectorXd v0 = get("v0");
    if (v0.size() > 0) r.u_applied = v0;
  }
  const VectorXd s = get("s");
  r.slack_s = s.size() > 0 ? std::max(0.0, s(0)) : 0.0;
  return r;
}

MpcController::MpcController(OcpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

StepResult MpcController::step(const VectorXd& x) {
  StepResult r = mpc_step(spec_, x, warm_);
  if (r.status == SolveStatus::Optimal) {
    warm_ = r.z;
  } else {
    warm_.reset();
  }
  return r;
}

double nominal_value(const OcpSpec& spec, const VectorXd& x) {
  OcpSpec nom = spec;
  nom.formulation = fm::Nominal{};
  const StepResult r = mpc_step(nom, x);
  return r.status == SolveStatus::Optimal
             ? r.value
             : std::numeric_limits<double>::infinity();
}

double exact_penalty_threshold(const OcpSpec& nominal, const PolyIncLyap& lyap,
                               const std::vector<VectorXd>& samples) {
  std::vector<double> V;
  V.reserve(samples.size());
  for (const VectorXd& x : samples) {
    const double v = nominal_value(nominal, x);
    if (!std::isfinite(v)) {
      throw InfeasibleSample("exact_penalty_threshold: sample outside the nominal feasible set");
    }
    V.push_back(v);
  }
  double L = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    for (size_t j = i + 1; j < samples.size(); ++j) {
      const double d = (samples[i] - samples[j]).norm();
      if (d > 0.0) L = std::max(L, std::abs(V[i] - V[j]) / d);
    }
  }
  return 2.0 * L / lyap.lower_constant();
}

}  // namespace relaxmpc
