#include "relaxmpc/sim.h"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::VectorXd;

DisturbanceProfile DisturbanceProfile::zero() { return {}; }

DisturbanceProfile DisturbanceProfile::uniform_ball(double radius,
                                                    std::uint64_t seed) {
  DisturbanceProfile d;
  d.kind = Kind::UniformBall;
  d.radius = radius;
  d.seed = seed;
  return d;
}

DisturbanceProfile DisturbanceProfile::ramp(double peak, std::uint64_t seed) {
  DisturbanceProfile d;
  d.kind = Kind::RampUniform;
  d.peak = peak;
  d.seed = seed;
  return d;
}

DisturbanceProfile DisturbanceProfile::fixed(std::vector<VectorXd> sequence) {
  DisturbanceProfile d;
  d.kind = Kind::Fixed;
  d.sequence = std::move(sequence);
  return d;
}

void DisturbanceProfile::validate() const {
  if (!(k1 <= k2 && k2 <= k3 && k3 <= k4) || k1 < 0) {
    throw IllFormed("disturbance ramp breakpoints must satisfy 0 <= k1 <= k2 <= k3 <= k4");
  }
  if (!(peak >= 0.0) || !(radius >= 0.0)) {
    throw IllFormed("disturbance magnitudes must be nonnegative");
  }
}

double ramp_bound(const DisturbanceProfile& d, int k) {
  if (k <= d.k1 || k >= d.k3) return 0.0;
  if (k <= d.k2) return d.peak * (k - d.k1) / std::max(1, d.k2 - d.k1);
  return d.peak * (d.k3 - k) / std::max(1, d.k3 - d.k2);
}

std::vector<VectorXd> generate(const DisturbanceProfile& dist, int n, int T) {
  dist.validate();
  std::vector<VectorXd> w(T, VectorXd::Zero(n));
  std::mt19937_64 rng(dist.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::normal_distribution<double> G(0.0, 1.0);
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  for (int k = 0; k < T; ++k) {
    switch (dist.kind) {
      case DisturbanceProfile::Kind::Zero:
        break;
      case DisturbanceProfile::Kind::UniformBall: {
        VectorXd d(n);
        for (int i = 0; i < n; ++i) d(i) = G(rng);
        const double r = dist.radius * std::pow(U01(rng), 1.0 / n);
        w[k] = d.norm() > 0.0 ? VectorXd(d.normalized() * r) : VectorXd::Zero(n);
        break;
      }
      case DisturbanceProfile::Kind::RampUniform: {
        const double b = ramp_bound(dist, k);
        for (int i = 0; i < n; ++i) w[k](i) = b * U(rng);
        break;
      }
      case DisturbanceProfile::Kind::Fixed:
        if (k < static_cast<int>(dist.sequence.size())) {
          if (dist.sequence[k].size() != n) {
            throw DimensionMismatch("fixed disturbance has wrong dimension");
          }
          w[k] = dist.sequence[k];
        }
        break;
    }
  }
  return w;
}

namespace {

double state_violation(const Polytope& X, const VectorXd& x) {
  if (!x.allFinite()) return std::numeric_limits<double>::infinity();
  return contains(X, x, 0.0) ? 0.0 : distance(X, x);
}

}  // namespace

Trace simulate(const OcpSpec& spec, const VectorXd& x0,
               const DisturbanceProfile& dist, int T) {
  if (T < 1) throw IllFormed("simulate: T must be >= 1");
  const int n = spec.n();
  if (x0.size() != n) throw DimensionMismatch("simulate: x0 has wrong size");
  const std::vector<VectorXd> w = generate(dist, n, T);
  MpcController ctrl(spec);
  Trace tr;
  tr.Q = spec.Q;
  tr.R = spec.R;
  VectorXd x = x0;
  for (int k = 0; k < T; ++k) {
    const StepResult r = ctrl.step(x);
    TraceStep st;
    st.x = x;
    st.u = r.u_applied;
    st.x_bar = r.x_bar;
    st.w = w[k];
    st.s = r.slack_s;
    st.value = r.value;
    st.status = r.status;
    st.violation = state_violation(spec.X, x);
    st.solve_time = r.solve_time;
    tr.steps.push_back(st);
    if (r.status != SolveStatus::Optimal) {
      tr.termination = Termination::StoppedInfeasible;
      tr.stopped_at = k;
      tr.x_final = x;
      tr.final_violation = st.violation;
      return tr;
    }
    x = model_step(spec.model, x, r.u_applied) + w[k];
  }
  tr.x_final = x;
  tr.final_violation = state_violation(spec.X, x);
  return tr;
}

double cumulative_violation(const Trace& trace) {
  if (trace.termination != Termination::Completed) {
    throw IncompleteTrace("cumulative_violation: run stopped early");
  }
  double sum = trace.final_violation * trace.final_violation;
  for (const TraceStep& s : trace.steps) sum += s.violation * s.violation;
  return sum;
}

double closed_loop_cost(const Trace& trace) {
  if (trace.termination != Termination::Completed) {
    throw IncompleteTrace("closed_loop_cost: run stopped early");
  }
  double sum = 0.0;
  for (const TraceStep& s : trace.steps) {
    sum += s.x.dot(trace.Q * s.x) + s.u.dot(trace.R * s.u);
  }
  return sum;
}

AuditReport lyapunov_audit(const Trace& trace, const AuditConstants& c) {
  AuditReport rep;
  for (size_t k = 0; k + 1 < trace.steps.size(); ++k) {
    const TraceStep& a = trace.steps[k];
    const TraceStep& b = trace.steps[k + 1];
    if (a.status != SolveStatus::Optimal || b.status != SolveStatus::Optimal) {
      break;
    }
    const double om = std::max(a.w.norm() - c.w_bar, 0.0);
    const double excess =
        (b.value - c.rho_tilde * a.value - c.gain * om * om) /
        std::max(1.0, a.value);
    if (excess > rep.max_violation || rep.worst_step < 0) {
      if (excess > rep.max_violation) rep.max_violation = excess;
      if (excess > c.tol) rep.worst_step = static_cast<int>(k);
    }
  }
  rep.pass = rep.max_violation <= c.tol;
  if (rep.pass) rep.worst_step = -1;
  return rep;
}

void write_trace_csv(std::ostream& os, const Trace& trace, bool timing) {
  if (trace.steps.empty()) return;
  const int n = static_cast<int>(trace.steps.front().x.size());
  const int m = static_cast<int>(trace.steps.front().u.size());
  os << "k";
  for (int i = 1; i <= n; ++i) os << ",x_" << i;
  for (int i = 1; i <= m; ++i) os << ",u_" << i;
  for (int i = 1; i <= n; ++i) os << ",xbar_" << i;
  os << ",s,V,status,violation,solve_time_s\n";
  os << std::setprecision(17);
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    const TraceStep& s = trace.steps[k];
    os << k;
    for (int i = 0; i < n; ++i) os << ',' << s.x(i);
    for (int i = 0; i < m; ++i) os << ',' << s.u(i);
    for (int i = 0; i < n; ++i) os << ',' << s.x_bar(i);
    os << ',' << s.s << ',' << s.value << ',' << to_string(s.status) << ','
       << s.violation << ',' << (timing ? s.solve_time : 0.0) << '\n';
  }
}

}  // namespace relaxmpc
