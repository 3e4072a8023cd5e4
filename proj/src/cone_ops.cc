#include "cone_ops.h"

#include <cmath>
#include <limits>

namespace relaxmpc {
namespace internal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// J-inner product t² − ‖x̄‖² of a SOC block.
double jdot(const Eigen::Ref<const Eigen::VectorXd>& u,
            const Eigen::Ref<const Eigen::VectorXd>& v) {
  return u(0) * v(0) - u.tail(u.size() - 1).dot(v.tail(v.size() - 1));
}

// Smallest positive root of a α² + b α + c, with c > 0.
double first_positive_root(double a, double b, double c) {
  if (a == 0.0) return b < 0.0 ? -c / b : kInf;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kInf;
  const double t = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double best = kInf;
  for (double r : {t / a, t != 0.0 ? c / t : kInf}) {
    if (r > 0.0 && r < best) best = r;
  }
  return best;
}

}  // namespace

int Cones::dim() const {
  int n = l;
  for (int k : q) n += k;
  return n;
}

Eigen::VectorXd identity(const Cones& K) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(K.dim());
  e.head(K.l).setOnes();
  int at = K.l;
  for (int k : K.q) {
    e(at) = 1.0;
    at += k;
  }
  return e;
}

double min_eig(const Cones& K, const Eigen::VectorXd& x) {
  double m = kInf;
  if (K.l > 0) m = x.head(K.l).minCoeff();
  int at = K.l;
  for (int k : K.q) {
    m = std::min(m, x(at) - x.segment(at + 1, k - 1).norm());
    at += k;
  }
  return m;
}

Eigen::VectorXd jordan_prod(const Cones& K, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& v) {
  Eigen::VectorXd r(u.size());
  r.head(K.l) = u.head(K.l).cwiseProduct(v.head(K.l));
  int at = K.l;
  for (int k : K.q) {
    const auto ub = u.segment(at, k);
    const auto vb = v.segment(at, k);
    r(at) = ub.dot(vb);
    r.segment(at + 1, k - 1) =
        ub(0) * vb.tail(k - 1) + vb(0) * ub.tail(k - 1);
    at += k;
  }
  return r;
}

Eigen::VectorXd jordan_div(const Cones& K, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& u) {
  Eigen::VectorXd r(u.size());
  r.head(K.l) = u.head(K.l).cwiseQuotient(lambda.head(K.l));
  int at = K.l;
  for (int k : K.q) {
    const auto lb = lambda.segment(at, k);
    const auto ub = u.segment(at, k);
    const double l0 = lb(0);
    const double x0 =
        (l0 * ub(0) - lb.tail(k - 1).dot(ub.tail(k - 1))) / jdot(lb, lb);
    r(at) = x0;
    r.segment(at + 1, k - 1) = (ub.tail(k - 1) - x0 * lb.tail(k - 1)) / l0;
    at += k;
  }
  return r;
}

NtScaling nt_scaling(const Cones& K, const Eigen::VectorXd& s,
                     const Eigen::VectorXd& z, Eigen::VectorXd* lambda) {
  NtScaling W;
  lambda->resize(s.size());
  W.d = (s.head(K.l).array() / z.head(K.l).array()).sqrt();
  lambda->head(K.l) = (s.head(K.l).array() * z.head(K.l).array()).sqrt();
  int at = K.l;
  for (int k : K.q) {
    const Eigen::VectorXd sb = s.segment(at, k);
    const Eigen::VectorXd zb = z.segment(at, k);
    const double sn = std::sqrt(jdot(sb, sb));
    const double zn = std::sqrt(jdot(zb, zb));
    const Eigen::VectorXd ss = sb / sn;
    const Eigen::VectorXd zs = zb / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + zs.dot(ss)));
    Eigen::VectorXd wbar = ss;
    wbar(0) += zs(0);
    wbar.tail(k - 1) -= zs.tail(k - 1);
    wbar /= 2.0 * gamma;
    Eigen::VectorXd v = wbar;
    v(0) += 1.0;
    v /= std::sqrt(2.0 * (wbar(0) + 1.0));
    const double beta = std::sqrt(sn / zn);
    W.beta.push_back(beta);
    W.v.push_back(v);
    // λ = W z = β (2 v (vᵀz) − J z)
    Eigen::VectorXd lam = 2.0 * v.dot(zb) * v;
    lam(0) -= zb(0);
    lam.tail(k - 1) += zb.tail(k - 1);
    lambda->segment(at, k) = beta * lam;
    at += k;
  }
  return W;
}

Eigen::VectorXd apply_w(const Cones& K, const NtScaling& W,
                        const Eigen::VectorXd& u) {
  Eigen::VectorXd r(u.size());
  r.head(K.l) = W.d.cwiseProduct(u.head(K.l));
  int at = K.l;
  for (size_t j = 0; j < K.q.size(); ++j) {
    const int k = K.q[j];
    const auto ub = u.segment(at, k);
    const Eigen::VectorXd& v = W.v[j];
    Eigen::VectorXd out = 2.0 * v.dot(ub) * v;
    out(0) -= ub(0);
    out.tail(k - 1) += ub.tail(k - 1);
    r.segment(at, k) = W.beta[j] * out;
    at += k;
  }
  return r;
}

Eigen::VectorXd apply_winv(const Cones& K, const NtScaling& W,
                           const Eigen::VectorXd& u) {
  Eigen::VectorXd r(u.size());
  r.head(K.l) = u.head(K.l).cwiseQuotient(W.d);
  int at = K.l;
  for (size_t j = 0; j < K.q.size(); ++j) {
    const int k = K.q[j];
    const auto ub = u.segment(at, k);
    // W⁻¹ = (2 J v vᵀ J − J) / β
    Eigen::VectorXd jv = W.v[j];
    jv.tail(k - 1) *= -1.0;
    Eigen::VectorXd out = 2.0 * jv.dot(ub) * jv;
    out(0) -= ub(0);
    out.tail(k - 1) += ub.tail(k - 1);
    r.segment(at, k) = out / W.beta[j];
    at += k;
  }
  return r;
}

Eigen::MatrixXd soc_winv_block(const NtScaling& W, int j) {
  const int k = static_cast<int>(W.v[j].size());
  Eigen::VectorXd jv = W.v[j];
  jv.tail(k - 1) *= -1.0;
  Eigen::MatrixXd M = 2.0 * jv * jv.transpose();
  M(0, 0) -= 1.0;
  M.bottomRightCorner(k - 1, k - 1) += Eigen::MatrixXd::Identity(k - 1, k - 1);
  return M / W.beta[j];
}

double max_step(const Cones& K, const Eigen::VectorXd& x,
                const Eigen::VectorXd& d) {
  double alpha = kInf;
  for (int i = 0; i < K.l; ++i) {
    if (d(i) < 0.0) alpha = std::min(alpha, -x(i) / d(i));
  }
  int at = K.l;
  for (int k : K.q) {
    const auto xb = x.segment(at, k);
    const auto db = d.segment(at, k);
    const double a = jdot(db, db);
    const double b = 2.0 * jdot(xb, db);
    const double c = jdot(xb, xb);
    alpha = std::min(alpha, first_positive_root(a, b, c));
    at += k;
  }
  return alpha;
}

}  // namespace internal
}  // namespace relaxmpc
