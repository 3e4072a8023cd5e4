#include "relaxmpc/models.h"

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "relaxmpc/errors.h"

namespace relaxmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kSqrtClamp = 1e-3;

double sqrt_clamped(double v) { return std::sqrt(std::max(v, kSqrtClamp)); }

double dsqrt_clamped(double v) {
  return v > kSqrtClamp ? 0.5 / std::sqrt(v) : 0.0;
}

}  // namespace

VectorXd NonlinearModel::step(const VectorXd& x, const VectorXd& u) const {
  if (x.size() != n || u.size() != m) {
    throw DimensionMismatch("NonlinearModel::step: dimensions");
  }
  const double h = dt / substeps;
  VectorXd xk = x;
  for (int s = 0; s < substeps; ++s) {
    const VectorXd k1 = f_cont(xk, u);
    const VectorXd k2 = f_cont(xk + 0.5 * h * k1, u);
    const VectorXd k3 = f_cont(xk + 0.5 * h * k2, u);
    const VectorXd k4 = f_cont(xk + h * k3, u);
    xk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return xk;
}

void NonlinearModel::field_jacobian(const VectorXd& x, const VectorXd& u,
                                    MatrixXd* Jx, MatrixXd* Ju) const {
  if (jac_cont) {
    jac_cont(x, u, Jx, Ju);
    return;
  }
  Jx->resize(n, n);
  Ju->resize(n, m);
  for (int i = 0; i < n; ++i) {
    const double e = 1e-6 * (1.0 + std::abs(x(i)));
    VectorXd xp = x, xm = x;
    xp(i) += e;
    xm(i) -= e;
    Jx->col(i) = (f_cont(xp, u) - f_cont(xm, u)) / (2.0 * e);
  }
  for (int i = 0; i < m; ++i) {
    const double e = 1e-6 * (1.0 + std::abs(u(i)));
    VectorXd up = u, um = u;
    up(i) += e;
    um(i) -= e;
    Ju->col(i) = (f_cont(x, up) - f_cont(x, um)) / (2.0 * e);
  }
}

void NonlinearModel::step_with_jacobian(const VectorXd& x, const VectorXd& u,
                                        VectorXd* x_next, MatrixXd* A,
                                        MatrixXd* B) const {
  const double h = dt / substeps;
  VectorXd xk = x;
  MatrixXd Phi = MatrixXd::Identity(n, n);
  MatrixXd Psi = MatrixXd::Zero(n, m);
  MatrixXd Jx, Ju;
  // RK4 on the augmented system (x, ∂x/∂x₀, ∂x/∂u).
  auto stage = [&](const VectorXd& xs, const MatrixXd& Ph, const MatrixXd& Ps,
                   VectorXd* kx, MatrixXd* kP, MatrixXd* kS) {
    *kx = f_cont(xs, u);
    field_jacobian(xs, u, &Jx, &Ju);
    *kP = Jx * Ph;
    *kS = Jx * Ps + Ju;
  };
  for (int s = 0; s < substeps; ++s) {
    VectorXd k1, k2, k3, k4;
    MatrixXd P1, P2, P3, P4, S1, S2, S3, S4;
    stage(xk, Phi, Psi, &k1, &P1, &S1);
    stage(xk + 0.5 * h * k1, Phi + 0.5 * h * P1, Psi + 0.5 * h * S1, &k2, &P2,
          &S2);
    stage(xk + 0.5 * h * k2, Phi + 0.5 * h * P2, Psi + 0.5 * h * S2, &k3, &P3,
          &S3);
    stage(xk + h * k3, Phi + h * P3, Psi + h * S3, &k4, &P4, &S4);
    xk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Phi += h / 6.0 * (P1 + 2.0 * P2 + 2.0 * P3 + P4);
    Psi += h / 6.0 * (S1 + 2.0 * S2 + 2.0 * S3 + S4);
  }
  *x_next = xk;
  *A = Phi;
  *B = Psi;
}

LinearSystem zoh(const MatrixXd& A_c, const MatrixXd& B_c, double dt) {
  const int n = static_cast<int>(A_c.rows());
  const int m = static_cast<int>(B_c.cols());
  MatrixXd M = MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = A_c * dt;
  M.topRightCorner(n, m) = B_c * dt;
  const MatrixXd E = M.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m), dt};
}

LinearSystem mass_spring_damper(double dt, Discretization method) {
  MatrixXd A_c(2, 2);
  A_c << 0.0, 1.0, -1.0, -0.1;
  MatrixXd B_c(2, 1);
  B_c << 0.0, 1.0;
  if (method == Discretization::ForwardEuler) {
    return {MatrixXd::Identity(2, 2) + dt * A_c, dt * B_c, dt};
  }
  return zoh(A_c, B_c, dt);
}

LinearSystem harmonic_oscillator(double theta, double dt) {
  if (!(theta > 0.0 && theta < M_PI)) {
    throw DomainError("harmonic_oscillator: theta must lie in (0, pi)");
  }
  MatrixXd A(2, 2);
  A << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  MatrixXd B(2, 1);
  B << 0.0, dt;
  return {A, B, dt};
}

FourTankParams four_tank_default_params() {
  // Outlet ratio c₂/c₁ = c₄/c₃ = 0.7 keeps diag(1,2,1,2) contractive on
  // [0.02, 2]⁴ (needs c₂/c₁ < 0.8). The pump gains make u = (2, 2) the
  // steady state x = (1.3, 1.4, 1.3, 1.4): the output target is reached with
  // the upper tanks on their bound x₂, x₄ ≤ 1.4.
  FourTankParams p;
  p.c = {0.006, 0.0042, 0.006, 0.0042};
  p.cu = {9.358e-4, 2.4848e-3, 9.358e-4, 2.4848e-3};
  return p;
}

NonlinearModel four_tank(const FourTankParams& p) {
  for (int i = 0; i < 4; ++i) {
    if (!(p.c[i] > 0.0) || !(p.cu[i] > 0.0)) {
      throw DomainError("four_tank: parameters must be positive");
    }
  }
  NonlinearModel model;
  model.n = 4;
  model.m = 2;
  model.dt = 10.0;
  model.substeps = 10;
  model.f_cont = [p](const VectorXd& x, const VectorXd& u) {
    const double s1 = sqrt_clamped(x(0)), s2 = sqrt_clamped(x(1));
    const double s3 = sqrt_clamped(x(2)), s4 = sqrt_clamped(x(3));
    VectorXd dx(4);
    dx(0) = -p.c[0] * s1 + p.c[1] * s2 + p.cu[0] * u(0);
    dx(1) = -p.c[1] * s2 + p.cu[1] * u(1);
    dx(2) = -p.c[2] * s3 + p.c[3] * s4 + p.cu[2] * u(1);
    dx(3) = -p.c[3] * s4 + p.cu[3] * u(0);
    return dx;
  };
  model.jac_cont = [p](const VectorXd& x, const VectorXd&, MatrixXd* Jx,
                       MatrixXd* Ju) {
    *Jx = MatrixXd::Zero(4, 4);
    const double d1 = dsqrt_clamped(x(0)), d2 = dsqrt_clamped(x(1));
    const double d3 = dsqrt_clamped(x(2)), d4 = dsqrt_clamped(x(3));
    (*Jx)(0, 0) = -p.c[0] * d1;
    (*Jx)(0, 1) = p.c[1] * d2;
    (*Jx)(1, 1) = -p.c[1] * d2;
    (*Jx)(2, 2) = -p.c[2] * d3;
    (*Jx)(2, 3) = p.c[3] * d4;
    (*Jx)(3, 3) = -p.c[3] * d4;
    *Ju = MatrixXd::Zero(4, 2);
    (*Ju)(0, 0) = p.cu[0];
    (*Ju)(1, 1) = p.cu[1];
    (*Ju)(2, 1) = p.cu[2];
    (*Ju)(3, 0) = p.cu[3];
  };
  model.box_lo = VectorXd::Constant(4, 0.02);
  model.box_hi = VectorXd::Constant(4, 2.0);
  model.clamped = [](const VectorXd& x) {
    return (x.array() <= kSqrtClamp).any();
  };
  VectorXd xlo = VectorXd::Constant(4, 0.2);
  VectorXd xhi(4);
  xhi << 1.36, 1.4, 1.36, 1.4;
  model.X = Polytope::box(xlo, xhi);
  model.U = Polytope::box(VectorXd::Zero(2), Eigen::Vector2d(3.6, 4.0));
  return model;
}

MatrixXd four_tank_jacobian(const FourTankParams& p, const VectorXd& x) {
  if (x.size() != 4) throw DimensionMismatch("four_tank_jacobian: x size");
  if ((x.array() <= 0.0).any()) {
    throw DomainError("four_tank_jacobian: levels must be positive");
  }
  VectorXd ct(4);
  for (int i = 0; i < 4; ++i) ct(i) = p.c[i] / std::sqrt(x(i));
  MatrixXd A(4, 4);
  A << ct(0), -ct(1), 0, 0,  //
      0, ct(1), 0, 0,        //
      0, 0, ct(2), -ct(3),   //
      0, 0, 0, ct(3);
  return -0.5 * A;
}

VectorXd four_tank_steady_state(const FourTankParams& p, const VectorXd& u) {
  VectorXd x(4);
  const double s2 = p.cu[1] * u(1) / p.c[1];
  const double s4 = p.cu[3] * u(0) / p.c[3];
  const double s1 = (p.c[1] * s2 + p.cu[0] * u(0)) / p.c[0];
  const double s3 = (p.c[3] * s4 + p.cu[2] * u(1)) / p.c[2];
  x << s1 * s1, s2 * s2, s3 * s3, s4 * s4;
  return x;
}

ContractionReport check_contraction(const FourTankParams& p, double p2,
                                    double p4, double lo, double hi,
                                    int samples) {
  // λ_max of [[−2a, b], [b, −2 b q]] with a = c̃ of the upper tank.
  auto lam_max = [](double a, double b, double q) {
    Eigen::Matrix2d M;
    M << -2.0 * a, b, b, -2.0 * b * q;
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(M)
        .eigenvalues()
        .maxCoeff();
  };
  auto worst = [&](const Eigen::Vector4d& x) {
    Eigen::Vector4d ct;
    for (int i = 0; i < 4; ++i) ct(i) = p.c[i] / std::sqrt(x(i));
    return std::max(lam_max(ct(0), ct(1), p2), lam_max(ct(2), ct(3), p4));
  };
  double lmax = -std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 16; ++mask) {
    Eigen::Vector4d x;
    for (int i = 0; i < 4; ++i) x(i) = (mask >> i) & 1 ? hi : lo;
    lmax = std::max(lmax, worst(x));
  }
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(lo, hi);
  for (int s = 0; s < samples; ++s) {
    Eigen::Vector4d x;
    for (int i = 0; i < 4; ++i) x(i) = U(rng);
    lmax = std::max(lmax, worst(x));
  }
  return {lmax < 0.0, -lmax};
}

}  // namespace relaxmpc
