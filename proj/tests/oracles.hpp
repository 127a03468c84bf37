#pragma once

// Independent oracles for the test suite. These deliberately take different
// algebraic routes from the library (transformation-matrix laminate algebra,
// closed-form plate solutions, plain-quadrature element integration, finite
// differences) so agreement is meaningful.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "vscl/laminate.hpp"

namespace oracle {

// Classical lamination theory via the stress/strain transformation matrices
// and the Reuter matrix: Qbar = T1^-1 Q T2, integrated ply by ply at fixed
// angles.
struct CltResult {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d B = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
};

inline Eigen::Matrix3d qbar_transform(double E1, double E2, double G12, double nu12,
                                      double theta_rad) {
    const double nu21 = nu12 * E2 / E1;
    Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
    Q(0, 0) = E1 / (1 - nu12 * nu21);
    Q(1, 1) = E2 / (1 - nu12 * nu21);
    Q(0, 1) = Q(1, 0) = nu12 * E2 / (1 - nu12 * nu21);
    Q(2, 2) = G12;

    const double c = std::cos(theta_rad), s = std::sin(theta_rad);
    Eigen::Matrix3d T1;  // stress transformation
    T1 << c * c, s * s, 2 * c * s,
          s * s, c * c, -2 * c * s,
          -c * s, c * s, c * c - s * s;
    Eigen::Matrix3d T2;  // engineering-strain transformation
    T2 << c * c, s * s, c * s,
          s * s, c * c, -c * s,
          -2 * c * s, 2 * c * s, c * c - s * s;
    return T1.inverse() * Q * T2;
}

inline CltResult clt_laminate(const std::vector<vscl::Ply>& plies,
                              const std::vector<double>& theta_deg) {
    CltResult r;
    double h = 0;
    for (const auto& p : plies) h += p.thickness;
    double z = -h / 2;
    for (size_t k = 0; k < plies.size(); ++k) {
        const auto& p = plies[k];
        const double z0 = z, z1 = z + p.thickness;
        z = z1;
        const Eigen::Matrix3d Qb =
            qbar_transform(p.E1, p.E2, p.G12, p.nu12, theta_deg[k] * vscl::kPi / 180.0);
        r.A += Qb * (z1 - z0);
        r.B += Qb * (z1 * z1 - z0 * z0) / 2.0;
        r.D += Qb * (z1 * z1 * z1 - z0 * z0 * z0) / 3.0;
    }
    return r;
}

// Navier solution for a thin isotropic simply supported plate.
inline double navier_isotropic_w11(double a, double b, double E, double nu, double rho, double h) {
    const double D = E * h * h * h / (12.0 * (1.0 - nu * nu));
    return vscl::kPi * vscl::kPi * (1.0 / (a * a) + 1.0 / (b * b)) * std::sqrt(D / (rho * h));
}

// Independent FSDT QUAD-4 stiffness with plain bilinear shear strains and
// 2x2 Gauss quadrature, for a single straight-fiber ply at fixed laminate
// stiffness.
inline Eigen::MatrixXd fsdt_quad4_stiffness(const std::array<double, 4>& xs,
                                            const std::array<double, 4>& ys,
                                            const Eigen::Matrix3d& A, const Eigen::Matrix3d& B,
                                            const Eigen::Matrix3d& D, const Eigen::Matrix2d& Es) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(20, 20);
    const double g = 1.0 / std::sqrt(3.0);
    for (double eta : {-g, g})
        for (double xi : {-g, g}) {
            const double N[4] = {0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta),
                                 0.25 * (1 + xi) * (1 + eta), 0.25 * (1 - xi) * (1 + eta)};
            const double dxi[4] = {-0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta),
                                   -0.25 * (1 + eta)};
            const double det_[4] = {-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi),
                                    0.25 * (1 - xi)};
            double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
            for (int k = 0; k < 4; ++k) {
                j11 += dxi[k] * xs[k];
                j12 += dxi[k] * ys[k];
                j21 += det_[k] * xs[k];
                j22 += det_[k] * ys[k];
            }
            const double detJ = j11 * j22 - j12 * j21;
            double dNx[4], dNy[4];
            for (int k = 0; k < 4; ++k) {
                dNx[k] = (j22 * dxi[k] - j12 * det_[k]) / detJ;
                dNy[k] = (-j21 * dxi[k] + j11 * det_[k]) / detJ;
            }
            Eigen::MatrixXd Bp = Eigen::MatrixXd::Zero(3, 20);
            Eigen::MatrixXd Bb = Eigen::MatrixXd::Zero(3, 20);
            Eigen::MatrixXd Bs = Eigen::MatrixXd::Zero(2, 20);
            for (int k = 0; k < 4; ++k) {
                const int c = 5 * k;
                Bp(0, c + 0) = dNx[k];
                Bp(1, c + 1) = dNy[k];
                Bp(2, c + 0) = dNy[k];
                Bp(2, c + 1) = dNx[k];
                Bb(0, c + 3) = dNx[k];
                Bb(1, c + 4) = dNy[k];
                Bb(2, c + 3) = dNy[k];
                Bb(2, c + 4) = dNx[k];
                Bs(0, c + 2) = dNx[k];
                Bs(0, c + 3) = N[k];
                Bs(1, c + 2) = dNy[k];
                Bs(1, c + 4) = N[k];
            }
            K += detJ * (Bp.transpose() * A * Bp + Bp.transpose() * B * Bb +
                         Bb.transpose() * B * Bp + Bb.transpose() * D * Bb +
                         Bs.transpose() * Es * Bs);
        }
    return K;
}

// central differences over a scalar function
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2 * h);
    }
    return g;
}

// per-dimension step sizes, for functions whose inputs live on different scales
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h(i);
        xm(i) -= h(i);
        g(i) = (f(xp) - f(xm)) / (2 * h(i));
    }
    return g;
}

inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd H(n, n);
    const double f0 = f(x);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            if (i == j) {
                Eigen::VectorXd xp = x, xm = x;
                xp(i) += h(i);
                xm(i) -= h(i);
                H(i, i) = (f(xp) - 2 * f0 + f(xm)) / (h(i) * h(i));
            } else {
                Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
                xpp(i) += h(i); xpp(j) += h(j);
                xpm(i) += h(i); xpm(j) -= h(j);
                xmp(i) -= h(i); xmp(j) += h(j);
                xmm(i) -= h(i); xmm(j) -= h(j);
                H(i, j) = H(j, i) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h(i) * h(j));
            }
        }
    return H;
}

inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd H(n, n);
    const double f0 = f(x);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            if (i == j) {
                Eigen::VectorXd xp = x, xm = x;
                xp(i) += h;
                xm(i) -= h;
                H(i, i) = (f(xp) - 2 * f0 + f(xm)) / (h * h);
            } else {
                Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
                xpp(i) += h; xpp(j) += h;
                xpm(i) += h; xpm(j) -= h;
                xmp(i) -= h; xmp(j) += h;
                xmm(i) -= h; xmm(j) -= h;
                H(i, j) = H(j, i) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h * h);
            }
        }
    return H;
}

} // namespace oracle
