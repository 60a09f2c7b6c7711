#pragma once

#include <Eigen/Core>

namespace ttpricer {

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Golub-Welsch: Gauss rule from the symmetric Jacobi matrix with the given
/// diagonal/off-diagonal and zeroth moment mu0.
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0);

/// n-point Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree
/// 2n - 1.
QuadratureRule gauss_legendre(int n);

/// n-point Gauss-Hermite rule for the standard normal weight
/// exp(-x^2/2)/sqrt(2 pi); exact for polynomial moments up to degree 2n - 1.
QuadratureRule gauss_hermite(int n);

}  // namespace ttpricer
