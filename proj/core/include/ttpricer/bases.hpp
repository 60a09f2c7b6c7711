#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace ttpricer {

/// Polynomial basis B_0..B_{p-1} on (a, b), orthonormal with respect to the
/// Sobolev inner product <f,g> = int_a^b (f g + f' g' + f'' g'') dx. The p
/// functions span the polynomials of degree < p, B_0 being constant.
///
/// Built by Cholesky-orthonormalizing a shifted Legendre seed basis against
/// the H^2 Gram matrix (assembled with exact Gauss-Legendre quadrature);
/// the seed keeps the Gram well conditioned up to the degrees used here.
class IntervalBasis {
 public:
  static constexpr int kMaxSize = 64;

  IntervalBasis(double a, double b, int p);

  double a() const { return a_; }
  double b() const { return b_; }
  int size() const { return p_; }

  /// B_0(x)..B_{p-1}(x). The polynomials are global: x outside [a, b] is
  /// evaluated through the same recurrence.
  Eigen::VectorXd values(double x) const;
  void values_into(double x, double* out) const;

  /// Lower-triangular map from the shifted Legendre seed to the orthonormal
  /// basis (row i holds the seed coefficients of B_i).
  const Eigen::MatrixXd& seed_coefficients() const { return seed_to_basis_; }

 private:
  double a_, b_;
  int p_;
  Eigen::MatrixXd seed_to_basis_;  // p x p lower triangular
};

/// Probabilists' Hermite polynomials normalized to be orthonormal under the
/// standard normal law: h_k = He_k / sqrt(k!), E[h_i(G) h_j(G)] = delta_ij.
class HermiteBasis {
 public:
  explicit HermiteBasis(int max_degree);

  int max_degree() const { return p_; }

  /// h_0(x)..h_p(x), evaluated by the stable three-term recurrence
  /// h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
  Eigen::VectorXd values(double x) const;
  void values_into(double x, double* out) const;

 private:
  int p_;
};

/// All multi-indices alpha in N^dim with |alpha|_1 <= degree, in graded
/// lexicographic order (ascending total degree; within a degree the leading
/// component decreases). Position 0 is the zero multi-index, and the set for
/// degree q < degree is exactly the leading binom(dim+q, q) entries, which
/// makes lower-degree coefficient tensors embeddable by zero padding.
class MultiIndexSet {
 public:
  MultiIndexSet(int dim, int degree);

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(offsets_.size()) - 1; }

  /// Multi-index at position i as a dense vector of length dim.
  std::vector<int> index(Eigen::Index i) const;

  /// Nonzero entries of index i as (coordinate, exponent) pairs; at most
  /// `degree` of them per index.
  std::pair<const std::pair<int, int>*, const std::pair<int, int>*> support(Eigen::Index i) const {
    return {entries_.data() + offsets_[static_cast<std::size_t>(i)],
            entries_.data() + offsets_[static_cast<std::size_t>(i) + 1]};
  }

  static Eigen::Index count(int dim, int degree);  // binom(dim+degree, degree)

 private:
  int dim_, degree_;
  std::vector<std::size_t> offsets_;             // size + 1 offsets into entries_
  std::vector<std::pair<int, int>> entries_;     // sparse (coordinate, exponent)
};

/// Tensorized Hermite features: component at position of alpha is
/// prod_k h_{alpha_k}(g_k). Component 0 is identically 1.
Eigen::VectorXd chaos_feature(const MultiIndexSet& set, const Eigen::VectorXd& g);
void chaos_feature_into(const MultiIndexSet& set, const Eigen::VectorXd& g,
                        Eigen::MatrixXd& hermite_scratch, double* out);

}  // namespace ttpricer
