#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <vector>

#include "ttpricer/dense_tensor.hpp"

namespace ttpricer {

/// Orthogonality metadata carried by a TensorTrain. `left_upto` cores
/// 0..left_upto-1 are left-orthogonal, `right_from` cores right_from..d-1
/// are right-orthogonal. Purely informational; operations that cannot
/// guarantee a state reset it to none.
struct Orthogonality {
  int left_upto = 0;           // cores [0, left_upto) left-orthogonal
  int right_from = std::numeric_limits<int>::max();  // cores [right_from, d) right-orthogonal

  static Orthogonality none(int d) { return {0, d}; }
};

/// Tensor train: an order-d coefficient tensor factorized into a chain of
/// order-3 cores. Core j has shape (r_{j-1}, p_j, r_j) and is stored as its
/// left unfolding, an (r_{j-1} * p_j) x r_j column-major matrix with row
/// index k_{j-1} + r_{j-1} * nu_j. With this layout the right unfolding
/// r_{j-1} x (p_j * r_j), column index nu_j + p_j * k_j, is the same flat
/// buffer reinterpreted.
///
/// The entry at multi-index (nu_1,...,nu_d) is the product of core slices
/// b_1(nu_1) * b_2(nu_2) * ... * b_d(nu_d), where b_j(nu) is the
/// r_{j-1} x r_j block of rows [nu * r_{j-1}, (nu+1) * r_{j-1}).
///
/// Boundary ranks are always r_0 = r_d = 1. Zero tensors are represented
/// with all ranks 1 and zero cores, never with rank 0.
class TensorTrain {
 public:
  TensorTrain(std::vector<Eigen::Index> mode_dims, std::vector<Eigen::Index> ranks);

  /// All ranks 1, all cores zero.
  static TensorTrain zero(std::vector<Eigen::Index> mode_dims);

  /// Cores filled with N(0,1) draws from `rng`.
  static TensorTrain random(std::vector<Eigen::Index> mode_dims, std::vector<Eigen::Index> ranks,
                            std::mt19937_64& rng);

  /// Rank-one train representing the outer product of the given vectors.
  static TensorTrain rank_one(const std::vector<Eigen::VectorXd>& factors);

  int order() const { return static_cast<int>(mode_dims_.size()); }
  const std::vector<Eigen::Index>& mode_dims() const { return mode_dims_; }
  const std::vector<Eigen::Index>& ranks() const { return ranks_; }
  Eigen::Index rank(int bond) const { return ranks_[static_cast<std::size_t>(bond)]; }
  Eigen::Index mode_dim(int j) const { return mode_dims_[static_cast<std::size_t>(j)]; }

  /// Left unfolding of core j: (r_{j-1} * p_j) x r_j.
  const Eigen::MatrixXd& core(int j) const { return cores_[static_cast<std::size_t>(j)]; }
  Eigen::MatrixXd& core(int j) {
    ortho_ = Orthogonality::none(order());
    return cores_[static_cast<std::size_t>(j)];
  }

  /// Slice b_j(nu): the r_{j-1} x r_j matrix factor for mode index nu.
  Eigen::Block<const Eigen::MatrixXd> slice(int j, Eigen::Index nu) const {
    const auto& c = cores_[static_cast<std::size_t>(j)];
    const Eigen::Index rp = ranks_[static_cast<std::size_t>(j)];
    return c.middleRows(nu * rp, rp);
  }

  /// Right unfolding view of core j: r_{j-1} x (p_j * r_j), same buffer.
  Eigen::Map<const Eigen::MatrixXd> right_unfold(int j) const {
    const auto& c = cores_[static_cast<std::size_t>(j)];
    const Eigen::Index rp = ranks_[static_cast<std::size_t>(j)];
    return {c.data(), rp, mode_dims_[static_cast<std::size_t>(j)] * ranks_[static_cast<std::size_t>(j) + 1]};
  }

  Eigen::Index core_count_entries() const;

  const Orthogonality& orthogonality() const { return ortho_; }
  void set_orthogonality(Orthogonality o) { ortho_ = o; }

  /// Replaces core j without resetting orthogonality metadata (internal use
  /// by canonicalization routines that maintain that state themselves).
  void set_core(int j, Eigen::MatrixXd c) { cores_[static_cast<std::size_t>(j)] = std::move(c); }
  void set_rank(int bond, Eigen::Index r) { ranks_[static_cast<std::size_t>(bond)] = r; }

  double frobenius_norm() const;

 private:
  void validate() const;

  std::vector<Eigen::Index> mode_dims_;
  std::vector<Eigen::Index> ranks_;  // r_0 .. r_d
  std::vector<Eigen::MatrixXd> cores_;
  Orthogonality ortho_{0, 0};
};

enum class Side { Left, Right };

/// TT-SVD of a dense tensor. The reconstruction satisfies
/// ||to_full(result) - t||_F <= tol * ||t||_F; singular values are truncated
/// per bond so that the sum of squared discards stays below
/// (tol * ||t||_F / sqrt(d-1))^2. With tol = 0 and unbounded max_rank the
/// result has minimal ranks up to floating point accuracy.
TensorTrain from_full(const DenseTensor& t, double tol = 0.0,
                      Eigen::Index max_rank = std::numeric_limits<Eigen::Index>::max());

/// Dense reconstruction; refuses tensors with more than `guard` entries.
DenseTensor to_full(const TensorTrain& x, Eigen::Index guard = 10'000'000);

/// Contraction sum_nu U(nu) * prod_j feats[j][nu_j] by sequential
/// vector-matrix products, O(sum_j p_j r_{j-1} r_j).
double evaluate(const TensorTrain& x, const std::vector<Eigen::VectorXd>& feats);

/// QR-canonicalization. Side::Left makes cores [0, pivot) left-orthogonal,
/// Side::Right makes cores (pivot, d-1] right-orthogonal; the represented
/// tensor is unchanged. pivot is a 0-based core index.
TensorTrain orthogonalize(const TensorTrain& x, int pivot, Side side);

/// TT rounding (TT-SVD applied in-place): right-orthogonalizes, then sweeps
/// left-to-right truncating each bond. Same truncation rule as from_full.
TensorTrain round_tt(const TensorTrain& x, double tol,
                     Eigen::Index max_rank = std::numeric_limits<Eigen::Index>::max());

/// Truncation to prescribed per-bond ranks keeping the largest singular
/// values, with no numerical-rank cutoff. Used as the manifold retraction.
TensorTrain round_to_ranks(const TensorTrain& x, const std::vector<Eigen::Index>& bond_ranks);

TensorTrain add(const TensorTrain& a, const TensorTrain& b);
TensorTrain scale(const TensorTrain& a, double c);
double inner(const TensorTrain& a, const TensorTrain& b);

/// Binary checkpoint format: little-endian u64 header (d, mode_dims, ranks)
/// followed by the cores in order as little-endian IEEE f64, each core in
/// its left-unfolding column-major layout.
void save_tt(std::ostream& os, const TensorTrain& x);
TensorTrain load_tt(std::istream& is);

std::ostream& operator<<(std::ostream& os, const TensorTrain& x);

}  // namespace ttpricer
