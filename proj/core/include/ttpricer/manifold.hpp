#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttpricer/tensor_train.hpp"

namespace ttpricer {

/// A point on the manifold of tensor trains with fixed bond ranks, stored in
/// two consistent gauges produced by one canonicalization chain:
///   left gauge  L_0 .. L_{d-1} with L_0..L_{d-2} left-orthogonal,
///   right gauge R_0 .. R_{d-1} with R_1..R_{d-1} right-orthogonal,
/// and X = L_0 .. L_{j-1} C_j R_{j+1} .. R_{d-1} for every j.
class ManifoldPoint {
 public:
  explicit ManifoldPoint(const TensorTrain& x);

  const TensorTrain& tt() const { return left_; }
  const TensorTrain& left_gauge() const { return left_; }
  const TensorTrain& right_gauge() const { return right_; }
  const std::vector<Eigen::Index>& mode_dims() const { return left_.mode_dims(); }
  const std::vector<Eigen::Index>& ranks() const { return left_.ranks(); }
  int order() const { return left_.order(); }
  double frobenius_norm() const { return left_.core(left_.order() - 1).norm(); }

 private:
  TensorTrain left_;
  TensorTrain right_;
};

using ManifoldPointPtr = std::shared_ptr<const ManifoldPoint>;

/// First-order variation at a base point in the gauged core parametrization:
/// the embedded tensor is sum_j L_0..L_{j-1} dU_j R_{j+1}..R_{d-1} with
/// dU_j orthogonal to the left gauge core for j < d-1. Under that gauge the
/// embedding is an isometry, so inner products reduce to core-wise Frobenius
/// products.
class TangentVector {
 public:
  TangentVector(ManifoldPointPtr base, std::vector<Eigen::MatrixXd> deltas)
      : base_(std::move(base)), deltas_(std::move(deltas)) {}

  static TangentVector zero(ManifoldPointPtr base);

  const ManifoldPointPtr& base() const { return base_; }
  const Eigen::MatrixXd& delta(int j) const { return deltas_[static_cast<std::size_t>(j)]; }
  Eigen::MatrixXd& delta(int j) { return deltas_[static_cast<std::size_t>(j)]; }
  int order() const { return static_cast<int>(deltas_.size()); }

  TangentVector& operator+=(const TangentVector& other);
  TangentVector& operator*=(double c);

  double norm() const;

 private:
  ManifoldPointPtr base_;
  std::vector<Eigen::MatrixXd> deltas_;
};

double inner(const TangentVector& a, const TangentVector& b);
TangentVector add(const TangentVector& a, const TangentVector& b);
TangentVector scale(const TangentVector& a, double c);

/// Embeds a tangent vector as a tensor train of bond ranks at most 2r.
TensorTrain embed(const TangentVector& v);

/// Applies the gauge deflation dU_j -> (I - Q_j Q_j^T) dU_j, j < d-1, to raw
/// core variations, producing a proper tangent vector. The raw variations
/// must already be the environment contractions of some embedded tensor.
TangentVector deflate_to_tangent(ManifoldPointPtr base, std::vector<Eigen::MatrixXd> raw);

/// Metric-orthogonal projection of a tensor train onto the tangent space.
TangentVector project_to_tangent(const ManifoldPointPtr& x, const TensorTrain& z);

/// Streaming projection of a sum of rank-one tensors, O(terms * d * p * r^2).
/// Thread-local accumulators can be merged before finishing.
class RankOneProjector {
 public:
  explicit RankOneProjector(ManifoldPointPtr x);

  void add_term(double coeff, const std::vector<Eigen::VectorXd>& factors);
  void merge(const RankOneProjector& other);
  TangentVector finish() const;

  const ManifoldPointPtr& base() const { return base_; }

 private:
  ManifoldPointPtr base_;
  std::vector<Eigen::MatrixXd> raw_;
};

/// TT-SVD retraction: embeds x + step * v exactly at bond ranks <= 2r and
/// truncates back to the ranks of x.
ManifoldPoint retract(const ManifoldPoint& x, const TangentVector& v, double step);

/// Vector transport by tangent projection at the new point.
TangentVector transport(const ManifoldPointPtr& x_new, const TangentVector& v_old);

/// FR-PR+ hybrid conjugate-gradient coefficient, clipped below at zero.
double fr_pr_plus_coefficient(double g_new_sq, double g_old_sq, double g_new_dot_old_transported);

struct CgOptions {
  int max_iterations = 500;
  double grad_tol = 1e-10;
  double stagnation_rtol = 1e-6;  // relative improvement that counts as progress
  int stagnation_window = 10;
  int restart_period = 20;
  double armijo_c1 = 1e-4;
  double armijo_contraction = 0.5;
  double initial_step = 1.0;
  int max_backtracks = 50;
};

struct CgTraceRow {
  int iteration = 0;
  double objective = 0.0;
  double validation = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  double step = 0.0;
};

struct CgResult {
  ManifoldPointPtr minimizer;   // lowest-validation iterate (last when no validation)
  double objective = 0.0;       // training objective at the minimizer
  double validation = std::numeric_limits<double>::quiet_NaN();
  std::vector<CgTraceRow> trace;
  std::string termination;
};

/// Thrown when the objective or gradient turns non-finite; carries the trace
/// accumulated so far.
class CgDivergence : public std::runtime_error {
 public:
  CgDivergence(const std::string& what, std::vector<CgTraceRow> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<CgTraceRow>& trace() const { return trace_; }

 private:
  std::vector<CgTraceRow> trace_;
};

using Objective = std::function<double(const ManifoldPoint&)>;
using RiemannianGradient = std::function<TangentVector(const ManifoldPointPtr&)>;

/// Nonlinear conjugate gradient on the fixed-rank manifold: FR-PR+ updates,
/// Armijo backtracking (initial step doubling the previous accepted one),
/// periodic restarts, and a descent reset whenever <g, d> >= 0. Terminates
/// on gradient norm, on the best (validation) value stagnating over
/// `stagnation_window` iterations, or at max_iterations.
CgResult riemannian_cg(const Objective& objective, const RiemannianGradient& gradient,
                       const TensorTrain& x0, const CgOptions& opts,
                       const Objective* validation = nullptr);

/// Writes the trace as CSV (iteration, objective, validation, grad_norm, step).
void write_cg_trace_csv(std::ostream& os, const std::vector<CgTraceRow>& trace);

}  // namespace ttpricer
