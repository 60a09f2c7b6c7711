#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ttpricer/bases.hpp"
#include "ttpricer/market.hpp"
#include "ttpricer/tensor_train.hpp"

namespace ttpricer {

/// Approximate continuation value v(x) = sum_alpha V_alpha prod_k
/// B_{alpha_k}(x_k) + c_phi * phi(x): a TT coefficient tensor over the
/// tensorized interval basis, augmented by the payoff function.
struct ValueFunctional {
  TensorTrain tt;
  double payoff_coeff = 0.0;
  IntervalBasis basis;
  Payoff payoff;

  double evaluate(const Eigen::VectorXd& state) const;

  /// Reusable-buffer evaluator for per-path hot loops.
  class Evaluator {
   public:
    explicit Evaluator(const ValueFunctional& vf);
    double operator()(const double* state, int d) const;

   private:
    const ValueFunctional* vf_;
    mutable Eigen::VectorXd feats_, env_, kron_;
  };
};

void save_value_functional(std::ostream& os, const ValueFunctional& vf);
ValueFunctional load_value_functional(std::istream& is);

/// Regression data for one exercise date: rows of asset states, discounted
/// future cashflows as targets, and a deterministic 80/20 train/validation
/// split (validation is every fifth sample).
struct RegressionProblem {
  Eigen::MatrixXd states;  // m x d'
  Eigen::VectorXd targets;
  std::vector<Eigen::Index> train_idx;
  std::vector<Eigen::Index> validation_idx;

  static RegressionProblem with_split(Eigen::MatrixXd states, Eigen::VectorXd targets);
};

struct FitOptions {
  Eigen::Index max_rank = 6;
  int max_sweeps = 25;
  double validation_rtol = 1e-4;   // sweep/growth acceptance threshold
  double ridge_scale = 1e-12;      // lambda = ridge_scale * trace(A^T A) / cols
  std::uint64_t init_seed = 0x7475u;
};

struct FitDiagnostics {
  std::vector<Eigen::Index> ranks;
  int sweeps = 0;
  double training_rmse = 0.0;
  double validation_rmse = 0.0;
  std::vector<double> microstep_mse;  // per micro-step, within the final rank level
  Eigen::VectorXd fitted_values;      // predictions for all problem samples
};

/// Rank-adaptive alternating least squares for the joint (cores, c_phi)
/// model. Sweeps alternate over the cores solving regularized normal
/// equations; ranks start at one and single bonds grow greedily, keeping a
/// growth step only when the validation RMSE improves.
ValueFunctional fit_value_function(const RegressionProblem& prob, const IntervalBasis& basis,
                                   const Payoff& payoff, const FitOptions& opts,
                                   FitDiagnostics* diag = nullptr);

/// Global state bounds over all paths, dates, and coordinates.
std::pair<double, double> domain_bounds(const PathEnsemble& e);

struct LsOptions {
  int basis_size = 3;  // number of univariate basis functions per coordinate
  bool sorted = false;
  FitOptions fit;
};

struct LsResult {
  /// value_functions[n-1] is the continuation-value fit for date t_n,
  /// n = 1..N-1; empty when the date had no in-the-money paths (which means
  /// "never exercise here").
  std::vector<std::optional<ValueFunctional>> value_functions;
  double in_sample_price = 0.0;
  std::vector<std::vector<Eigen::Index>> ranks_per_date;
  double domain_a = 0.0, domain_b = 0.0;
  bool sorted = false;
  std::uint64_t train_seed = 0;
  Payoff payoff;

  Eigen::Index max_rank() const;
  double average_rank() const;
};

/// Backward dynamic-programming loop of Longstaff-Schwartz on the ensemble's
/// in-the-money paths, regressing discounted future cashflows date by date.
LsResult longstaff_schwartz(const PathEnsemble& ensemble, const Payoff& payoff,
                            const LsOptions& opts);

/// Low-biased price: applies the fitted stopping rule to an independent
/// ensemble (exercise at the first in-the-money date whose payoff is at
/// least the continuation value). Returns (price, standard error).
std::pair<double, double> resimulate_lower(const LsResult& result, const PathEnsemble& fresh);

}  // namespace ttpricer
