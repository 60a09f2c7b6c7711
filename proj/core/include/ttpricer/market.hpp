#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ttpricer {

/// Correlated multi-asset Black-Scholes model with constant coefficients and
/// the one-parameter correlation matrix Gamma = (1-rho) I + rho 11^T.
struct BlackScholesModel {
  int d = 1;                 // asset count
  Eigen::VectorXd s0;        // initial prices
  double r = 0.0;            // risk-free rate
  Eigen::VectorXd dividend;  // per-asset dividend yields
  Eigen::VectorXd sigma;     // per-asset volatilities
  double rho = 0.0;          // common correlation
  double maturity = 1.0;

  static BlackScholesModel uniform(int d, double s0, double r, double dividend, double sigma,
                                   double rho, double maturity);
  void validate() const;
};

enum class PayoffKind { BasketPut, MaxCall };

struct Payoff {
  PayoffKind kind = PayoffKind::BasketPut;
  double strike = 100.0;
  Eigen::VectorXd weights;

  /// Basket put with omega_j = 1/d.
  static Payoff basket_put(int d, double strike);
  /// Max-call with omega_j = 1.
  static Payoff max_call(int d, double strike);

  /// True when the payoff is invariant under permuting the asset
  /// coordinates, which is what makes the sorting trick admissible.
  bool symmetric() const;

  double operator()(const Eigen::VectorXd& s) const;
  double operator()(const double* s, int d) const;
};

double payoff_eval(const Payoff& payoff, const Eigen::VectorXd& s);

/// Cholesky root of the equicorrelation matrix; rho = 1 is accepted with the
/// rank-one factor (ones in the first column).
Eigen::MatrixXd correlation_root(int d, double rho);

/// Simulated ensemble over the date grid t_0 = 0 < t_1 < ... < t_N = T.
/// states[n] is the m x d matrix of asset prices at t_n; increments[n-1] is
/// the m x d matrix of standardized Brownian increments
/// (B_{t_n} - B_{t_{n-1}}) / sqrt(dt_n) drawn before correlation is applied;
/// payoffs is m x (N+1) with the time-0 discounted payoff
/// Z_n = exp(-r t_n) phi(S_n).
struct PathEnsemble {
  std::vector<double> dates;
  std::vector<Eigen::MatrixXd> states;
  std::vector<Eigen::MatrixXd> increments;  // empty when simulated without increments
  Eigen::MatrixXd payoffs;
  std::uint64_t seed = 0;

  Eigen::Index paths() const { return states.empty() ? 0 : states.front().rows(); }
  int steps() const { return static_cast<int>(dates.size()) - 1; }
  int assets() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }
};

/// Equidistant grid t_n = n T / steps.
std::vector<double> equidistant_dates(double maturity, int steps);

struct SimulateOptions {
  bool with_increments = false;
};

/// Exact log-normal sampling of the model on the given dates; path i is
/// generated from an RNG keyed by (seed, i), so results are independent of
/// the parallel schedule.
PathEnsemble simulate(const BlackScholesModel& model, const Payoff& payoff,
                      const std::vector<double>& dates, Eigen::Index paths, std::uint64_t seed,
                      const SimulateOptions& opts = {});

/// Sorts the asset coordinates of every state in non-increasing order.
/// Increments and stored payoffs are left untouched; the stored payoffs
/// remain valid only for permutation-symmetric payoffs.
PathEnsemble sort_paths(const PathEnsemble& e);

/// Flat binary dump: u64 header (m, N, d), dates as f64, then all states
/// followed by all increments, little-endian f64 in path-major order.
void dump_ensemble(std::ostream& os, const PathEnsemble& e);

}  // namespace ttpricer
