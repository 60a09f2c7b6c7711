#include "ttpricer/market.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "ttpricer/parallel.hpp"

namespace ttpricer {

BlackScholesModel BlackScholesModel::uniform(int d, double s0, double r, double dividend,
                                             double sigma, double rho, double maturity) {
  BlackScholesModel m;
  m.d = d;
  m.s0 = Eigen::VectorXd::Constant(d, s0);
  m.r = r;
  m.dividend = Eigen::VectorXd::Constant(d, dividend);
  m.sigma = Eigen::VectorXd::Constant(d, sigma);
  m.rho = rho;
  m.maturity = maturity;
  m.validate();
  return m;
}

void BlackScholesModel::validate() const {
  if (d < 1) throw std::invalid_argument("model: need at least one asset");
  if (s0.size() != d || dividend.size() != d || sigma.size() != d)
    throw std::invalid_argument("model: per-asset vectors must have length d");
  if ((s0.array() <= 0.0).any()) throw std::invalid_argument("model: initial prices must be positive");
  if ((sigma.array() <= 0.0).any()) throw std::invalid_argument("model: volatilities must be positive");
  if (d > 1 && (rho <= -1.0 / (d - 1) || rho > 1.0))
    throw std::invalid_argument("model: rho outside (-1/(d-1), 1], correlation not positive definite");
  if (!(maturity > 0.0)) throw std::invalid_argument("model: maturity must be positive");
}

Payoff Payoff::basket_put(int d, double strike) {
  return Payoff{PayoffKind::BasketPut, strike, Eigen::VectorXd::Constant(d, 1.0 / d)};
}

Payoff Payoff::max_call(int d, double strike) {
  return Payoff{PayoffKind::MaxCall, strike, Eigen::VectorXd::Constant(d, 1.0)};
}

bool Payoff::symmetric() const {
  if (weights.size() == 0) return true;
  return (weights.array() == weights(0)).all();
}

double Payoff::operator()(const double* s, int d) const {
  if (strike <= 0.0) throw std::invalid_argument("payoff: strike must be positive");
  if (kind == PayoffKind::BasketPut) {
    double basket = 0.0;
    for (int j = 0; j < d; ++j) basket += weights(j) * s[j];
    return std::max(strike - basket, 0.0);
  }
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < d; ++j) best = std::max(best, weights(j) * s[j]);
  return std::max(best - strike, 0.0);
}

double Payoff::operator()(const Eigen::VectorXd& s) const {
  return (*this)(s.data(), static_cast<int>(s.size()));
}

double payoff_eval(const Payoff& payoff, const Eigen::VectorXd& s) { return payoff(s); }

Eigen::MatrixXd correlation_root(int d, double rho) {
  if (d < 1) throw std::invalid_argument("correlation_root: need d >= 1");
  if (d == 1) return Eigen::MatrixXd::Identity(1, 1);
  if (rho <= -1.0 / (d - 1) || rho > 1.0)
    throw std::invalid_argument("correlation_root: rho outside (-1/(d-1), 1]");
  if (rho == 1.0) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    l.col(0).setOnes();
    return l;
  }
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Constant(d, d, rho);
  gamma.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(gamma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("correlation_root: Cholesky factorization failed");
  return llt.matrixL();
}

std::vector<double> equidistant_dates(double maturity, int steps) {
  if (steps < 1) throw std::invalid_argument("equidistant_dates: need at least one step");
  std::vector<double> dates(static_cast<std::size_t>(steps) + 1);
  for (int n = 0; n <= steps; ++n) dates[static_cast<std::size_t>(n)] = maturity * n / steps;
  return dates;
}

namespace {

/// splitmix64; decorrelates per-path seeds derived from (seed, path index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t path) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (path + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

PathEnsemble simulate(const BlackScholesModel& model, const Payoff& payoff,
                      const std::vector<double>& dates, Eigen::Index paths, std::uint64_t seed,
                      const SimulateOptions& opts) {
  model.validate();
  if (paths < 1) throw std::invalid_argument("simulate: need at least one path");
  if (dates.size() < 2 || dates.front() != 0.0)
    throw std::invalid_argument("simulate: dates must start at 0 and contain the maturity");
  for (std::size_t n = 1; n < dates.size(); ++n)
    if (!(dates[n] > dates[n - 1])) throw std::invalid_argument("simulate: dates must be strictly increasing");
  if (std::abs(dates.back() - model.maturity) > 1e-12 * std::max(1.0, model.maturity))
    throw std::invalid_argument("simulate: last date must equal the maturity");

  const int d = model.d;
  const int steps = static_cast<int>(dates.size()) - 1;
  const Eigen::MatrixXd corr_root = correlation_root(d, model.rho);

  PathEnsemble e;
  e.dates = dates;
  e.seed = seed;
  e.states.assign(static_cast<std::size_t>(steps) + 1, Eigen::MatrixXd(paths, d));
  if (opts.with_increments) e.increments.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd(paths, d));
  e.payoffs.resize(paths, steps + 1);

  // Per-step drift exp((r - delta_j - sigma_j^2/2) dt) and vol sigma_j sqrt(dt).
  Eigen::MatrixXd drift(steps, d), vol(steps, d);
  for (int n = 0; n < steps; ++n) {
    const double dt = dates[static_cast<std::size_t>(n) + 1] - dates[static_cast<std::size_t>(n)];
    for (int j = 0; j < d; ++j) {
      drift(n, j) = (model.r - model.dividend(j) - 0.5 * model.sigma(j) * model.sigma(j)) * dt;
      vol(n, j) = model.sigma(j) * std::sqrt(dt);
    }
  }
  Eigen::VectorXd discounts(steps + 1);
  for (int n = 0; n <= steps; ++n) discounts(n) = std::exp(-model.r * dates[static_cast<std::size_t>(n)]);

  parallel_blocks(paths, [&](int, std::int64_t begin, std::int64_t end) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd g(d), eps(d), s(d);
    for (std::int64_t i = begin; i < end; ++i) {
      std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
      s = model.s0;
      e.states[0].row(i) = s.transpose();
      e.payoffs(i, 0) = payoff(s);
      for (int n = 0; n < steps; ++n) {
        for (int j = 0; j < d; ++j) g(j) = normal(rng);
        if (!e.increments.empty()) e.increments[static_cast<std::size_t>(n)].row(i) = g.transpose();
        eps.noalias() = corr_root * g;
        for (int j = 0; j < d; ++j) s(j) *= std::exp(drift(n, j) + vol(n, j) * eps(j));
        e.states[static_cast<std::size_t>(n) + 1].row(i) = s.transpose();
        e.payoffs(i, n + 1) = discounts(n + 1) * payoff(s);
      }
    }
  });
  return e;
}

PathEnsemble sort_paths(const PathEnsemble& e) {
  PathEnsemble out = e;
  const int d = e.assets();
  std::vector<double> buf(static_cast<std::size_t>(d));
  for (auto& states : out.states) {
    const Eigen::Index m = states.rows();
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int j = 0; j < d; ++j) buf[static_cast<std::size_t>(j)] = states(i, j);
      std::sort(buf.begin(), buf.end(), std::greater<double>());
      for (int j = 0; j < d; ++j) states(i, j) = buf[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

static_assert(std::endian::native == std::endian::little,
              "ensemble dump assumes a little-endian host");

void dump_ensemble(std::ostream& os, const PathEnsemble& e) {
  auto put_u64 = [&os](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  const Eigen::Index m = e.paths();
  const int steps = e.steps();
  const int d = e.assets();
  put_u64(static_cast<std::uint64_t>(m));
  put_u64(static_cast<std::uint64_t>(steps));
  put_u64(static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(e.dates.data()),
           static_cast<std::streamsize>(sizeof(double)) * static_cast<std::streamsize>(e.dates.size()));
  std::vector<double> row(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < m; ++i)
    for (int n = 0; n <= steps; ++n) {
      for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = e.states[static_cast<std::size_t>(n)](i, j);
      os.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(sizeof(double)) * d);
    }
  for (Eigen::Index i = 0; i < m && !e.increments.empty(); ++i)
    for (int n = 0; n < steps; ++n) {
      for (int j = 0; j < d; ++j)
        row[static_cast<std::size_t>(j)] = e.increments[static_cast<std::size_t>(n)](i, j);
      os.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(sizeof(double)) * d);
    }
  if (!os) throw std::runtime_error("dump_ensemble: write failed");
}

}  // namespace ttpricer
