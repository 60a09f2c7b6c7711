#include "ttpricer/bases.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "ttpricer/quadrature.hpp"

namespace ttpricer {

namespace {

/// Legendre P_k(u), P_k'(u), P_k''(u) for k < p at a single point u.
void legendre_with_derivatives(int p, double u, Eigen::VectorXd& val, Eigen::VectorXd& d1,
                               Eigen::VectorXd& d2) {
  val.resize(p);
  d1.resize(p);
  d2.resize(p);
  val(0) = 1.0;
  d1(0) = 0.0;
  d2(0) = 0.0;
  if (p == 1) return;
  val(1) = u;
  d1(1) = 1.0;
  d2(1) = 0.0;
  for (int k = 1; k + 1 < p; ++k) {
    const double c1 = 2.0 * k + 1.0, c2 = static_cast<double>(k), c3 = static_cast<double>(k + 1);
    val(k + 1) = (c1 * u * val(k) - c2 * val(k - 1)) / c3;
    d1(k + 1) = (c1 * (val(k) + u * d1(k)) - c2 * d1(k - 1)) / c3;
    d2(k + 1) = (c1 * (2.0 * d1(k) + u * d2(k)) - c2 * d2(k - 1)) / c3;
  }
}

void legendre_values(int p, double u, double* out) {
  out[0] = 1.0;
  if (p == 1) return;
  out[1] = u;
  for (int k = 1; k + 1 < p; ++k)
    out[k + 1] = ((2.0 * k + 1.0) * u * out[k] - k * out[k - 1]) / (k + 1.0);
}

}  // namespace

IntervalBasis::IntervalBasis(double a, double b, int p) : a_(a), b_(b), p_(p) {
  if (!(a < b)) throw std::invalid_argument("IntervalBasis: need a < b");
  if (p < 1 || p > kMaxSize) throw std::invalid_argument("IntervalBasis: p out of range");

  // H^2 Gram of the shifted Legendre seed, assembled on [-1, 1] with the
  // chain-rule scale s = 2/(b-a). Integrands have degree <= 2p-2, so p
  // Gauss-Legendre nodes are exact.
  const double s = 2.0 / (b - a);
  const auto rule = gauss_legendre(p);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd val, d1, d2;
  for (Eigen::Index q = 0; q < rule.nodes.size(); ++q) {
    legendre_with_derivatives(p, rule.nodes(q), val, d1, d2);
    const double w = rule.weights(q) / s;  // du -> dx
    gram += w * (val * val.transpose() + (s * s) * (d1 * d1.transpose()) +
                 (s * s * s * s) * (d2 * d2.transpose()));
  }

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("IntervalBasis: H^2 Gram not positive definite");
  // B = L^{-1} * seed keeps B_k of degree exactly k.
  seed_to_basis_ = Eigen::MatrixXd(llt.matrixL())
                       .triangularView<Eigen::Lower>()
                       .solve(Eigen::MatrixXd::Identity(p, p));
}

Eigen::VectorXd IntervalBasis::values(double x) const {
  Eigen::VectorXd out(p_);
  values_into(x, out.data());
  return out;
}

void IntervalBasis::values_into(double x, double* out) const {
  if (!std::isfinite(x)) throw std::invalid_argument("IntervalBasis: non-finite argument");
  const double u = 2.0 * (x - a_) / (b_ - a_) - 1.0;
  double seed[kMaxSize];
  legendre_values(p_, u, seed);
  // seed_to_basis_ is lower triangular; row i only touches seed[0..i].
  for (int i = 0; i < p_; ++i) {
    double acc = 0.0;
    for (int j = 0; j <= i; ++j) acc += seed_to_basis_(i, j) * seed[j];
    out[i] = acc;
  }
}

HermiteBasis::HermiteBasis(int max_degree) : p_(max_degree) {
  if (max_degree < 0) throw std::invalid_argument("HermiteBasis: negative degree");
}

Eigen::VectorXd HermiteBasis::values(double x) const {
  Eigen::VectorXd out(p_ + 1);
  values_into(x, out.data());
  return out;
}

void HermiteBasis::values_into(double x, double* out) const {
  if (!std::isfinite(x)) throw std::invalid_argument("HermiteBasis: non-finite argument");
  out[0] = 1.0;
  if (p_ == 0) return;
  out[1] = x;
  for (int k = 1; k < p_; ++k)
    out[k + 1] = (x * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1]) /
                 std::sqrt(static_cast<double>(k + 1));
}

Eigen::Index MultiIndexSet::count(int dim, int degree) {
  Eigen::Index c = 1;
  for (int i = 1; i <= degree; ++i) c = c * (dim + i) / i;
  return c;
}

MultiIndexSet::MultiIndexSet(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1) throw std::invalid_argument("MultiIndexSet: need dim >= 1");
  if (degree < 0) throw std::invalid_argument("MultiIndexSet: need degree >= 0");
  offsets_.reserve(static_cast<std::size_t>(count(dim, degree)) + 1);
  offsets_.push_back(0);

  std::vector<std::pair<int, int>> current;
  // Within one total degree the leading coordinate runs from high to low,
  // recursively, which yields graded lexicographic order overall.
  auto emit = [&]() {
    for (const auto& e : current) entries_.push_back(e);
    offsets_.push_back(entries_.size());
  };
  std::function<void(int, int)> fill = [&](int coord, int remaining) {
    if (coord == dim_ - 1) {
      if (remaining > 0) current.emplace_back(coord, remaining);
      emit();
      if (remaining > 0) current.pop_back();
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      if (e > 0) current.emplace_back(coord, e);
      fill(coord + 1, remaining - e);
      if (e > 0) current.pop_back();
    }
  };
  for (int total = 0; total <= degree_; ++total) fill(0, total);
}

std::vector<int> MultiIndexSet::index(Eigen::Index i) const {
  std::vector<int> alpha(static_cast<std::size_t>(dim_), 0);
  auto [begin, end] = support(i);
  for (auto* e = begin; e != end; ++e) alpha[static_cast<std::size_t>(e->first)] = e->second;
  return alpha;
}

Eigen::VectorXd chaos_feature(const MultiIndexSet& set, const Eigen::VectorXd& g) {
  Eigen::MatrixXd scratch;
  Eigen::VectorXd out(set.size());
  chaos_feature_into(set, g, scratch, out.data());
  return out;
}

void chaos_feature_into(const MultiIndexSet& set, const Eigen::VectorXd& g,
                        Eigen::MatrixXd& hermite_scratch, double* out) {
  if (g.size() != set.dim()) throw std::invalid_argument("chaos_feature: dimension mismatch");
  const int p = set.degree();
  const HermiteBasis hermite(p);
  hermite_scratch.resize(p + 1, set.dim());
  for (int k = 0; k < set.dim(); ++k) hermite.values_into(g(k), hermite_scratch.col(k).data());
  const Eigen::Index n = set.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double prod = 1.0;
    auto [begin, end] = set.support(i);
    for (auto* e = begin; e != end; ++e) prod *= hermite_scratch(e->second, e->first);
    out[i] = prod;
  }
}

}  // namespace ttpricer
