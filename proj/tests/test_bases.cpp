#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "test_util.hpp"
#include "ttpricer/bases.hpp"
#include "ttpricer/quadrature.hpp"

using namespace ttpricer;

namespace {

/// Independent H^2 Gram oracle: recovers each basis polynomial's monomial
/// coefficients from sampled values, differentiates them analytically, and
/// integrates monomials in closed form.
Eigen::MatrixXd h2_gram_oracle(const IntervalBasis& basis) {
  const int p = basis.size();
  const double a = basis.a(), b = basis.b();

  // Vandermonde fit on p distinct points inside (a, b).
  Eigen::MatrixXd vander(p, p);
  Eigen::MatrixXd samples(p, p);
  for (int i = 0; i < p; ++i) {
    const double x = a + (b - a) * (i + 0.5) / p;
    double mono = 1.0;
    for (int j = 0; j < p; ++j) {
      vander(i, j) = mono;
      mono *= x;
    }
    samples.row(i) = basis.values(x).transpose();
  }
  const Eigen::MatrixXd coeffs = vander.fullPivLu().solve(samples);  // column k: B_k in monomials

  auto derive = [](const Eigen::VectorXd& c) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(std::max<Eigen::Index>(1, c.size() - 1));
    for (Eigen::Index j = 1; j < c.size(); ++j) d(j - 1) = static_cast<double>(j) * c(j);
    return d;
  };
  auto integral_of_product = [a, b](const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i)
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        const double k = static_cast<double>(i + j + 1);
        total += f(i) * g(j) * (std::pow(b, k) - std::pow(a, k)) / k;
      }
    return total;
  };

  Eigen::MatrixXd gram(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const Eigen::VectorXd ci = coeffs.col(i), cj = coeffs.col(j);
      const Eigen::VectorXd di = derive(ci), dj = derive(cj);
      gram(i, j) = integral_of_product(ci, cj) + integral_of_product(di, dj) +
                   integral_of_product(derive(di), derive(dj));
    }
  return gram;
}

}  // namespace

TEST_CASE("IntervalBasis: p=1 is the H^2-normalized constant") {
  const IntervalBasis basis(2.0, 5.0, 1);
  const double c = basis.values(3.3)(0);
  CHECK(c * c * 3.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("IntervalBasis: H^2 Gram is the identity (a=0, b=1, p=6)") {
  const IntervalBasis basis(0.0, 1.0, 6);
  const Eigen::MatrixXd gram = h2_gram_oracle(basis);
  CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("IntervalBasis: Gram stays near identity on [-1,1] and for p=8") {
  for (int p : {4, 8}) {
    const IntervalBasis basis(-1.0, 1.0, p);
    const Eigen::MatrixXd gram = h2_gram_oracle(basis);
    CHECK((gram - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("IntervalBasis: span reproduces x^2 on [0,1] with p=4") {
  const IntervalBasis basis(0.0, 1.0, 4);
  // L^2-style projection via least squares on many samples.
  const int n = 40;
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    design.row(i) = basis.values(x).transpose();
    target(i) = x * x;
  }
  const Eigen::VectorXd coeff = design.colPivHouseholderQr().solve(target);
  for (int i = 0; i < 10; ++i) {
    const double x = (i + 0.31) / 10.0;
    CHECK(basis.values(x).dot(coeff) == doctest::Approx(x * x).epsilon(1e-8));
  }
}

TEST_CASE("IntervalBasis: reconstructing a member from samples is exact") {
  const IntervalBasis basis(0.5, 2.5, 5);
  Eigen::MatrixXd design(5, 5);
  for (int i = 0; i < 5; ++i) design.row(i) = basis.values(0.5 + 2.0 * (i + 0.5) / 5).transpose();
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd samples(5);
    for (int i = 0; i < 5; ++i) samples(i) = design(i, k);
    const Eigen::VectorXd coeff = design.fullPivLu().solve(samples);
    Eigen::VectorXd want = Eigen::VectorXd::Zero(5);
    want(k) = 1.0;
    CHECK((coeff - want).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("IntervalBasis rejects bad arguments") {
  CHECK_THROWS_AS(IntervalBasis(1.0, 1.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(IntervalBasis(0.0, 1.0, 0), std::invalid_argument);
  const IntervalBasis basis(0.0, 1.0, 3);
  CHECK_THROWS_AS(basis.values(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("HermiteBasis: values at zero match the orthonormal convention") {
  const HermiteBasis h(2);
  const Eigen::VectorXd v = h.values(0.0);
  CHECK(v(0) == doctest::Approx(1.0));
  CHECK(v(1) == doctest::Approx(0.0));
  CHECK(v(2) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("HermiteBasis: normalized recurrence residual at random points") {
  const HermiteBasis h(10);
  auto gen = ttest::rng(41);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double x = normal(gen);
    const Eigen::VectorXd v = h.values(x);
    for (int k = 1; k < 10; ++k) {
      // monic recurrence He_{k+1} = x He_k - k He_{k-1}, rescaled by sqrt(k!).
      const double lhs = std::sqrt(static_cast<double>(k + 1)) * v(k + 1);
      const double rhs = x * v(k) - std::sqrt(static_cast<double>(k)) * v(k - 1);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("HermiteBasis: Gauss-Hermite orthonormality up to degree 6") {
  const HermiteBasis h(6);
  const auto rule = gauss_hermite(16);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(7, 7);
  for (Eigen::Index q = 0; q < rule.nodes.size(); ++q) {
    const Eigen::VectorXd v = h.values(rule.nodes(q));
    gram += rule.weights(q) * v * v.transpose();
  }
  CHECK((gram - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("Hermite means vanish for k >= 1") {
  const HermiteBasis h(8);
  const auto rule = gauss_hermite(12);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9);
  for (Eigen::Index q = 0; q < rule.nodes.size(); ++q) mean += rule.weights(q) * h.values(rule.nodes(q));
  CHECK(mean(0) == doctest::Approx(1.0).epsilon(1e-12));
  for (int k = 1; k <= 8; ++k) CHECK(std::abs(mean(k)) <= 1e-12);
}

TEST_CASE("MultiIndexSet: univariate grading") {
  const MultiIndexSet set(1, 3);
  CHECK(set.size() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(set.index(i) == std::vector<int>{static_cast<int>(i)});
}

TEST_CASE("MultiIndexSet: d'=2, p=2 enumeration in graded-lex order") {
  const MultiIndexSet set(2, 2);
  REQUIRE(set.size() == 6);
  const std::vector<std::vector<int>> want = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(set.index(i) == want[static_cast<std::size_t>(i)]);
}

TEST_CASE("MultiIndexSet: size is binom(d'+p, p)") {
  CHECK(MultiIndexSet(5, 2).size() == 21);
  CHECK(MultiIndexSet::count(5, 2) == 21);
  CHECK(MultiIndexSet(3, 4).size() == 35);
}

TEST_CASE("MultiIndexSet: lower-degree sets are prefixes") {
  for (int d : {1, 2, 4}) {
    for (int p = 1; p <= 4; ++p) {
      const MultiIndexSet big(d, p);
      const MultiIndexSet small(d, p - 1);
      REQUIRE(small.size() == MultiIndexSet::count(d, p - 1));
      for (Eigen::Index i = 0; i < small.size(); ++i) CHECK(big.index(i) == small.index(i));
    }
  }
}

TEST_CASE("chaos_feature: constant slot and h_1(0) zeros") {
  const MultiIndexSet set(2, 1);
  const Eigen::VectorXd f = chaos_feature(set, Eigen::Vector2d(0.0, 0.0));
  REQUIRE(f.size() == 3);
  CHECK(f(0) == 1.0);
  CHECK(f(1) == doctest::Approx(0.0));
  CHECK(f(2) == doctest::Approx(0.0));

  auto gen = ttest::rng(42);
  const Eigen::VectorXd g = ttest::random_vector(2, gen);
  CHECK(chaos_feature(set, g)(0) == 1.0);
}

TEST_CASE("chaos_feature: Monte Carlo orthonormality (d'=2, p=2)") {
  const MultiIndexSet set(2, 2);
  auto gen = ttest::rng(43);
  std::normal_distribution<double> normal;
  const int n = 1'000'000;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd g(2);
  for (int i = 0; i < n; ++i) {
    g(0) = normal(gen);
    g(1) = normal(gen);
    const Eigen::VectorXd f = chaos_feature(set, g);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(f);
  }
  gram = Eigen::MatrixXd(gram.selfadjointView<Eigen::Lower>()) / n;
  CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 5e-3);
}
