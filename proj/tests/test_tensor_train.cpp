#include <doctest.h>

#include <Eigen/Dense>
#include <sstream>

#include "test_util.hpp"
#include "ttpricer/tensor_train.hpp"

using namespace ttpricer;

namespace {

TensorTrain random_tt(const std::vector<Eigen::Index>& dims, const std::vector<Eigen::Index>& ranks,
                      std::uint64_t seed) {
  auto gen = ttest::rng(seed);
  return TensorTrain::random(dims, ranks, gen);
}

}  // namespace

TEST_CASE("from_full: rank-one separable tensor yields unit ranks") {
  auto gen = ttest::rng(11);
  const Eigen::VectorXd a = ttest::random_vector(3, gen);
  const Eigen::VectorXd b = ttest::random_vector(4, gen);
  const Eigen::VectorXd c = ttest::random_vector(5, gen);
  DenseTensor t({3, 4, 5});
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      for (Eigen::Index k = 0; k < 5; ++k) t[(i * 4 + j) * 5 + k] = a(i) * b(j) * c(k);

  const TensorTrain x = from_full(t);
  CHECK(x.ranks() == std::vector<Eigen::Index>{1, 1, 1, 1});
  CHECK(ttest::dense_rel_err(to_full(x), t) <= 1e-12);
}

TEST_CASE("from_full/to_full: exact round trip on a random 4x4x4 tensor") {
  auto gen = ttest::rng(12);
  const DenseTensor t = ttest::random_dense({4, 4, 4}, gen);
  const TensorTrain x = from_full(t, 0.0);
  CHECK(ttest::dense_rel_err(to_full(x), t) <= 1e-12);
}

TEST_CASE("from_full: recovers the ranks of an exactly low-rank tensor") {
  const TensorTrain planted = random_tt({3, 4, 5}, {1, 2, 3, 1}, 13);
  const TensorTrain recovered = from_full(to_full(planted), 0.0);
  CHECK(recovered.ranks() == std::vector<Eigen::Index>{1, 2, 3, 1});
  CHECK(ttest::dense_rel_err(to_full(recovered), to_full(planted)) <= 1e-12);
}

TEST_CASE("from_full rejects invalid shapes") {
  CHECK_THROWS_AS(DenseTensor(std::vector<Eigen::Index>{}), std::invalid_argument);
  CHECK_THROWS_AS(DenseTensor(std::vector<Eigen::Index>{3, 0}), std::invalid_argument);
}

TEST_CASE("to_full: all-ones cores give the constant tensor") {
  TensorTrain x = TensorTrain::zero({2, 3, 2});
  for (int j = 0; j < 3; ++j) x.core(j).setOnes();
  const DenseTensor t = to_full(x);
  for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(1.0));
}

TEST_CASE("to_full: order-1 train is the core vector itself") {
  auto gen = ttest::rng(14);
  TensorTrain x = TensorTrain::zero({6});
  x.core(0) = ttest::random_vector(6, gen);
  const DenseTensor t = to_full(x);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(t[i] == doctest::Approx(x.core(0)(i, 0)));
}

TEST_CASE("to_full agrees with explicit loop-based matrix products") {
  const TensorTrain x = random_tt({3, 2, 4}, {1, 2, 2, 1}, 15);
  const DenseTensor t = to_full(x);
  auto gen = ttest::rng(16);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Eigen::Index> nu(3);
    for (int j = 0; j < 3; ++j)
      nu[static_cast<std::size_t>(j)] =
          static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(x.mode_dim(j)));
    CHECK(t(nu) == doctest::Approx(ttest::entry_by_loops(x, nu)).epsilon(1e-12));
  }
}

TEST_CASE("to_full refuses tensors above the entry guard") {
  const TensorTrain x = TensorTrain::zero({100, 100, 100});
  CHECK_THROWS_AS(to_full(x, 100'000), std::invalid_argument);
}

TEST_CASE("evaluate: unit feature vectors pick out dense entries") {
  const TensorTrain x = random_tt({2, 3, 2}, {1, 2, 2, 1}, 17);
  const DenseTensor t = to_full(x);
  std::vector<Eigen::Index> nu(3, 0);
  do {
    std::vector<Eigen::VectorXd> feats;
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(x.mode_dim(j));
      e(nu[static_cast<std::size_t>(j)]) = 1.0;
      feats.push_back(e);
    }
    CHECK(evaluate(x, feats) == doctest::Approx(t(nu)).epsilon(1e-12));
  } while (DenseTensor::next_index(nu, x.mode_dims()));
}

TEST_CASE("evaluate: separable rank-one case factorizes") {
  auto gen = ttest::rng(18);
  const Eigen::VectorXd a = ttest::random_vector(4, gen);
  const Eigen::VectorXd b = ttest::random_vector(3, gen);
  const TensorTrain x = TensorTrain::rank_one({a, b});
  const Eigen::VectorXd f = ttest::random_vector(4, gen);
  const Eigen::VectorXd g = ttest::random_vector(3, gen);
  CHECK(evaluate(x, {f, g}) == doctest::Approx(a.dot(f) * b.dot(g)).epsilon(1e-12));
}

TEST_CASE("evaluate agrees with a dense contraction oracle") {
  const TensorTrain x = random_tt({3, 2, 2, 3}, {1, 2, 3, 2, 1}, 19);
  auto gen = ttest::rng(20);
  std::vector<Eigen::VectorXd> feats;
  for (int j = 0; j < 4; ++j) feats.push_back(ttest::random_vector(x.mode_dim(j), gen));

  const DenseTensor t = to_full(x);
  double want = 0.0;
  std::vector<Eigen::Index> nu(4, 0);
  do {
    double w = t(nu);
    for (int j = 0; j < 4; ++j) w *= feats[static_cast<std::size_t>(j)](nu[static_cast<std::size_t>(j)]);
    want += w;
  } while (DenseTensor::next_index(nu, x.mode_dims()));
  CHECK(ttest::rel_err(evaluate(x, feats), want) <= 1e-12);
}

TEST_CASE("evaluate rejects mismatched feature lengths") {
  const TensorTrain x = TensorTrain::zero({2, 2});
  CHECK_THROWS_AS(evaluate(x, {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)}), std::invalid_argument);
}

TEST_CASE("orthogonalize preserves the tensor and flags the state") {
  const TensorTrain x = random_tt({3, 4, 3, 2}, {1, 2, 3, 2, 1}, 21);
  const DenseTensor t = to_full(x);

  SUBCASE("left sweep to the last pivot concentrates the norm") {
    const TensorTrain y = orthogonalize(x, 3, Side::Left);
    CHECK(ttest::dense_rel_err(to_full(y), t) <= 1e-12);
    CHECK(y.orthogonality().left_upto == 3);
    const double dense_norm = t.frobenius_norm();
    CHECK(ttest::rel_err(y.core(3).norm(), dense_norm) <= 1e-12);
    for (int j = 0; j < 3; ++j) {
      const Eigen::MatrixXd gram = y.core(j).transpose() * y.core(j);
      CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  SUBCASE("right sweep to pivot 0") {
    const TensorTrain y = orthogonalize(x, 0, Side::Right);
    CHECK(ttest::dense_rel_err(to_full(y), t) <= 1e-12);
    for (int j = 1; j < 4; ++j) {
      const auto ru = y.right_unfold(j);
      const Eigen::MatrixXd gram = ru * ru.transpose();
      CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  SUBCASE("idempotence up to sign conventions") {
    const TensorTrain y = orthogonalize(x, 3, Side::Left);
    const TensorTrain z = orthogonalize(y, 3, Side::Left);
    for (int j = 0; j < 4; ++j)
      CHECK((z.core(j) - y.core(j)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + y.core(j).norm()));
  }
}

TEST_CASE("round_tt: zero tolerance with unbounded rank is a no-op on values") {
  const TensorTrain x = random_tt({3, 3, 3}, {1, 2, 2, 1}, 22);
  const TensorTrain y = round_tt(x, 0.0);
  CHECK(ttest::dense_rel_err(to_full(y), to_full(x)) <= 1e-12);
}

TEST_CASE("round_tt: x + x rounds back to the original ranks") {
  const TensorTrain x = random_tt({3, 4, 3}, {1, 2, 2, 1}, 23);
  const TensorTrain s = add(x, x);
  CHECK(s.ranks() == std::vector<Eigen::Index>{1, 4, 4, 1});
  const TensorTrain y = round_tt(s, 0.0);
  CHECK(y.ranks() == x.ranks());
  DenseTensor want = to_full(x);
  for (Eigen::Index i = 0; i < want.size(); ++i) want[i] *= 2.0;
  CHECK(ttest::dense_rel_err(to_full(y), want) <= 1e-12);
}

TEST_CASE("round_tt to max_rank 2 matches the dense sequential-SVD discard") {
  const TensorTrain x = random_tt({4, 4, 4}, {1, 4, 4, 1}, 24);
  const DenseTensor t = to_full(x);

  // Dense oracle: sequential row-major unfoldings, truncating each to rank 2
  // and collecting discarded singular values.
  using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RM m1(4, 16);
  std::copy(t.data().begin(), t.data().end(), m1.data());
  double discarded_sq = 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd1(m1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (Eigen::Index i = 2; i < svd1.singularValues().size(); ++i)
    discarded_sq += svd1.singularValues()(i) * svd1.singularValues()(i);
  RM carry = svd1.singularValues().head(2).asDiagonal() * svd1.matrixV().leftCols(2).transpose();
  RM m2 = Eigen::Map<const RM>(carry.data(), 8, 4);
  Eigen::BDCSVD<Eigen::MatrixXd> svd2(m2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (Eigen::Index i = 2; i < svd2.singularValues().size(); ++i)
    discarded_sq += svd2.singularValues()(i) * svd2.singularValues()(i);
  const double oracle_err = std::sqrt(discarded_sq);

  const TensorTrain y = round_tt(x, 0.0, 2);
  double err_sq = 0.0;
  const DenseTensor ty = to_full(y);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double diff = ty[i] - t[i];
    err_sq += diff * diff;
  }
  CHECK(std::abs(std::sqrt(err_sq) - oracle_err) <= 1e-10 * t.frobenius_norm());
}

TEST_CASE("add/scale: cancellation yields the zero tensor") {
  const TensorTrain x = random_tt({2, 3, 2}, {1, 2, 2, 1}, 25);
  const TensorTrain z = add(x, scale(x, -1.0));
  const DenseTensor t = to_full(z);
  for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(std::abs(t[i]) <= 1e-12);
}

TEST_CASE("inner equals the dense Frobenius inner product") {
  const TensorTrain x = random_tt({3, 2, 3}, {1, 3, 2, 1}, 26);
  const DenseTensor t = to_full(x);
  double want = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) want += t[i] * t[i];
  CHECK(ttest::rel_err(inner(x, x), want) <= 1e-10);
  CHECK(ttest::rel_err(x.frobenius_norm(), std::sqrt(want)) <= 1e-10);
}

TEST_CASE("inner with a unit rank-one train reads an entry") {
  const TensorTrain x = random_tt({2, 3, 2}, {1, 2, 2, 1}, 27);
  const std::vector<Eigen::Index> nu = {1, 2, 0};
  std::vector<Eigen::VectorXd> units;
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(x.mode_dim(j));
    e(nu[static_cast<std::size_t>(j)]) = 1.0;
    units.push_back(e);
  }
  CHECK(inner(TensorTrain::rank_one(units), x) == doctest::Approx(to_full(x)(nu)).epsilon(1e-12));
}

TEST_CASE("property: round trip within 1e-10 for random shapes") {
  auto gen = ttest::rng(28);
  const std::vector<std::vector<Eigen::Index>> shapes = {{2, 2, 2, 2, 2}, {5, 4, 3}, {7, 7}, {9}, {3, 5, 2, 4}};
  for (const auto& shape : shapes) {
    const DenseTensor t = ttest::random_dense(shape, gen);
    CHECK(ttest::dense_rel_err(to_full(from_full(t, 0.0)), t) <= 1e-10);
  }
}

TEST_CASE("property: orthogonalization preserves the tensor for random pivots") {
  auto gen = ttest::rng(29);
  for (int rep = 0; rep < 10; ++rep) {
    const TensorTrain x = random_tt({3, 2, 4, 2}, {1, 2, 3, 2, 1}, 1000 + static_cast<std::uint64_t>(rep));
    const int pivot = static_cast<int>(gen() % 4);
    const Side side = (gen() % 2) ? Side::Left : Side::Right;
    CHECK(ttest::dense_rel_err(to_full(orthogonalize(x, pivot, side)), to_full(x)) <= 1e-12);
  }
}

TEST_CASE("property: rounding never increases ranks beyond the cap") {
  for (int rep = 0; rep < 10; ++rep) {
    const TensorTrain x = random_tt({4, 3, 4, 3}, {1, 3, 4, 3, 1}, 2000 + static_cast<std::uint64_t>(rep));
    const TensorTrain y = round_tt(add(x, x), 1e-8, 3);
    for (std::size_t j = 0; j < y.ranks().size(); ++j) {
      CHECK(y.ranks()[j] <= std::min<Eigen::Index>(add(x, x).ranks()[j], 3));
    }
  }
}

TEST_CASE("property: inner is bilinear") {
  for (int rep = 0; rep < 10; ++rep) {
    const std::uint64_t s = 3000 + static_cast<std::uint64_t>(rep);
    const TensorTrain a = random_tt({3, 3, 3}, {1, 2, 2, 1}, s);
    const TensorTrain b = random_tt({3, 3, 3}, {1, 3, 1, 1}, s + 50);
    const TensorTrain c = random_tt({3, 3, 3}, {1, 1, 2, 1}, s + 100);
    CHECK(ttest::rel_err(inner(add(a, b), c), inner(a, c) + inner(b, c)) <= 1e-10);
  }
}

TEST_CASE("serialization round trip is exact") {
  const TensorTrain x = random_tt({3, 4, 2}, {1, 2, 2, 1}, 31);
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  save_tt(ss, x);
  const TensorTrain y = load_tt(ss);
  CHECK(y.mode_dims() == x.mode_dims());
  CHECK(y.ranks() == x.ranks());
  for (int j = 0; j < 3; ++j) CHECK((y.core(j) - x.core(j)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero tensors keep unit ranks") {
  const TensorTrain z = TensorTrain::zero({3, 3, 3});
  CHECK(z.ranks() == std::vector<Eigen::Index>{1, 1, 1, 1});
  const TensorTrain r = round_tt(z, 0.0);
  CHECK(r.ranks() == std::vector<Eigen::Index>{1, 1, 1, 1});
}
