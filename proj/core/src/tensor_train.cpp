#include "ttpricer/tensor_train.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ttpricer {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TruncatedSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  Eigen::Index rank = 0;
};

/// Rank selection: keep the minimal rank whose discarded tail satisfies
/// sum sigma_i^2 <= delta^2, always dropping values below the numerical
/// noise floor, capped by max_rank and floored at 1.
Eigen::Index select_rank(const Eigen::VectorXd& sigma, double delta, Eigen::Index max_rank,
                         bool numerical_cutoff) {
  const Eigen::Index n = sigma.size();
  if (n == 0) return 1;
  Eigen::Index r = n;
  if (numerical_cutoff) {
    const double floor_tol = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * sigma(0);
    while (r > 1 && sigma(r - 1) <= floor_tol) --r;
  }
  double tail = 0.0;
  const double budget = delta * delta;
  while (r > 1) {
    const double cand = tail + sigma(r - 1) * sigma(r - 1);
    if (cand > budget) break;
    tail = cand;
    --r;
  }
  return std::min(r, std::max<Eigen::Index>(max_rank, 1));
}

/// Thin SVD with deterministic signs: the largest-magnitude entry of every
/// kept left singular vector is made positive.
TruncatedSvd truncated_svd(const Eigen::MatrixXd& a, double delta, Eigen::Index max_rank,
                           bool numerical_cutoff) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index r = select_rank(svd.singularValues(), delta, max_rank, numerical_cutoff);
  TruncatedSvd out;
  out.rank = r;
  out.u = svd.matrixU().leftCols(r);
  out.s = svd.singularValues().head(r);
  out.v = svd.matrixV().leftCols(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index imax = 0;
    out.u.col(i).cwiseAbs().maxCoeff(&imax);
    if (out.u(imax, i) < 0.0) {
      out.u.col(i) = -out.u.col(i);
      out.v.col(i) = -out.v.col(i);
    }
  }
  return out;
}

/// Thin QR with positive diagonal of R, A = Q * R.
void signed_thin_qr(const Eigen::MatrixXd& a, Eigen::MatrixXd& q, Eigen::MatrixXd& r) {
  const Eigen::Index k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), k);
  r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) = -r.row(i);
      q.col(i) = -q.col(i);
    }
  }
}

/// Reinterprets the column-major product buffer T * right_unfold(core) of
/// shape r_new x (p * r_next) as the left unfolding (r_new * p) x r_next.
Eigen::MatrixXd refold_left(const Eigen::MatrixXd& m, Eigen::Index p) {
  const Eigen::Index r_new = m.rows();
  const Eigen::Index r_next = m.cols() / p;
  return Eigen::Map<const Eigen::MatrixXd>(m.data(), r_new * p, r_next);
}

void check_same_dims(const TensorTrain& a, const TensorTrain& b, const char* what) {
  if (a.mode_dims() != b.mode_dims())
    throw std::invalid_argument(std::string(what) + ": mode dimensions do not match");
}

}  // namespace

TensorTrain::TensorTrain(std::vector<Eigen::Index> mode_dims, std::vector<Eigen::Index> ranks)
    : mode_dims_(std::move(mode_dims)), ranks_(std::move(ranks)) {
  validate();
  cores_.reserve(mode_dims_.size());
  for (std::size_t j = 0; j < mode_dims_.size(); ++j)
    cores_.emplace_back(Eigen::MatrixXd::Zero(ranks_[j] * mode_dims_[j], ranks_[j + 1]));
  ortho_ = Orthogonality::none(order());
}

void TensorTrain::validate() const {
  if (mode_dims_.empty()) throw std::invalid_argument("TensorTrain: empty shape");
  if (ranks_.size() != mode_dims_.size() + 1)
    throw std::invalid_argument("TensorTrain: rank tuple must have d+1 entries");
  if (ranks_.front() != 1 || ranks_.back() != 1)
    throw std::invalid_argument("TensorTrain: boundary ranks must be 1");
  for (auto p : mode_dims_)
    if (p <= 0) throw std::invalid_argument("TensorTrain: nonpositive mode dimension");
  for (auto r : ranks_)
    if (r <= 0) throw std::invalid_argument("TensorTrain: nonpositive rank");
}

TensorTrain TensorTrain::zero(std::vector<Eigen::Index> mode_dims) {
  std::vector<Eigen::Index> ranks(mode_dims.size() + 1, 1);
  return TensorTrain(std::move(mode_dims), std::move(ranks));
}

TensorTrain TensorTrain::random(std::vector<Eigen::Index> mode_dims, std::vector<Eigen::Index> ranks,
                                std::mt19937_64& rng) {
  TensorTrain x(std::move(mode_dims), std::move(ranks));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < x.order(); ++j) {
    auto& c = x.core(j);
    for (Eigen::Index col = 0; col < c.cols(); ++col)
      for (Eigen::Index row = 0; row < c.rows(); ++row) c(row, col) = normal(rng);
  }
  return x;
}

TensorTrain TensorTrain::rank_one(const std::vector<Eigen::VectorXd>& factors) {
  if (factors.empty()) throw std::invalid_argument("rank_one: no factors");
  std::vector<Eigen::Index> dims;
  dims.reserve(factors.size());
  for (const auto& f : factors) dims.push_back(f.size());
  TensorTrain x = zero(std::move(dims));
  for (int j = 0; j < x.order(); ++j) x.core(j) = factors[static_cast<std::size_t>(j)];
  return x;
}

Eigen::Index TensorTrain::core_count_entries() const {
  Eigen::Index n = 0;
  for (const auto& c : cores_) n += c.size();
  return n;
}

double TensorTrain::frobenius_norm() const { return std::sqrt(std::max(0.0, inner(*this, *this))); }

TensorTrain from_full(const DenseTensor& t, double tol, Eigen::Index max_rank) {
  if (tol < 0.0) throw std::invalid_argument("from_full: negative tolerance");
  const int d = t.order();
  const auto& shape = t.shape();
  if (d == 1) {
    TensorTrain x({shape[0]}, {1, 1});
    x.core(0) = Eigen::Map<const Eigen::VectorXd>(t.data().data(), shape[0]);
    return x;
  }

  const double norm = t.frobenius_norm();
  const double delta = tol * norm / std::sqrt(static_cast<double>(d - 1));

  std::vector<Eigen::Index> ranks(static_cast<std::size_t>(d) + 1, 1);
  std::vector<Eigen::MatrixXd> cores(static_cast<std::size_t>(d));

  // Working matrix in row-major layout: rows pair (k_{j-1}, nu_j) with
  // k slow, columns are the row-major flattening of the trailing modes.
  RowMajorMatrix work(shape[0], t.size() / shape[0]);
  std::copy(t.data().begin(), t.data().end(), work.data());

  for (int j = 0; j < d - 1; ++j) {
    const Eigen::Index p = shape[static_cast<std::size_t>(j)];
    const Eigen::Index r_prev = ranks[static_cast<std::size_t>(j)];
    auto svd = truncated_svd(work, delta, max_rank, true);
    const Eigen::Index r = svd.rank;
    ranks[static_cast<std::size_t>(j) + 1] = r;

    // Repack U rows (k_prev * p + nu) into the core layout (k_prev + r_prev * nu).
    Eigen::MatrixXd core(r_prev * p, r);
    for (Eigen::Index nu = 0; nu < p; ++nu)
      for (Eigen::Index k = 0; k < r_prev; ++k) core.row(k + r_prev * nu) = svd.u.row(k * p + nu);
    cores[static_cast<std::size_t>(j)] = std::move(core);

    const Eigen::Index p_next = shape[static_cast<std::size_t>(j) + 1];
    RowMajorMatrix next = svd.s.asDiagonal() * svd.v.transpose();
    work = Eigen::Map<const RowMajorMatrix>(next.data(), r * p_next, next.size() / (r * p_next));
  }
  // Last core: the final work buffer is laid out row-major over (k_{d-1}, nu_d).
  const Eigen::Index p_last = shape[static_cast<std::size_t>(d) - 1];
  const Eigen::Index r_last = ranks[static_cast<std::size_t>(d) - 1];
  Eigen::MatrixXd last(r_last * p_last, 1);
  const double* buf = work.data();
  for (Eigen::Index nu = 0; nu < p_last; ++nu)
    for (Eigen::Index k = 0; k < r_last; ++k) last(k + r_last * nu, 0) = buf[k * p_last + nu];

  TensorTrain x(shape, ranks);
  for (int j = 0; j < d - 1; ++j) x.set_core(j, std::move(cores[static_cast<std::size_t>(j)]));
  x.set_core(d - 1, std::move(last));
  x.set_orthogonality({d - 1, d});
  return x;
}

DenseTensor to_full(const TensorTrain& x, Eigen::Index guard) {
  Eigen::Index total = 1;
  for (auto p : x.mode_dims()) {
    total *= p;
    if (total > guard) throw std::invalid_argument("to_full: entry count exceeds guard");
  }
  const int d = x.order();
  // acc holds the partial contraction over modes 1..j as an
  // (p_1*...*p_j) x r_j matrix with row-major multi-index rows.
  Eigen::MatrixXd acc = x.core(0);
  Eigen::Index n_rows = x.mode_dim(0);
  for (int j = 1; j < d; ++j) {
    const Eigen::Index p = x.mode_dim(j);
    const Eigen::Index r_next = x.rank(j + 1);
    Eigen::MatrixXd tmp = acc * x.right_unfold(j);  // n_rows x (p * r_next), col = nu + p*k
    Eigen::MatrixXd next(n_rows * p, r_next);
    for (Eigen::Index k = 0; k < r_next; ++k)
      for (Eigen::Index nu = 0; nu < p; ++nu)
        for (Eigen::Index i = 0; i < n_rows; ++i) next(i * p + nu, k) = tmp(i, nu + p * k);
    acc = std::move(next);
    n_rows *= p;
  }
  DenseTensor out(x.mode_dims());
  Eigen::Map<Eigen::VectorXd>(out.data().data(), total) = acc.col(0);
  return out;
}

double evaluate(const TensorTrain& x, const std::vector<Eigen::VectorXd>& feats) {
  const int d = x.order();
  if (static_cast<int>(feats.size()) != d)
    throw std::invalid_argument("evaluate: need one feature vector per mode");
  Eigen::VectorXd v = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd tmp;
  for (int j = 0; j < d; ++j) {
    const Eigen::Index p = x.mode_dim(j);
    const auto& w = feats[static_cast<std::size_t>(j)];
    if (w.size() != p) throw std::invalid_argument("evaluate: feature length mismatch");
    const Eigen::Index r_prev = x.rank(j);
    tmp.resize(r_prev * p);
    for (Eigen::Index nu = 0; nu < p; ++nu) tmp.segment(nu * r_prev, r_prev) = w(nu) * v;
    v = x.core(j).transpose() * tmp;
  }
  return v(0);
}

TensorTrain orthogonalize(const TensorTrain& x, int pivot, Side side) {
  const int d = x.order();
  if (pivot < 0 || pivot >= d) throw std::invalid_argument("orthogonalize: pivot out of range");
  TensorTrain y = x;
  if (side == Side::Left) {
    for (int j = 0; j < pivot; ++j) {
      Eigen::MatrixXd q, r;
      signed_thin_qr(y.core(j), q, r);
      const Eigen::Index r_new = q.cols();
      Eigen::MatrixXd pushed = r * y.right_unfold(j + 1);
      y.set_core(j, std::move(q));
      y.set_core(j + 1, refold_left(pushed, y.mode_dim(j + 1)));
      y.set_rank(j + 1, r_new);
    }
    Orthogonality o = x.orthogonality();
    o.left_upto = std::max(o.left_upto, pivot);
    o.right_from = std::max(o.right_from, pivot + 1);
    y.set_orthogonality(o);
  } else {
    for (int j = d - 1; j > pivot; --j) {
      Eigen::MatrixXd q, r;
      signed_thin_qr(y.right_unfold(j).transpose(), q, r);
      const Eigen::Index r_new = q.cols();
      // q^T is the new right unfolding (r_new x p*r_next); same buffer as the
      // left unfolding (r_new * p) x r_next.
      Eigen::MatrixXd qt = q.transpose();
      Eigen::MatrixXd pushed = y.core(j - 1) * r.transpose();
      y.set_core(j, refold_left(qt, y.mode_dim(j)));
      y.set_rank(j, r_new);
      y.set_core(j - 1, std::move(pushed));
    }
    Orthogonality o = x.orthogonality();
    o.right_from = std::min(o.right_from, pivot + 1);
    o.left_upto = std::min(o.left_upto, pivot);
    y.set_orthogonality(o);
  }
  return y;
}

namespace {

TensorTrain truncate_left_sweep(TensorTrain y, double delta,
                                const std::function<Eigen::Index(int)>& max_rank_at) {
  const int d = y.order();
  const bool numerical_cutoff = true;
  for (int j = 0; j < d - 1; ++j) {
    auto svd = truncated_svd(y.core(j), delta, max_rank_at(j), numerical_cutoff);
    Eigen::MatrixXd carry = svd.s.asDiagonal() * svd.v.transpose();
    Eigen::MatrixXd pushed = carry * y.right_unfold(j + 1);
    y.set_core(j, std::move(svd.u));
    y.set_rank(j + 1, svd.rank);
    y.set_core(j + 1, refold_left(pushed, y.mode_dim(j + 1)));
  }
  y.set_orthogonality({d - 1, d});
  return y;
}

}  // namespace

TensorTrain round_tt(const TensorTrain& x, double tol, Eigen::Index max_rank) {
  if (tol < 0.0) throw std::invalid_argument("round_tt: negative tolerance");
  const int d = x.order();
  if (d == 1) return x;
  TensorTrain y = orthogonalize(x, 0, Side::Right);
  const double norm = y.core(0).norm();
  const double delta = tol * norm / std::sqrt(static_cast<double>(d - 1));
  return truncate_left_sweep(std::move(y), delta, [max_rank](int) { return max_rank; });
}

TensorTrain round_to_ranks(const TensorTrain& x, const std::vector<Eigen::Index>& bond_ranks) {
  const int d = x.order();
  if (static_cast<int>(bond_ranks.size()) != d - 1)
    throw std::invalid_argument("round_to_ranks: need one target rank per interior bond");
  if (d == 1) return x;
  TensorTrain z = orthogonalize(x, 0, Side::Right);
  // Keep exactly the requested number of singular values, no noise cutoff,
  // so manifold points retain their full bond dimension.
  for (int j = 0; j < d - 1; ++j) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(z.core(j), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::Index avail = svd.singularValues().size();
    const Eigen::Index r = std::min(bond_ranks[static_cast<std::size_t>(j)], avail);
    Eigen::MatrixXd u = svd.matrixU().leftCols(r);
    Eigen::MatrixXd v = svd.matrixV().leftCols(r);
    for (Eigen::Index i = 0; i < r; ++i) {
      Eigen::Index imax = 0;
      u.col(i).cwiseAbs().maxCoeff(&imax);
      if (u(imax, i) < 0.0) {
        u.col(i) = -u.col(i);
        v.col(i) = -v.col(i);
      }
    }
    Eigen::MatrixXd carry = svd.singularValues().head(r).asDiagonal() * v.transpose();
    Eigen::MatrixXd pushed = carry * z.right_unfold(j + 1);
    z.set_core(j, std::move(u));
    z.set_rank(j + 1, r);
    z.set_core(j + 1, refold_left(pushed, z.mode_dim(j + 1)));
  }
  z.set_orthogonality({d - 1, d});
  return z;
}

TensorTrain add(const TensorTrain& a, const TensorTrain& b) {
  check_same_dims(a, b, "add");
  const int d = a.order();
  if (d == 1) {
    TensorTrain c = a;
    c.core(0) += b.core(0);
    return c;
  }
  std::vector<Eigen::Index> ranks(static_cast<std::size_t>(d) + 1, 1);
  for (int j = 1; j < d; ++j) ranks[static_cast<std::size_t>(j)] = a.rank(j) + b.rank(j);
  TensorTrain c(a.mode_dims(), ranks);
  for (int j = 0; j < d; ++j) {
    const Eigen::Index p = a.mode_dim(j);
    const Eigen::Index ra0 = a.rank(j), ra1 = a.rank(j + 1);
    const Eigen::Index rb0 = b.rank(j), rb1 = b.rank(j + 1);
    const Eigen::Index rc0 = c.rank(j);
    auto& core = c.core(j);
    for (Eigen::Index nu = 0; nu < p; ++nu) {
      core.block(nu * rc0, 0, ra0, ra1) = a.slice(j, nu);
      core.block(nu * rc0 + (j == 0 ? 0 : ra0), (j == d - 1 ? 0 : ra1), rb0, rb1) = b.slice(j, nu);
    }
  }
  return c;
}

TensorTrain scale(const TensorTrain& a, double c) {
  TensorTrain y = a;
  Orthogonality o = a.orthogonality();
  y.core(0) *= c;
  o.left_upto = 0;  // scaling breaks left-orthogonality of the first core
  y.set_orthogonality(o);
  return y;
}

double inner(const TensorTrain& a, const TensorTrain& b) {
  check_same_dims(a, b, "inner");
  const int d = a.order();
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(1, 1);
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd x = w * b.right_unfold(j);  // r_a_{j-1} x (p * r_b_j)
    w = a.core(j).transpose() * refold_left(x, a.mode_dim(j));
  }
  return w(0, 0);
}

static_assert(std::endian::native == std::endian::little,
              "TT serialization assumes a little-endian host");

void save_tt(std::ostream& os, const TensorTrain& x) {
  auto put_u64 = [&os](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  const int d = x.order();
  put_u64(static_cast<std::uint64_t>(d));
  for (auto p : x.mode_dims()) put_u64(static_cast<std::uint64_t>(p));
  for (auto r : x.ranks()) put_u64(static_cast<std::uint64_t>(r));
  for (int j = 0; j < d; ++j) {
    const auto& c = x.core(j);
    os.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(sizeof(double)) * c.size());
  }
  if (!os) throw std::runtime_error("save_tt: write failed");
}

TensorTrain load_tt(std::istream& is) {
  auto get_u64 = [&is]() {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  const auto d = static_cast<int>(get_u64());
  if (!is || d <= 0 || d > 1'000'000) throw std::runtime_error("load_tt: bad header");
  std::vector<Eigen::Index> dims(static_cast<std::size_t>(d));
  for (auto& p : dims) p = static_cast<Eigen::Index>(get_u64());
  std::vector<Eigen::Index> ranks(static_cast<std::size_t>(d) + 1);
  for (auto& r : ranks) r = static_cast<Eigen::Index>(get_u64());
  if (!is) throw std::runtime_error("load_tt: truncated header");
  TensorTrain x(dims, ranks);
  for (int j = 0; j < d; ++j) {
    auto& c = x.core(j);
    is.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(sizeof(double)) * c.size());
  }
  if (!is) throw std::runtime_error("load_tt: truncated cores");
  return x;
}

std::ostream& operator<<(std::ostream& os, const TensorTrain& x) {
  os << "TensorTrain(d=" << x.order() << ", dims=[";
  for (int j = 0; j < x.order(); ++j) os << (j ? "," : "") << x.mode_dim(j);
  os << "], ranks=[";
  for (std::size_t j = 0; j < x.ranks().size(); ++j) os << (j ? "," : "") << x.ranks()[j];
  return os << "])";
}

}  // namespace ttpricer
