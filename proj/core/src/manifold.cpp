#include "ttpricer/manifold.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <ostream>

namespace ttpricer {

namespace {

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

Eigen::MatrixXd refold_left(const Eigen::MatrixXd& m, Eigen::Index p) {
  return Eigen::Map<const Eigen::MatrixXd>(m.data(), m.rows() * p, m.cols() / p);
}

void check_same_base(const TangentVector& a, const TangentVector& b) {
  if (a.base() != b.base())
    throw std::invalid_argument("tangent vectors live at different base points");
}

}  // namespace

ManifoldPoint::ManifoldPoint(const TensorTrain& x)
    : left_(orthogonalize(x, 0, Side::Right)), right_(left_) {
  // left_ currently holds the right-canonical form; rebuild the left gauge
  // from the same chain so both gauges share interface matrices exactly.
  const int d = left_.order();
  if (left_.ranks() != x.ranks())
    throw std::invalid_argument("ManifoldPoint: input ranks exceed the feasible bond dimensions");
  for (int j = 0; j + 1 < d; ++j) {
    Eigen::MatrixXd q, r;
    signed_thin_qr(left_.core(j), q, r);
    if (q.cols() != left_.rank(j + 1))
      throw std::invalid_argument("ManifoldPoint: rank-deficient bond dimension");
    Eigen::MatrixXd pushed = r * left_.right_unfold(j + 1);
    left_.set_core(j, std::move(q));
    left_.set_core(j + 1, refold_left(pushed, left_.mode_dim(j + 1)));
  }
  left_.set_orthogonality({d - 1, d});
}

TangentVector TangentVector::zero(ManifoldPointPtr base) {
  std::vector<Eigen::MatrixXd> deltas;
  const auto& tt = base->tt();
  for (int j = 0; j < tt.order(); ++j)
    deltas.emplace_back(Eigen::MatrixXd::Zero(tt.core(j).rows(), tt.core(j).cols()));
  return {std::move(base), std::move(deltas)};
}

TangentVector& TangentVector::operator+=(const TangentVector& other) {
  check_same_base(*this, other);
  for (std::size_t j = 0; j < deltas_.size(); ++j) deltas_[j] += other.deltas_[j];
  return *this;
}

TangentVector& TangentVector::operator*=(double c) {
  for (auto& d : deltas_) d *= c;
  return *this;
}

double TangentVector::norm() const { return std::sqrt(std::max(0.0, inner(*this, *this))); }

double inner(const TangentVector& a, const TangentVector& b) {
  check_same_base(a, b);
  double total = 0.0;
  for (int j = 0; j < a.order(); ++j)
    total += (a.delta(j).array() * b.delta(j).array()).sum();
  return total;
}

TangentVector add(const TangentVector& a, const TangentVector& b) {
  TangentVector out = a;
  out += b;
  return out;
}

TangentVector scale(const TangentVector& a, double c) {
  TangentVector out = a;
  out *= c;
  return out;
}

namespace {

/// Embeds x + step * v (include_base) or step * v alone as a tensor train of
/// bond ranks 2r. Blocks per slice: [[R, 0], [step*dU, L]], with boundary
/// cores taking the matching block row/column.
TensorTrain embed_impl(const ManifoldPoint& x, const TangentVector& v, double step,
                       bool include_base) {
  const TensorTrain& left = x.left_gauge();
  const TensorTrain& right = x.right_gauge();
  const int d = left.order();

  if (d == 1) {
    TensorTrain out = left;
    Eigen::MatrixXd core = step * v.delta(0);
    if (include_base) core += left.core(0);
    out.core(0) = std::move(core);
    return out;
  }

  std::vector<Eigen::Index> ranks(static_cast<std::size_t>(d) + 1, 1);
  for (int j = 1; j < d; ++j) ranks[static_cast<std::size_t>(j)] = 2 * left.rank(j);
  TensorTrain out(left.mode_dims(), ranks);

  for (int j = 0; j < d; ++j) {
    const Eigen::Index p = left.mode_dim(j);
    const Eigen::Index r0 = left.rank(j), r1 = left.rank(j + 1);
    auto& core = out.core(j);
    core.setZero();
    for (Eigen::Index nu = 0; nu < p; ++nu) {
      const auto l_slice = left.slice(j, nu);
      const auto r_slice = right.slice(j, nu);
      const Eigen::MatrixXd d_slice = step * v.delta(j).middleRows(nu * r0, r0);
      if (j == 0) {
        // 1 x 2r1 block row: [dU, L]
        core.block(nu, 0, 1, r1) = d_slice;
        core.block(nu, r1, 1, r1) = l_slice;
      } else if (j == d - 1) {
        // 2r0 x 1 block column: [R; dU (+ L when embedding the base)]
        const Eigen::Index row0 = nu * 2 * r0;
        core.block(row0, 0, r0, 1) = r_slice;
        core.block(row0 + r0, 0, r0, 1) = include_base ? (d_slice + l_slice).eval() : d_slice;
      } else {
        const Eigen::Index row0 = nu * 2 * r0;
        core.block(row0, 0, r0, r1) = r_slice;
        core.block(row0 + r0, 0, r0, r1) = d_slice;
        core.block(row0 + r0, r1, r0, r1) = l_slice;
      }
    }
  }
  return out;
}

}  // namespace

TensorTrain embed(const TangentVector& v) { return embed_impl(*v.base(), v, 1.0, false); }

TangentVector deflate_to_tangent(ManifoldPointPtr base, std::vector<Eigen::MatrixXd> raw) {
  const TensorTrain& left = base->left_gauge();
  const int d = left.order();
  for (int j = 0; j + 1 < d; ++j) {
    auto& m = raw[static_cast<std::size_t>(j)];
    const auto& q = left.core(j);
    m -= q * (q.transpose() * m);
  }
  return {std::move(base), std::move(raw)};
}

TangentVector project_to_tangent(const ManifoldPointPtr& x, const TensorTrain& z) {
  const TensorTrain& left = x->left_gauge();
  const TensorTrain& right = x->right_gauge();
  if (z.mode_dims() != left.mode_dims())
    throw std::invalid_argument("project_to_tangent: mode dimensions do not match");
  const int d = left.order();

  // Left interfaces A_j = sum_nu z_j(nu)^T A_{j-1} L_j(nu), sizes rz_j x r_j.
  std::vector<Eigen::MatrixXd> a(static_cast<std::size_t>(d));
  Eigen::MatrixXd cur = Eigen::MatrixXd::Ones(1, 1);
  for (int j = 0; j + 1 < d; ++j) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(z.rank(j + 1), left.rank(j + 1));
    for (Eigen::Index nu = 0; nu < left.mode_dim(j); ++nu)
      next.noalias() += z.slice(j, nu).transpose() * cur * left.slice(j, nu);
    a[static_cast<std::size_t>(j) + 1] = next;
    cur = std::move(next);
  }
  a[0] = Eigen::MatrixXd::Ones(1, 1);

  // Right interfaces B_j = sum_nu z_{j+1}(nu) B_{j+1} R_{j+1}(nu)^T, rz_j x r_j.
  std::vector<Eigen::MatrixXd> b(static_cast<std::size_t>(d));
  cur = Eigen::MatrixXd::Ones(1, 1);
  b[static_cast<std::size_t>(d) - 1] = cur;
  for (int j = d - 2; j >= 0; --j) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(z.rank(j + 1), right.rank(j + 1));
    for (Eigen::Index nu = 0; nu < right.mode_dim(j + 1); ++nu)
      next.noalias() += z.slice(j + 1, nu) * cur * right.slice(j + 1, nu).transpose();
    b[static_cast<std::size_t>(j)] = next;
    cur = std::move(next);
  }

  std::vector<Eigen::MatrixXd> raw(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const Eigen::Index p = left.mode_dim(j);
    const Eigen::Index r0 = left.rank(j), r1 = left.rank(j + 1);
    Eigen::MatrixXd m(r0 * p, r1);
    for (Eigen::Index nu = 0; nu < p; ++nu)
      m.middleRows(nu * r0, r0) =
          a[static_cast<std::size_t>(j)].transpose() * z.slice(j, nu) * b[static_cast<std::size_t>(j)];
    raw[static_cast<std::size_t>(j)] = std::move(m);
  }
  return deflate_to_tangent(x, std::move(raw));
}

RankOneProjector::RankOneProjector(ManifoldPointPtr x) : base_(std::move(x)) {
  const auto& tt = base_->tt();
  for (int j = 0; j < tt.order(); ++j)
    raw_.emplace_back(Eigen::MatrixXd::Zero(tt.core(j).rows(), tt.core(j).cols()));
}

void RankOneProjector::add_term(double coeff, const std::vector<Eigen::VectorXd>& factors) {
  const TensorTrain& left = base_->left_gauge();
  const TensorTrain& right = base_->right_gauge();
  const int d = left.order();
  if (static_cast<int>(factors.size()) != d)
    throw std::invalid_argument("RankOneProjector: need one factor per mode");

  // a_j = <L_{0..j} interface, w_{0..j}>; a[j] has length r_j.
  std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(d));
  Eigen::VectorXd cur = Eigen::VectorXd::Ones(1);
  a[0] = cur;
  Eigen::VectorXd kron;
  for (int j = 0; j + 1 < d; ++j) {
    const auto& w = factors[static_cast<std::size_t>(j)];
    const Eigen::Index p = left.mode_dim(j), r0 = left.rank(j);
    kron.resize(r0 * p);
    for (Eigen::Index nu = 0; nu < p; ++nu) kron.segment(nu * r0, r0) = w(nu) * cur;
    cur = left.core(j).transpose() * kron;
    a[static_cast<std::size_t>(j) + 1] = cur;
  }

  // b_j = <R_{j+1..d-1} interface, w_{j+1..d-1}>; b[j] has length r_j.
  std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(d));
  cur = Eigen::VectorXd::Ones(1);
  b[static_cast<std::size_t>(d) - 1] = cur;
  for (int j = d - 2; j >= 0; --j) {
    const auto& w = factors[static_cast<std::size_t>(j) + 1];
    const Eigen::Index p = right.mode_dim(j + 1), r1 = right.rank(j + 2);
    kron.resize(p * r1);
    for (Eigen::Index k = 0; k < r1; ++k) kron.segment(k * p, p) = cur(k) * w;
    cur = right.right_unfold(j + 1) * kron;
    b[static_cast<std::size_t>(j)] = cur;
  }

  for (int j = 0; j < d; ++j) {
    const auto& w = factors[static_cast<std::size_t>(j)];
    const Eigen::Index p = left.mode_dim(j), r0 = left.rank(j);
    kron.resize(r0 * p);
    for (Eigen::Index nu = 0; nu < p; ++nu)
      kron.segment(nu * r0, r0) = (coeff * w(nu)) * a[static_cast<std::size_t>(j)];
    raw_[static_cast<std::size_t>(j)].noalias() += kron * b[static_cast<std::size_t>(j)].transpose();
  }
}

void RankOneProjector::merge(const RankOneProjector& other) {
  if (other.base_ != base_) throw std::invalid_argument("RankOneProjector: merging different bases");
  for (std::size_t j = 0; j < raw_.size(); ++j) raw_[j] += other.raw_[j];
}

TangentVector RankOneProjector::finish() const { return deflate_to_tangent(base_, raw_); }

ManifoldPoint retract(const ManifoldPoint& x, const TangentVector& v, double step) {
  const TensorTrain embedded = embed_impl(x, v, step, true);
  const auto& ranks = x.ranks();
  std::vector<Eigen::Index> bond_ranks(ranks.begin() + 1, ranks.end() - 1);
  return ManifoldPoint(round_to_ranks(embedded, bond_ranks));
}

TangentVector transport(const ManifoldPointPtr& x_new, const TangentVector& v_old) {
  return project_to_tangent(x_new, embed(v_old));
}

double fr_pr_plus_coefficient(double g_new_sq, double g_old_sq, double g_new_dot_old_transported) {
  if (!(g_old_sq > 0.0)) return 0.0;
  const double fr = g_new_sq / g_old_sq;
  const double pr = (g_new_sq - g_new_dot_old_transported) / g_old_sq;
  return std::max(0.0, std::min(pr, fr));
}

CgResult riemannian_cg(const Objective& objective, const RiemannianGradient& gradient,
                       const TensorTrain& x0, const CgOptions& opts, const Objective* validation) {
  CgResult result;
  auto point = std::make_shared<const ManifoldPoint>(x0);

  double f = objective(*point);
  if (!std::isfinite(f)) throw CgDivergence("riemannian_cg: objective not finite at start", result.trace);

  TangentVector grad = gradient(point);
  double grad_sq = inner(grad, grad);
  if (!std::isfinite(grad_sq))
    throw CgDivergence("riemannian_cg: gradient not finite at start", result.trace);

  auto score = [&](const ManifoldPoint& p) { return validation ? (*validation)(p) : objective(p); };

  double best_score = score(*point);
  result.minimizer = point;
  result.objective = f;
  result.validation = validation ? best_score : std::numeric_limits<double>::quiet_NaN();
  result.trace.push_back({0, f, result.validation, std::sqrt(std::max(0.0, grad_sq)), 0.0});

  TangentVector dir = scale(grad, -1.0);
  double step = opts.initial_step;
  int since_improvement = 0;

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    if (std::sqrt(std::max(0.0, grad_sq)) <= opts.grad_tol) {
      result.termination = "gradient_tolerance";
      return result;
    }

    double slope = inner(grad, dir);
    if (slope >= 0.0) {
      dir = scale(grad, -1.0);
      slope = -grad_sq;
    }

    // Armijo backtracking from twice the previously accepted step.
    double beta = step;
    ManifoldPointPtr next;
    double f_next = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      next = std::make_shared<const ManifoldPoint>(retract(*point, dir, beta));
      f_next = objective(*next);
      if (!std::isfinite(f_next))
        throw CgDivergence("riemannian_cg: objective not finite during line search", result.trace);
      if (f_next <= f + opts.armijo_c1 * beta * slope) {
        accepted = true;
        break;
      }
      beta *= opts.armijo_contraction;
    }
    if (!accepted) {
      result.termination = "line_search_failure";
      return result;
    }

    TangentVector grad_next = gradient(next);
    const double grad_next_sq = inner(grad_next, grad_next);
    if (!std::isfinite(grad_next_sq))
      throw CgDivergence("riemannian_cg: gradient not finite", result.trace);

    double gamma = 0.0;
    if (iter % opts.restart_period != 0) {
      const TangentVector grad_moved = transport(next, grad);
      gamma = fr_pr_plus_coefficient(grad_next_sq, grad_sq, inner(grad_next, grad_moved));
    }
    TangentVector dir_next = scale(grad_next, -1.0);
    if (gamma > 0.0) dir_next += scale(transport(next, dir), gamma);

    point = next;
    f = f_next;
    grad = std::move(grad_next);
    grad_sq = grad_next_sq;
    dir = std::move(dir_next);
    step = 2.0 * beta;

    const double sc = score(*point);
    result.trace.push_back(
        {iter, f, validation ? sc : std::numeric_limits<double>::quiet_NaN(),
         std::sqrt(std::max(0.0, grad_sq)), beta});

    const double improvement = best_score - sc;
    if (improvement > opts.stagnation_rtol * std::max(1.0, std::abs(best_score))) {
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (sc < best_score) {
      best_score = sc;
      result.minimizer = point;
      result.objective = f;
      result.validation = validation ? sc : std::numeric_limits<double>::quiet_NaN();
    }
    if (since_improvement >= opts.stagnation_window) {
      result.termination = "stagnation";
      return result;
    }
  }
  result.termination = "max_iterations";
  return result;
}

void write_cg_trace_csv(std::ostream& os, const std::vector<CgTraceRow>& trace) {
  os << "iteration,objective,validation,grad_norm,step\n";
  for (const auto& row : trace)
    os << row.iteration << ',' << row.objective << ',' << row.validation << ',' << row.grad_norm
       << ',' << row.step << '\n';
}

}  // namespace ttpricer
