#include "ttpricer/primal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include "ttpricer/parallel.hpp"

namespace ttpricer {

namespace {

/// out = sum_nu diag(f.col(nu)) * env * core_slice(nu): pushes a sample
/// environment one core to the right.
void apply_core_left(const Eigen::MatrixXd& env, const Eigen::MatrixXd& f,
                     const Eigen::MatrixXd& core, Eigen::Index r_prev, Eigen::MatrixXd& out) {
  const Eigen::Index p = f.cols(), r_next = core.cols();
  out = Eigen::MatrixXd::Zero(env.rows(), r_next);
  Eigen::MatrixXd tmp;
  for (Eigen::Index nu = 0; nu < p; ++nu) {
    tmp = env.array().colwise() * f.col(nu).array();
    out.noalias() += tmp * core.middleRows(nu * r_prev, r_prev);
  }
}

/// out = sum_nu diag(f.col(nu)) * env * core_slice(nu)^T: pushes a sample
/// environment one core to the left.
void apply_core_right(const Eigen::MatrixXd& env, const Eigen::MatrixXd& f,
                      const Eigen::MatrixXd& core, Eigen::Index r_prev, Eigen::MatrixXd& out) {
  const Eigen::Index p = f.cols();
  out = Eigen::MatrixXd::Zero(env.rows(), r_prev);
  Eigen::MatrixXd tmp;
  for (Eigen::Index nu = 0; nu < p; ++nu) {
    tmp = env.array().colwise() * f.col(nu).array();
    out.noalias() += tmp * core.middleRows(nu * r_prev, r_prev).transpose();
  }
}

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

Eigen::Map<const Eigen::MatrixXd> right_unfold_of(const Eigen::MatrixXd& core, Eigen::Index r_prev) {
  return {core.data(), r_prev, core.size() / r_prev};
}

/// Alternating least squares over the TT cores and the payoff coefficient.
class AlsFitter {
 public:
  AlsFitter(const RegressionProblem& prob, const IntervalBasis& basis, const Payoff& payoff,
            const FitOptions& opts)
      : basis_(basis), payoff_(payoff), opts_(opts), d_(static_cast<int>(prob.states.cols())),
        p_(basis.size()) {
    mt_ = static_cast<Eigen::Index>(prob.train_idx.size());
    mv_ = static_cast<Eigen::Index>(prob.validation_idx.size());
    if (mt_ < 1) throw std::invalid_argument("fit_value_function: no training samples");
    if (!prob.targets.allFinite()) throw std::invalid_argument("fit_value_function: non-finite targets");

    build_features(prob);
    y_sq_ = y_train_.squaredNorm();

    ranks_.assign(static_cast<std::size_t>(d_) + 1, 1);
    std::mt19937_64 rng(opts.init_seed);
    std::normal_distribution<double> normal;
    cores_.clear();
    for (int k = 0; k < d_; ++k) {
      Eigen::MatrixXd c(p_, 1);
      for (Eigen::Index i = 0; i < p_; ++i) c(i, 0) = normal(rng);
      cores_.push_back(std::move(c));
    }
    c_phi_ = 0.0;
    recanonicalize();
    rebuild_renv();
    lenv_.assign(static_cast<std::size_t>(d_), Eigen::MatrixXd());
    lenv_[0] = Eigen::MatrixXd::Ones(mt_, 1);
  }

  ValueFunctional run(FitDiagnostics* diag) {
    double best_val = sweeps_until_stall();
    Snapshot best = snapshot(best_val);

    while (true) {
      const int bond = pick_bond();
      if (bond < 0) break;
      grow_bond(bond);
      const double val = sweeps_until_stall();
      if (best_val - val > opts_.validation_rtol * std::max(best_val, 1e-14)) {
        best_val = val;
        best = snapshot(val);
      } else {
        restore(best);
        break;
      }
    }
    restore(best);

    ValueFunctional vf{assemble_tt(), c_phi_, basis_, payoff_};
    if (diag) {
      diag->ranks = ranks_;
      diag->sweeps = total_sweeps_;
      diag->validation_rmse = best_val;
      diag->training_rmse = rmse(y_train_ - predict(f_train_, phi_train_));
      diag->microstep_mse = microstep_mse_;
      diag->fitted_values.resize(mt_ + mv_);
      const Eigen::VectorXd pt = predict(f_train_, phi_train_);
      const Eigen::VectorXd pv = mv_ ? predict(f_val_, phi_val_) : Eigen::VectorXd();
      for (Eigen::Index i = 0; i < mt_; ++i) diag->fitted_values(train_pos_[static_cast<std::size_t>(i)]) = pt(i);
      for (Eigen::Index i = 0; i < mv_; ++i) diag->fitted_values(val_pos_[static_cast<std::size_t>(i)]) = pv(i);
    }
    return vf;
  }

 private:
  struct Snapshot {
    std::vector<Eigen::MatrixXd> cores;
    std::vector<Eigen::Index> ranks;
    double c_phi;
    double validation;
  };

  void build_features(const RegressionProblem& prob) {
    f_train_.assign(static_cast<std::size_t>(d_), Eigen::MatrixXd(mt_, p_));
    f_val_.assign(static_cast<std::size_t>(d_), Eigen::MatrixXd(mv_, p_));
    y_train_.resize(mt_);
    y_val_.resize(mv_);
    phi_train_.resize(mt_);
    phi_val_.resize(mv_);
    train_pos_ = prob.train_idx;
    val_pos_ = prob.validation_idx;

    Eigen::VectorXd row(p_);
    Eigen::VectorXd state(d_);
    for (Eigen::Index i = 0; i < mt_; ++i) {
      const Eigen::Index s = prob.train_idx[static_cast<std::size_t>(i)];
      state = prob.states.row(s).transpose();
      y_train_(i) = prob.targets(s);
      phi_train_(i) = payoff_(state);
      for (int k = 0; k < d_; ++k) {
        basis_.values_into(state(k), row.data());
        f_train_[static_cast<std::size_t>(k)].row(i) = row.transpose();
      }
    }
    for (Eigen::Index i = 0; i < mv_; ++i) {
      const Eigen::Index s = prob.validation_idx[static_cast<std::size_t>(i)];
      state = prob.states.row(s).transpose();
      y_val_(i) = prob.targets(s);
      phi_val_(i) = payoff_(state);
      for (int k = 0; k < d_; ++k) {
        basis_.values_into(state(k), row.data());
        f_val_[static_cast<std::size_t>(k)].row(i) = row.transpose();
      }
    }
  }

  TensorTrain assemble_tt() const {
    TensorTrain tt(std::vector<Eigen::Index>(static_cast<std::size_t>(d_), p_), ranks_);
    for (int k = 0; k < d_; ++k) tt.set_core(k, cores_[static_cast<std::size_t>(k)]);
    return tt;
  }

  Snapshot snapshot(double val) const { return {cores_, ranks_, c_phi_, val}; }

  void restore(const Snapshot& s) {
    cores_ = s.cores;
    ranks_ = s.ranks;
    c_phi_ = s.c_phi;
    recanonicalize();
    rebuild_renv();
    lenv_[0] = Eigen::MatrixXd::Ones(mt_, 1);
  }

  void recanonicalize() {
    for (int k = d_ - 1; k >= 1; --k) {
      Eigen::MatrixXd q, r;
      signed_thin_qr(right_unfold_of(cores_[static_cast<std::size_t>(k)], ranks_[static_cast<std::size_t>(k)]).transpose(), q, r);
      Eigen::MatrixXd qt = q.transpose();
      cores_[static_cast<std::size_t>(k)] = refold_left(qt, p_);
      cores_[static_cast<std::size_t>(k) - 1] *= r.transpose();
    }
  }

  void rebuild_renv() {
    renv_.assign(static_cast<std::size_t>(d_), Eigen::MatrixXd());
    renv_[static_cast<std::size_t>(d_) - 1] = Eigen::MatrixXd::Ones(mt_, 1);
    for (int k = d_ - 2; k >= 0; --k)
      apply_core_right(renv_[static_cast<std::size_t>(k) + 1], f_train_[static_cast<std::size_t>(k) + 1],
                       cores_[static_cast<std::size_t>(k) + 1], ranks_[static_cast<std::size_t>(k) + 1],
                       renv_[static_cast<std::size_t>(k)]);
  }

  void solve_core(int k) {
    const Eigen::Index r0 = ranks_[static_cast<std::size_t>(k)];
    const Eigen::Index r1 = ranks_[static_cast<std::size_t>(k) + 1];
    const Eigen::Index cols = r0 * p_ * r1 + 1;
    const auto& lenv = lenv_[static_cast<std::size_t>(k)];
    const auto& renv = renv_[static_cast<std::size_t>(k)];
    const auto& f = f_train_[static_cast<std::size_t>(k)];

    const int workers = worker_count();
    std::vector<Eigen::MatrixXd> g_part(static_cast<std::size_t>(workers),
                                        Eigen::MatrixXd::Zero(cols, cols));
    std::vector<Eigen::VectorXd> rhs_part(static_cast<std::size_t>(workers),
                                          Eigen::VectorXd::Zero(cols));
    parallel_blocks(mt_, [&](int block, std::int64_t begin, std::int64_t end) {
      const Eigen::Index len = end - begin;
      if (len <= 0) return;
      Eigen::MatrixXd a(len, cols);
      Eigen::Index c = 0;
      for (Eigen::Index kn = 0; kn < r1; ++kn)
        for (Eigen::Index nu = 0; nu < p_; ++nu)
          for (Eigen::Index kp = 0; kp < r0; ++kp, ++c)
            a.col(c) = lenv.col(kp).segment(begin, len).cwiseProduct(f.col(nu).segment(begin, len))
                           .cwiseProduct(renv.col(kn).segment(begin, len));
      a.col(cols - 1) = phi_train_.segment(begin, len);
      g_part[static_cast<std::size_t>(block)].selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
      rhs_part[static_cast<std::size_t>(block)].noalias() = a.transpose() * y_train_.segment(begin, len);
    });
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cols);
    for (int b = 0; b < workers; ++b) {
      g += g_part[static_cast<std::size_t>(b)];
      rhs += rhs_part[static_cast<std::size_t>(b)];
    }
    g = g.selfadjointView<Eigen::Lower>();

    const double lambda = opts_.ridge_scale * g.trace() / static_cast<double>(cols);
    Eigen::MatrixXd g_ridged = g;
    g_ridged.diagonal().array() += lambda;
    const Eigen::VectorXd x = g_ridged.ldlt().solve(rhs);

    microstep_mse_.push_back((y_sq_ - 2.0 * x.dot(rhs) + x.dot(g * x)) / static_cast<double>(mt_));

    auto& core = cores_[static_cast<std::size_t>(k)];
    core.resize(r0 * p_, r1);
    for (Eigen::Index kn = 0; kn < r1; ++kn) core.col(kn) = x.segment(kn * r0 * p_, r0 * p_);
    c_phi_ = x(cols - 1);
  }

  void orth_left(int k) {
    Eigen::MatrixXd q, r;
    signed_thin_qr(cores_[static_cast<std::size_t>(k)], q, r);
    if (q.cols() != ranks_[static_cast<std::size_t>(k) + 1])
      throw std::runtime_error("fit_value_function: infeasible bond rank");
    Eigen::MatrixXd pushed =
        r * right_unfold_of(cores_[static_cast<std::size_t>(k) + 1], ranks_[static_cast<std::size_t>(k) + 1]);
    cores_[static_cast<std::size_t>(k)] = std::move(q);
    cores_[static_cast<std::size_t>(k) + 1] = refold_left(pushed, p_);
    apply_core_left(lenv_[static_cast<std::size_t>(k)], f_train_[static_cast<std::size_t>(k)],
                    cores_[static_cast<std::size_t>(k)], ranks_[static_cast<std::size_t>(k)],
                    lenv_[static_cast<std::size_t>(k) + 1]);
  }

  void orth_right(int k) {
    Eigen::MatrixXd q, r;
    signed_thin_qr(
        right_unfold_of(cores_[static_cast<std::size_t>(k)], ranks_[static_cast<std::size_t>(k)]).transpose(), q, r);
    Eigen::MatrixXd qt = q.transpose();
    cores_[static_cast<std::size_t>(k)] = refold_left(qt, p_);
    cores_[static_cast<std::size_t>(k) - 1] *= r.transpose();
    apply_core_right(renv_[static_cast<std::size_t>(k)], f_train_[static_cast<std::size_t>(k)],
                     cores_[static_cast<std::size_t>(k)], ranks_[static_cast<std::size_t>(k)],
                     renv_[static_cast<std::size_t>(k) - 1]);
  }

  void sweep() {
    for (int k = 0; k < d_; ++k) {
      solve_core(k);
      if (k + 1 < d_) orth_left(k);
    }
    for (int k = d_ - 1; k >= 0; --k) {
      solve_core(k);
      if (k > 0) orth_right(k);
    }
    ++total_sweeps_;
  }

  Eigen::VectorXd predict(const std::vector<Eigen::MatrixXd>& f, const Eigen::VectorXd& phi) const {
    Eigen::MatrixXd env = Eigen::MatrixXd::Ones(phi.size(), 1);
    Eigen::MatrixXd next;
    for (int k = 0; k < d_; ++k) {
      apply_core_left(env, f[static_cast<std::size_t>(k)], cores_[static_cast<std::size_t>(k)],
                      ranks_[static_cast<std::size_t>(k)], next);
      env.swap(next);
    }
    return env.col(0) + c_phi_ * phi;
  }

  static double rmse(const Eigen::VectorXd& r) {
    return r.size() ? std::sqrt(r.squaredNorm() / static_cast<double>(r.size())) : 0.0;
  }

  double validation_rmse() const {
    if (mv_ == 0) return rmse(y_train_ - predict(f_train_, phi_train_));
    return rmse(y_val_ - predict(f_val_, phi_val_));
  }

  double sweeps_until_stall() {
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < opts_.max_sweeps; ++s) {
      sweep();
      const double val = validation_rmse();
      if (best - val <= opts_.validation_rtol * std::max(best, 1e-14)) return std::min(best, val);
      best = val;
    }
    return best;
  }

  /// Residual cross-correlation outside the current span, per bond; the bond
  /// with the largest leading singular value is grown. Returns -1 when no
  /// bond may grow.
  int pick_bond() {
    if (d_ < 2) return -1;
    // Fresh left environments (right environments are fresh after a sweep).
    for (int k = 0; k + 1 < d_; ++k)
      apply_core_left(lenv_[static_cast<std::size_t>(k)], f_train_[static_cast<std::size_t>(k)],
                      cores_[static_cast<std::size_t>(k)], ranks_[static_cast<std::size_t>(k)],
                      lenv_[static_cast<std::size_t>(k) + 1]);
    const Eigen::VectorXd res = y_train_ - predict(f_train_, phi_train_);

    int best_bond = -1;
    double best_score = 0.0;
    grow_direction_.resize(0);
    for (int j = 0; j + 1 < d_; ++j) {
      const Eigen::Index r0 = ranks_[static_cast<std::size_t>(j)];
      const Eigen::Index r1 = ranks_[static_cast<std::size_t>(j) + 1];
      const Eigen::Index r2 = ranks_[static_cast<std::size_t>(j) + 2];
      if (r1 >= opts_.max_rank || r1 >= r0 * p_ || r1 >= p_ * r2) continue;

      Eigen::MatrixXd u(mt_, r0 * p_), v(mt_, p_ * r2);
      for (Eigen::Index nu = 0; nu < p_; ++nu)
        for (Eigen::Index kp = 0; kp < r0; ++kp)
          u.col(kp + r0 * nu) = lenv_[static_cast<std::size_t>(j)].col(kp).cwiseProduct(
              f_train_[static_cast<std::size_t>(j)].col(nu));
      for (Eigen::Index kn = 0; kn < r2; ++kn)
        for (Eigen::Index nu = 0; nu < p_; ++nu)
          v.col(nu + p_ * kn) = f_train_[static_cast<std::size_t>(j) + 1].col(nu).cwiseProduct(
              renv_[static_cast<std::size_t>(j) + 1].col(kn));

      Eigen::MatrixXd corr = u.transpose() * (v.array().colwise() * res.array()).matrix() /
                             static_cast<double>(mt_);
      // Deflate the directions already representable at the current rank.
      Eigen::MatrixXd ql, dummy;
      signed_thin_qr(cores_[static_cast<std::size_t>(j)], ql, dummy);
      corr -= ql * (ql.transpose() * corr);
      Eigen::MatrixXd qr_basis;
      signed_thin_qr(
          right_unfold_of(cores_[static_cast<std::size_t>(j) + 1], r1).transpose(), qr_basis, dummy);
      corr -= (corr * qr_basis) * qr_basis.transpose();

      Eigen::JacobiSVD<Eigen::MatrixXd> svd(corr, Eigen::ComputeThinV);
      const double score = svd.singularValues()(0);
      if (score > best_score) {
        best_score = score;
        best_bond = j;
        grow_direction_ = svd.matrixV().col(0);
      }
    }
    return best_bond;
  }

  void grow_bond(int j) {
    const Eigen::Index r0 = ranks_[static_cast<std::size_t>(j)];
    const Eigen::Index r1 = ranks_[static_cast<std::size_t>(j) + 1];
    const Eigen::Index r2 = ranks_[static_cast<std::size_t>(j) + 2];

    // Core j gains a zero column; the model it represents is unchanged and
    // the next micro-step fills the new direction in.
    Eigen::MatrixXd grown_left = Eigen::MatrixXd::Zero(r0 * p_, r1 + 1);
    grown_left.leftCols(r1) = cores_[static_cast<std::size_t>(j)];
    cores_[static_cast<std::size_t>(j)] = std::move(grown_left);

    // Core j+1 gains the residual-correlation direction as a new row of its
    // right unfolding.
    Eigen::MatrixXd ru = right_unfold_of(cores_[static_cast<std::size_t>(j) + 1], r1);
    Eigen::MatrixXd grown_right(r1 + 1, p_ * r2);
    grown_right.topRows(r1) = ru;
    grown_right.row(r1) = grow_direction_.transpose();
    cores_[static_cast<std::size_t>(j) + 1] = refold_left(grown_right, p_);

    ranks_[static_cast<std::size_t>(j) + 1] = r1 + 1;
    recanonicalize();
    rebuild_renv();
    lenv_[0] = Eigen::MatrixXd::Ones(mt_, 1);
  }

  const IntervalBasis& basis_;
  const Payoff& payoff_;
  FitOptions opts_;
  int d_;
  Eigen::Index p_;
  Eigen::Index mt_ = 0, mv_ = 0;

  std::vector<Eigen::MatrixXd> f_train_, f_val_;
  Eigen::VectorXd y_train_, y_val_, phi_train_, phi_val_;
  std::vector<Eigen::Index> train_pos_, val_pos_;
  double y_sq_ = 0.0;

  std::vector<Eigen::MatrixXd> cores_;
  std::vector<Eigen::Index> ranks_;
  double c_phi_ = 0.0;

  std::vector<Eigen::MatrixXd> lenv_, renv_;
  std::vector<double> microstep_mse_;
  Eigen::VectorXd grow_direction_;
  int total_sweeps_ = 0;
};

}  // namespace

double ValueFunctional::evaluate(const Eigen::VectorXd& state) const {
  Evaluator ev(*this);
  return ev(state.data(), static_cast<int>(state.size()));
}

ValueFunctional::Evaluator::Evaluator(const ValueFunctional& vf) : vf_(&vf) {
  const auto& ranks = vf.tt.ranks();
  const Eigen::Index rmax = *std::max_element(ranks.begin(), ranks.end());
  feats_.resize(vf.basis.size());
  env_.resize(rmax);
  kron_.resize(rmax * vf.basis.size());
}

double ValueFunctional::Evaluator::operator()(const double* state, int d) const {
  const TensorTrain& tt = vf_->tt;
  const Eigen::Index p = vf_->basis.size();
  env_(0) = 1.0;
  Eigen::Index cur = 1;
  for (int k = 0; k < d; ++k) {
    vf_->basis.values_into(state[k], feats_.data());
    const Eigen::Index r_next = tt.rank(k + 1);
    for (Eigen::Index nu = 0; nu < p; ++nu)
      kron_.segment(nu * cur, cur) = feats_(nu) * env_.head(cur);
    env_.head(r_next).noalias() = tt.core(k).transpose() * kron_.head(cur * p);
    cur = r_next;
  }
  return env_(0) + vf_->payoff_coeff * vf_->payoff(state, d);
}

void save_value_functional(std::ostream& os, const ValueFunctional& vf) {
  auto put_u64 = [&os](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_f64 = [&os](double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put_f64(vf.basis.a());
  put_f64(vf.basis.b());
  put_u64(static_cast<std::uint64_t>(vf.basis.size()));
  put_f64(vf.payoff_coeff);
  put_u64(vf.payoff.kind == PayoffKind::BasketPut ? 0 : 1);
  put_f64(vf.payoff.strike);
  put_u64(static_cast<std::uint64_t>(vf.payoff.weights.size()));
  os.write(reinterpret_cast<const char*>(vf.payoff.weights.data()),
           static_cast<std::streamsize>(sizeof(double)) * vf.payoff.weights.size());
  save_tt(os, vf.tt);
}

ValueFunctional load_value_functional(std::istream& is) {
  auto get_u64 = [&is]() {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto get_f64 = [&is]() {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  const double a = get_f64();
  const double b = get_f64();
  const int p = static_cast<int>(get_u64());
  const double c_phi = get_f64();
  const PayoffKind kind = get_u64() == 0 ? PayoffKind::BasketPut : PayoffKind::MaxCall;
  const double strike = get_f64();
  Eigen::VectorXd weights(static_cast<Eigen::Index>(get_u64()));
  is.read(reinterpret_cast<char*>(weights.data()),
          static_cast<std::streamsize>(sizeof(double)) * weights.size());
  if (!is) throw std::runtime_error("load_value_functional: truncated header");
  TensorTrain tt = load_tt(is);
  return ValueFunctional{std::move(tt), c_phi, IntervalBasis(a, b, p), Payoff{kind, strike, weights}};
}

RegressionProblem RegressionProblem::with_split(Eigen::MatrixXd states, Eigen::VectorXd targets) {
  if (states.rows() != targets.size())
    throw std::invalid_argument("RegressionProblem: row count mismatch");
  RegressionProblem prob;
  prob.states = std::move(states);
  prob.targets = std::move(targets);
  for (Eigen::Index i = 0; i < prob.targets.size(); ++i) {
    if (i % 5 == 4)
      prob.validation_idx.push_back(i);
    else
      prob.train_idx.push_back(i);
  }
  return prob;
}

ValueFunctional fit_value_function(const RegressionProblem& prob, const IntervalBasis& basis,
                                   const Payoff& payoff, const FitOptions& opts,
                                   FitDiagnostics* diag) {
  AlsFitter fitter(prob, basis, payoff, opts);
  return fitter.run(diag);
}

std::pair<double, double> domain_bounds(const PathEnsemble& e) {
  if (e.paths() == 0) throw std::invalid_argument("domain_bounds: empty ensemble");
  double a = std::numeric_limits<double>::infinity();
  double b = -std::numeric_limits<double>::infinity();
  for (const auto& states : e.states) {
    a = std::min(a, states.minCoeff());
    b = std::max(b, states.maxCoeff());
  }
  if (!(a < b)) throw std::invalid_argument("domain_bounds: degenerate state range");
  return {a, b};
}

LsResult longstaff_schwartz(const PathEnsemble& ensemble, const Payoff& payoff,
                            const LsOptions& opts) {
  const PathEnsemble* e = &ensemble;
  PathEnsemble sorted_storage;
  if (opts.sorted) {
    sorted_storage = sort_paths(ensemble);
    e = &sorted_storage;
  }
  const int steps = e->steps();
  const Eigen::Index m = e->paths();
  const int d = e->assets();

  LsResult result;
  result.sorted = opts.sorted;
  result.train_seed = e->seed;
  result.payoff = payoff;
  result.value_functions.resize(static_cast<std::size_t>(std::max(0, steps - 1)));
  result.ranks_per_date.resize(result.value_functions.size());

  Eigen::VectorXd cashflow = e->payoffs.col(steps);
  if ((e->payoffs.array() > 0.0).any()) {
    const auto [a, b] = domain_bounds(*e);
    result.domain_a = a;
    result.domain_b = b;
    const IntervalBasis basis(a, b, opts.basis_size);

    for (int n = steps - 1; n >= 1; --n) {
      std::vector<Eigen::Index> itm;
      for (Eigen::Index i = 0; i < m; ++i)
        if (e->payoffs(i, n) > 0.0) itm.push_back(i);
      if (itm.empty()) continue;

      Eigen::MatrixXd states(static_cast<Eigen::Index>(itm.size()), d);
      Eigen::VectorXd targets(static_cast<Eigen::Index>(itm.size()));
      for (std::size_t i = 0; i < itm.size(); ++i) {
        states.row(static_cast<Eigen::Index>(i)) = e->states[static_cast<std::size_t>(n)].row(itm[i]);
        targets(static_cast<Eigen::Index>(i)) = cashflow(itm[i]);
      }

      FitDiagnostics diag;
      auto prob = RegressionProblem::with_split(std::move(states), std::move(targets));
      ValueFunctional vf = fit_value_function(prob, basis, payoff, opts.fit, &diag);

      for (std::size_t i = 0; i < itm.size(); ++i) {
        const double immediate = e->payoffs(itm[i], n);
        if (immediate > diag.fitted_values(static_cast<Eigen::Index>(i))) cashflow(itm[i]) = immediate;
      }
      result.ranks_per_date[static_cast<std::size_t>(n) - 1] = diag.ranks;
      result.value_functions[static_cast<std::size_t>(n) - 1] = std::move(vf);
    }
  }
  result.in_sample_price = cashflow.mean();
  return result;
}

Eigen::Index LsResult::max_rank() const {
  Eigen::Index best = 1;
  for (const auto& ranks : ranks_per_date)
    for (auto r : ranks) best = std::max(best, r);
  return best;
}

double LsResult::average_rank() const {
  double total = 0.0;
  int count = 0;
  for (const auto& ranks : ranks_per_date) {
    if (ranks.empty()) continue;
    Eigen::Index date_max = 1;
    for (auto r : ranks) date_max = std::max(date_max, r);
    total += static_cast<double>(date_max);
    ++count;
  }
  return count ? total / count : 1.0;
}

std::pair<double, double> resimulate_lower(const LsResult& result, const PathEnsemble& fresh) {
  if (fresh.seed == result.train_seed)
    throw std::invalid_argument("resimulate_lower: re-simulation seed equals the training seed");
  const PathEnsemble* e = &fresh;
  PathEnsemble sorted_storage;
  if (result.sorted) {
    sorted_storage = sort_paths(fresh);
    e = &sorted_storage;
  }
  const int steps = e->steps();
  const Eigen::Index m = e->paths();
  const int d = e->assets();

  const int workers = worker_count();
  std::vector<double> sum_part(static_cast<std::size_t>(workers), 0.0);
  std::vector<double> sumsq_part(static_cast<std::size_t>(workers), 0.0);
  parallel_blocks(m, [&](int block, std::int64_t begin, std::int64_t end) {
    std::vector<std::optional<ValueFunctional::Evaluator>> evals(result.value_functions.size());
    for (std::size_t n = 0; n < result.value_functions.size(); ++n)
      if (result.value_functions[n]) evals[n].emplace(*result.value_functions[n]);
    Eigen::VectorXd state(d);
    double total = 0.0, total_sq = 0.0;
    for (std::int64_t i = begin; i < end; ++i) {
      double payout = e->payoffs(i, steps);
      for (int n = 1; n < steps; ++n) {
        const double immediate = e->payoffs(i, n);
        if (immediate <= 0.0) continue;
        const auto& ev = evals[static_cast<std::size_t>(n) - 1];
        if (!ev) continue;  // no regression at this date: never exercise here
        state = e->states[static_cast<std::size_t>(n)].row(i).transpose();
        if (immediate >= (*ev)(state.data(), d)) {
          payout = immediate;
          break;
        }
      }
      total += payout;
      total_sq += payout * payout;
    }
    sum_part[static_cast<std::size_t>(block)] = total;
    sumsq_part[static_cast<std::size_t>(block)] = total_sq;
  });
  double total = 0.0, total_sq = 0.0;
  for (int b = 0; b < workers; ++b) {
    total += sum_part[static_cast<std::size_t>(b)];
    total_sq += sumsq_part[static_cast<std::size_t>(b)];
  }
  const double mean = total / static_cast<double>(m);
  const double var = std::max(0.0, (total_sq - mean * total) / static_cast<double>(m - 1));
  return {mean, std::sqrt(var / static_cast<double>(m))};
}

}  // namespace ttpricer
