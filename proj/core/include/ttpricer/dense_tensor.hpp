#pragma once

#include <Eigen/Core>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace ttpricer {

/// Dense tensor with entries stored flat in row-major multi-index order:
/// flat(nu_1,...,nu_d) = ((nu_1 * p_2 + nu_2) * p_3 + nu_3) * ... + nu_d,
/// i.e. the last mode index varies fastest. This ordering is fixed
/// library-wide so that dense oracles and TT contractions agree.
class DenseTensor {
 public:
  explicit DenseTensor(std::vector<Eigen::Index> shape)
      : shape_(std::move(shape)), entries_(checked_size(shape_), 0.0) {}

  DenseTensor(std::vector<Eigen::Index> shape, std::vector<double> entries)
      : shape_(std::move(shape)), entries_(std::move(entries)) {
    if (static_cast<Eigen::Index>(entries_.size()) != checked_size(shape_))
      throw std::invalid_argument("DenseTensor: entry count does not match shape");
  }

  int order() const { return static_cast<int>(shape_.size()); }
  const std::vector<Eigen::Index>& shape() const { return shape_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(entries_.size()); }

  double operator[](Eigen::Index flat) const { return entries_[static_cast<std::size_t>(flat)]; }
  double& operator[](Eigen::Index flat) { return entries_[static_cast<std::size_t>(flat)]; }

  Eigen::Index flat_index(std::span<const Eigen::Index> idx) const {
    Eigen::Index flat = 0;
    for (std::size_t j = 0; j < shape_.size(); ++j) flat = flat * shape_[j] + idx[j];
    return flat;
  }
  double operator()(std::span<const Eigen::Index> idx) const { return entries_[flat_index(idx)]; }
  double& operator()(std::span<const Eigen::Index> idx) { return entries_[flat_index(idx)]; }

  const std::vector<double>& data() const { return entries_; }
  std::vector<double>& data() { return entries_; }

  double frobenius_norm() const {
    return Eigen::Map<const Eigen::VectorXd>(entries_.data(), size()).norm();
  }

  /// Advances a multi-index through row-major order; returns false after the last one.
  static bool next_index(std::vector<Eigen::Index>& idx, const std::vector<Eigen::Index>& shape) {
    for (int j = static_cast<int>(shape.size()) - 1; j >= 0; --j) {
      if (++idx[j] < shape[j]) return true;
      idx[j] = 0;
    }
    return false;
  }

 private:
  static Eigen::Index checked_size(const std::vector<Eigen::Index>& shape) {
    if (shape.empty()) throw std::invalid_argument("DenseTensor: empty shape");
    Eigen::Index n = 1;
    for (auto p : shape) {
      if (p <= 0) throw std::invalid_argument("DenseTensor: nonpositive mode dimension");
      n *= p;
    }
    return n;
  }

  std::vector<Eigen::Index> shape_;
  std::vector<double> entries_;
};

}  // namespace ttpricer
