#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace fscplan {

// Column-wise softmax helpers shared by the policy and the surrogate
// network. Inputs are (dim x batch); every function is numerically shifted.

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic,
                            Eigen::Dynamic>;
  Mat shifted =
      logits.rowwise() - logits.colwise().maxCoeff();
  Mat e = shifted.array().exp();
  return e.array().rowwise() / e.colwise().sum().array();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
log_softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic,
                            Eigen::Dynamic>;
  Mat shifted = logits.rowwise() - logits.colwise().maxCoeff();
  auto log_z = shifted.array().exp().colwise().sum().log();
  return shifted.array().rowwise() - log_z;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  return softmax_columns(logits);
}

// Shannon entropy of softmax(logits), one value per column.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> entropy_columns(
    const Eigen::MatrixBase<Derived>& logits) {
  auto logp = log_softmax_columns(logits);
  auto p = logp.array().exp();
  return -(p * logp.array()).colwise().sum();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace fscplan
