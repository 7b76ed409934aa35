#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace fscplan {

// Adam with decoupled weight decay; decay is applied to the parameters
// directly, not through the moment estimates.
template <typename Scalar>
class AdamW {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Options {
    Scalar learning_rate = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar epsilon = Scalar(1e-8);
    Scalar weight_decay = Scalar(0);
  };

  explicit AdamW(Options opts) : opts_(opts) {}

  void step(Vec& params, const Vec& grad) {
    if (m_.size() != params.size()) {
      m_ = Vec::Zero(params.size());
      v_ = Vec::Zero(params.size());
      t_ = 0;
    }
    ++t_;
    m_ = opts_.beta1 * m_ + (Scalar(1) - opts_.beta1) * grad;
    v_ = (opts_.beta2 * v_.array() +
          (Scalar(1) - opts_.beta2) * grad.array().square())
             .matrix();
    Scalar bias1 = Scalar(1) - std::pow(opts_.beta1, Scalar(t_));
    Scalar bias2 = Scalar(1) - std::pow(opts_.beta2, Scalar(t_));
    params.array() -=
        opts_.learning_rate *
        ((m_.array() / bias1) /
             ((v_.array() / bias2).sqrt() + opts_.epsilon) +
         opts_.weight_decay * params.array());
  }

  const Options& options() const { return opts_; }
  Options& options() { return opts_; }

 private:
  Options opts_;
  Vec m_, v_;
  long t_ = 0;
};

// Rescales grad in place so its l2 norm is at most max_norm.
template <typename Vec>
void clip_grad_norm(Vec& grad, double max_norm) {
  double norm = std::sqrt(static_cast<double>(grad.squaredNorm()));
  if (norm > max_norm && norm > 0.0)
    grad *= static_cast<typename Vec::Scalar>(max_norm / norm);
}

}  // namespace fscplan
