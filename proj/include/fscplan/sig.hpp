#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "fscplan/dataset.hpp"
#include "fscplan/errors.hpp"
#include "fscplan/model.hpp"
#include "fscplan/nn.hpp"
#include "fscplan/rng.hpp"

namespace fscplan {

// Cosine interpolation from tau_start down to tau_end.
struct TemperatureSchedule {
  double tau_start = 1.0;
  double tau_end = 0.1;
  int total_epochs = 1;

  double value(int epoch) const {
    if (epoch <= 0) return tau_start;
    if (epoch >= total_epochs) return tau_end;
    double phase = M_PI * static_cast<double>(epoch) /
                   static_cast<double>(total_epochs);
    return tau_end + (tau_start - tau_end) * 0.5 * (1.0 + std::cos(phase));
  }
};

// y = softmax((p + g) / tau) with i.i.d. standard Gumbel g; differentiable
// in p for fixed g, and argmax(y) is an exact categorical sample from
// softmax(p).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
gumbel_softmax_sample(const Eigen::MatrixBase<Derived>& logits, double tau,
                      SplitRng& rng) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > 0.0)) throw Error("gumbel softmax needs tau > 0");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> shifted(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    shifted(i) =
        (logits(i) + static_cast<Scalar>(rng.next_gumbel())) / Scalar(tau);
  return softmax_columns(shifted);
}

// Surrogate network whose only recurrent feedback is the categorical memory
// vector: [one-hot z; m] feeds a dense body into a GRU cell whose previous
// hidden state is an embedding of m, the action head reads the fresh hidden
// state, and the memory encoder produces the logits of the next memory
// node. With one-hot m the whole step is a pure function of (node,
// observation), which is what makes the controller read-off exact.
template <typename Scalar>
class SigNetworkT {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Slice {
    std::string name;
    int rows = 0, cols = 0;
    std::ptrdiff_t offset = 0;
  };

  SigNetworkT(int num_observations, int num_actions, int max_nodes,
              int body_size = 64, int hidden_size = 32)
      : num_obs_(num_observations),
        num_actions_(num_actions),
        num_nodes_(max_nodes),
        body_(body_size),
        hidden_(hidden_size) {
    add_slice("body/Wz", body_, num_obs_);
    add_slice("body/Wm", body_, num_nodes_);
    add_slice("body/b", body_, 1);
    add_slice("embed/W", hidden_, num_nodes_);
    add_slice("embed/b", hidden_, 1);
    add_slice("gru/Wx", 3 * hidden_, body_);
    add_slice("gru/Wh", 3 * hidden_, hidden_);
    add_slice("gru/bx", 3 * hidden_, 1);
    add_slice("gru/bh", 3 * hidden_, 1);
    add_slice("action/W", num_actions_, hidden_);
    add_slice("action/b", num_actions_, 1);
    add_slice("memory/W", num_nodes_, hidden_);
    add_slice("memory/b", num_nodes_, 1);
    params_ = Vec::Zero(total_);
  }

  int num_observations() const { return num_obs_; }
  int num_actions() const { return num_actions_; }
  int num_nodes() const { return num_nodes_; }
  int body_size() const { return body_; }
  int hidden_size() const { return hidden_; }
  const std::vector<Slice>& slices() const { return slices_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Eigen::Map<Mat> slice(int i) {
    const Slice& s = slices_[i];
    return Eigen::Map<Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Mat> slice(int i) const {
    const Slice& s = slices_[i];
    return Eigen::Map<const Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<Mat> slice(const std::string& name) {
    return slice(slice_index(name));
  }
  Eigen::Map<const Mat> slice(const std::string& name) const {
    return slice(slice_index(name));
  }
  int slice_index(const std::string& name) const {
    for (std::size_t i = 0; i < slices_.size(); ++i)
      if (slices_[i].name == name) return static_cast<int>(i);
    throw Error("unknown parameter slice '" + name + "'");
  }

  void init_random(SplitRng& rng) {
    auto uniform_fan_in = [&](Eigen::Map<Mat> w) {
      Scalar limit = std::sqrt(Scalar(3) / Scalar(w.cols()));
      for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i)
          w(i, j) = Scalar(2.0 * rng.next_double() - 1.0) * limit;
    };
    uniform_fan_in(slice("body/Wz"));
    uniform_fan_in(slice("body/Wm"));
    uniform_fan_in(slice("embed/W"));
    uniform_fan_in(slice("gru/Wx"));
    uniform_fan_in(slice("action/W"));
    uniform_fan_in(slice("memory/W"));
    slice("body/b").setZero();
    slice("embed/b").setZero();
    slice("gru/bx").setZero();
    slice("gru/bh").setZero();
    slice("action/b").setZero();
    slice("memory/b").setZero();
    Eigen::Map<Mat> wh = slice("gru/Wh");
    Mat gauss(wh.rows(), wh.cols());
    for (int j = 0; j < gauss.cols(); ++j)
      for (int i = 0; i < gauss.rows(); ++i)
        gauss(i, j) = Scalar(rng.next_gaussian());
    Eigen::HouseholderQR<Mat> qr(gauss);
    Mat q = qr.householderQ() * Mat::Identity(wh.rows(), wh.cols());
    Mat r = qr.matrixQR().topRows(wh.cols());
    for (int j = 0; j < wh.cols(); ++j)
      if (r(j, j) < Scalar(0)) q.col(j) = -q.col(j);
    wh = q;
  }

  // One cell step for a batch: m (|N| x B) and observation ids to action
  // logits, memory logits, and the hidden state. `drop_mask` scales the
  // embedded memory (recurrent dropout); pass nullptr at inference.
  struct StepOut {
    Mat u, embed_raw, h_prev, gi, gh, r, zg, cand, h, action_logits,
        memory_logits;
  };
  void step(const std::vector<int>& obs, const Mat& m, const Mat* drop_mask,
            StepOut* out) const {
    int batch = static_cast<int>(obs.size());
    auto Wz = slice("body/Wz");
    auto Wm = slice("body/Wm");
    auto bb = slice("body/b");
    auto We = slice("embed/W");
    auto be = slice("embed/b");
    auto Wx = slice("gru/Wx");
    auto Wh = slice("gru/Wh");
    auto bx = slice("gru/bx");
    auto bh = slice("gru/bh");
    auto Wa = slice("action/W");
    auto ba = slice("action/b");
    auto Wp = slice("memory/W");
    auto bp = slice("memory/b");
    const int H = hidden_;

    Mat u(body_, batch);
    for (int b = 0; b < batch; ++b) u.col(b) = Wz.col(obs[b]);
    u += Wm * m;
    u.colwise() += bb.col(0);
    out->u = u.array().tanh();

    out->embed_raw = ((We * m).colwise() + be.col(0)).array().tanh();
    out->h_prev = drop_mask
                      ? (out->embed_raw.array() * drop_mask->array()).matrix()
                      : out->embed_raw;

    out->gi = (Wx * out->u).colwise() + bx.col(0);
    out->gh = (Wh * out->h_prev).colwise() + bh.col(0);
    out->r = (Scalar(1) / (Scalar(1) + (-(out->gi.topRows(H) +
                                          out->gh.topRows(H)))
                                           .array()
                                           .exp()))
                 .matrix();
    out->zg = (Scalar(1) / (Scalar(1) + (-(out->gi.middleRows(H, H) +
                                           out->gh.middleRows(H, H)))
                                            .array()
                                            .exp()))
                  .matrix();
    out->cand = (out->gi.bottomRows(H).array() +
                 out->r.array() * out->gh.bottomRows(H).array())
                    .tanh()
                    .matrix();
    out->h = ((Scalar(1) - out->zg.array()) * out->cand.array() +
              out->zg.array() * out->h_prev.array())
                 .matrix();

    out->action_logits = (Wa * out->h).colwise() + ba.col(0);
    out->memory_logits = (Wp * out->h).colwise() + bp.col(0);
  }

 private:
  void add_slice(std::string name, int rows, int cols) {
    slices_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::ptrdiff_t>(rows) * cols;
  }

  int num_obs_, num_actions_, num_nodes_, body_, hidden_;
  std::vector<Slice> slices_;
  std::ptrdiff_t total_ = 0;
  Vec params_;
};

using SigNetwork = SigNetworkT<double>;

struct SigConfig {
  int max_nodes = 3;
  int body_size = 64;
  int hidden_size = 32;
  int epochs = 200;
  int batch_sequences = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double tau_start = 1.0;
  double tau_end = 0.1;
  double dropout = 0.2;
  double prune_epsilon = 1e-4;  // probability floor in the inferred FSC
  std::uint64_t seed = 0;
};

// Padded minibatch of sequences with pre-drawn noise so the loss is a
// deterministic function of the parameters.
struct SigBatch {
  std::vector<std::vector<int>> obs;      // T x B (padded)
  std::vector<std::vector<int>> actions;  // T x B
  std::vector<std::vector<std::uint8_t>> valid;
  std::vector<Eigen::MatrixXd> gumbel;  // per step, |N| x B
  Eigen::MatrixXd drop_mask;            // hidden x B, shared across steps
  int steps() const { return static_cast<int>(obs.size()); }
  int lanes() const { return obs.empty() ? 0 : static_cast<int>(obs[0].size()); }
  long valid_steps() const;
};

// Mean cross entropy between dataset actions and the action head, unrolled
// with the Gumbel sample as the only recurrent feedback. Gradient is exact
// reverse-mode for the given fixed noise.
double sig_loss(const SigNetwork& net, const SigBatch& batch, double tau);
double sig_loss_and_gradient(const SigNetwork& net, const SigBatch& batch,
                             double tau, Eigen::VectorXd* grad);

struct SigTrainReport {
  double final_cross_entropy = 0.0;
  double action_agreement = 0.0;
  int epochs = 0;
};

// Behavior-clones the dataset into a fresh or warm-started network.
SigTrainReport train_sig(const TrajectoryDataset& data, const SigConfig& cfg,
                         SigNetwork* net);

// Deterministic read-off: for every (node, observation) the action
// distribution and softmax of the memory logits, probabilities below
// prune_epsilon dropped and renormalized.
Fsc infer_fsc(const SigNetwork& net, double prune_epsilon = 1e-4);

// Removes memory nodes unreachable from (n0, O(s0)) through eta supports
// and the model's reachable observations; ids are compacted in order.
Fsc prune_unreachable(const Fsc& fsc, const Pomdp& model);

}  // namespace fscplan
