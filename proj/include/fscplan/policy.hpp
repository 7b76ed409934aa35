#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fscplan/errors.hpp"
#include "fscplan/nn.hpp"
#include "fscplan/rng.hpp"

namespace fscplan {

// Dense(|Z| -> 64, tanh) -> LSTM(32) -> Dense(64, tanh) encoder with a
// linear actor head over actions and a linear critic head. Parameters live
// in one flat vector addressed through named slices so the optimizer,
// checkpointing, and finite-difference checks all see the same layout.
template <typename Scalar>
class RecurrentPolicyT {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  static constexpr int kHiddenSize = 32;
  static constexpr int kEncoderSize = 64;

  struct Slice {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::ptrdiff_t offset = 0;
  };

  RecurrentPolicyT(int num_observations, int num_actions)
      : num_obs_(num_observations), num_actions_(num_actions) {
    add_slice("enc_in/W", kEncoderSize, num_obs_);
    add_slice("enc_in/b", kEncoderSize, 1);
    add_slice("lstm/Wx", 4 * kHiddenSize, kEncoderSize);
    add_slice("lstm/Wh", 4 * kHiddenSize, kHiddenSize);
    add_slice("lstm/b", 4 * kHiddenSize, 1);
    add_slice("enc_out/W", kEncoderSize, kHiddenSize);
    add_slice("enc_out/b", kEncoderSize, 1);
    add_slice("actor/W", num_actions_, kEncoderSize);
    add_slice("actor/b", num_actions_, 1);
    add_slice("critic/W", 1, kEncoderSize);
    add_slice("critic/b", 1, 1);
    params_ = Vec::Zero(total_);
  }

  int num_observations() const { return num_obs_; }
  int num_actions() const { return num_actions_; }
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

  // Orthogonal recurrent kernel, fan-in uniform dense kernels, zero biases.
  void init_random(SplitRng& rng) {
    auto uniform_fan_in = [&](Eigen::Map<Mat> w) {
      Scalar limit = std::sqrt(Scalar(3) / Scalar(w.cols()));
      for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i)
          w(i, j) = Scalar(2.0 * rng.next_double() - 1.0) * limit;
    };
    uniform_fan_in(slice("enc_in/W"));
    uniform_fan_in(slice("lstm/Wx"));
    uniform_fan_in(slice("enc_out/W"));
    uniform_fan_in(slice("actor/W"));
    uniform_fan_in(slice("critic/W"));
    slice("enc_in/b").setZero();
    slice("lstm/b").setZero();
    slice("enc_out/b").setZero();
    slice("actor/b").setZero();
    slice("critic/b").setZero();

    Eigen::Map<Mat> wh = slice("lstm/Wh");
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

  void check_finite() const {
    for (std::size_t i = 0; i < slices_.size(); ++i)
      if (!slice(static_cast<int>(i)).allFinite())
        throw Error("non-finite parameter in slice '" + slices_[i].name + "'");
  }

  struct Hidden {
    Mat h, c;
  };
  Hidden make_hidden(int batch) const {
    return {Mat::Zero(kHiddenSize, batch), Mat::Zero(kHiddenSize, batch)};
  }

  // One transition for a batch of lanes; hidden is updated in place.
  void forward_batch(const std::vector<int>& obs, Hidden* hidden, Mat* logits,
                     RowVec* values) const {
    int batch = static_cast<int>(obs.size());
    StepCache cache;
    step_forward(obs, hidden->h, hidden->c, &cache);
    hidden->h = cache.h;
    hidden->c = cache.c;
    if (logits) *logits = cache.logits;
    if (values) *values = cache.values;
    (void)batch;
  }

  struct ForwardOut {
    Vec logits;
    Scalar value;
    Hidden hidden;
  };
  ForwardOut forward(int obs, const Hidden& hidden) const {
    check_finite();
    Hidden state{hidden.h, hidden.c};
    Mat logits;
    RowVec values;
    forward_batch({obs}, &state, &logits, &values);
    return {logits.col(0), values(0), std::move(state)};
  }

  // --- segment forward/backward -------------------------------------------

  struct SegmentInput {
    std::vector<std::vector<int>> obs;               // T x B
    std::vector<std::vector<std::uint8_t>> reset_before;  // T x B, optional
    Mat h0, c0;                                      // kHiddenSize x B
    int steps() const { return static_cast<int>(obs.size()); }
    int lanes() const { return obs.empty() ? 0 : static_cast<int>(obs[0].size()); }
  };

  struct SegmentForward {
    std::vector<Mat> e1, gi, gf, gg, go, h_in, c_in, c, tanh_c, h, e2, logits;
    std::vector<RowVec> values;
  };

  void forward_segment(const SegmentInput& in, SegmentForward* out) const {
    int steps = in.steps();
    out->e1.resize(steps);
    out->gi.resize(steps);
    out->gf.resize(steps);
    out->gg.resize(steps);
    out->go.resize(steps);
    out->h_in.resize(steps);
    out->c_in.resize(steps);
    out->c.resize(steps);
    out->tanh_c.resize(steps);
    out->h.resize(steps);
    out->e2.resize(steps);
    out->logits.resize(steps);
    out->values.resize(steps);
    Mat h = in.h0;
    Mat c = in.c0;
    for (int t = 0; t < steps; ++t) {
      if (!in.reset_before.empty()) {
        for (int b = 0; b < in.lanes(); ++b)
          if (in.reset_before[t][b]) {
            h.col(b).setZero();
            c.col(b).setZero();
          }
      }
      StepCache cache;
      step_forward(in.obs[t], h, c, &cache);
      out->e1[t] = std::move(cache.e1);
      out->gi[t] = std::move(cache.gi);
      out->gf[t] = std::move(cache.gf);
      out->gg[t] = std::move(cache.gg);
      out->go[t] = std::move(cache.go);
      out->h_in[t] = std::move(h);
      out->c_in[t] = std::move(c);
      out->c[t] = cache.c;
      out->tanh_c[t] = std::move(cache.tanh_c);
      out->h[t] = cache.h;
      out->e2[t] = std::move(cache.e2);
      out->logits[t] = std::move(cache.logits);
      out->values[t] = std::move(cache.values);
      h = out->h[t];
      c = out->c[t];
    }
  }

  // The loss sees all per-step logits (|A| x B) and values (1 x B), fills
  // the matching gradients, and returns the scalar loss. The returned grad
  // is the exact reverse-mode derivative through every step of the segment.
  using SegmentLoss = std::function<Scalar(
      const std::vector<Mat>& logits, const std::vector<RowVec>& values,
      std::vector<Mat>* dlogits, std::vector<RowVec>* dvalues)>;

  Scalar bptt_gradient(const SegmentInput& in, const SegmentLoss& loss,
                       Vec* grad) const {
    SegmentForward fwd;
    forward_segment(in, &fwd);
    int steps = in.steps();
    int lanes = in.lanes();
    std::vector<Mat> dlogits(steps);
    std::vector<RowVec> dvalues(steps);
    for (int t = 0; t < steps; ++t) {
      dlogits[t] = Mat::Zero(num_actions_, lanes);
      dvalues[t] = RowVec::Zero(lanes);
    }
    Scalar loss_value = loss(fwd.logits, fwd.values, &dlogits, &dvalues);

    *grad = Vec::Zero(total_);
    auto g = [&](const char* name) {
      const Slice& s = slices_[slice_index(name)];
      return Eigen::Map<Mat>(grad->data() + s.offset, s.rows, s.cols);
    };
    auto gW1 = g("enc_in/W");
    auto gb1 = g("enc_in/b");
    auto gWx = g("lstm/Wx");
    auto gWh = g("lstm/Wh");
    auto gb = g("lstm/b");
    auto gW2 = g("enc_out/W");
    auto gb2 = g("enc_out/b");
    auto gWa = g("actor/W");
    auto gba = g("actor/b");
    auto gWc = g("critic/W");
    auto gbc = g("critic/b");
    auto Wx = slice("lstm/Wx");
    auto Wh = slice("lstm/Wh");
    auto W2 = slice("enc_out/W");
    auto Wa = slice("actor/W");
    auto Wc = slice("critic/W");

    const int H = kHiddenSize;
    Mat dh_carry = Mat::Zero(H, lanes);
    Mat dc_carry = Mat::Zero(H, lanes);
    for (int t = steps - 1; t >= 0; --t) {
      // Heads.
      Mat de2 = Wa.transpose() * dlogits[t] + Wc.transpose() * dvalues[t];
      gWa += dlogits[t] * fwd.e2[t].transpose();
      gba += dlogits[t].rowwise().sum();
      gWc += dvalues[t] * fwd.e2[t].transpose();
      gbc(0, 0) += dvalues[t].sum();
      Mat de2pre =
          de2.array() * (Scalar(1) - fwd.e2[t].array().square());
      gW2 += de2pre * fwd.h[t].transpose();
      gb2 += de2pre.rowwise().sum();

      Mat dh = W2.transpose() * de2pre + dh_carry;
      // LSTM cell.
      Mat d_o = dh.array() * fwd.tanh_c[t].array();
      Mat dc = dc_carry.array() +
               dh.array() * fwd.go[t].array() *
                   (Scalar(1) - fwd.tanh_c[t].array().square());
      Mat d_i = dc.array() * fwd.gg[t].array();
      Mat d_g = dc.array() * fwd.gi[t].array();
      Mat d_f = dc.array() * fwd.c_in[t].array();
      Mat dc_prev = dc.array() * fwd.gf[t].array();

      Mat da(4 * H, lanes);
      da.topRows(H) =
          d_i.array() * fwd.gi[t].array() * (Scalar(1) - fwd.gi[t].array());
      da.middleRows(H, H) =
          d_f.array() * fwd.gf[t].array() * (Scalar(1) - fwd.gf[t].array());
      da.middleRows(2 * H, H) =
          d_g.array() * (Scalar(1) - fwd.gg[t].array().square());
      da.bottomRows(H) =
          d_o.array() * fwd.go[t].array() * (Scalar(1) - fwd.go[t].array());

      gWx += da * fwd.e1[t].transpose();
      gWh += da * fwd.h_in[t].transpose();
      gb += da.rowwise().sum();

      Mat de1 = Wx.transpose() * da;
      Mat de1pre =
          de1.array() * (Scalar(1) - fwd.e1[t].array().square());
      for (int b = 0; b < lanes; ++b) gW1.col(in.obs[t][b]) += de1pre.col(b);
      gb1 += de1pre.rowwise().sum();

      dh_carry = Wh.transpose() * da;
      dc_carry = dc_prev;
      if (!in.reset_before.empty()) {
        for (int b = 0; b < lanes; ++b)
          if (in.reset_before[t][b]) {
            dh_carry.col(b).setZero();
            dc_carry.col(b).setZero();
          }
      }
      if (!dh_carry.allFinite())
        throw Error("non-finite gradient at segment step " + std::to_string(t));
    }
    return loss_value;
  }

 private:
  struct StepCache {
    Mat e1, gi, gf, gg, go, c, tanh_c, h, e2, logits;
    RowVec values;
  };

  void step_forward(const std::vector<int>& obs, const Mat& h_in,
                    const Mat& c_in, StepCache* out) const {
    int batch = static_cast<int>(obs.size());
    auto W1 = slice("enc_in/W");
    auto b1 = slice("enc_in/b");
    auto Wx = slice("lstm/Wx");
    auto Wh = slice("lstm/Wh");
    auto b = slice("lstm/b");
    auto W2 = slice("enc_out/W");
    auto b2 = slice("enc_out/b");
    auto Wa = slice("actor/W");
    auto ba = slice("actor/b");
    auto Wc = slice("critic/W");
    auto bc = slice("critic/b");

    const int H = kHiddenSize;
    Mat e1(kEncoderSize, batch);
    for (int bl = 0; bl < batch; ++bl) e1.col(bl) = W1.col(obs[bl]);
    e1.colwise() += b1.col(0);
    e1 = e1.array().tanh();

    Mat gates = Wx * e1 + Wh * h_in;
    gates.colwise() += b.col(0);
    out->gi = (Scalar(1) /
               (Scalar(1) + (-gates.topRows(H)).array().exp()))
                  .matrix();
    out->gf = (Scalar(1) /
               (Scalar(1) + (-gates.middleRows(H, H)).array().exp()))
                  .matrix();
    out->gg = gates.middleRows(2 * H, H).array().tanh().matrix();
    out->go = (Scalar(1) /
               (Scalar(1) + (-gates.bottomRows(H)).array().exp()))
                  .matrix();
    out->c = (out->gf.array() * c_in.array() +
              out->gi.array() * out->gg.array())
                 .matrix();
    out->tanh_c = out->c.array().tanh().matrix();
    out->h = (out->go.array() * out->tanh_c.array()).matrix();

    out->e2 = (W2 * out->h).colwise() + b2.col(0);
    out->e2 = out->e2.array().tanh();
    out->logits = (Wa * out->e2).colwise() + ba.col(0);
    out->values = (Wc * out->e2).colwise() + bc.col(0);
    out->e1 = std::move(e1);
  }

  void add_slice(std::string name, int rows, int cols) {
    slices_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::ptrdiff_t>(rows) * cols;
  }

  int num_obs_;
  int num_actions_;
  std::vector<Slice> slices_;
  std::ptrdiff_t total_ = 0;
  Vec params_;
};

using RecurrentPolicy = RecurrentPolicyT<double>;

// Samples from softmax(logits); returns the action and its log-probability.
template <typename Derived>
std::pair<int, typename Derived::Scalar> sample_action(
    const Eigen::MatrixBase<Derived>& logits, SplitRng& rng) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logp = log_softmax_columns(logits);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = logp.array().exp();
  int a = rng.sample_index(p, static_cast<int>(p.size()));
  return {a, logp(a)};
}

// Restricts the distribution to the legal subset before sampling.
template <typename Derived>
std::pair<int, typename Derived::Scalar> sample_action_masked(
    const Eigen::MatrixBase<Derived>& logits, const std::vector<int>& legal,
    SplitRng& rng) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sub(legal.size());
  for (std::size_t i = 0; i < legal.size(); ++i) sub(i) = logits(legal[i]);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logp = log_softmax_columns(sub);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = logp.array().exp();
  int k = rng.sample_index(p, static_cast<int>(p.size()));
  return {legal[k], logp(k)};
}

}  // namespace fscplan
