#include "fscplan/sig.hpp"

#include <algorithm>
#include <deque>

#include "fscplan/optim.hpp"

namespace fscplan {

long SigBatch::valid_steps() const {
  long n = 0;
  for (const auto& row : valid)
    for (std::uint8_t v : row) n += v;
  return n;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Unrolled {
  std::vector<SigNetwork::StepOut> steps;
  std::vector<Mat> m;  // memory inputs per step, |N| x B
  double loss = 0.0;
};

// Shared forward pass; with `tau <= 0` the feedback is the plain softmax of
// the memory logits (inference/evaluation mode) and noise is ignored.
void unroll(const SigNetwork& net, const SigBatch& batch, double tau,
            bool use_dropout, Unrolled* out) {
  int steps = batch.steps();
  int lanes = batch.lanes();
  out->steps.resize(steps);
  out->m.resize(steps);
  Mat m = Mat::Zero(net.num_nodes(), lanes);
  m.row(0).setOnes();  // initial memory node 0
  double inv_n = 1.0 / static_cast<double>(std::max<long>(1, batch.valid_steps()));
  out->loss = 0.0;
  const Mat* mask = use_dropout ? &batch.drop_mask : nullptr;
  for (int t = 0; t < steps; ++t) {
    out->m[t] = m;
    net.step(batch.obs[t], m, mask, &out->steps[t]);
    const Mat& logits = out->steps[t].action_logits;
    Mat logp = log_softmax_columns(logits);
    for (int b = 0; b < lanes; ++b)
      if (batch.valid[t][b])
        out->loss -= inv_n * logp(batch.actions[t][b], b);
    // Next memory vector.
    if (t + 1 < steps) {
      if (tau > 0.0) {
        Mat noisy =
            (out->steps[t].memory_logits + batch.gumbel[t]) / tau;
        m = softmax_columns(noisy);
      } else {
        m = softmax_columns(out->steps[t].memory_logits);
      }
    }
  }
}

}  // namespace

double sig_loss(const SigNetwork& net, const SigBatch& batch, double tau) {
  Unrolled fwd;
  unroll(net, batch, tau, true, &fwd);
  return fwd.loss;
}

double sig_loss_and_gradient(const SigNetwork& net, const SigBatch& batch,
                             double tau, Eigen::VectorXd* grad) {
  Unrolled fwd;
  unroll(net, batch, tau, true, &fwd);
  int steps = batch.steps();
  int lanes = batch.lanes();
  const int H = net.hidden_size();
  double inv_n = 1.0 / static_cast<double>(std::max<long>(1, batch.valid_steps()));

  grad->setZero(net.params().size());
  auto g = [&](const char* name) {
    int i = net.slice_index(name);
    const auto& s = net.slices()[i];
    return Eigen::Map<Mat>(grad->data() + s.offset, s.rows, s.cols);
  };
  auto gWz = g("body/Wz");
  auto gWm = g("body/Wm");
  auto gbb = g("body/b");
  auto gWe = g("embed/W");
  auto gbe = g("embed/b");
  auto gWx = g("gru/Wx");
  auto gWh = g("gru/Wh");
  auto gbx = g("gru/bx");
  auto gbh = g("gru/bh");
  auto gWa = g("action/W");
  auto gba = g("action/b");
  auto gWp = g("memory/W");
  auto gbp = g("memory/b");
  auto Wm = net.slice("body/Wm");
  auto We = net.slice("embed/W");
  auto Wx = net.slice("gru/Wx");
  auto Wh = net.slice("gru/Wh");
  auto Wa = net.slice("action/W");
  auto Wp = net.slice("memory/W");

  Mat dm_next = Mat::Zero(net.num_nodes(), lanes);
  for (int t = steps - 1; t >= 0; --t) {
    const SigNetwork::StepOut& s = fwd.steps[t];
    // Action cross entropy.
    Mat dlogits = Mat::Zero(net.num_actions(), lanes);
    Mat probs = softmax_columns(s.action_logits);
    for (int b = 0; b < lanes; ++b)
      if (batch.valid[t][b]) {
        dlogits.col(b) = inv_n * probs.col(b);
        dlogits(batch.actions[t][b], b) -= inv_n;
      }
    // Feedback gradient through y = softmax((p + g)/tau).
    Mat dp = Mat::Zero(net.num_nodes(), lanes);
    if (t + 1 < steps && tau > 0.0) {
      const Mat& y = fwd.m[t + 1];
      for (int b = 0; b < lanes; ++b) {
        double dot = dm_next.col(b).dot(y.col(b));
        dp.col(b) =
            (y.col(b).array() * (dm_next.col(b).array() - dot)) / tau;
      }
    }

    gWa += dlogits * s.h.transpose();
    gba += dlogits.rowwise().sum();
    gWp += dp * s.h.transpose();
    gbp += dp.rowwise().sum();
    Mat dh = Wa.transpose() * dlogits + Wp.transpose() * dp;

    // GRU cell backward.
    Mat dz = dh.array() * (s.h_prev.array() - s.cand.array());
    Mat dn = dh.array() * (1.0 - s.zg.array());
    Mat dh_prev = dh.array() * s.zg.array();
    Mat dn_pre = dn.array() * (1.0 - s.cand.array().square());
    Mat dr = dn_pre.array() * s.gh.bottomRows(H).array();
    Mat dgate_r = dr.array() * s.r.array() * (1.0 - s.r.array());
    Mat dgate_z = dz.array() * s.zg.array() * (1.0 - s.zg.array());

    Mat dgi(3 * H, lanes), dgh(3 * H, lanes);
    dgi.topRows(H) = dgate_r;
    dgi.middleRows(H, H) = dgate_z;
    dgi.bottomRows(H) = dn_pre;
    dgh.topRows(H) = dgate_r;
    dgh.middleRows(H, H) = dgate_z;
    dgh.bottomRows(H) = dn_pre.array() * s.r.array();

    gWx += dgi * s.u.transpose();
    gbx += dgi.rowwise().sum();
    gWh += dgh * s.h_prev.transpose();
    gbh += dgh.rowwise().sum();
    Mat du = Wx.transpose() * dgi;
    dh_prev += Wh.transpose() * dgh;

    // Body dense.
    Mat du_pre = du.array() * (1.0 - s.u.array().square());
    for (int b = 0; b < lanes; ++b) gWz.col(batch.obs[t][b]) += du_pre.col(b);
    gWm += du_pre * fwd.m[t].transpose();
    gbb += du_pre.rowwise().sum();
    Mat dm = Wm.transpose() * du_pre;

    // Memory embedding (with the recurrent dropout mask).
    Mat dembed = dh_prev.array() * batch.drop_mask.array();
    Mat dembed_pre = dembed.array() * (1.0 - s.embed_raw.array().square());
    gWe += dembed_pre * fwd.m[t].transpose();
    gbe += dembed_pre.rowwise().sum();
    dm += We.transpose() * dembed_pre;

    dm_next = dm;  // becomes the feedback gradient of step t-1
  }
  return fwd.loss;
}

namespace {

SigBatch make_batch(const TrajectoryDataset& data,
                    const std::vector<int>& indices, int num_nodes,
                    int hidden, double dropout, SplitRng* noise_rng) {
  int lanes = static_cast<int>(indices.size());
  int steps = 0;
  for (int idx : indices)
    steps = std::max(steps, static_cast<int>(data.sequences[idx].size()));
  SigBatch batch;
  batch.obs.assign(steps, std::vector<int>(lanes, 0));
  batch.actions.assign(steps, std::vector<int>(lanes, 0));
  batch.valid.assign(steps, std::vector<std::uint8_t>(lanes, 0));
  for (int b = 0; b < lanes; ++b) {
    const auto& seq = data.sequences[indices[b]];
    for (std::size_t t = 0; t < seq.size(); ++t) {
      batch.obs[t][b] = seq[t].first;
      batch.actions[t][b] = seq[t].second;
      batch.valid[t][b] = 1;
    }
  }
  batch.drop_mask = Mat::Ones(hidden, lanes);
  if (noise_rng) {
    batch.gumbel.resize(steps);
    for (int t = 0; t < steps; ++t) {
      batch.gumbel[t].resize(num_nodes, lanes);
      for (int b = 0; b < lanes; ++b)
        for (int i = 0; i < num_nodes; ++i)
          batch.gumbel[t](i, b) = noise_rng->next_gumbel();
    }
    if (dropout > 0.0) {
      double keep = 1.0 - dropout;
      for (int b = 0; b < lanes; ++b)
        for (int i = 0; i < hidden; ++i)
          batch.drop_mask(i, b) =
              noise_rng->next_double() < keep ? 1.0 / keep : 0.0;
    }
  } else {
    batch.gumbel.resize(steps);
    for (int t = 0; t < steps; ++t)
      batch.gumbel[t] = Mat::Zero(num_nodes, lanes);
  }
  return batch;
}

}  // namespace

SigTrainReport train_sig(const TrajectoryDataset& data, const SigConfig& cfg,
                         SigNetwork* net) {
  if (data.sequences.empty()) throw Error("sig training needs sequences");
  if (net->num_observations() != data.num_observations ||
      net->num_actions() != data.num_actions)
    throw Error("network signature does not match the dataset");
  SplitRng master(cfg.seed);
  SplitRng shuffle_rng = master.derive(1);
  SplitRng noise_rng = master.derive(2);
  AdamW<double> adam({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8,
                      0.0});
  TemperatureSchedule schedule{cfg.tau_start, cfg.tau_end,
                               std::max(1, cfg.epochs)};
  int count = static_cast<int>(data.sequences.size());
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double tau = schedule.value(epoch);
    for (int i = count - 1; i > 0; --i) {
      int j = shuffle_rng.next_int(i + 1);
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < count; start += cfg.batch_sequences) {
      int lanes = std::min(cfg.batch_sequences, count - start);
      std::vector<int> indices(order.begin() + start,
                               order.begin() + start + lanes);
      SigBatch batch = make_batch(data, indices, net->num_nodes(),
                                  net->hidden_size(), cfg.dropout, &noise_rng);
      Eigen::VectorXd grad;
      double loss = sig_loss_and_gradient(*net, batch, tau, &grad);
      if (!std::isfinite(loss))
        throw Error("non-finite surrogate loss in epoch " +
                    std::to_string(epoch));
      adam.step(net->params(), grad);
    }
  }

  // Final report with deterministic mean feedback, no noise or dropout.
  SigTrainReport report;
  report.epochs = cfg.epochs;
  std::vector<int> all(count);
  for (int i = 0; i < count; ++i) all[i] = i;
  long agree = 0, total = 0;
  double ce = 0.0;
  for (int start = 0; start < count; start += cfg.batch_sequences) {
    int lanes = std::min(cfg.batch_sequences, count - start);
    std::vector<int> indices(all.begin() + start, all.begin() + start + lanes);
    SigBatch batch = make_batch(data, indices, net->num_nodes(),
                                net->hidden_size(), 0.0, nullptr);
    Unrolled fwd;
    unroll(*net, batch, 0.0, false, &fwd);
    ce += fwd.loss * static_cast<double>(batch.valid_steps());
    for (int t = 0; t < batch.steps(); ++t) {
      Eigen::Index best;
      for (int b = 0; b < lanes; ++b)
        if (batch.valid[t][b]) {
          fwd.steps[t].action_logits.col(b).maxCoeff(&best);
          agree += best == batch.actions[t][b] ? 1 : 0;
          ++total;
        }
    }
  }
  report.final_cross_entropy = total > 0 ? ce / static_cast<double>(total) : 0.0;
  report.action_agreement =
      total > 0 ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
  return report;
}

Fsc infer_fsc(const SigNetwork& net, double prune_epsilon) {
  int nodes = net.num_nodes();
  int num_obs = net.num_observations();
  Fsc fsc;
  fsc.num_nodes = nodes;
  fsc.num_observations = num_obs;
  fsc.num_actions = net.num_actions();
  fsc.initial_node = 0;
  fsc.delta.resize(static_cast<std::size_t>(nodes) * num_obs);
  fsc.eta.resize(static_cast<std::size_t>(nodes) * num_obs);

  // One batched forward over every (node, observation) pair.
  int batch_size = nodes * num_obs;
  std::vector<int> obs(batch_size);
  Mat m = Mat::Zero(nodes, batch_size);
  for (int n = 0; n < nodes; ++n)
    for (int z = 0; z < num_obs; ++z) {
      int col = n * num_obs + z;
      obs[col] = z;
      m(n, col) = 1.0;
    }
  SigNetwork::StepOut out;
  net.step(obs, m, nullptr, &out);
  Mat action_probs = softmax_columns(out.action_logits);
  Mat node_probs = softmax_columns(out.memory_logits);

  auto truncate = [&](const Eigen::VectorXd& probs, auto&& emit) {
    double kept = 0.0;
    double best = probs.maxCoeff();
    for (int i = 0; i < probs.size(); ++i)
      if (probs(i) >= prune_epsilon || probs(i) == best) kept += probs(i);
    for (int i = 0; i < probs.size(); ++i)
      if (probs(i) >= prune_epsilon || probs(i) == best)
        emit(i, probs(i) / kept);
  };

  for (int n = 0; n < nodes; ++n)
    for (int z = 0; z < num_obs; ++z) {
      int col = n * num_obs + z;
      ActionDist& d = fsc.delta[fsc.row(n, z)];
      truncate(action_probs.col(col), [&](int a, double p) {
        d.actions.push_back(a);
        d.probs.push_back(p);
      });
      NodeDist& e = fsc.eta[fsc.row(n, z)];
      truncate(node_probs.col(col), [&](int n2, double p) {
        e.nodes.push_back(n2);
        e.probs.push_back(p);
      });
    }
  validate(fsc);
  return fsc;
}

Fsc prune_unreachable(const Fsc& fsc, const Pomdp& model) {
  // Observations the model can ever produce.
  std::vector<std::uint8_t> state_seen(model.num_states, 0);
  std::deque<int> squeue = {model.initial_state};
  state_seen[model.initial_state] = 1;
  while (!squeue.empty()) {
    int s = squeue.front();
    squeue.pop_front();
    for (int a : model.legal[s])
      for (int s2 : model.transition(s, a).ids)
        if (!state_seen[s2]) {
          state_seen[s2] = 1;
          squeue.push_back(s2);
        }
  }
  std::vector<int> reachable_obs;
  {
    std::vector<std::uint8_t> seen(model.num_observations, 0);
    for (int s = 0; s < model.num_states; ++s)
      if (state_seen[s] && !seen[model.obs_of[s]]) {
        seen[model.obs_of[s]] = 1;
        reachable_obs.push_back(model.obs_of[s]);
      }
  }

  // Pair BFS through eta supports.
  std::vector<std::uint8_t> pair_seen(
      static_cast<std::size_t>(fsc.num_nodes) * fsc.num_observations, 0);
  std::vector<std::uint8_t> node_kept(fsc.num_nodes, 0);
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int n, int z) {
    std::size_t key = fsc.row(n, z);
    if (pair_seen[key]) return;
    pair_seen[key] = 1;
    node_kept[n] = 1;
    queue.emplace_back(n, z);
  };
  push(fsc.initial_node, model.obs_of[model.initial_state]);
  while (!queue.empty()) {
    auto [n, z] = queue.front();
    queue.pop_front();
    std::vector<int> successors;
    if (fsc.combined()) {
      const JointDist& joint = fsc.joint_dist(n, z);
      for (int k = 0; k < joint.size(); ++k)
        if (joint.probs[k] > 0.0) successors.push_back(joint.nodes[k]);
    } else {
      const NodeDist& e = fsc.node_dist(n, z);
      for (std::size_t k = 0; k < e.nodes.size(); ++k)
        if (e.probs[k] > 0.0) successors.push_back(e.nodes[k]);
    }
    for (int n2 : successors)
      for (int z2 : reachable_obs) push(n2, z2);
  }

  std::vector<int> new_id(fsc.num_nodes, -1);
  int kept = 0;
  for (int n = 0; n < fsc.num_nodes; ++n)
    if (node_kept[n]) new_id[n] = kept++;
  if (kept == fsc.num_nodes) return fsc;

  Fsc out;
  out.num_nodes = kept;
  out.num_observations = fsc.num_observations;
  out.num_actions = fsc.num_actions;
  out.initial_node = new_id[fsc.initial_node];
  auto remap_joint = [&](const JointDist& joint) {
    JointDist d;
    double total = 0.0;
    for (int k = 0; k < joint.size(); ++k)
      if (new_id[joint.nodes[k]] >= 0) total += joint.probs[k];
    if (total <= 0.0) return d;
    for (int k = 0; k < joint.size(); ++k)
      if (new_id[joint.nodes[k]] >= 0) {
        d.nodes.push_back(new_id[joint.nodes[k]]);
        d.actions.push_back(joint.actions[k]);
        d.probs.push_back(joint.probs[k] / total);
      }
    return d;
  };
  if (fsc.combined()) {
    out.sigma.resize(static_cast<std::size_t>(kept) * out.num_observations);
    for (int n = 0; n < fsc.num_nodes; ++n) {
      if (new_id[n] < 0) continue;
      for (int z = 0; z < fsc.num_observations; ++z)
        out.sigma[out.row(new_id[n], z)] = remap_joint(fsc.joint_dist(n, z));
    }
  } else {
    out.delta.resize(static_cast<std::size_t>(kept) * out.num_observations);
    out.eta.resize(static_cast<std::size_t>(kept) * out.num_observations);
    for (int n = 0; n < fsc.num_nodes; ++n) {
      if (new_id[n] < 0) continue;
      for (int z = 0; z < fsc.num_observations; ++z) {
        const ActionDist& d = fsc.action_dist(n, z);
        const NodeDist& e = fsc.node_dist(n, z);
        if (d.empty()) continue;
        NodeDist remapped;
        double total = 0.0;
        for (std::size_t k = 0; k < e.nodes.size(); ++k)
          if (new_id[e.nodes[k]] >= 0) total += e.probs[k];
        if (total <= 0.0) {
          // Row only fires at pairs the model can never produce.
          remapped.nodes.push_back(new_id[n]);
          remapped.probs.push_back(1.0);
        } else {
          for (std::size_t k = 0; k < e.nodes.size(); ++k)
            if (new_id[e.nodes[k]] >= 0) {
              remapped.nodes.push_back(new_id[e.nodes[k]]);
              remapped.probs.push_back(e.probs[k] / total);
            }
        }
        out.delta[out.row(new_id[n], z)] = d;
        out.eta[out.row(new_id[n], z)] = std::move(remapped);
      }
    }
  }
  validate(out);
  return out;
}

}  // namespace fscplan
