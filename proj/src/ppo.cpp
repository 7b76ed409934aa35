#include "fscplan/ppo.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "fscplan/nn.hpp"

namespace fscplan {

void gae_advantages(const Eigen::MatrixXd& rewards,
                    const Eigen::MatrixXd& values,
                    const std::vector<std::vector<std::uint8_t>>& done,
                    const Eigen::RowVectorXd& bootstrap, double gamma,
                    double lambda, Eigen::MatrixXd* advantages,
                    Eigen::MatrixXd* returns) {
  int steps = static_cast<int>(rewards.rows());
  int lanes = static_cast<int>(rewards.cols());
  advantages->resize(steps, lanes);
  returns->resize(steps, lanes);
  Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(lanes);
  for (int t = steps - 1; t >= 0; --t) {
    for (int b = 0; b < lanes; ++b) {
      double not_done = done[t][b] ? 0.0 : 1.0;
      double next_value =
          t + 1 < steps ? values(t + 1, b) : bootstrap(b);
      double delta =
          rewards(t, b) + gamma * next_value * not_done - values(t, b);
      carry(b) = delta + gamma * lambda * not_done * carry(b);
      (*advantages)(t, b) = carry(b);
      (*returns)(t, b) = carry(b) + values(t, b);
    }
  }
}

std::pair<std::vector<double>, std::vector<double>> gae_advantages(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& done, double bootstrap, double gamma,
    double lambda) {
  int steps = static_cast<int>(rewards.size());
  Eigen::MatrixXd r(steps, 1), v(steps, 1);
  std::vector<std::vector<std::uint8_t>> d(steps, std::vector<std::uint8_t>(1));
  for (int t = 0; t < steps; ++t) {
    r(t, 0) = rewards[t];
    v(t, 0) = values[t];
    d[t][0] = done[t];
  }
  Eigen::RowVectorXd boot(1);
  boot(0) = bootstrap;
  Eigen::MatrixXd adv, ret;
  gae_advantages(r, v, d, boot, gamma, lambda, &adv, &ret);
  std::vector<double> a(steps), g(steps);
  for (int t = 0; t < steps; ++t) {
    a[t] = adv(t, 0);
    g[t] = ret(t, 0);
  }
  return {a, g};
}

MetricsWriter::MetricsWriter(std::ostream& out, bool timing)
    : out_(out), timing_(timing) {
  out_ << "iteration,wall_ms,mean_episode_return_raw,"
          "mean_episode_return_shaped,entropy,clip_fraction,value_loss\n";
}

void MetricsWriter::row(const IterationMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.3f,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                m.iteration, timing_ ? m.wall_ms : 0.0,
                m.mean_episode_return_raw, m.mean_episode_return_shaped,
                m.entropy, m.clip_fraction, m.value_loss);
  out_ << buf;
}

PpoTrainer::PpoTrainer(RecurrentPolicy* policy, BatchSimulator* sim,
                       PpoConfig cfg, std::uint64_t seed)
    : policy_(policy),
      sim_(sim),
      cfg_(cfg),
      adam_({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8,
             cfg.weight_decay}),
      hidden_(policy->make_hidden(sim->num_lanes())),
      return_gamma_(cfg.discount) {
  SplitRng master(seed);
  shuffle_rng_ = master.derive(1);
  lane_rng_.resize(sim->num_lanes());
  for (int b = 0; b < sim->num_lanes(); ++b)
    lane_rng_[b] = master.derive(1000 + static_cast<std::uint64_t>(b));
  lane_return_ = Eigen::VectorXd::Zero(sim->num_lanes());
}

void PpoTrainer::observe_return(double value) {
  ++norm_count_;
  double delta = value - norm_mean_;
  norm_mean_ += delta / static_cast<double>(norm_count_);
  norm_m2_ += delta * (value - norm_mean_);
}

double PpoTrainer::return_std() const {
  if (norm_count_ < 2) return 1.0;
  double var = norm_m2_ / static_cast<double>(norm_count_);
  return var > 1e-16 ? std::sqrt(var) : 1.0;
}

RolloutBatch PpoTrainer::collect_rollout(int steps) {
  policy_->check_finite();
  int lanes = sim_->num_lanes();
  RolloutBatch batch;
  batch.steps = steps;
  batch.lanes = lanes;
  batch.obs.resize(steps, std::vector<int>(lanes));
  batch.actions.resize(steps, std::vector<int>(lanes));
  batch.log_probs.resize(steps, lanes);
  batch.rewards.resize(steps, lanes);
  batch.values.resize(steps, lanes);
  batch.done.resize(steps, std::vector<std::uint8_t>(lanes, 0));
  batch.reset_before.resize(steps, std::vector<std::uint8_t>(lanes, 0));
  batch.h0 = hidden_.h;
  batch.c0 = hidden_.c;

  std::vector<int> actions(lanes);
  Eigen::MatrixXd logits;
  Eigen::RowVectorXd values;
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < lanes; ++b) batch.obs[t][b] = sim_->observation(b);
    if (t > 0)
      for (int b = 0; b < lanes; ++b)
        batch.reset_before[t][b] = batch.done[t - 1][b];
    policy_->forward_batch(batch.obs[t], &hidden_, &logits, &values);
    for (int b = 0; b < lanes; ++b) {
      auto [action, logp] = sample_action(logits.col(b), lane_rng_[b]);
      actions[b] = action;
      batch.actions[t][b] = action;
      batch.log_probs(t, b) = logp;
      batch.values(t, b) = values(b);
    }
    const StepResult& result = sim_->step(actions);
    for (int b = 0; b < lanes; ++b) {
      batch.rewards(t, b) = result.shaped_reward[b];
      bool ended = result.done[b] != DoneFlag::kRunning;
      batch.done[t][b] = ended ? 1 : 0;
      if (ended) {
        hidden_.h.col(b).setZero();
        hidden_.c.col(b).setZero();
      }
    }
  }
  // Bootstrap values for the state after the last transition.
  {
    std::vector<int> obs(lanes);
    for (int b = 0; b < lanes; ++b) obs[b] = sim_->observation(b);
    RecurrentPolicy::Hidden probe{hidden_.h, hidden_.c};
    Eigen::MatrixXd dummy;
    policy_->forward_batch(obs, &probe, &dummy, &batch.bootstrap);
  }
  batch.episodes = sim_->drain_finished();

  if (cfg_.normalize_rewards) {
    for (int t = 0; t < steps; ++t)
      for (int b = 0; b < lanes; ++b) {
        lane_return_(b) =
            return_gamma_ * lane_return_(b) + batch.rewards(t, b);
        observe_return(lane_return_(b));
        if (batch.done[t][b]) lane_return_(b) = 0.0;
      }
    batch.rewards /= return_std();
  }
  return batch;
}

LossDiagnostics PpoTrainer::ppo_update(const RolloutBatch& batch) {
  Eigen::MatrixXd advantages, returns;
  gae_advantages(batch.rewards, batch.values, batch.done, batch.bootstrap,
                 cfg_.discount, cfg_.gae_lambda, &advantages, &returns);
  double mean = advantages.mean();
  double var = (advantages.array() - mean).square().mean();
  Eigen::MatrixXd norm_adv =
      (advantages.array() - mean) / (std::sqrt(var) + 1e-8);

  int lanes = batch.lanes;
  int steps = batch.steps;
  int lanes_per_minibatch =
      std::max(1, cfg_.batch_size / std::max(1, steps));

  std::vector<int> order(lanes);
  for (int b = 0; b < lanes; ++b) order[b] = b;

  Eigen::VectorXd params_backup = policy_->params();
  LossDiagnostics diag;
  long contributions = 0;
  double clip_lo = 1.0 - cfg_.clip_ratio;
  double clip_hi = 1.0 + cfg_.clip_ratio;

  for (int epoch = 0; epoch < cfg_.epochs_per_batch; ++epoch) {
    // Fisher-Yates with the trainer stream keeps runs reproducible.
    for (int i = lanes - 1; i > 0; --i) {
      int j = shuffle_rng_.next_int(i + 1);
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < lanes; start += lanes_per_minibatch) {
      int count = std::min(lanes_per_minibatch, lanes - start);
      RecurrentPolicy::SegmentInput input;
      input.obs.assign(steps, std::vector<int>(count));
      input.reset_before.assign(steps,
                                std::vector<std::uint8_t>(count, 0));
      input.h0.resize(RecurrentPolicy::kHiddenSize, count);
      input.c0.resize(RecurrentPolicy::kHiddenSize, count);
      for (int k = 0; k < count; ++k) {
        int b = order[start + k];
        input.h0.col(k) = batch.h0.col(b);
        input.c0.col(k) = batch.c0.col(b);
        for (int t = 0; t < steps; ++t) {
          input.obs[t][k] = batch.obs[t][b];
          input.reset_before[t][k] = batch.reset_before[t][b];
        }
      }
      double inv_n = 1.0 / (static_cast<double>(steps) * count);
      double mb_entropy = 0.0, mb_vloss = 0.0, mb_ratio = 0.0, mb_clip = 0.0,
             mb_pg = 0.0;

      auto loss_fn = [&](const std::vector<Eigen::MatrixXd>& logits,
                         const std::vector<Eigen::RowVectorXd>& values,
                         std::vector<Eigen::MatrixXd>* dlogits,
                         std::vector<Eigen::RowVectorXd>* dvalues) {
        double loss = 0.0;
        for (int t = 0; t < steps; ++t) {
          Eigen::MatrixXd logp = log_softmax_columns(logits[t]);
          Eigen::MatrixXd probs = logp.array().exp();
          for (int k = 0; k < count; ++k) {
            int b = order[start + k];
            int a = batch.actions[t][b];
            double adv = norm_adv(t, b);
            double ratio = std::exp(logp(a, k) - batch.log_probs(t, b));
            double clipped = std::min(std::max(ratio, clip_lo), clip_hi);
            double s1 = ratio * adv;
            double s2 = clipped * adv;
            double pg = -std::min(s1, s2);
            double dpg_dlogp = s1 <= s2 ? -ratio * adv : 0.0;

            double vdiff = values[t](k) - returns(t, b);
            double vloss = cfg_.value_loss_coef * vdiff * vdiff;

            double ent = 0.0;
            for (int i = 0; i < probs.rows(); ++i)
              ent -= probs(i, k) * logp(i, k);

            loss += inv_n * (pg + vloss - cfg_.entropy_coef * ent);

            // d pg / dlogits through logp(a).
            (*dlogits)[t].col(k) += inv_n * dpg_dlogp *
                                    (Eigen::VectorXd::Unit(probs.rows(), a) -
                                     probs.col(k).eval());
            // d (-c_e * H) / dlogits = c_e * p .* (logp + H).
            (*dlogits)[t].col(k) +=
                inv_n * cfg_.entropy_coef *
                (probs.col(k).array() * (logp.col(k).array() + ent)).matrix();
            (*dvalues)[t](k) += inv_n * 2.0 * cfg_.value_loss_coef * vdiff;

            mb_entropy += ent;
            mb_vloss += vdiff * vdiff;
            mb_ratio += ratio;
            mb_pg += pg;
            if (ratio < clip_lo || ratio > clip_hi) mb_clip += 1.0;
          }
        }
        return loss;
      };

      Eigen::VectorXd grad;
      double loss = policy_->bptt_gradient(input, loss_fn, &grad);
      if (!std::isfinite(loss)) {
        policy_->params() = params_backup;
        throw Error("non-finite loss in minibatch starting at lane " +
                    std::to_string(start) + ", epoch " +
                    std::to_string(epoch) + "; update aborted");
      }
      clip_grad_norm(grad, cfg_.max_grad_norm);
      adam_.step(policy_->params(), grad);

      long n = static_cast<long>(steps) * count;
      diag.loss += loss * n;
      diag.policy_loss += mb_pg;
      diag.entropy += mb_entropy;
      diag.value_loss += mb_vloss;
      diag.mean_ratio += mb_ratio;
      diag.clip_fraction += mb_clip;
      contributions += n;
    }
  }
  if (contributions > 0) {
    double inv = 1.0 / static_cast<double>(contributions);
    diag.loss *= inv;
    diag.policy_loss *= inv;
    diag.entropy *= inv;
    diag.value_loss *= inv;
    diag.mean_ratio *= inv;
    diag.clip_fraction *= inv;
  }
  return diag;
}

IterationMetrics PpoTrainer::run_iteration(int iteration) {
  auto start = std::chrono::steady_clock::now();
  RolloutBatch batch = collect_rollout(cfg_.segment_length);
  LossDiagnostics diag = ppo_update(batch);
  IterationMetrics m;
  m.iteration = iteration;
  m.finished_episodes = static_cast<int>(batch.episodes.size());
  if (!batch.episodes.empty()) {
    for (const FinishedEpisode& ep : batch.episodes) {
      m.mean_episode_return_raw += ep.raw_return;
      m.mean_episode_return_shaped += ep.shaped_return;
    }
    m.mean_episode_return_raw /= m.finished_episodes;
    m.mean_episode_return_shaped /= m.finished_episodes;
  }
  m.entropy = diag.entropy;
  m.clip_fraction = diag.clip_fraction;
  m.value_loss = diag.value_loss;
  m.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - start)
                  .count();
  return m;
}

void PpoTrainer::train(MetricsWriter* metrics) {
  for (int it = 0; it < cfg_.iterations; ++it) {
    IterationMetrics m = run_iteration(it);
    if (metrics) metrics->row(m);
  }
}

void train_policy(RecurrentPolicy* policy,
                  const std::vector<const Pomdp*>& members,
                  const std::vector<int>& lane_counts, const PpoConfig& cfg,
                  const RewardShaping& shaping, int total_lanes, int max_steps,
                  std::uint64_t seed, MetricsWriter* metrics) {
  std::vector<int> counts = lane_counts;
  if (counts.empty()) {
    if (members.size() == 1)
      counts = {total_lanes};
    else
      counts = allocate_simulators(static_cast<int>(members.size()),
                                   total_lanes, 0.4);
  }
  SimConfig sim_cfg;
  sim_cfg.max_steps = max_steps;
  sim_cfg.shaping = shaping;
  sim_cfg.seed = SplitRng(seed).derive(7).next_u64();
  BatchSimulator sim(members, counts, sim_cfg);
  PpoTrainer trainer(policy, &sim, cfg, SplitRng(seed).derive(8).next_u64());
  trainer.train(metrics);
}

}  // namespace fscplan
