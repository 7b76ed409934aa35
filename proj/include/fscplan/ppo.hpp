#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fscplan/optim.hpp"
#include "fscplan/policy.hpp"
#include "fscplan/sim.hpp"

namespace fscplan {

struct PpoConfig {
  double clip_ratio = 0.2;
  int epochs_per_batch = 3;
  double gae_lambda = 0.95;
  double entropy_coef = 0.02;
  double discount = 0.995;
  double learning_rate = 0.00016;
  double adam_beta1 = 0.99;
  double adam_beta2 = 0.99;
  double weight_decay = 0.0001;
  int batch_size = 256;      // transitions per minibatch
  int segment_length = 32;   // BPTT window; rollouts are one segment long
  bool normalize_rewards = true;
  bool normalize_observations = true;  // no-op under one-hot encoding
  double value_loss_coef = 0.5;
  double max_grad_norm = 0.5;
  int iterations = 0;
};

// T x B rollout storage; step-major so GAE walks rows backwards.
struct RolloutBatch {
  int steps = 0;
  int lanes = 0;
  std::vector<std::vector<int>> obs;
  std::vector<std::vector<int>> actions;
  Eigen::MatrixXd log_probs;
  Eigen::MatrixXd rewards;  // shaped, and normalized when configured
  Eigen::MatrixXd values;
  std::vector<std::vector<std::uint8_t>> done;
  std::vector<std::vector<std::uint8_t>> reset_before;
  Eigen::MatrixXd h0, c0;
  Eigen::RowVectorXd bootstrap;  // value of the post-rollout state per lane
  std::vector<FinishedEpisode> episodes;
};

// A_t = sum_l (gamma*lambda)^l delta_{t+l}, cut at episode ends; returns are
// advantages + values. `bootstrap` supplies v(s_T) for unfinished lanes.
void gae_advantages(const Eigen::MatrixXd& rewards,
                    const Eigen::MatrixXd& values,
                    const std::vector<std::vector<std::uint8_t>>& done,
                    const Eigen::RowVectorXd& bootstrap, double gamma,
                    double lambda, Eigen::MatrixXd* advantages,
                    Eigen::MatrixXd* returns);

// Single-lane convenience used by tests and hand oracles.
std::pair<std::vector<double>, std::vector<double>> gae_advantages(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& done, double bootstrap, double gamma,
    double lambda);

struct LossDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

struct IterationMetrics {
  int iteration = 0;
  double wall_ms = 0.0;
  double mean_episode_return_raw = 0.0;
  double mean_episode_return_shaped = 0.0;
  int finished_episodes = 0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double value_loss = 0.0;
};

// Fixed-column CSV sink for per-iteration training metrics. With timing
// disabled the wall_ms column is written as 0 so repeated seeded runs
// produce bit-identical files.
class MetricsWriter {
 public:
  MetricsWriter(std::ostream& out, bool timing);
  void row(const IterationMetrics& m);

 private:
  std::ostream& out_;
  bool timing_;
};

// On-policy trainer: rollouts from a batched simulator, GAE, clipped
// surrogate updates over whole-segment minibatches, AdamW.
class PpoTrainer {
 public:
  PpoTrainer(RecurrentPolicy* policy, BatchSimulator* sim, PpoConfig cfg,
             std::uint64_t seed);

  RolloutBatch collect_rollout(int steps);
  LossDiagnostics ppo_update(const RolloutBatch& batch);
  IterationMetrics run_iteration(int iteration);
  void train(MetricsWriter* metrics);

  const PpoConfig& config() const { return cfg_; }
  RecurrentPolicy& policy() { return *policy_; }

 private:
  RecurrentPolicy* policy_;
  BatchSimulator* sim_;
  PpoConfig cfg_;
  AdamW<double> adam_;
  RecurrentPolicy::Hidden hidden_;
  SplitRng shuffle_rng_;
  std::vector<SplitRng> lane_rng_;
  // Running std of discounted shaped returns, no mean shift.
  double return_gamma_;
  Eigen::VectorXd lane_return_;
  long norm_count_ = 0;
  double norm_mean_ = 0.0;
  double norm_m2_ = 0.0;

  double return_std() const;
  void observe_return(double value);
};

// Trains a fresh simulator over the given members with the default lane
// allocation (geometric when several members, all lanes otherwise).
void train_policy(RecurrentPolicy* policy, const std::vector<const Pomdp*>& members,
                  const std::vector<int>& lane_counts, const PpoConfig& cfg,
                  const RewardShaping& shaping, int total_lanes, int max_steps,
                  std::uint64_t seed, MetricsWriter* metrics);

}  // namespace fscplan
