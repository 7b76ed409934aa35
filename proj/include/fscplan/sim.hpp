#pragma once

#include <cstdint>
#include <vector>

#include "fscplan/model.hpp"
#include "fscplan/rng.hpp"

namespace fscplan {

// Training-time reward shaping. Evaluation never shapes: episode values are
// computed from raw model rewards (or the goal indicator).
struct RewardShaping {
  enum class Category {
    kReachabilityMax,
    kRewardMax,
    kRewardMin,
    kCombined,
    kIdentity,
  };
  Category category = Category::kIdentity;
  double goal_reward = 0.0;
  double reward_multiplier = 1.0;
  double truncation_penalty = 0.0;

  static RewardShaping reachability_max() {
    return {Category::kReachabilityMax, 40.0, 0.0, 0.0};
  }
  static RewardShaping reward_max() {
    return {Category::kRewardMax, 1.0, 10.0, 0.0};
  }
  static RewardShaping reward_min() {
    return {Category::kRewardMin, 2.0, -10.0, 0.0};
  }
  static RewardShaping combined(double goal, double multiplier,
                                double truncation) {
    return {Category::kCombined, goal, multiplier, truncation};
  }
  static RewardShaping identity() { return {}; }

  bool is_identity() const {
    return goal_reward == 0.0 && reward_multiplier == 1.0 &&
           truncation_penalty == 0.0;
  }
};

enum class StepEvent { kStep, kGoal, kTruncation };

double shape_reward(double raw, StepEvent event, const RewardShaping& cfg);

enum class DoneFlag : std::uint8_t { kRunning, kGoal, kTruncated };

// One batched transition, struct-of-arrays over lanes.
struct StepResult {
  std::vector<int> observation;  // of the post-step (or freshly reset) state
  std::vector<double> shaped_reward;
  std::vector<double> raw_reward;
  std::vector<DoneFlag> done;
  std::vector<std::uint8_t> replaced_action;  // diagnostics only
  bool shaped_equals_raw = false;
};

struct FinishedEpisode {
  int member = 0;
  double raw_return = 0.0;
  double shaped_return = 0.0;
  bool reached_goal = false;
  int length = 0;
};

// Number of lanes each member of a growing buffer receives: the newest entry
// gets total*(1-q)/(1-q^L) lanes and each older entry q times its successor,
// floored with the remainder going to the newest; every entry keeps >= 1.
std::vector<int> allocate_simulators(int num_members, int total, double q);

struct SimConfig {
  int max_steps = 600;  // transitions per episode before truncation
  RewardShaping shaping;
  std::uint64_t seed = 0;
};

// Batched, seeded simulation of one or more POMDPs. Lanes auto-reset on
// episode end; per-lane counter RNG streams make trajectories independent of
// evaluation order. Members are borrowed and must outlive the simulator.
class BatchSimulator {
 public:
  BatchSimulator(std::vector<const Pomdp*> members,
                 std::vector<int> lane_counts, SimConfig cfg);

  int num_lanes() const { return static_cast<int>(lane_member_.size()); }
  int lane_member(int lane) const { return lane_member_[lane]; }
  int lane_state(int lane) const { return lane_state_[lane]; }
  int observation(int lane) const;
  const Pomdp& model_of(int lane) const { return *members_[lane_member_[lane]]; }
  int num_observations() const { return members_[0]->num_observations; }
  int num_actions() const { return members_[0]->num_actions; }
  const SimConfig& config() const { return cfg_; }

  // All lanes back to their member's initial state; RNG streams rewound.
  void reset();

  // Illegal actions are replaced by a uniformly random legal one; the agent
  // is never told beyond the diagnostics flag.
  const StepResult& step(const std::vector<int>& actions);

  // Episodes finished since the last drain, in completion order.
  std::vector<FinishedEpisode> drain_finished();

 private:
  std::vector<const Pomdp*> members_;
  SimConfig cfg_;
  std::vector<int> lane_member_;
  std::vector<int> lane_state_;
  std::vector<int> lane_steps_;
  std::vector<double> lane_raw_return_;
  std::vector<double> lane_shaped_return_;
  std::vector<SplitRng> lane_rng_;
  SplitRng master_;
  StepResult result_;
  std::vector<FinishedEpisode> finished_;
};

// Black-box episodic policy; one logical instance per lane.
class EpisodePolicy {
 public:
  virtual ~EpisodePolicy() = default;
  virtual void reset(int lane) = 0;
  virtual int act(int lane, int observation, SplitRng& rng) = 0;
};

struct EmpiricalResult {
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
  std::vector<double> values;  // one objective value per episode
};

// Runs `episodes` independent episodes spread round-robin over the members,
// truncating at max_steps; truncated episodes count as failures (value 0
// under reachability, the accumulated raw reward otherwise). Reports the raw
// objective value; shaping never applies here.
EmpiricalResult evaluate_empirical(EpisodePolicy& policy,
                                   const std::vector<const Pomdp*>& members,
                                   int episodes = 512, int max_steps = 600,
                                   std::uint64_t seed = 0);

}  // namespace fscplan
