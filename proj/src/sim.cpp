#include "fscplan/sim.hpp"

#include <cmath>

namespace fscplan {

double shape_reward(double raw, StepEvent event, const RewardShaping& cfg) {
  double shaped = raw * cfg.reward_multiplier;
  if (event == StepEvent::kGoal) shaped += cfg.goal_reward;
  if (event == StepEvent::kTruncation) shaped += cfg.truncation_penalty;
  return shaped;
}

std::vector<int> allocate_simulators(int num_members, int total, double q) {
  if (num_members < 1) throw Error("allocate_simulators: no members");
  if (total < num_members)
    throw Error("allocate_simulators: fewer lanes than members");
  if (!(q > 0.0 && q < 1.0))
    throw Error("allocate_simulators: q must be in (0,1)");
  std::vector<int> counts(num_members, 0);
  if (num_members == 1) {
    counts[0] = total;
    return counts;
  }
  double newest = static_cast<double>(total) * (1.0 - q) /
                  (1.0 - std::pow(q, num_members));
  int assigned = 0;
  for (int i = 0; i < num_members - 1; ++i) {
    double ideal = newest * std::pow(q, num_members - 1 - i);
    counts[i] = std::max(1, static_cast<int>(std::floor(ideal)));
    assigned += counts[i];
  }
  counts[num_members - 1] = total - assigned;
  // The minimum-one guarantee can only be violated on tiny totals; rebalance
  // from the largest older entries.
  while (counts[num_members - 1] < 1) {
    int largest = 0;
    for (int i = 1; i < num_members - 1; ++i)
      if (counts[i] > counts[largest]) largest = i;
    if (counts[largest] <= 1) throw Error("allocate_simulators: infeasible");
    --counts[largest];
    ++counts[num_members - 1];
  }
  return counts;
}

BatchSimulator::BatchSimulator(std::vector<const Pomdp*> members,
                               std::vector<int> lane_counts, SimConfig cfg)
    : members_(std::move(members)), cfg_(cfg), master_(cfg.seed) {
  if (members_.empty()) throw Error("simulator needs at least one member");
  if (lane_counts.size() != members_.size())
    throw Error("lane counts do not match member count");
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (lane_counts[i] < 1) throw Error("every member needs at least one lane");
    for (int k = 0; k < lane_counts[i]; ++k)
      lane_member_.push_back(static_cast<int>(i));
  }
  int lanes = num_lanes();
  lane_state_.resize(lanes);
  lane_steps_.resize(lanes);
  lane_raw_return_.resize(lanes);
  lane_shaped_return_.resize(lanes);
  lane_rng_.resize(lanes);
  result_.observation.resize(lanes);
  result_.shaped_reward.resize(lanes);
  result_.raw_reward.resize(lanes);
  result_.done.resize(lanes);
  result_.replaced_action.resize(lanes);
  reset();
}

int BatchSimulator::observation(int lane) const {
  return model_of(lane).obs_of[lane_state_[lane]];
}

void BatchSimulator::reset() {
  for (int lane = 0; lane < num_lanes(); ++lane) {
    lane_state_[lane] = model_of(lane).initial_state;
    lane_steps_[lane] = 0;
    lane_raw_return_[lane] = 0.0;
    lane_shaped_return_[lane] = 0.0;
    lane_rng_[lane] = master_.derive(static_cast<std::uint64_t>(lane));
  }
  finished_.clear();
}

const StepResult& BatchSimulator::step(const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != num_lanes())
    throw Error("step: expected " + std::to_string(num_lanes()) +
                " actions, got " + std::to_string(actions.size()));
  result_.shaped_equals_raw = cfg_.shaping.is_identity();
  for (int lane = 0; lane < num_lanes(); ++lane) {
    const Pomdp& model = model_of(lane);
    int s = lane_state_[lane];
    int a = actions[lane];
    if (a < 0 || a >= model.num_actions)
      throw Error("step: action id out of range on lane " +
                  std::to_string(lane));
    SplitRng& rng = lane_rng_[lane];
    bool replaced = !model.action_legal(s, a);
    if (replaced) {
      const auto& legal = model.legal[s];
      a = legal[rng.next_int(static_cast<int>(legal.size()))];
    }
    double raw = model.reward_at(s, a);
    const DiscreteDist& row = model.transition(s, a);
    int next = row.ids[rng.sample_index(row.probs, row.size())];

    ++lane_steps_[lane];
    bool goal = model.is_target[next];
    bool truncated = !goal && lane_steps_[lane] >= cfg_.max_steps;
    StepEvent event = goal ? StepEvent::kGoal
                     : truncated ? StepEvent::kTruncation
                                 : StepEvent::kStep;
    double shaped = shape_reward(raw, event, cfg_.shaping);

    lane_raw_return_[lane] += raw;
    lane_shaped_return_[lane] += shaped;

    result_.raw_reward[lane] = raw;
    result_.shaped_reward[lane] = shaped;
    result_.replaced_action[lane] = replaced ? 1 : 0;
    result_.done[lane] = goal        ? DoneFlag::kGoal
                         : truncated ? DoneFlag::kTruncated
                                     : DoneFlag::kRunning;

    if (goal || truncated) {
      finished_.push_back({lane_member_[lane], lane_raw_return_[lane],
                           lane_shaped_return_[lane], goal,
                           lane_steps_[lane]});
      lane_state_[lane] = model.initial_state;
      lane_steps_[lane] = 0;
      lane_raw_return_[lane] = 0.0;
      lane_shaped_return_[lane] = 0.0;
    } else {
      lane_state_[lane] = next;
    }
    result_.observation[lane] = model.obs_of[lane_state_[lane]];
  }
  return result_;
}

std::vector<FinishedEpisode> BatchSimulator::drain_finished() {
  std::vector<FinishedEpisode> out;
  out.swap(finished_);
  return out;
}

EmpiricalResult evaluate_empirical(EpisodePolicy& policy,
                                   const std::vector<const Pomdp*>& members,
                                   int episodes, int max_steps,
                                   std::uint64_t seed) {
  if (members.empty()) throw Error("evaluate_empirical: no members");
  EmpiricalResult out;
  out.values.reserve(episodes);
  SplitRng master(seed);
  for (int ep = 0; ep < episodes; ++ep) {
    const Pomdp& model = *members[ep % members.size()];
    SplitRng env_rng = master.derive(2 * static_cast<std::uint64_t>(ep));
    SplitRng pol_rng = master.derive(2 * static_cast<std::uint64_t>(ep) + 1);
    policy.reset(0);
    int s = model.initial_state;
    double raw_return = 0.0;
    bool goal = false;
    for (int t = 0; t < max_steps && !goal; ++t) {
      if (model.is_target[s]) break;
      int a = policy.act(0, model.obs_of[s], pol_rng);
      if (!model.action_legal(s, a)) {
        const auto& legal = model.legal[s];
        a = legal[env_rng.next_int(static_cast<int>(legal.size()))];
      }
      raw_return += model.reward_at(s, a);
      const DiscreteDist& row = model.transition(s, a);
      s = row.ids[env_rng.sample_index(row.probs, row.size())];
      goal = model.is_target[s];
    }
    double value = is_reward_objective(model.objective)
                       ? raw_return
                       : (goal || model.is_target[s] ? 1.0 : 0.0);
    out.values.push_back(value);
  }
  out.episodes = episodes;
  double sum = 0.0;
  for (double v : out.values) sum += v;
  out.mean = sum / episodes;
  double ss = 0.0;
  for (double v : out.values) ss += (v - out.mean) * (v - out.mean);
  double var = episodes > 1 ? ss / (episodes - 1) : 0.0;
  out.std_error = std::sqrt(var / episodes);
  return out;
}

}  // namespace fscplan
