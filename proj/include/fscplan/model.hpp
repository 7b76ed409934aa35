#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fscplan/errors.hpp"

namespace fscplan {

// Probability mass within which a distribution row must sum to 1. Rows that
// deviate by less are renormalized on construction; larger deviations are
// modeling errors and rejected.
inline constexpr double kProbTolerance = 1e-9;

enum class Objective {
  kReachProbMax,
  kReachRewardMax,
  kReachRewardMin,
};

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);
bool is_reward_objective(Objective o);

// Sparse distribution over dense integer ids.
struct DiscreteDist {
  std::vector<int> ids;
  std::vector<double> probs;

  bool empty() const { return ids.empty(); }
  int size() const { return static_cast<int>(ids.size()); }
  double sum() const;
  // Renormalizes if the sum is within kProbTolerance of 1, otherwise throws
  // ValidationError with `context` naming the offending row.
  void normalize(const std::string& context);
};

// Explicit finite POMDP with dense state/action/observation ids, a
// deterministic state-based observation function, and absorbing targets.
struct Pomdp {
  std::string name;
  Objective objective = Objective::kReachProbMax;
  int num_states = 0;
  int num_actions = 0;
  int num_observations = 0;
  int initial_state = 0;

  std::vector<int> obs_of;              // state -> observation id
  std::vector<std::uint8_t> is_target;  // state -> in G
  std::vector<std::vector<int>> legal;  // state -> sorted legal action ids
  std::vector<DiscreteDist> trans;      // (s * num_actions + a) -> dist over S
  std::vector<double> reward;           // (s * num_actions + a) -> R(s, a)

  const DiscreteDist& transition(int s, int a) const {
    return trans[static_cast<std::size_t>(s) * num_actions + a];
  }
  DiscreteDist& transition(int s, int a) {
    return trans[static_cast<std::size_t>(s) * num_actions + a];
  }
  double reward_at(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * num_actions + a];
  }
  bool action_legal(int s, int a) const;
  std::vector<int> target_states() const;

  // Actions legal in every state carrying the given observation; the safe
  // support for any policy that only sees observations.
  std::vector<int> legal_for_observation(int z) const;
};

// Throws ValidationError naming the violated invariant.
void validate(const Pomdp& model);

// Indexed family of POMDPs sharing everything except transitions/rewards.
struct HmPomdp {
  std::string name;
  std::vector<Pomdp> members;

  int size() const { return static_cast<int>(members.size()); }
  const Pomdp& member(int i) const { return members[i]; }
};

// Throws if any member is invalid or the shared structure differs.
void validate(const HmPomdp& family);

// Sparse action distribution for one (node, observation) pair.
struct ActionDist {
  std::vector<int> actions;
  std::vector<double> probs;
  bool empty() const { return actions.empty(); }
};

struct NodeDist {
  std::vector<int> nodes;
  std::vector<double> probs;
  bool empty() const { return nodes.empty(); }
};

// Joint distribution over (next node, action); preserves the correlation
// that a split (delta, eta) pair cannot express.
struct JointDist {
  std::vector<int> nodes;
  std::vector<int> actions;
  std::vector<double> probs;
  bool empty() const { return nodes.empty(); }
  int size() const { return static_cast<int>(nodes.size()); }
};

// Stochastic Mealy controller. Either the split form (delta, eta) or the
// combined form (sigma) is populated; rows are indexed n * num_observations
// + z and may be empty for pairs never exercised.
struct Fsc {
  int num_nodes = 0;
  int num_observations = 0;
  int num_actions = 0;
  int initial_node = 0;

  std::vector<ActionDist> delta;
  std::vector<NodeDist> eta;
  std::vector<JointDist> sigma;

  bool combined() const { return !sigma.empty(); }
  std::size_t row(int n, int z) const {
    return static_cast<std::size_t>(n) * num_observations + z;
  }

  const ActionDist& action_dist(int n, int z) const { return delta[row(n, z)]; }
  const NodeDist& node_dist(int n, int z) const { return eta[row(n, z)]; }
  const JointDist& joint_dist(int n, int z) const { return sigma[row(n, z)]; }

  // Marginal action distribution; works for both forms.
  ActionDist action_marginal(int n, int z) const;
};

// Structural checks: distributions sum to 1 (within kProbTolerance) wherever
// they are defined, ids in range. Legality against a model is checked at
// product-construction time.
void validate(const Fsc& fsc);

// sigma(n', a | n, z) = eta(n' | n, z) * delta(a | n, z).
Fsc combine_sigma(const Fsc& fsc);

// Marginalizes a combined controller back to (delta, eta). Loses any
// action-memory correlation; exact when sigma is a product distribution.
Fsc split_sigma(const Fsc& fsc);

}  // namespace fscplan
