#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fscplan/model.hpp"

namespace fscplan {

// Self-contained instances with hand-derived or brute-force-certified
// values; the acceptance suite is built on these.
struct ToyInstance {
  std::string name;
  std::string description;
  HmPomdp family;  // singleton for the single-POMDP instances
  std::optional<Fsc> certificate;
  double recorded_value = 0.0;
  bool value_is_optimal = false;
  std::string provenance;

  const Pomdp& single() const { return family.members[0]; }
  bool is_family() const { return family.size() > 1; }
};

// Two-state chain, every action reaches the target: optimum 1.0.
Pomdp toy_goal_chain();
Fsc toy_goal_chain_fsc();

// Self-loop with reward 1 and escape probability 1/2: expected reward 2.0.
Pomdp toy_selfloop_reward();
Fsc toy_selfloop_fsc();

// The correct final action depends on an observation two steps earlier;
// memoryless policies cap at 0.5, a two-node controller reaches 1.0.
Pomdp toy_memory_bit();
Fsc toy_memory_bit_fsc();
// Same controller with noisy final actions (0.9/0.1); exact value 0.9.
Fsc toy_memory_bit_noisy_fsc();

// 16 members; the last one inverts the effect of both actions, so the
// robust optimum is the 50/50 coin at 0.5 while any deterministic choice is
// worth 0 in the worst case.
HmPomdp toy_adversarial_family(int members = 16);
Fsc toy_adversarial_balanced_fsc();

// 4x4 grid pursuit: reach the far corner while a patroller sweeps the third
// column; the agent sees its own cell plus a proximity alarm.
Pomdp toy_grid_evade();
Fsc toy_grid_evade_fsc();

std::vector<ToyInstance> generate_toys();

// Writes <name>.pomdp / <name>.hmpomdp plus <name>.fsc certificates.
void write_toys(const std::string& dir);

// Exhaustive search over deterministic controllers with at most max_nodes
// nodes, choices ranging over the per-observation legal actions of
// decision_obs (other observations use the first legal action and keep the
// node). Returns the best worst-case value.
struct EnumerationResult {
  double value = 0.0;
  Fsc best;
  long enumerated = 0;
};
EnumerationResult enumerate_deterministic_fscs(
    const HmPomdp& family, int max_nodes,
    const std::vector<int>& decision_obs);

}  // namespace fscplan
