#pragma once

#include <string>
#include <vector>

#include "fscplan/alergia.hpp"
#include "fscplan/model.hpp"
#include "fscplan/ppo.hpp"
#include "fscplan/sig.hpp"
#include "fscplan/sim.hpp"
#include "fscplan/verify.hpp"

namespace fscplan {

// Runs an FSC as an episodic policy; combined controllers sample the joint
// (node, action) so their correlation is preserved.
class FscRunner : public EpisodePolicy {
 public:
  explicit FscRunner(const Fsc& fsc, int lanes = 1);
  void reset(int lane) override;
  int act(int lane, int observation, SplitRng& rng) override;

 private:
  const Fsc* fsc_;
  std::vector<int> node_;
};

// Runs the recurrent policy with stochastic (unmasked) action sampling.
class PolicyRunner : public EpisodePolicy {
 public:
  explicit PolicyRunner(const RecurrentPolicy& policy, int lanes = 1);
  void reset(int lane) override;
  int act(int lane, int observation, SplitRng& rng) override;

 private:
  const RecurrentPolicy* policy_;
  std::vector<RecurrentPolicy::Hidden> hidden_;
};

// Samples (observation, action) sequences from the policy on the given
// members, one sequence per episode (partial episodes at the end of the
// run are kept as prefixes). Masked sampling restricts each draw to the
// actions legal in the lane's current state.
TrajectoryDataset sample_dataset(const RecurrentPolicy& policy,
                                 const std::vector<const Pomdp*>& members,
                                 const std::vector<int>& lane_counts,
                                 int steps, int max_steps, std::uint64_t seed,
                                 bool masked = true);

// Gives every (node, observation) pair a distribution: missing action rows
// become uniform over the actions legal in every state carrying the
// observation, memory self-loops. Rows the model cannot reach stay as they
// are; pairs with no commonly-legal action are left undefined.
void complete_missing_rows(Fsc* fsc, const Pomdp& shared_structure);

// Node pruning that is sound for every member: a node survives if it is
// reachable through eta supports under the union of the members' reachable
// observations.
Fsc prune_unreachable(const Fsc& fsc, const HmPomdp& family);

struct LoopConfig {
  enum class Method { kAlergia, kSig };
  Method method = Method::kAlergia;
  int initial_members = 6;
  int init_iterations = 100;
  int inner_iterations = 25;
  double timeout_seconds = 3600.0;
  int max_loop_iterations = 0;  // 0 = until timeout
  std::uint64_t seed = 0;
  bool random_selection = false;  // ablation: uniform member instead of argmin
  PpoConfig ppo;
  RewardShaping shaping;
  int total_lanes = 256;
  int max_steps = 600;
  int extract_steps = 4001;
  int extract_lanes = 256;
  double alergia_alpha = 0.05;
  SigConfig sig;
  int eval_episodes = 512;
  std::string artifact_dir;  // empty: keep everything in memory
  bool timing = true;
};

struct LexpopResult {
  Fsc fsc;
  ValueResult value;
};

// Train, sample, extract, verify on a single POMDP. A caller-provided
// policy is trained further; otherwise a fresh one is initialized from the
// seed.
LexpopResult lexpop(const Pomdp& model, const LoopConfig& cfg,
                    RecurrentPolicy* policy = nullptr);

struct RobustHistoryRow {
  int iteration = 0;
  int member_added = -1;
  double j_robust = 0.0;
  double empirical_buffer_value = 0.0;
  double wall_ms = 0.0;
};

struct RobustLoopResult {
  Fsc best_fsc;
  double j_robust = 0.0;
  int best_iteration = 0;
  std::vector<RobustHistoryRow> history;
  std::vector<int> buffer;  // member indices in insertion order
};

// Iterative worst-case training over the family: the same policy keeps
// training on the buffer, the freshly extracted controller is verified
// exhaustively, and the worst member joins the buffer (newest members get
// the geometric lane share). Returns the best controller seen.
RobustLoopResult robust_lexpop(const HmPomdp& family, const LoopConfig& cfg);

void write_history_csv(const std::vector<RobustHistoryRow>& history,
                       const std::string& path, bool timing);

}  // namespace fscplan
