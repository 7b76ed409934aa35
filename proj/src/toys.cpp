#include "fscplan/toys.hpp"

#include <filesystem>

#include "fscplan/model_io.hpp"
#include "fscplan/verify.hpp"

namespace fscplan {
namespace {

Pomdp skeleton(const std::string& name, Objective objective, int states,
               int actions, int observations, int initial) {
  Pomdp m;
  m.name = name;
  m.objective = objective;
  m.num_states = states;
  m.num_actions = actions;
  m.num_observations = observations;
  m.initial_state = initial;
  m.obs_of.assign(states, 0);
  m.is_target.assign(states, 0);
  m.legal.assign(states, {});
  m.trans.assign(static_cast<std::size_t>(states) * actions, {});
  m.reward.assign(static_cast<std::size_t>(states) * actions, 0.0);
  return m;
}

void set_row(Pomdp* m, int s, int a, std::vector<std::pair<int, double>> row) {
  DiscreteDist& dist = m->transition(s, a);
  dist = {};
  for (auto [s2, p] : row) {
    dist.ids.push_back(s2);
    dist.probs.push_back(p);
  }
}

Fsc empty_fsc(int nodes, int observations, int actions) {
  Fsc fsc;
  fsc.num_nodes = nodes;
  fsc.num_observations = observations;
  fsc.num_actions = actions;
  fsc.initial_node = 0;
  fsc.delta.resize(static_cast<std::size_t>(nodes) * observations);
  fsc.eta.resize(static_cast<std::size_t>(nodes) * observations);
  return fsc;
}

void set_rule(Fsc* fsc, int n, int z, std::vector<std::pair<int, double>> acts,
              std::vector<std::pair<int, double>> nodes) {
  ActionDist& d = fsc->delta[fsc->row(n, z)];
  d = {};
  for (auto [a, p] : acts) {
    d.actions.push_back(a);
    d.probs.push_back(p);
  }
  NodeDist& e = fsc->eta[fsc->row(n, z)];
  e = {};
  for (auto [m, p] : nodes) {
    e.nodes.push_back(m);
    e.probs.push_back(p);
  }
}

}  // namespace

Pomdp toy_goal_chain() {
  // 0 --any--> 1 (target); two actions so the action plumbing is exercised.
  Pomdp m = skeleton("goal-chain", Objective::kReachProbMax, 2, 2, 2, 0);
  m.obs_of = {0, 1};
  m.is_target = {0, 1};
  m.is_target[0] = 0;
  m.legal = {{0, 1}, {0, 1}};
  for (int a = 0; a < 2; ++a) {
    set_row(&m, 0, a, {{1, 1.0}});
    set_row(&m, 1, a, {{1, 1.0}});
  }
  validate(m);
  return m;
}

Fsc toy_goal_chain_fsc() {
  Fsc fsc = empty_fsc(1, 2, 2);
  set_rule(&fsc, 0, 0, {{0, 1.0}}, {{0, 1.0}});
  set_rule(&fsc, 0, 1, {{0, 1.0}}, {{0, 1.0}});
  validate(fsc);
  return fsc;
}

Pomdp toy_selfloop_reward() {
  // x = 1 + 0.5 x  =>  expected total reward 2.
  Pomdp m = skeleton("selfloop-reward", Objective::kReachRewardMax, 2, 1, 2, 0);
  m.obs_of = {0, 1};
  m.is_target = {0, 1};
  m.is_target[0] = 0;
  m.legal = {{0}, {0}};
  set_row(&m, 0, 0, {{0, 0.5}, {1, 0.5}});
  set_row(&m, 1, 0, {{1, 1.0}});
  m.reward[0] = 1.0;
  validate(m);
  return m;
}

Fsc toy_selfloop_fsc() {
  Fsc fsc = empty_fsc(1, 2, 1);
  set_rule(&fsc, 0, 0, {{0, 1.0}}, {{0, 1.0}});
  set_rule(&fsc, 0, 1, {{0, 1.0}}, {{0, 1.0}});
  validate(fsc);
  return fsc;
}

namespace {
// Observation ids of the memory-bit model.
constexpr int kMbStart = 0, kMbA = 1, kMbB = 2, kMbWait = 3, kMbGoal = 4,
              kMbFail = 5;
constexpr int kGo = 0, kLeft = 1, kRight = 2;
}  // namespace

Pomdp toy_memory_bit() {
  // 0 -> {A, B} at random; both paths look identical at the decision point.
  Pomdp m = skeleton("memory-bit", Objective::kReachProbMax, 7, 3, 6, 0);
  m.obs_of = {kMbStart, kMbA, kMbB, kMbWait, kMbWait, kMbGoal, kMbFail};
  m.is_target[5] = 1;
  m.legal = {{kGo}, {kGo}, {kGo}, {kLeft, kRight}, {kLeft, kRight}, {kGo}, {kGo}};
  set_row(&m, 0, kGo, {{1, 0.5}, {2, 0.5}});
  set_row(&m, 1, kGo, {{3, 1.0}});
  set_row(&m, 2, kGo, {{4, 1.0}});
  set_row(&m, 3, kLeft, {{5, 1.0}});
  set_row(&m, 3, kRight, {{6, 1.0}});
  set_row(&m, 4, kLeft, {{6, 1.0}});
  set_row(&m, 4, kRight, {{5, 1.0}});
  set_row(&m, 5, kGo, {{5, 1.0}});
  set_row(&m, 6, kGo, {{6, 1.0}});
  validate(m);
  return m;
}

namespace {

Fsc memory_bit_fsc(double correct) {
  double wrong = 1.0 - correct;
  Fsc fsc = empty_fsc(2, 6, 3);
  for (int n = 0; n < 2; ++n) {
    set_rule(&fsc, n, kMbStart, {{kGo, 1.0}}, {{n, 1.0}});
    set_rule(&fsc, n, kMbA, {{kGo, 1.0}}, {{0, 1.0}});
    set_rule(&fsc, n, kMbB, {{kGo, 1.0}}, {{1, 1.0}});
    set_rule(&fsc, n, kMbFail, {{kGo, 1.0}}, {{n, 1.0}});
  }
  if (correct == 1.0) {
    set_rule(&fsc, 0, kMbWait, {{kLeft, 1.0}}, {{0, 1.0}});
    set_rule(&fsc, 1, kMbWait, {{kRight, 1.0}}, {{1, 1.0}});
  } else {
    set_rule(&fsc, 0, kMbWait, {{kLeft, correct}, {kRight, wrong}}, {{0, 1.0}});
    set_rule(&fsc, 1, kMbWait, {{kLeft, wrong}, {kRight, correct}}, {{1, 1.0}});
  }
  validate(fsc);
  return fsc;
}

}  // namespace

Fsc toy_memory_bit_fsc() { return memory_bit_fsc(1.0); }
Fsc toy_memory_bit_noisy_fsc() { return memory_bit_fsc(0.9); }

HmPomdp toy_adversarial_family(int members) {
  HmPomdp family;
  family.name = "adversarial-pair";
  for (int i = 0; i < members; ++i) {
    Pomdp m = skeleton(family.name + "[" + std::to_string(i) + "]",
                       Objective::kReachProbMax, 3, 2, 3, 0);
    m.obs_of = {0, 1, 2};
    m.is_target[1] = 1;
    m.legal = {{0, 1}, {0, 1}, {0, 1}};
    bool inverted = i == members - 1;
    set_row(&m, 0, 0, {{inverted ? 2 : 1, 1.0}});
    set_row(&m, 0, 1, {{inverted ? 1 : 2, 1.0}});
    for (int a = 0; a < 2; ++a) {
      set_row(&m, 1, a, {{1, 1.0}});
      set_row(&m, 2, a, {{2, 1.0}});
    }
    family.members.push_back(std::move(m));
  }
  validate(family);
  return family;
}

Fsc toy_adversarial_balanced_fsc() {
  Fsc fsc = empty_fsc(1, 3, 2);
  set_rule(&fsc, 0, 0, {{0, 0.5}, {1, 0.5}}, {{0, 1.0}});
  set_rule(&fsc, 0, 2, {{0, 1.0}}, {{0, 1.0}});
  validate(fsc);
  return fsc;
}

namespace {

constexpr int kGrid = 4;
// Patrol sweep over the third column, top to bottom and back.
constexpr int kPatrolLen = 6;
int patrol_cell(int phase) {
  static const int rows[kPatrolLen] = {0, 1, 2, 3, 2, 1};
  return rows[phase] * kGrid + 2;
}

int evade_state(int agent, int phase) { return agent * kPatrolLen + phase; }

bool evade_alarm(int agent, int phase) {
  int px = patrol_cell(phase) % kGrid, py = patrol_cell(phase) / kGrid;
  int ax = agent % kGrid, ay = agent / kGrid;
  return std::abs(px - ax) + std::abs(py - ay) <= 1;
}

}  // namespace

Pomdp toy_grid_evade() {
  const int cells = kGrid * kGrid;
  const int goal_cell = cells - 1;
  const int num_states = cells * kPatrolLen + 2;
  const int goal_state = num_states - 2;
  const int fail_state = num_states - 1;
  const int obs_goal = cells * 2, obs_fail = cells * 2 + 1;
  // Actions: up, right, down, left, stay.
  Pomdp m = skeleton("grid-evade", Objective::kReachProbMax, num_states, 5,
                     cells * 2 + 2, evade_state(0, 0));
  for (int agent = 0; agent < cells; ++agent)
    for (int phase = 0; phase < kPatrolLen; ++phase) {
      int s = evade_state(agent, phase);
      m.obs_of[s] = agent * 2 + (evade_alarm(agent, phase) ? 1 : 0);
      m.legal[s] = {0, 1, 2, 3, 4};
    }
  m.obs_of[goal_state] = obs_goal;
  m.obs_of[fail_state] = obs_fail;
  m.is_target[goal_state] = 1;
  m.legal[goal_state] = {0, 1, 2, 3, 4};
  m.legal[fail_state] = {0, 1, 2, 3, 4};
  for (int a = 0; a < 5; ++a) {
    set_row(&m, goal_state, a, {{goal_state, 1.0}});
    set_row(&m, fail_state, a, {{fail_state, 1.0}});
  }

  const int dx[5] = {0, 1, 0, -1, 0};
  const int dy[5] = {-1, 0, 1, 0, 0};
  for (int agent = 0; agent < cells; ++agent)
    for (int phase = 0; phase < kPatrolLen; ++phase) {
      int s = evade_state(agent, phase);
      int next_phase = (phase + 1) % kPatrolLen;
      for (int a = 0; a < 5; ++a) {
        int ax = agent % kGrid + dx[a];
        int ay = agent / kGrid + dy[a];
        int moved = agent;
        if (ax >= 0 && ax < kGrid && ay >= 0 && ay < kGrid)
          moved = ay * kGrid + ax;
        auto outcome = [&](int cell) {
          if (cell == goal_cell) return goal_state;
          if (cell == patrol_cell(next_phase)) return fail_state;
          return evade_state(cell, next_phase);
        };
        // Moves slip back to the current cell with probability 0.1.
        std::map<int, double> row;
        if (moved == agent) {
          row[outcome(agent)] += 1.0;
        } else {
          row[outcome(moved)] += 0.9;
          row[outcome(agent)] += 0.1;
        }
        std::vector<std::pair<int, double>> entries(row.begin(), row.end());
        set_row(&m, s, a, entries);
      }
    }
  validate(m);
  return m;
}

Fsc toy_grid_evade_fsc() {
  // Memoryless sweep: freeze when the alarm is up, otherwise head east then
  // south toward the far corner.
  const int cells = kGrid * kGrid;
  Fsc fsc = empty_fsc(1, cells * 2 + 2, 5);
  for (int agent = 0; agent < cells; ++agent) {
    int x = agent % kGrid;
    int go = x < kGrid - 1 ? 1 : 2;
    set_rule(&fsc, 0, agent * 2, {{go, 1.0}}, {{0, 1.0}});
    set_rule(&fsc, 0, agent * 2 + 1, {{4, 1.0}}, {{0, 1.0}});
  }
  set_rule(&fsc, 0, cells * 2, {{4, 1.0}}, {{0, 1.0}});
  set_rule(&fsc, 0, cells * 2 + 1, {{4, 1.0}}, {{0, 1.0}});
  validate(fsc);
  return fsc;
}

std::vector<ToyInstance> generate_toys() {
  std::vector<ToyInstance> toys;
  {
    ToyInstance t;
    t.name = "goal-chain";
    t.description = "deterministic two-state chain, every policy succeeds";
    t.family.name = t.name;
    t.family.members = {toy_goal_chain()};
    t.certificate = toy_goal_chain_fsc();
    t.recorded_value = 1.0;
    t.value_is_optimal = true;
    t.provenance = "forced optimum: every action reaches the target";
    toys.push_back(std::move(t));
  }
  {
    ToyInstance t;
    t.name = "selfloop-reward";
    t.description = "geometric self-loop, expected total reward 2";
    t.family.name = t.name;
    t.family.members = {toy_selfloop_reward()};
    t.certificate = toy_selfloop_fsc();
    t.recorded_value = 2.0;
    t.value_is_optimal = true;
    t.provenance = "hand fixed point x = 1 + x/2";
    toys.push_back(std::move(t));
  }
  {
    ToyInstance t;
    t.name = "memory-bit";
    t.description = "final action depends on an observation two steps back";
    t.family.name = t.name;
    t.family.members = {toy_memory_bit()};
    t.certificate = toy_memory_bit_fsc();
    t.recorded_value = 1.0;
    t.value_is_optimal = true;
    t.provenance = "hand-built two-node controller, exact solve";
    toys.push_back(std::move(t));
  }
  {
    ToyInstance t;
    t.name = "adversarial-pair";
    t.description = "16 members, one inverts the actions; coin flip is robustly optimal";
    t.family = toy_adversarial_family();
    t.certificate = toy_adversarial_balanced_fsc();
    t.recorded_value = 0.5;
    t.value_is_optimal = true;
    t.provenance = "min(p, 1-p) is maximized by the 50/50 action marginal";
    toys.push_back(std::move(t));
  }
  {
    ToyInstance t;
    t.name = "grid-evade";
    t.description = "4x4 pursuit grid with a sweeping patroller and slip";
    t.family.name = t.name;
    t.family.members = {toy_grid_evade()};
    t.certificate = toy_grid_evade_fsc();
    // Exact value of the shipped sweep controller, frozen from the solver.
    t.recorded_value = 0.96443556024190603;
    t.value_is_optimal = false;
    t.provenance = "certified value of the shipped controller, not optimal";
    toys.push_back(std::move(t));
  }
  return toys;
}

void write_toys(const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const ToyInstance& t : generate_toys()) {
    std::string base = dir + "/" + t.name;
    if (t.is_family())
      save_hm_pomdp(t.family, base + ".hmpomdp");
    else
      save_pomdp(t.single(), base + ".pomdp");
    if (t.certificate) save_fsc(*t.certificate, base + ".fsc");
  }
}

EnumerationResult enumerate_deterministic_fscs(
    const HmPomdp& family, int max_nodes,
    const std::vector<int>& decision_obs) {
  const Pomdp& base = family.members[0];
  struct Choice {
    int node, obs;
    std::vector<int> actions;  // legal candidates
  };
  std::vector<Choice> choices;
  for (int n = 0; n < max_nodes; ++n)
    for (int z : decision_obs) {
      Choice c{n, z, base.legal_for_observation(z)};
      if (c.actions.empty())
        throw Error("observation " + std::to_string(z) +
                    " has no commonly-legal action");
      choices.push_back(std::move(c));
    }

  // Default rows for observations outside the decision set.
  Fsc proto;
  proto.num_nodes = max_nodes;
  proto.num_observations = base.num_observations;
  proto.num_actions = base.num_actions;
  proto.initial_node = 0;
  proto.delta.resize(static_cast<std::size_t>(max_nodes) *
                     base.num_observations);
  proto.eta.resize(proto.delta.size());
  for (int n = 0; n < max_nodes; ++n)
    for (int z = 0; z < base.num_observations; ++z) {
      bool decided = false;
      for (int dz : decision_obs) decided |= dz == z;
      if (decided) continue;
      std::vector<int> legal = base.legal_for_observation(z);
      if (legal.empty()) continue;
      proto.delta[proto.row(n, z)] = {{legal[0]}, {1.0}};
      proto.eta[proto.row(n, z)] = {{n}, {1.0}};
    }

  EnumerationResult result;
  result.value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> odometer(choices.size(), 0);
  while (true) {
    Fsc fsc = proto;
    for (std::size_t i = 0; i < choices.size(); ++i) {
      const Choice& c = choices[i];
      std::size_t pick = odometer[i];
      int action = c.actions[pick % c.actions.size()];
      int node = static_cast<int>(pick / c.actions.size());
      fsc.delta[fsc.row(c.node, c.obs)] = {{action}, {1.0}};
      fsc.eta[fsc.row(c.node, c.obs)] = {{node}, {1.0}};
    }
    double worst = std::numeric_limits<double>::infinity();
    for (const Pomdp& member : family.members)
      worst = std::min(worst, value_of_fsc(member, fsc).value);
    ++result.enumerated;
    if (worst > result.value) {
      result.value = worst;
      result.best = fsc;
    }
    // Advance the mixed-radix odometer.
    std::size_t i = 0;
    for (; i < choices.size(); ++i) {
      std::size_t radix = choices[i].actions.size() *
                          static_cast<std::size_t>(max_nodes);
      if (++odometer[i] < radix) break;
      odometer[i] = 0;
    }
    if (i == choices.size()) break;
  }
  return result;
}

}  // namespace fscplan
