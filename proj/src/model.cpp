#include "fscplan/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fscplan {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kReachProbMax:
      return "reach-prob-max";
    case Objective::kReachRewardMax:
      return "reach-reward-max";
    case Objective::kReachRewardMin:
      return "reach-reward-min";
  }
  return "?";
}

Objective objective_from_string(const std::string& s) {
  if (s == "reach-prob-max") return Objective::kReachProbMax;
  if (s == "reach-reward-max") return Objective::kReachRewardMax;
  if (s == "reach-reward-min") return Objective::kReachRewardMin;
  throw ValidationError("unknown objective '" + s + "'");
}

bool is_reward_objective(Objective o) {
  return o != Objective::kReachProbMax;
}

double DiscreteDist::sum() const {
  double total = 0.0;
  for (double p : probs) total += p;
  return total;
}

void DiscreteDist::normalize(const std::string& context) {
  double total = sum();
  if (std::abs(total - 1.0) > kProbTolerance) {
    throw ValidationError(context + " sums to " + std::to_string(total));
  }
  for (double p : probs) {
    if (p < 0.0) throw ValidationError(context + " has a negative entry");
  }
  if (total != 1.0 && total > 0.0) {
    for (double& p : probs) p /= total;
  }
}

bool Pomdp::action_legal(int s, int a) const {
  const auto& acts = legal[s];
  return std::binary_search(acts.begin(), acts.end(), a);
}

std::vector<int> Pomdp::target_states() const {
  std::vector<int> out;
  for (int s = 0; s < num_states; ++s)
    if (is_target[s]) out.push_back(s);
  return out;
}

std::vector<int> Pomdp::legal_for_observation(int z) const {
  std::vector<int> acts;
  bool first = true;
  for (int s = 0; s < num_states; ++s) {
    if (obs_of[s] != z) continue;
    if (first) {
      acts = legal[s];
      first = false;
    } else {
      std::vector<int> inter;
      std::set_intersection(acts.begin(), acts.end(), legal[s].begin(),
                            legal[s].end(), std::back_inserter(inter));
      acts = std::move(inter);
    }
  }
  return acts;
}

void validate(const Pomdp& model) {
  if (model.num_states <= 0) throw ValidationError("model has no states");
  if (model.num_actions <= 0) throw ValidationError("model has no actions");
  if (model.num_observations <= 0)
    throw ValidationError("model has no observations");
  if (model.initial_state < 0 || model.initial_state >= model.num_states)
    throw ValidationError("initial state out of range");
  if (static_cast<int>(model.obs_of.size()) != model.num_states)
    throw ValidationError("observation map does not cover every state");
  if (static_cast<int>(model.is_target.size()) != model.num_states ||
      static_cast<int>(model.legal.size()) != model.num_states)
    throw ValidationError("per-state tables have the wrong length");
  std::size_t rows =
      static_cast<std::size_t>(model.num_states) * model.num_actions;
  if (model.trans.size() != rows || model.reward.size() != rows)
    throw ValidationError("per-(s,a) tables have the wrong length");

  for (int s = 0; s < model.num_states; ++s) {
    if (model.obs_of[s] < 0 || model.obs_of[s] >= model.num_observations)
      throw ValidationError("observation of state " + std::to_string(s) +
                            " out of range");
    if (model.legal[s].empty())
      throw ValidationError("state " + std::to_string(s) +
                            " has no legal action");
    for (int a : model.legal[s]) {
      if (a < 0 || a >= model.num_actions)
        throw ValidationError("legal action out of range in state " +
                              std::to_string(s));
      const DiscreteDist& row = model.transition(s, a);
      if (row.empty())
        throw ValidationError("row (s=" + std::to_string(s) +
                              ",a=" + std::to_string(a) +
                              ") has no transitions");
      double total = 0.0;
      for (std::size_t k = 0; k < row.ids.size(); ++k) {
        if (row.ids[k] < 0 || row.ids[k] >= model.num_states)
          throw ValidationError("successor out of range in row (s=" +
                                std::to_string(s) + ",a=" + std::to_string(a) +
                                ")");
        if (row.probs[k] < 0.0)
          throw ValidationError("negative probability in row (s=" +
                                std::to_string(s) + ",a=" + std::to_string(a) +
                                ")");
        total += row.probs[k];
      }
      if (std::abs(total - 1.0) > kProbTolerance)
        throw ValidationError("row (s=" + std::to_string(s) +
                              ",a=" + std::to_string(a) + ") sums to " +
                              std::to_string(total));
      if (model.is_target[s]) {
        // Targets must be absorbing.
        bool self_one = row.ids.size() == 1 && row.ids[0] == s;
        if (!self_one)
          throw ValidationError("target state " + std::to_string(s) +
                                " is not absorbing under action " +
                                std::to_string(a));
      }
    }
  }
}

void validate(const HmPomdp& family) {
  if (family.members.empty()) throw ValidationError("family has no members");
  const Pomdp& base = family.members[0];
  for (int i = 0; i < family.size(); ++i) {
    const Pomdp& m = family.members[i];
    try {
      validate(m);
    } catch (const ValidationError& e) {
      throw ValidationError("member " + std::to_string(i) + ": " + e.what());
    }
    if (m.num_states != base.num_states || m.num_actions != base.num_actions ||
        m.num_observations != base.num_observations ||
        m.initial_state != base.initial_state || m.obs_of != base.obs_of ||
        m.is_target != base.is_target || m.legal != base.legal ||
        m.objective != base.objective)
      throw ValidationError("member " + std::to_string(i) +
                            " does not share the family structure");
  }
}

ActionDist Fsc::action_marginal(int n, int z) const {
  if (!combined()) return delta[row(n, z)];
  const JointDist& joint = sigma[row(n, z)];
  std::map<int, double> mass;
  for (int k = 0; k < joint.size(); ++k) mass[joint.actions[k]] += joint.probs[k];
  ActionDist out;
  for (const auto& [a, p] : mass) {
    out.actions.push_back(a);
    out.probs.push_back(p);
  }
  return out;
}

namespace {

void check_row_sum(const std::vector<double>& probs, const std::string& what) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw ValidationError(what + " has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kProbTolerance)
    throw ValidationError(what + " sums to " + std::to_string(total));
}

}  // namespace

void validate(const Fsc& fsc) {
  if (fsc.num_nodes <= 0) throw ValidationError("controller has no nodes");
  if (fsc.initial_node < 0 || fsc.initial_node >= fsc.num_nodes)
    throw ValidationError("initial node out of range");
  std::size_t rows =
      static_cast<std::size_t>(fsc.num_nodes) * fsc.num_observations;
  if (fsc.combined()) {
    if (fsc.sigma.size() != rows)
      throw ValidationError("sigma table has the wrong length");
    for (int n = 0; n < fsc.num_nodes; ++n)
      for (int z = 0; z < fsc.num_observations; ++z) {
        const JointDist& d = fsc.joint_dist(n, z);
        if (d.empty()) continue;
        std::string what = "sigma(n=" + std::to_string(n) +
                           ",z=" + std::to_string(z) + ")";
        for (int k = 0; k < d.size(); ++k) {
          if (d.nodes[k] < 0 || d.nodes[k] >= fsc.num_nodes)
            throw ValidationError(what + " has a node out of range");
          if (d.actions[k] < 0 || d.actions[k] >= fsc.num_actions)
            throw ValidationError(what + " has an action out of range");
        }
        check_row_sum(d.probs, what);
      }
    return;
  }
  if (fsc.delta.size() != rows || fsc.eta.size() != rows)
    throw ValidationError("delta/eta tables have the wrong length");
  for (int n = 0; n < fsc.num_nodes; ++n)
    for (int z = 0; z < fsc.num_observations; ++z) {
      const ActionDist& d = fsc.action_dist(n, z);
      const NodeDist& e = fsc.node_dist(n, z);
      if (d.empty() != e.empty())
        throw ValidationError("delta/eta defined inconsistently at (n=" +
                              std::to_string(n) + ",z=" + std::to_string(z) +
                              ")");
      if (d.empty()) continue;
      std::string what =
          "(n=" + std::to_string(n) + ",z=" + std::to_string(z) + ")";
      for (int a : d.actions)
        if (a < 0 || a >= fsc.num_actions)
          throw ValidationError("delta" + what + " has an action out of range");
      for (int m : e.nodes)
        if (m < 0 || m >= fsc.num_nodes)
          throw ValidationError("eta" + what + " has a node out of range");
      check_row_sum(d.probs, "delta" + what);
      check_row_sum(e.probs, "eta" + what);
    }
}

Fsc combine_sigma(const Fsc& fsc) {
  if (fsc.combined()) return fsc;
  Fsc out;
  out.num_nodes = fsc.num_nodes;
  out.num_observations = fsc.num_observations;
  out.num_actions = fsc.num_actions;
  out.initial_node = fsc.initial_node;
  out.sigma.resize(fsc.delta.size());
  for (std::size_t r = 0; r < fsc.delta.size(); ++r) {
    const ActionDist& d = fsc.delta[r];
    const NodeDist& e = fsc.eta[r];
    if (d.empty()) continue;
    JointDist& joint = out.sigma[r];
    for (std::size_t i = 0; i < e.nodes.size(); ++i)
      for (std::size_t j = 0; j < d.actions.size(); ++j) {
        double p = e.probs[i] * d.probs[j];
        if (p == 0.0) continue;
        joint.nodes.push_back(e.nodes[i]);
        joint.actions.push_back(d.actions[j]);
        joint.probs.push_back(p);
      }
  }
  return out;
}

Fsc split_sigma(const Fsc& fsc) {
  if (!fsc.combined()) return fsc;
  Fsc out;
  out.num_nodes = fsc.num_nodes;
  out.num_observations = fsc.num_observations;
  out.num_actions = fsc.num_actions;
  out.initial_node = fsc.initial_node;
  out.delta.resize(fsc.sigma.size());
  out.eta.resize(fsc.sigma.size());
  for (std::size_t r = 0; r < fsc.sigma.size(); ++r) {
    const JointDist& joint = fsc.sigma[r];
    if (joint.empty()) continue;
    std::map<int, double> action_mass;
    std::map<int, double> node_mass;
    for (int k = 0; k < joint.size(); ++k) {
      action_mass[joint.actions[k]] += joint.probs[k];
      node_mass[joint.nodes[k]] += joint.probs[k];
    }
    for (const auto& [a, p] : action_mass) {
      out.delta[r].actions.push_back(a);
      out.delta[r].probs.push_back(p);
    }
    for (const auto& [n, p] : node_mass) {
      out.eta[r].nodes.push_back(n);
      out.eta[r].probs.push_back(p);
    }
  }
  return out;
}

}  // namespace fscplan
