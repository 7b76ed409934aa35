#include "fscplan/verify.hpp"

#include <Eigen/SparseLU>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <map>
#include <thread>
#include <unordered_map>

namespace fscplan {
namespace {

constexpr double kSupportEps = 1e-12;

std::int64_t pair_key(int s, int n, int num_nodes) {
  return static_cast<std::int64_t>(s) * num_nodes + n;
}

}  // namespace

ProductChain build_product(const Pomdp& model, const Fsc& fsc) {
  if (fsc.num_observations != model.num_observations ||
      fsc.num_actions != model.num_actions)
    throw ValidationError(
        "controller signature does not match the model (|Z|, |A|)");

  ProductChain chain;
  std::unordered_map<std::int64_t, int> index;
  std::deque<int> queue;
  auto intern = [&](int s, int n) {
    auto [it, inserted] =
        index.try_emplace(pair_key(s, n, fsc.num_nodes), chain.size());
    if (inserted) {
      chain.states.emplace_back(s, n);
      queue.push_back(it->second);
    }
    return it->second;
  };
  chain.initial = intern(model.initial_state, fsc.initial_node);

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> rewards;
  std::vector<std::uint8_t> targets;
  // Row accumulation for the state currently expanded.
  std::unordered_map<std::int64_t, double> row;

  while (!queue.empty()) {
    int idx = queue.front();
    queue.pop_front();
    auto [s, n] = chain.states[idx];
    if (static_cast<int>(rewards.size()) <= idx) {
      rewards.resize(idx + 1, 0.0);
      targets.resize(idx + 1, 0);
    }
    if (model.is_target[s]) {
      targets[idx] = 1;
      rewards[idx] = 0.0;
      triplets.emplace_back(idx, idx, 1.0);
      continue;
    }
    int z = model.obs_of[s];
    row.clear();
    double reward = 0.0;
    if (fsc.combined()) {
      const JointDist& joint = fsc.joint_dist(n, z);
      if (joint.empty()) throw MissingDistribution(n, z);
      for (int k = 0; k < joint.size(); ++k) {
        double p = joint.probs[k];
        if (p <= 0.0) continue;
        int a = joint.actions[k];
        if (!model.action_legal(s, a)) {
          if (p > kSupportEps) throw IllegalActionSupport(s, n, a);
          continue;
        }
        reward += p * model.reward_at(s, a);
        const DiscreteDist& t = model.transition(s, a);
        for (int j = 0; j < t.size(); ++j)
          row[pair_key(t.ids[j], joint.nodes[k], fsc.num_nodes)] +=
              p * t.probs[j];
      }
    } else {
      const ActionDist& d = fsc.action_dist(n, z);
      const NodeDist& e = fsc.node_dist(n, z);
      if (d.empty()) throw MissingDistribution(n, z);
      for (std::size_t k = 0; k < d.actions.size(); ++k) {
        double pa = d.probs[k];
        if (pa <= 0.0) continue;
        int a = d.actions[k];
        if (!model.action_legal(s, a)) {
          if (pa > kSupportEps) throw IllegalActionSupport(s, n, a);
          continue;
        }
        reward += pa * model.reward_at(s, a);
        const DiscreteDist& t = model.transition(s, a);
        for (int j = 0; j < t.size(); ++j) {
          double pt = pa * t.probs[j];
          for (std::size_t m = 0; m < e.nodes.size(); ++m)
            row[pair_key(t.ids[j], e.nodes[m], fsc.num_nodes)] +=
                pt * e.probs[m];
        }
      }
    }
    rewards[idx] = reward;
    double total = 0.0;
    for (const auto& [key, p] : row) total += p;
    if (std::abs(total - 1.0) > kProbTolerance)
      throw ValidationError("product row for state " + std::to_string(s) +
                            ", node " + std::to_string(n) + " sums to " +
                            std::to_string(total));
    for (const auto& [key, p] : row) {
      int s2 = static_cast<int>(key / fsc.num_nodes);
      int n2 = static_cast<int>(key % fsc.num_nodes);
      triplets.emplace_back(idx, intern(s2, n2), p / total);
    }
  }

  int size = chain.size();
  rewards.resize(size, 0.0);
  targets.resize(size, 0);
  chain.transition.resize(size, size);
  chain.transition.setFromTriplets(triplets.begin(), triplets.end());
  chain.reward = Eigen::Map<Eigen::VectorXd>(rewards.data(), size);
  chain.is_target = std::move(targets);
  return chain;
}

namespace {

// States with a path to a target (forward check done backwards over edges).
std::vector<std::uint8_t> can_reach(
    const ProductChain& chain, const std::vector<std::uint8_t>& sources) {
  // Build the reverse adjacency once.
  std::vector<std::vector<int>> pred(chain.size());
  for (int i = 0; i < chain.size(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
             chain.transition, i);
         it; ++it)
      if (it.value() > 0.0 && it.col() != i)
        pred[it.col()].push_back(i);
  std::vector<std::uint8_t> reached(chain.size(), 0);
  std::deque<int> queue;
  for (int i = 0; i < chain.size(); ++i)
    if (sources[i]) {
      reached[i] = 1;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    int i = queue.front();
    queue.pop_front();
    for (int p : pred[i])
      if (!reached[p]) {
        reached[p] = 1;
        queue.push_back(p);
      }
  }
  return reached;
}

struct ReachabilitySolve {
  Eigen::VectorXd probs;
  std::vector<std::uint8_t> almost_sure;  // per state: reaches G w.p. 1
  long iterations = 0;
  double residual = 0.0;
};

ReachabilitySolve solve_reachability(const ProductChain& chain,
                                     const SolveOptions& opts) {
  ReachabilitySolve out;
  int size = chain.size();
  std::vector<std::uint8_t> reach_target = can_reach(chain, chain.is_target);
  std::vector<std::uint8_t> prob0(size, 0);
  for (int i = 0; i < size; ++i) prob0[i] = reach_target[i] ? 0 : 1;
  std::vector<std::uint8_t> reach_prob0 = can_reach(chain, prob0);
  out.almost_sure.assign(size, 0);
  for (int i = 0; i < size; ++i) out.almost_sure[i] = reach_prob0[i] ? 0 : 1;

  out.probs = Eigen::VectorXd::Zero(size);
  std::vector<int> undecided;
  for (int i = 0; i < size; ++i) {
    if (out.almost_sure[i])
      out.probs[i] = 1.0;
    else if (!prob0[i])
      undecided.push_back(i);
  }
  // Gauss-Seidel sweeps over the genuinely uncertain states; iterates are
  // nondecreasing from the zero vector.
  double residual = 0.0;
  long iter = 0;
  for (; iter < opts.max_iterations && !undecided.empty(); ++iter) {
    residual = 0.0;
    for (int i : undecided) {
      double v = 0.0;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
               chain.transition, i);
           it; ++it)
        v += it.value() * out.probs[it.col()];
      residual = std::max(residual, std::abs(v - out.probs[i]));
      out.probs[i] = v;
    }
    if (residual <= opts.tolerance) break;
  }
  if (!undecided.empty() && residual > opts.tolerance)
    throw NonConvergence(residual);
  out.iterations = iter;
  out.residual = residual;
  return out;
}

}  // namespace

ValueResult solve_value(const ProductChain& chain, Objective objective,
                        const SolveOptions& opts) {
  ValueResult out;
  out.objective = objective;
  ReachabilitySolve reach = solve_reachability(chain, opts);
  out.goal_probability = reach.probs[chain.initial];
  if (objective == Objective::kReachProbMax) {
    out.value_function = reach.probs;
    out.value = reach.probs[chain.initial];
    out.iterations = reach.iterations;
    out.residual = reach.residual;
    return out;
  }

  // Expected cumulative reward until the target, which must be reached
  // almost surely from the initial state (all reachable states inherit it).
  if (!reach.almost_sure[chain.initial] && !opts.conditional_reward)
    throw GoalNotAlmostSure(out.goal_probability);

  int size = chain.size();
  out.value_function = Eigen::VectorXd::Zero(size);
  std::vector<int> transient;
  Eigen::VectorXd weights = reach.probs;
  for (int i = 0; i < size; ++i)
    if (!chain.is_target[i] && weights[i] > 0.0) transient.push_back(i);

  double residual = 0.0;
  long iter = 0;
  for (; iter < opts.max_iterations && !transient.empty(); ++iter) {
    residual = 0.0;
    for (int i : transient) {
      // Conditioned on eventually reaching the target, successor mass is
      // reweighted by its goal probability; in the almost-sure case the
      // weights are all 1 and this is the plain fixed point.
      double v = chain.reward[i];
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
               chain.transition, i);
           it; ++it)
        v += it.value() * weights[it.col()] / weights[i] *
             out.value_function[it.col()];
      residual = std::max(residual, std::abs(v - out.value_function[i]));
      out.value_function[i] = v;
    }
    if (residual <= opts.tolerance) break;
  }
  if (!transient.empty() && residual > opts.tolerance)
    throw NonConvergence(residual);
  out.iterations = reach.iterations + iter;
  out.residual = residual;
  out.value = out.value_function[chain.initial];
  return out;
}

double solve_value_linear(const ProductChain& chain, Objective objective) {
  // Assemble (I - T_uu) x = b over the undecided/transient block.
  ReachabilitySolve reach = solve_reachability(chain, {});
  int size = chain.size();
  std::vector<int> open;
  std::vector<int> pos(size, -1);
  for (int i = 0; i < size; ++i) {
    bool include = objective == Objective::kReachProbMax
                       ? (!reach.almost_sure[i] && reach.probs[i] > 0.0)
                       : (!chain.is_target[i]);
    if (include) {
      pos[i] = static_cast<int>(open.size());
      open.push_back(i);
    }
  }
  if (objective != Objective::kReachProbMax &&
      !reach.almost_sure[chain.initial])
    throw GoalNotAlmostSure(reach.probs[chain.initial]);
  if (pos[chain.initial] < 0)
    return objective == Objective::kReachProbMax
               ? reach.probs[chain.initial]
               : 0.0;

  int m = static_cast<int>(open.size());
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < m; ++r) {
    int i = open[r];
    std::map<int, double> arow;
    arow[r] = 1.0;
    if (objective != Objective::kReachProbMax) b[r] = chain.reward[i];
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
             chain.transition, i);
         it; ++it) {
      int j = static_cast<int>(it.col());
      if (pos[j] >= 0)
        arow[pos[j]] -= it.value();
      else if (objective == Objective::kReachProbMax && reach.almost_sure[j])
        b[r] += it.value();
    }
    for (const auto& [c, v] : arow) triplets.emplace_back(r, c, v);
  }
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a);
  if (lu.info() != Eigen::Success)
    throw Error("sparse LU factorization failed");
  Eigen::VectorXd x = lu.solve(b);
  return x[pos[chain.initial]];
}

ValueResult value_of_fsc(const Pomdp& model, const Fsc& fsc,
                         const SolveOptions& opts) {
  return solve_value(build_product(model, fsc), model.objective, opts);
}

int default_thread_count() {
  if (const char* env = std::getenv("FSCPLAN_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

RobustValueResult robust_value(const HmPomdp& family, const Fsc& fsc,
                               const SolveOptions& opts) {
  RobustValueResult out;
  int count = family.size();
  out.member_values.assign(count, 0.0);
  std::vector<std::exception_ptr> failures(count);

  int threads = std::min(default_thread_count(), count);
  std::atomic<int> cursor{0};
  auto worker = [&] {
    while (true) {
      int i = cursor.fetch_add(1);
      if (i >= count) break;
      try {
        out.member_values[i] = value_of_fsc(family.member(i), fsc, opts).value;
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < count; ++i)
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const std::exception& e) {
        throw Error("member " + std::to_string(i) + ": " + e.what());
      }
    }
  out.worst_index = 0;
  out.value = out.member_values[0];
  for (int i = 1; i < count; ++i)
    if (out.member_values[i] < out.value) {
      out.value = out.member_values[i];
      out.worst_index = i;
    }
  return out;
}

}  // namespace fscplan
