#include "fscplan/robust.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>

#include "fscplan/model_io.hpp"
#include "fscplan/policy_io.hpp"

namespace fscplan {

FscRunner::FscRunner(const Fsc& fsc, int lanes)
    : fsc_(&fsc), node_(lanes, fsc.initial_node) {}

void FscRunner::reset(int lane) { node_[lane] = fsc_->initial_node; }

int FscRunner::act(int lane, int observation, SplitRng& rng) {
  int n = node_[lane];
  if (fsc_->combined()) {
    const JointDist& joint = fsc_->joint_dist(n, observation);
    if (joint.empty()) return 0;
    int k = rng.sample_index(joint.probs, joint.size());
    node_[lane] = joint.nodes[k];
    return joint.actions[k];
  }
  const ActionDist& d = fsc_->action_dist(n, observation);
  const NodeDist& e = fsc_->node_dist(n, observation);
  if (d.empty()) return 0;
  int ka = rng.sample_index(d.probs, static_cast<int>(d.probs.size()));
  int kn = rng.sample_index(e.probs, static_cast<int>(e.probs.size()));
  node_[lane] = e.nodes[kn];
  return d.actions[ka];
}

PolicyRunner::PolicyRunner(const RecurrentPolicy& policy, int lanes)
    : policy_(&policy) {
  for (int i = 0; i < lanes; ++i) hidden_.push_back(policy.make_hidden(1));
}

void PolicyRunner::reset(int lane) { hidden_[lane] = policy_->make_hidden(1); }

int PolicyRunner::act(int lane, int observation, SplitRng& rng) {
  Eigen::MatrixXd logits;
  policy_->forward_batch({observation}, &hidden_[lane], &logits, nullptr);
  return sample_action(logits.col(0), rng).first;
}

TrajectoryDataset sample_dataset(const RecurrentPolicy& policy,
                                 const std::vector<const Pomdp*>& members,
                                 const std::vector<int>& lane_counts,
                                 int steps, int max_steps, std::uint64_t seed,
                                 bool masked) {
  SimConfig cfg;
  cfg.max_steps = max_steps;
  cfg.shaping = RewardShaping::identity();
  cfg.seed = SplitRng(seed).derive(11).next_u64();
  BatchSimulator sim(members, lane_counts, cfg);
  int lanes = sim.num_lanes();

  TrajectoryDataset data;
  data.num_observations = sim.num_observations();
  data.num_actions = sim.num_actions();
  data.meta.seed = seed;
  data.meta.source = masked ? "policy/masked" : "policy/unmasked";
  for (std::size_t i = 0; i < members.size(); ++i)
    data.meta.member_ids.push_back(static_cast<int>(i));

  SplitRng master = SplitRng(seed).derive(12);
  std::vector<SplitRng> act_rng(lanes);
  for (int b = 0; b < lanes; ++b)
    act_rng[b] = master.derive(static_cast<std::uint64_t>(b));

  RecurrentPolicy::Hidden hidden = policy.make_hidden(lanes);
  std::vector<std::vector<std::pair<int, int>>> current(lanes);
  std::vector<int> obs(lanes), actions(lanes);
  Eigen::MatrixXd logits;
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < lanes; ++b) obs[b] = sim.observation(b);
    policy.forward_batch(obs, &hidden, &logits, nullptr);
    for (int b = 0; b < lanes; ++b) {
      int action;
      if (masked) {
        const Pomdp& model = sim.model_of(b);
        action = sample_action_masked(logits.col(b),
                                      model.legal[sim.lane_state(b)],
                                      act_rng[b])
                     .first;
      } else {
        action = sample_action(logits.col(b), act_rng[b]).first;
      }
      actions[b] = action;
      current[b].emplace_back(obs[b], action);
    }
    const StepResult& result = sim.step(actions);
    for (int b = 0; b < lanes; ++b)
      if (result.done[b] != DoneFlag::kRunning) {
        data.sequences.push_back(std::move(current[b]));
        current[b] = {};
        hidden.h.col(b).setZero();
        hidden.c.col(b).setZero();
      }
  }
  for (int b = 0; b < lanes; ++b)
    if (!current[b].empty()) data.sequences.push_back(std::move(current[b]));
  data.meta.total_steps = data.total_pairs();
  return data;
}

void complete_missing_rows(Fsc* fsc, const Pomdp& shared_structure) {
  for (int z = 0; z < fsc->num_observations; ++z) {
    std::vector<int> legal = shared_structure.legal_for_observation(z);
    if (legal.empty()) continue;
    double p = 1.0 / static_cast<double>(legal.size());
    for (int n = 0; n < fsc->num_nodes; ++n) {
      std::size_t idx = fsc->row(n, z);
      if (fsc->combined()) {
        if (!fsc->sigma[idx].empty()) continue;
        for (int a : legal) {
          fsc->sigma[idx].nodes.push_back(n);
          fsc->sigma[idx].actions.push_back(a);
          fsc->sigma[idx].probs.push_back(p);
        }
      } else {
        if (!fsc->delta[idx].empty()) continue;
        for (int a : legal) {
          fsc->delta[idx].actions.push_back(a);
          fsc->delta[idx].probs.push_back(p);
        }
        fsc->eta[idx].nodes.push_back(n);
        fsc->eta[idx].probs.push_back(1.0);
      }
    }
  }
}

Fsc prune_unreachable(const Fsc& fsc, const HmPomdp& family) {
  if (family.size() == 1) return prune_unreachable(fsc, family.members[0]);
  // Union model: same shared structure, transitions pooled across members,
  // renormalized; only graph reachability matters here.
  Pomdp merged = family.members[0];
  for (int s = 0; s < merged.num_states; ++s)
    for (int a : merged.legal[s]) {
      std::map<int, double> mass;
      for (const Pomdp& m : family.members) {
        const DiscreteDist& row = m.transition(s, a);
        for (int k = 0; k < row.size(); ++k)
          if (row.probs[k] > 0.0) mass[row.ids[k]] += row.probs[k];
      }
      DiscreteDist& row = merged.transition(s, a);
      row = {};
      double total = 0.0;
      for (auto& [s2, v] : mass) total += v;
      for (auto& [s2, v] : mass) {
        row.ids.push_back(s2);
        row.probs.push_back(v / total);
      }
    }
  return prune_unreachable(fsc, merged);
}

namespace {

Fsc extract_fsc(const TrajectoryDataset& data, const LoopConfig& cfg,
                const Pomdp& shared, const HmPomdp* family, SigNetwork* sig,
                std::uint64_t seed) {
  Fsc fsc;
  if (cfg.method == LoopConfig::Method::kAlergia) {
    AlergiaOptions opts;
    opts.alpha = cfg.alergia_alpha;
    fsc = run_alergia(data, opts);
  } else {
    SigConfig sc = cfg.sig;
    sc.seed = seed;
    train_sig(data, sc, sig);
    fsc = infer_fsc(*sig, sc.prune_epsilon);
  }
  complete_missing_rows(&fsc, shared);
  if (family) return prune_unreachable(fsc, *family);
  return prune_unreachable(fsc, shared);
}

std::string artifact_path(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

}  // namespace

LexpopResult lexpop(const Pomdp& model, const LoopConfig& cfg,
                    RecurrentPolicy* policy) {
  SplitRng master(cfg.seed);
  RecurrentPolicy fresh(model.num_observations, model.num_actions);
  if (!policy) {
    SplitRng init_rng = master.derive(100);
    fresh.init_random(init_rng);
    policy = &fresh;
  }

  bool persist = !cfg.artifact_dir.empty();
  if (persist) std::filesystem::create_directories(cfg.artifact_dir);

  PpoConfig ppo = cfg.ppo;
  if (ppo.iterations == 0) ppo.iterations = cfg.init_iterations;
  {
    std::ofstream metrics_file;
    std::unique_ptr<MetricsWriter> metrics;
    if (persist) {
      metrics_file.open(artifact_path(cfg.artifact_dir, "metrics.csv"));
      metrics = std::make_unique<MetricsWriter>(metrics_file, cfg.timing);
    }
    train_policy(policy, {&model}, {}, ppo, cfg.shaping, cfg.total_lanes,
                 cfg.max_steps, master.derive(101).next_u64(), metrics.get());
  }
  if (persist)
    save_policy(*policy, artifact_path(cfg.artifact_dir, "policy.ckpt"));

  TrajectoryDataset data = sample_dataset(
      *policy, {&model}, {cfg.extract_lanes}, cfg.extract_steps, cfg.max_steps,
      master.derive(102).next_u64(), /*masked=*/true);
  if (persist) save_dataset(data, artifact_path(cfg.artifact_dir, "dataset.txt"));

  SigNetwork sig(model.num_observations, model.num_actions, cfg.sig.max_nodes,
                 cfg.sig.body_size, cfg.sig.hidden_size);
  if (cfg.method == LoopConfig::Method::kSig) {
    SplitRng sig_rng = master.derive(103);
    sig.init_random(sig_rng);
  }
  Fsc fsc = extract_fsc(data, cfg, model, nullptr, &sig,
                        master.derive(104).next_u64());
  if (persist) save_fsc(fsc, artifact_path(cfg.artifact_dir, "controller.fsc"));

  ValueResult value = value_of_fsc(model, fsc);
  return {std::move(fsc), std::move(value)};
}

RobustLoopResult robust_lexpop(const HmPomdp& family, const LoopConfig& cfg) {
  auto clock_start = std::chrono::steady_clock::now();
  auto elapsed_s = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         clock_start)
        .count();
  };
  SplitRng master(cfg.seed);
  bool persist = !cfg.artifact_dir.empty();
  if (persist) std::filesystem::create_directories(cfg.artifact_dir);

  const Pomdp& shared = family.members[0];
  RecurrentPolicy policy(shared.num_observations, shared.num_actions);
  {
    SplitRng init_rng = master.derive(200);
    policy.init_random(init_rng);
  }
  SigNetwork sig(shared.num_observations, shared.num_actions,
                 cfg.sig.max_nodes, cfg.sig.body_size, cfg.sig.hidden_size);
  {
    SplitRng sig_rng = master.derive(201);
    sig.init_random(sig_rng);
  }

  // Initial buffer: distinct members drawn uniformly.
  RobustLoopResult result;
  {
    SplitRng pick_rng = master.derive(202);
    std::vector<int> ids(family.size());
    for (int i = 0; i < family.size(); ++i) ids[i] = i;
    for (int i = family.size() - 1; i > 0; --i) {
      int j = pick_rng.next_int(i + 1);
      std::swap(ids[i], ids[j]);
    }
    int take = std::min(cfg.initial_members, family.size());
    result.buffer.assign(ids.begin(), ids.begin() + take);
  }
  SplitRng selection_rng = master.derive(203);

  double best = -std::numeric_limits<double>::infinity();
  for (int iteration = 0;; ++iteration) {
    if (iteration > 0 && cfg.timeout_seconds > 0.0 &&
        elapsed_s() >= cfg.timeout_seconds)
      break;
    if (cfg.max_loop_iterations > 0 && iteration >= cfg.max_loop_iterations)
      break;
    auto iter_start = std::chrono::steady_clock::now();

    std::vector<const Pomdp*> members;
    for (int id : result.buffer) members.push_back(&family.member(id));
    std::vector<int> lanes = allocate_simulators(
        static_cast<int>(members.size()), cfg.total_lanes, 0.4);

    PpoConfig ppo = cfg.ppo;
    ppo.iterations =
        iteration == 0 ? cfg.init_iterations : cfg.inner_iterations;
    train_policy(&policy, members, lanes, ppo, cfg.shaping, cfg.total_lanes,
                 cfg.max_steps,
                 master.derive(300 + static_cast<std::uint64_t>(iteration))
                     .next_u64(),
                 nullptr);

    std::vector<int> extract_lanes = allocate_simulators(
        static_cast<int>(members.size()), cfg.extract_lanes, 0.4);
    TrajectoryDataset data = sample_dataset(
        policy, members, extract_lanes, cfg.extract_steps, cfg.max_steps,
        master.derive(400 + static_cast<std::uint64_t>(iteration)).next_u64(),
        /*masked=*/true);

    Fsc fsc = extract_fsc(
        data, cfg, shared, &family, &sig,
        master.derive(500 + static_cast<std::uint64_t>(iteration)).next_u64());

    RobustValueResult robust = robust_value(family, fsc);

    PolicyRunner runner(policy, 1);
    EmpiricalResult empirical = evaluate_empirical(
        runner, members, cfg.eval_episodes, cfg.max_steps,
        master.derive(600 + static_cast<std::uint64_t>(iteration)).next_u64());

    int added = cfg.random_selection
                    ? selection_rng.next_int(family.size())
                    : robust.worst_index;
    result.buffer.push_back(added);

    RobustHistoryRow row;
    row.iteration = iteration;
    row.member_added = added;
    row.j_robust = robust.value;
    row.empirical_buffer_value = empirical.mean;
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - iter_start)
                      .count();
    result.history.push_back(row);

    if (robust.value > best) {
      best = robust.value;
      result.best_fsc = fsc;
      result.j_robust = robust.value;
      result.best_iteration = iteration;
      if (persist)
        save_fsc(result.best_fsc, artifact_path(cfg.artifact_dir, "best.fsc"));
    }
    if (persist) {
      save_policy(policy, artifact_path(cfg.artifact_dir, "policy.ckpt"));
      write_history_csv(result.history,
                        artifact_path(cfg.artifact_dir, "history.csv"),
                        cfg.timing);
    }
  }
  return result;
}

void write_history_csv(const std::vector<RobustHistoryRow>& history,
                       const std::string& path, bool timing) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "iteration,member_added,j_robust,empirical_buffer_value,wall_ms\n";
  char buf[160];
  for (const RobustHistoryRow& row : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.3f\n", row.iteration,
                  row.member_added, row.j_robust, row.empirical_buffer_value,
                  timing ? row.wall_ms : 0.0);
    out << buf;
  }
}

}  // namespace fscplan
