#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fscplan/model_io.hpp"
#include "fscplan/toys.hpp"

using namespace fscplan;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

bool same_pomdp(const Pomdp& a, const Pomdp& b) {
  if (a.num_states != b.num_states || a.num_actions != b.num_actions ||
      a.num_observations != b.num_observations ||
      a.initial_state != b.initial_state || a.objective != b.objective ||
      a.obs_of != b.obs_of || a.is_target != b.is_target || a.legal != b.legal ||
      a.reward != b.reward)
    return false;
  for (std::size_t i = 0; i < a.trans.size(); ++i)
    if (a.trans[i].ids != b.trans[i].ids || a.trans[i].probs != b.trans[i].probs)
      return false;
  return true;
}

}  // namespace

TEST_CASE("minimal chain parses") {
  std::string path = temp_path("fscplan_chain.pomdp");
  write_file(path,
             "pomdp\n"
             "objective reach-reward-max\n"
             "states 2\nactions 1\nobservations 2\ninitial 0\n"
             "targets 1\n"
             "obs 0 1\n"
             "transitions\n"
             "0 0 1 1.0\n"
             "1 0 1 1.0\n"
             "rewards\n"
             "0 0 5\n"
             "end\n");
  Pomdp m = load_pomdp(path);
  CHECK(m.num_states == 2);
  CHECK(m.is_target[1] == 1);
  CHECK(m.reward_at(0, 0) == doctest::Approx(5.0));
  CHECK(m.objective == Objective::kReachRewardMax);
  std::remove(path.c_str());
}

TEST_CASE("rows off by more than the tolerance are rejected with location") {
  std::string path = temp_path("fscplan_bad.pomdp");
  write_file(path,
             "pomdp\n"
             "objective reach-prob-max\n"
             "states 2\nactions 1\nobservations 2\ninitial 0\n"
             "targets 1\n"
             "obs 0 1\n"
             "transitions\n"
             "0 0 1 0.9\n"
             "1 0 1 1.0\n"
             "end\n");
  try {
    load_pomdp(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("s=0") != std::string::npos);
    CHECK(msg.find("0.9") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("tiny drift is renormalized") {
  std::string path = temp_path("fscplan_drift.pomdp");
  write_file(path,
             "pomdp\n"
             "objective reach-prob-max\n"
             "states 2\nactions 1\nobservations 2\ninitial 0\n"
             "targets 1\n"
             "obs 0 1\n"
             "transitions\n"
             "0 0 0 0.50000000001\n"
             "0 0 1 0.5\n"
             "1 0 1 1.0\n"
             "end\n");
  Pomdp m = load_pomdp(path);
  CHECK(m.transition(0, 0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  std::remove(path.c_str());
}

TEST_CASE("family files apply member deltas against member 0") {
  std::string path = temp_path("fscplan_family.hmpomdp");
  write_file(path,
             "hmpomdp\n"
             "members 2\n"
             "objective reach-prob-max\n"
             "states 3\nactions 1\nobservations 3\ninitial 0\n"
             "targets 1\n"
             "obs 0 1 2\n"
             "transitions\n"
             "0 0 1 0.7\n"
             "0 0 2 0.3\n"
             "1 0 1 1.0\n"
             "2 0 2 1.0\n"
             "member 1\n"
             "transitions\n"
             "0 0 1 0.4\n"
             "0 0 2 0.6\n"
             "end\n");
  HmPomdp family = load_hm_pomdp(path);
  REQUIRE(family.size() == 2);
  CHECK(family.member(0).transition(0, 0).probs[0] == doctest::Approx(0.7));
  CHECK(family.member(1).transition(0, 0).probs[0] == doctest::Approx(0.4));
  // Untouched rows are inherited.
  CHECK(family.member(1).transition(1, 0).ids ==
        family.member(0).transition(1, 0).ids);
  std::remove(path.c_str());
}

TEST_CASE("parse round trip is the identity on models") {
  for (const ToyInstance& toy : generate_toys()) {
    std::string path = temp_path("fscplan_rt_" + toy.name);
    if (toy.is_family()) {
      save_hm_pomdp(toy.family, path);
      HmPomdp loaded = load_hm_pomdp(path);
      REQUIRE(loaded.size() == toy.family.size());
      for (int i = 0; i < loaded.size(); ++i)
        CHECK(same_pomdp(loaded.member(i), toy.family.member(i)));
    } else {
      save_pomdp(toy.single(), path);
      Pomdp loaded = load_pomdp(path);
      CHECK(same_pomdp(loaded, toy.single()));
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("fsc round trip preserves both forms") {
  std::string path = temp_path("fscplan_rt.fsc");
  Fsc split = toy_memory_bit_noisy_fsc();
  save_fsc(split, path);
  Fsc loaded = load_fsc(path);
  CHECK(loaded.num_nodes == split.num_nodes);
  for (std::size_t i = 0; i < split.delta.size(); ++i) {
    CHECK(loaded.delta[i].actions == split.delta[i].actions);
    CHECK(loaded.delta[i].probs == split.delta[i].probs);
    CHECK(loaded.eta[i].nodes == split.eta[i].nodes);
    CHECK(loaded.eta[i].probs == split.eta[i].probs);
  }

  Fsc combined = combine_sigma(split);
  save_fsc(combined, path);
  Fsc loaded2 = load_fsc(path);
  REQUIRE(loaded2.combined());
  for (std::size_t i = 0; i < combined.sigma.size(); ++i) {
    CHECK(loaded2.sigma[i].nodes == combined.sigma[i].nodes);
    CHECK(loaded2.sigma[i].actions == combined.sigma[i].actions);
    CHECK(loaded2.sigma[i].probs == combined.sigma[i].probs);
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset round trip") {
  std::string path = temp_path("fscplan_rt.dataset");
  TrajectoryDataset data;
  data.num_observations = 3;
  data.num_actions = 2;
  data.sequences = {{{0, 1}, {2, 0}}, {{1, 1}}};
  save_dataset(data, path);
  TrajectoryDataset loaded = load_dataset(path);
  CHECK(loaded.sequences == data.sequences);
  CHECK(loaded.num_observations == 3);
  std::remove(path.c_str());
}
