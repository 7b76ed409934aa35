#include <doctest.h>

#include "fscplan/model.hpp"
#include "fscplan/rng.hpp"
#include "fscplan/toys.hpp"

using namespace fscplan;

TEST_CASE("validation accepts the toy corpus") {
  for (const ToyInstance& toy : generate_toys()) {
    CHECK_NOTHROW(validate(toy.family));
    if (toy.certificate) CHECK_NOTHROW(validate(*toy.certificate));
  }
}

TEST_CASE("validation names the offending transition row") {
  Pomdp m = toy_goal_chain();
  m.transition(0, 1).probs[0] = 0.9;  // row (s=0,a=1) now sums to 0.9
  try {
    validate(m);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("s=0") != std::string::npos);
    CHECK(msg.find("a=1") != std::string::npos);
  }
}

TEST_CASE("validation rejects non-absorbing targets") {
  Pomdp m = toy_goal_chain();
  m.transition(1, 0) = {{0}, {1.0}};
  CHECK_THROWS_AS(validate(m), ValidationError);
}

TEST_CASE("validation rejects states without legal actions") {
  Pomdp m = toy_goal_chain();
  m.legal[0].clear();
  CHECK_THROWS_AS(validate(m), ValidationError);
}

TEST_CASE("family members must share structure") {
  HmPomdp family = toy_adversarial_family(4);
  family.members[2].obs_of[0] = 1;
  CHECK_THROWS_AS(validate(family), ValidationError);
}

TEST_CASE("combine_sigma on deterministic rules") {
  Fsc fsc = toy_goal_chain_fsc();
  Fsc combined = combine_sigma(fsc);
  const JointDist& joint = combined.joint_dist(0, 0);
  REQUIRE(joint.size() == 1);
  CHECK(joint.nodes[0] == 0);
  CHECK(joint.actions[0] == 0);
  CHECK(joint.probs[0] == doctest::Approx(1.0));
}

TEST_CASE("combine_sigma products of independents") {
  Fsc fsc;
  fsc.num_nodes = 2;
  fsc.num_observations = 1;
  fsc.num_actions = 2;
  fsc.initial_node = 0;
  fsc.delta.resize(2);
  fsc.eta.resize(2);
  fsc.delta[0] = {{0, 1}, {0.5, 0.5}};
  fsc.eta[0] = {{0, 1}, {0.5, 0.5}};
  fsc.delta[1] = {{0}, {1.0}};
  fsc.eta[1] = {{1}, {1.0}};
  Fsc combined = combine_sigma(fsc);
  const JointDist& joint = combined.joint_dist(0, 0);
  REQUIRE(joint.size() == 4);
  for (double p : joint.probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("sigma marginals recover delta and eta") {
  // Random split controller: marginals of the combined form must match the
  // originals by direct summation.
  SplitRng rng(42);
  int nodes = 2, actions = 3;
  Fsc fsc;
  fsc.num_nodes = nodes;
  fsc.num_observations = 1;
  fsc.num_actions = actions;
  fsc.initial_node = 0;
  fsc.delta.resize(nodes);
  fsc.eta.resize(nodes);
  for (int n = 0; n < nodes; ++n) {
    double sum = 0.0;
    std::vector<double> w(actions);
    for (double& x : w) sum += (x = rng.next_double() + 0.05);
    for (int a = 0; a < actions; ++a) {
      fsc.delta[n].actions.push_back(a);
      fsc.delta[n].probs.push_back(w[a] / sum);
    }
    sum = 0.0;
    std::vector<double> v(nodes);
    for (double& x : v) sum += (x = rng.next_double() + 0.05);
    for (int m = 0; m < nodes; ++m) {
      fsc.eta[n].nodes.push_back(m);
      fsc.eta[n].probs.push_back(v[m] / sum);
    }
  }
  validate(fsc);
  Fsc combined = combine_sigma(fsc);
  validate(combined);
  for (int n = 0; n < nodes; ++n) {
    const JointDist& joint = combined.joint_dist(n, 0);
    // Oracle: sum the joint directly.
    std::vector<double> da(actions, 0.0), dn(nodes, 0.0);
    for (int k = 0; k < joint.size(); ++k) {
      da[joint.actions[k]] += joint.probs[k];
      dn[joint.nodes[k]] += joint.probs[k];
    }
    for (int a = 0; a < actions; ++a)
      CHECK(da[a] == doctest::Approx(fsc.delta[n].probs[a]).epsilon(1e-12));
    for (int m = 0; m < nodes; ++m)
      CHECK(dn[m] == doctest::Approx(fsc.eta[n].probs[m]).epsilon(1e-12));
  }

  // Round trip through split recovers the product exactly.
  Fsc split = split_sigma(combined);
  for (int n = 0; n < nodes; ++n) {
    for (int a = 0; a < actions; ++a)
      CHECK(split.delta[n].probs[a] ==
            doctest::Approx(fsc.delta[n].probs[a]).epsilon(1e-12));
    for (int m = 0; m < nodes; ++m)
      CHECK(split.eta[n].probs[m] ==
            doctest::Approx(fsc.eta[n].probs[m]).epsilon(1e-12));
  }
}

TEST_CASE("split_sigma documents the correlation loss") {
  // Perfectly correlated joint: the split marginals rebuild a different
  // product distribution.
  Fsc fsc;
  fsc.num_nodes = 2;
  fsc.num_observations = 1;
  fsc.num_actions = 2;
  fsc.initial_node = 0;
  fsc.sigma.resize(2);
  fsc.sigma[0].nodes = {0, 1};
  fsc.sigma[0].actions = {0, 1};
  fsc.sigma[0].probs = {0.5, 0.5};
  fsc.sigma[1].nodes = {1};
  fsc.sigma[1].actions = {0};
  fsc.sigma[1].probs = {1.0};
  Fsc split = split_sigma(fsc);
  CHECK(split.delta[0].probs[0] == doctest::Approx(0.5));
  CHECK(split.eta[0].probs[0] == doctest::Approx(0.5));
  Fsc rebuilt = combine_sigma(split);
  // The rebuilt product has four equally weighted entries, not two.
  CHECK(rebuilt.joint_dist(0, 0).size() == 4);
}

TEST_CASE("split_sigma is exact for one-node controllers") {
  Fsc fsc;
  fsc.num_nodes = 1;
  fsc.num_observations = 1;
  fsc.num_actions = 2;
  fsc.initial_node = 0;
  fsc.sigma.resize(1);
  fsc.sigma[0].nodes = {0, 0};
  fsc.sigma[0].actions = {0, 1};
  fsc.sigma[0].probs = {0.3, 0.7};
  Fsc rebuilt = combine_sigma(split_sigma(fsc));
  REQUIRE(rebuilt.joint_dist(0, 0).size() == 2);
  CHECK(rebuilt.joint_dist(0, 0).probs[0] == doctest::Approx(0.3));
  CHECK(rebuilt.joint_dist(0, 0).probs[1] == doctest::Approx(0.7));
}
