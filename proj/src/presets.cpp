#include "fscplan/presets.hpp"

#include "fscplan/errors.hpp"

namespace fscplan {
namespace {

std::vector<Preset> build_registry() {
  std::vector<Preset> presets;
  auto add = [&](Preset p) { presets.push_back(std::move(p)); };

  // Single-POMDP benchmarks: 4000 training iterations, small controllers.
  auto single = [&](const std::string& name, RewardShaping shaping) {
    Preset p;
    p.name = name;
    p.shaping = shaping;
    p.single_iterations = 4000;
    p.sig_max_nodes = 3;
    p.sig_epochs = 6001;
    return p;
  };
  {
    Preset p = single("maze-10", RewardShaping::reward_max());
    p.init_iterations = 400;
    p.inner_iterations = 150;
    add(p);
  }
  add(single("rocks-16", RewardShaping::reward_min()));
  add(single("network-3-8-20", RewardShaping::reward_min()));
  add(single("network-5-10-8", RewardShaping::reward_min()));
  add(single("intercept-16", RewardShaping::reachability_max()));
  add(single("evade-n17", RewardShaping::reachability_max()));
  add(single("drone-2-8-1", RewardShaping::reachability_max()));

  // Families: per-model iteration budgets; the three large ones get bigger
  // controllers and longer surrogate training.
  auto robust = [&](const std::string& name, RewardShaping shaping, int init,
                    int inner, int max_nodes, int epochs) {
    Preset p;
    p.name = name;
    p.shaping = shaping;
    p.init_iterations = init;
    p.inner_iterations = inner;
    p.sig_max_nodes = max_nodes;
    p.sig_epochs = epochs;
    return p;
  };
  add(robust("rover", RewardShaping::combined(160.0, 1.0, 0.0), 400, 100, 3,
             501));
  add(robust("obstacles-8-5", RewardShaping::combined(360.0, -1.0, 0.0), 400,
             70, 3, 501));
  add(robust("network", RewardShaping::reward_max(), 400, 150, 3, 501));
  add(robust("avoid", RewardShaping::combined(400.0, -1.0, -10.0), 200, 25, 3,
             501));
  {
    Preset p = robust("avoid-large", RewardShaping::combined(400.0, -1.0, -10.0),
                      250, 35, 10, 5001);
    p.initial_members = 11;
    add(p);
  }
  add(robust("drone-2-6-1", RewardShaping::reachability_max(), 400, 50, 10,
             5001));
  add(robust("moving-obstacles", RewardShaping::combined(360.0, -1.0, 0.0),
             400, 50, 10, 5001));
  return presets;
}

const std::vector<Preset>& registry() {
  static const std::vector<Preset> presets = build_registry();
  return presets;
}

}  // namespace

Preset load_preset(const std::string& name) {
  for (const Preset& p : registry())
    if (p.name == name) return p;
  throw Error("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const Preset& p : registry()) names.push_back(p.name);
  return names;
}

}  // namespace fscplan
