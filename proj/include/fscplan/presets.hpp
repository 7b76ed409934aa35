#pragma once

#include <string>
#include <vector>

#include "fscplan/sim.hpp"

namespace fscplan {

// Per-benchmark configuration bundle: shaping category and constants,
// iteration budgets, and the surrogate extraction size/epochs.
struct Preset {
  std::string name;
  RewardShaping shaping;
  int init_iterations = 400;
  int inner_iterations = 50;
  int initial_members = 6;
  int single_iterations = 4000;
  int sig_max_nodes = 3;
  int sig_epochs = 6001;
};

Preset load_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace fscplan
