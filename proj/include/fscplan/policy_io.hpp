#pragma once

#include <string>

#include "fscplan/policy.hpp"

namespace fscplan {

// Checkpoints store the architecture header plus every named parameter
// slice as float32; loading restores an identically-shaped policy.
void save_policy(const RecurrentPolicy& policy, const std::string& path);
RecurrentPolicy load_policy(const std::string& path);

}  // namespace fscplan
