#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fscplan {

// Sampled (observation, action) sequences used by the extraction methods.
struct TrajectoryDataset {
  int num_observations = 0;
  int num_actions = 0;
  // One entry per episode: the (z_t, a_t) pairs in order.
  std::vector<std::vector<std::pair<int, int>>> sequences;

  struct Meta {
    std::string source;
    std::uint64_t seed = 0;
    std::vector<int> member_ids;
    std::int64_t total_steps = 0;
  } meta;

  std::int64_t total_pairs() const {
    std::int64_t n = 0;
    for (const auto& s : sequences) n += static_cast<std::int64_t>(s.size());
    return n;
  }
};

}  // namespace fscplan
