#pragma once

#include <map>
#include <utility>
#include <vector>

#include "fscplan/dataset.hpp"
#include "fscplan/model.hpp"

namespace fscplan {

// Per-node frequency statistics: for each observation, how often each action
// was emitted at this history.
using ObsActionCounts = std::map<int, std::vector<long>>;

// Upper tail of the chi-squared distribution with integer df.
double chi_squared_survival(double statistic, int df);

// Pearson homogeneity statistic of a 2 x k contingency table; columns with
// zero total are dropped and df reported as k'-1.
struct Chi2Table {
  double statistic = 0.0;
  int df = 0;
};
Chi2Table chi2_homogeneity(const std::vector<long>& counts1,
                           const std::vector<long>& counts2);

// Tests every observation shared by both count sets and rejects if any of
// them rejects at level alpha. Sides with fewer than min_samples samples
// under an observation skip the test for it (the statistic is meaningless
// at low expected counts).
bool chi2_compatible(const ObsActionCounts& counts1,
                     const ObsActionCounts& counts2, double alpha,
                     long min_samples = 10);

struct PrefixTree {
  struct Node {
    int depth = 0;
    ObsActionCounts counts;
    std::map<std::pair<int, int>, int> children;  // (z, a) -> node index
  };
  std::vector<Node> nodes;  // index 0 is the root; indices follow creation

  long total_count() const;
};

PrefixTree build_prefix_tree(const TrajectoryDataset& data);

struct AlergiaOptions {
  double alpha = 0.05;
  long min_samples = 10;
};

// Red-blue state merging over the prefix tree under recursive chi-squared
// compatibility; returns the controller in combined-sigma form with
// frequency-estimated distributions.
Fsc run_alergia(const TrajectoryDataset& data, const AlergiaOptions& opts = {});

}  // namespace fscplan
