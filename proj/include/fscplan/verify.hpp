#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <utility>
#include <vector>

#include "fscplan/model.hpp"

namespace fscplan {

// Markov chain induced by running an FSC in a POMDP, restricted to the
// states reachable from <s0, n0>.
struct ProductChain {
  std::vector<std::pair<int, int>> states;  // chain index -> (state, node)
  int initial = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> transition;
  Eigen::VectorXd reward;
  std::vector<std::uint8_t> is_target;

  int size() const { return static_cast<int>(states.size()); }
};

// Throws IllegalActionSupport if the controller puts mass on an action that
// is illegal in some reachable state, and MissingDistribution if a reachable
// non-target (node, observation) pair has no distribution. Combined-form
// controllers are consumed natively so action-memory correlation survives.
ProductChain build_product(const Pomdp& model, const Fsc& fsc);

struct SolveOptions {
  double tolerance = 1e-12;       // sup-norm Gauss-Seidel residual
  long max_iterations = 1000000;
  // Reward objectives require reaching the target almost surely; with this
  // flag the solver instead reports the expected reward conditioned on
  // reaching the target (not the plain objective semantics).
  bool conditional_reward = false;
};

struct ValueResult {
  double value = 0.0;
  Objective objective = Objective::kReachProbMax;
  Eigen::VectorXd value_function;  // over chain states
  long iterations = 0;
  double residual = 0.0;
  double goal_probability = 0.0;  // from the initial product state
};

ValueResult solve_value(const ProductChain& chain, Objective objective,
                        const SolveOptions& opts = {});

// Direct sparse linear solve of the same fixed point; cross-check for the
// iterative path on small chains.
double solve_value_linear(const ProductChain& chain, Objective objective);

ValueResult value_of_fsc(const Pomdp& model, const Fsc& fsc,
                         const SolveOptions& opts = {});

struct RobustValueResult {
  double value = 0.0;
  int worst_index = 0;
  std::vector<double> member_values;
};

// Exhaustive worst-case evaluation over the family; members are solved in
// parallel and ties break toward the smallest index.
RobustValueResult robust_value(const HmPomdp& family, const Fsc& fsc,
                               const SolveOptions& opts = {});

// Thread count for parallel stages: FSCPLAN_THREADS or hardware concurrency.
int default_thread_count();

}  // namespace fscplan
