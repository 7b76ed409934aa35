#pragma once

#include <stdexcept>
#include <string>

namespace fscplan {

// Base for all toolkit errors so the CLI can attribute failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& msg)
      : Error(file + ":" + std::to_string(line) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IllegalActionSupport : public Error {
 public:
  IllegalActionSupport(int state, int node, int action)
      : Error("controller assigns probability to action " +
              std::to_string(action) + " which is illegal in state " +
              std::to_string(state) + " (memory node " + std::to_string(node) +
              ")"),
        state(state),
        node(node),
        action(action) {}
  int state, node, action;
};

class MissingDistribution : public Error {
 public:
  MissingDistribution(int node, int observation)
      : Error("controller defines no distribution for memory node " +
              std::to_string(node) + ", observation " +
              std::to_string(observation)),
        node(node),
        observation(observation) {}
  int node, observation;
};

class GoalNotAlmostSure : public Error {
 public:
  explicit GoalNotAlmostSure(double probability)
      : Error("expected-reward objective requires reaching the target with "
              "probability 1, got " +
              std::to_string(probability)),
        probability(probability) {}
  double probability;
};

class NonConvergence : public Error {
 public:
  explicit NonConvergence(double residual)
      : Error("value iteration hit the iteration cap with residual " +
              std::to_string(residual)),
        residual(residual) {}
  double residual;
};

}  // namespace fscplan
