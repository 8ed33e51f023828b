#pragma once

#include "tracelab/trace.hpp"

namespace tracelab {

// One live episode of a deterministic environment. apply() consumes an action
// and returns the resulting observation; done() reports terminal state.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation apply(const Action& action) = 0;
  virtual bool done() const = 0;
  virtual TaskTag task() const = 0;
};

}  // namespace tracelab
