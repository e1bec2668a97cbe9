#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redoff/features.hpp"
#include "redoff/server_set.hpp"

namespace redoff {

/// What a controller learns after its selection for a task is executed:
/// delays of the replicas it sent, nothing about the others.
struct TaskOutcome {
  std::int64_t task_index = 0;
  ServerSet selected;
  double delta_min = 0.0;
  std::vector<std::pair<int, double>> replica_delays;  // (server, delay) for selected servers only
};

/// Chooses the replica set for the next task from the masked state.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ServerSet select(const FeatureState& state) = 0;
  virtual void observe(const TaskOutcome&) {}
  virtual void reset() {}
  virtual std::string name() const = 0;
};

}  // namespace redoff
