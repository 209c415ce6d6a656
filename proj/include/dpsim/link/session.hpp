#pragma once

#include <memory>
#include <utility>

#include "dpsim/link/controller.hpp"
#include "dpsim/link/plant.hpp"

namespace dpsim::link
{

struct SessionResult
{
  SessionSummary plant;
  SessionSummary controller;
};

/// Runs one lockstep session over an in-process channel pair: the plant on
/// a worker thread, the controller on the calling thread. Frames are logged
/// to `transcript` when given. Errors from either side are rethrown.
SessionResult run_memory_session(Plant & plant, ControlStack & stack, const ServeOptions & serve,
                                 const ControllerOptions & control = {},
                                 const std::shared_ptr<Transcript> & transcript = nullptr);

/// The reference session behind the shipped conformance vector: full-scale
/// shuttle tanker, position-keeping environment from 30 deg (seed 1), 40
/// wave components, default parameters, three cycles.
[[nodiscard]] std::shared_ptr<Transcript> golden_session();

}  // namespace dpsim::link
