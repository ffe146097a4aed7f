#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "autobatch/ir.hpp"
#include "autobatch/metrics.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

enum class BlockSelector { MinPc, MaxPc };

// One executed block segment, reported before its ops run.
struct LocalStepInfo {
  int function = 0;
  int block = 0;
  int segment = 0;
  int flat_index = 0;  // position in segment_layout(prog)
  int host_depth = 0;  // 0 for the entry activation
  const LaneMask* active = nullptr;
  const std::vector<int>* pc = nullptr;  // per-lane block index in this activation
};

struct LocalOptions {
  ExecMode mode = ExecMode::Mask;
  std::int64_t max_steps = 1'000'000;  // batched segment executions per run
  int max_host_depth = 10'000;
  BlockSelector selector = BlockSelector::MinPc;
  std::function<void(const LocalStepInfo&)> observer;
};

// Batched execution of `func` over lanes in `active`. Lanes outside `active`
// come back as zeros.
BatchArray run_local(const CallGraphProgram& prog, const PrimitiveRegistry& registry, int func,
                     const std::vector<BatchArray>& inputs, const LaneMask& active,
                     const LocalOptions& options = {});

// run_local that also records one trace step per executed block segment.
std::pair<BatchArray, ScheduleTrace> trace_local(const CallGraphProgram& prog,
                                                 const PrimitiveRegistry& registry, int func,
                                                 const std::vector<BatchArray>& inputs,
                                                 const LaneMask& active,
                                                 const LocalOptions& options = {});

// Single-lane interpreter; every input is a one-lane array.
BatchArray run_scalar_reference(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                                int func, const std::vector<BatchArray>& inputs,
                                std::int64_t max_steps = 1'000'000);

// Lane-by-lane reference over a batch.
BatchArray run_reference_batch(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                               int func, const std::vector<BatchArray>& inputs,
                               std::int64_t max_steps = 1'000'000);

}  // namespace autobatch
