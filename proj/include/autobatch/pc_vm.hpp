#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "autobatch/ir.hpp"
#include "autobatch/metrics.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

class MachineState;

struct StepView {
  const MachineState& state;
  int block = 0;
  const LaneMask& active;
};

struct VmOptions {
  ExecMode mode = ExecMode::Mask;
  std::int64_t max_steps = 1'000'000;
  // Re-derives cached stack tops from the store after every step, checks
  // that halted lanes stay halted, and poisons temporaries between blocks.
  bool debug = false;
  std::function<void(const StepView&)> observer;  // called before each block runs
};

class MachineState {
 public:
  struct Slot {
    bool stacked = false;
    int index = 0;
  };
  struct Instr {
    FlatOpKind kind = FlatOpKind::Push;
    const Primitive* prim = nullptr;
    const Literal* literal = nullptr;
    Slot out;
    std::vector<Slot> in;
  };
  // Precompiled recipe for one block.
  struct BlockExecutor {
    std::vector<Instr> ops;
    FlatTerminator term;
    Slot cond;
    std::map<std::string, std::int64_t> prim_counts;
  };

  MachineState() = default;
  // Executors point into the owned program and trace, so states move but never copy.
  MachineState(const MachineState&) = delete;
  MachineState& operator=(const MachineState&) = delete;
  MachineState(MachineState&&) = default;
  MachineState& operator=(MachineState&&) = default;

  int lanes() const { return z_; }
  int stack_limit() const { return d_; }
  int halt_index() const { return halt_; }
  std::int64_t steps() const { return steps_; }
  const FlatProgram& program() const { return prog_; }

  // Stack of block indices; its top is each lane's program counter.
  const StackedVar& pc() const { return pc_; }
  // Frames above the halt sentinel, i.e. the lane's call depth + 1 while running.
  int depth(int lane) const { return pc_.pointer(lane) - 1; }
  bool halted() const;
  // Smallest program counter over all lanes; the halt index when done.
  int next_block() const;

  // Current value (top frame or register) of a flat variable.
  BatchArray value(const VarName& v) const;
  const StackedVar* stack_of(const VarName& v) const;
  const ScheduleTrace& trace() const { return trace_; }
  // Human-readable snapshot: program counters, pointers and variable tops.
  std::string dump() const;

 private:
  friend MachineState init_machine(const FlatProgram&, const PrimitiveRegistry&,
                                   const std::vector<BatchArray>&, int);
  friend int step(MachineState&, const VmOptions&);

  FlatProgram prog_;
  int z_ = 0;
  int d_ = 0;
  int halt_ = 0;
  std::int64_t steps_ = 0;
  std::map<VarName, Slot> slots_;
  std::vector<StackedVar> stacks_;
  std::vector<BatchArray> regs_;
  std::vector<bool> reg_is_temp_;
  std::vector<BatchArray> scratch_;  // per stacked variable
  StackedVar pc_;
  BatchArray pc_scratch_;
  std::vector<BlockExecutor> blocks_;
  ScheduleTrace trace_;
  std::vector<StackCounts*> counts_;  // per stacked variable, into trace_.stacks
  StackCounts* pc_counts_ = nullptr;
};

// D counts frames available above each variable's base frame. The base frame
// of an entry parameter holds its input; every other base frame is zero. The
// pc stack starts as [halt, entry]. Throws Error when D < 1.
MachineState init_machine(const FlatProgram& flat, const PrimitiveRegistry& registry,
                          const std::vector<BatchArray>& inputs, int D);

// Runs the block at the minimum program counter over its active lanes and
// returns that block index. Precondition: !state.halted().
int step(MachineState& state, const VmOptions& options = {});

std::pair<BatchArray, ScheduleTrace> run_vm(const FlatProgram& flat, const PrimitiveRegistry& registry,
                                            const std::vector<BatchArray>& inputs, int D,
                                            const VmOptions& options = {});

}  // namespace autobatch
