#include "autobatch/pc_vm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "autobatch/errors.hpp"

namespace autobatch {

namespace {

constexpr std::int64_t kPoisonInt = 0x5eadbeef5eadbeefLL;
const char* const kPcName = "pc";

void fill_lanes(BatchArray& a, std::int64_t v) {
  for (auto& x : a.ints()) x = v;
}

}  // namespace

bool MachineState::halted() const { return next_block() >= halt_; }

int MachineState::next_block() const {
  int lowest = halt_;
  const BatchArray& top = pc_.read_top();
  for (int b = 0; b < z_; ++b) lowest = std::min<int>(lowest, static_cast<int>(top.i(b)));
  return lowest;
}

BatchArray MachineState::value(const VarName& v) const {
  auto it = slots_.find(v);
  if (it == slots_.end()) throw Error("unknown variable '" + v + "'");
  return it->second.stacked ? stacks_[it->second.index].read_top() : regs_[it->second.index];
}

const StackedVar* MachineState::stack_of(const VarName& v) const {
  auto it = slots_.find(v);
  if (it == slots_.end() || !it->second.stacked) return nullptr;
  return &stacks_[it->second.index];
}

std::string MachineState::dump() const {
  std::ostringstream out;
  out << "step " << steps_ << " next " << next_block() << " halt " << halt_ << "\n";
  out << "pc";
  for (int b = 0; b < z_; ++b) out << " " << pc_.read_top().i(b) << "@" << pc_.pointer(b);
  out << "\n";
  for (const auto& [name, slot] : slots_) {
    const BatchArray v = value(name);
    out << name << (slot.stacked ? " stacked" : " register");
    for (int b = 0; b < z_; ++b) {
      out << " ";
      if (v.is_float()) {
        for (int k = 0; k < v.lane_size(); ++k) out << (k ? "," : "") << v.f(b, k);
      } else {
        out << v.i(b);
      }
      if (slot.stacked) out << "@" << stacks_[slot.index].pointer(b);
    }
    out << "\n";
  }
  return out.str();
}

MachineState init_machine(const FlatProgram& flat, const PrimitiveRegistry& registry,
                          const std::vector<BatchArray>& inputs, int D) {
  if (D < 1) throw Error("stack limit D must be at least 1, got " + std::to_string(D));
  if (const auto diags = validate_flat(flat, registry); !diags.empty()) {
    throw Error("invalid flat program: " + to_string(diags.front()));
  }
  if (inputs.size() != flat.inputs.size()) {
    throw RuntimeFault("expected " + std::to_string(flat.inputs.size()) + " inputs, got " +
                       std::to_string(inputs.size()));
  }
  const int z = inputs.empty() ? 1 : inputs[0].lanes();
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].lanes() != z) throw RuntimeFault("inputs disagree on batch size");
    if (inputs[k].type() != flat.vars.at(flat.inputs[k]).type) {
      throw RuntimeFault("input '" + flat.inputs[k] + "' has type " + type_name(inputs[k].type()));
    }
  }

  MachineState s;
  s.prog_ = flat;
  s.z_ = z;
  s.d_ = D;
  s.halt_ = flat.halt_index();
  s.trace_.engine = "pc";
  s.trace_.Z = z;
  const LaneMask all = LaneMask::full(z);

  for (const auto& [name, info] : s.prog_.vars) {
    MachineState::Slot slot;
    slot.stacked = info.cls == VarClass::Stacked;
    if (slot.stacked) {
      slot.index = static_cast<int>(s.stacks_.size());
      s.stacks_.emplace_back(name, info.type, z, D + 1);
      s.stacks_.back().push(BatchArray(info.type, z), all);
      s.scratch_.emplace_back(info.type, z);
    } else {
      slot.index = static_cast<int>(s.regs_.size());
      s.regs_.emplace_back(info.type, z);
      s.reg_is_temp_.push_back(info.cls == VarClass::Temporary);
    }
    s.slots_[name] = slot;
  }
  for (size_t k = 0; k < inputs.size(); ++k) {
    const auto& slot = s.slots_.at(flat.inputs[k]);
    if (slot.stacked) {
      s.stacks_[slot.index].update_top(inputs[k], all);
    } else {
      s.regs_[slot.index] = inputs[k];
    }
  }

  s.pc_ = StackedVar(kPcName, Type::scalar(DType::Int), z, D + 1);
  s.pc_scratch_ = BatchArray(Type::scalar(DType::Int), z);
  fill_lanes(s.pc_scratch_, s.halt_);
  s.pc_.push(s.pc_scratch_, all);
  fill_lanes(s.pc_scratch_, flat.entry);
  s.pc_.push(s.pc_scratch_, all);

  // Counter pointers stay valid: map nodes never move.
  s.pc_counts_ = &s.trace_.stacks[kPcName];
  for (const StackedVar& sv : s.stacks_) s.counts_.push_back(&s.trace_.stacks[sv.name()]);

  for (const FlatBlock& blk : s.prog_.blocks) {
    MachineState::BlockExecutor ex;
    for (const FlatOp& op : blk.ops) {
      MachineState::Instr in;
      in.kind = op.kind;
      in.out = s.slots_.at(op.var);
      if (op.kind != FlatOpKind::Pop) {
        in.prim = registry.find(op.prim);
        if (op.literal) in.literal = &*op.literal;
        for (const VarName& v : op.inputs) in.in.push_back(s.slots_.at(v));
        ex.prim_counts[op.prim] += 1;
      }
      ex.ops.push_back(std::move(in));
    }
    ex.term = blk.term;
    if (const auto* br = std::get_if<Branch>(&blk.term)) ex.cond = s.slots_.at(br->cond);
    s.blocks_.push_back(std::move(ex));
  }
  return s;
}

int step(MachineState& s, const VmOptions& options) {
  const int block = s.next_block();
  if (block >= s.halt_) throw Error("step called on a halted machine");
  if (s.steps_ >= options.max_steps) throw StepLimitExceeded(options.max_steps);
  ++s.steps_;

  LaneMask active(s.z_);
  const BatchArray& top = s.pc_.read_top();
  for (int b = 0; b < s.z_; ++b) active.set(b, top.i(b) == block);

  std::vector<bool> was_halted;
  if (options.debug) {
    for (int b = 0; b < s.z_; ++b) was_halted.push_back(top.i(b) == s.halt_);
    for (size_t r = 0; r < s.regs_.size(); ++r) {
      if (!s.reg_is_temp_[r]) continue;
      for (auto& x : s.regs_[r].floats()) x = std::numeric_limits<double>::quiet_NaN();
      fill_lanes(s.regs_[r], kPoisonInt);
    }
  }
  if (options.observer) options.observer(StepView{s, block, active});

  const MachineState::BlockExecutor& ex = s.blocks_[block];
  s.trace_.steps.push_back(TraceStep{block, active.count(), ex.prim_counts});

  std::vector<const BatchArray*> ptrs;
  auto read = [&](const MachineState::Slot& slot) -> const BatchArray* {
    return slot.stacked ? &s.stacks_[slot.index].read_top() : &s.regs_[slot.index];
  };
  try {
    for (const MachineState::Instr& in : ex.ops) {
      if (in.kind == FlatOpKind::Pop) {
        s.stacks_[in.out.index].pop(active);
        ++s.counts_[in.out.index]->pop;
        continue;
      }
      ptrs.clear();
      for (const auto& slot : in.in) ptrs.push_back(read(slot));
      if (!in.out.stacked) {
        apply(options.mode, *in.prim, ptrs, active, s.regs_[in.out.index], in.literal);
        continue;
      }
      BatchArray& scratch = s.scratch_[in.out.index];
      apply(options.mode, *in.prim, ptrs, active, scratch, in.literal);
      StackedVar& sv = s.stacks_[in.out.index];
      if (in.kind == FlatOpKind::Push) {
        sv.push(scratch, active);
        ++s.counts_[in.out.index]->push;
      } else {
        sv.update_top(scratch, active);
        ++s.counts_[in.out.index]->update;
      }
    }

    BatchArray& next = s.pc_scratch_;
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, Jump>) {
            fill_lanes(next, t.target);
            s.pc_.update_top(next, active);
            ++s.pc_counts_->update;
          } else if constexpr (std::is_same_v<T, Branch>) {
            const BatchArray& c = *read(ex.cond);
            for (int b = 0; b < s.z_; ++b) next.i(b) = c.b(b) ? t.if_true : t.if_false;
            s.pc_.update_top(next, active);
            ++s.pc_counts_->update;
          } else if constexpr (std::is_same_v<T, PushJump>) {
            fill_lanes(next, t.return_to);
            s.pc_.update_top(next, active);
            fill_lanes(next, t.jump_to);
            s.pc_.push(next, active);
            ++s.pc_counts_->update;
            ++s.pc_counts_->push;
          } else {
            s.pc_.pop(active);
            ++s.pc_counts_->pop;
          }
        },
        ex.term);
  } catch (const StackOverflow& e) {
    throw StackOverflow(e.lane(), e.variable(), block);
  } catch (const StackUnderflow& e) {
    throw StackUnderflow(e.lane(), e.variable(), block);
  }

  if (options.debug) {
    for (const StackedVar& sv : s.stacks_) {
      if (!sv.cache_coherent()) throw RuntimeFault("stale cached top for '" + sv.name() + "'");
    }
    if (!s.pc_.cache_coherent()) throw RuntimeFault("stale cached top for the pc stack");
    const BatchArray& after = s.pc_.read_top();
    for (int b = 0; b < s.z_; ++b) {
      if (was_halted[b] && after.i(b) != s.halt_) {
        throw RuntimeFault("halted lane " + std::to_string(b) + " resumed");
      }
      if (after.i(b) < 0 || after.i(b) > s.halt_) {
        throw RuntimeFault("pc of lane " + std::to_string(b) + " out of range");
      }
    }
  }
  return block;
}

std::pair<BatchArray, ScheduleTrace> run_vm(const FlatProgram& flat, const PrimitiveRegistry& registry,
                                            const std::vector<BatchArray>& inputs, int D,
                                            const VmOptions& options) {
  MachineState s = init_machine(flat, registry, inputs, D);
  while (!s.halted()) step(s, options);
  return {s.value(flat.output), s.trace()};
}

}  // namespace autobatch
