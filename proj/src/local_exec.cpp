#include "autobatch/local_exec.hpp"

#include <algorithm>
#include <map>

#include "autobatch/errors.hpp"

namespace autobatch {

namespace {

// Call-graph program with names resolved to indices and blocks cut into
// call-terminated segments.
struct ROp {
  const Primitive* prim = nullptr;  // null for calls
  const Literal* literal = nullptr;
  int callee = -1;
  int out = 0;
  std::vector<int> in;
};

struct RSegment {
  std::vector<ROp> ops;  // a call, if any, is last
  std::map<std::string, std::int64_t> prim_counts;
  int flat_index = 0;
};

struct RBlock {
  std::vector<RSegment> segments;
  enum class Kind { Jump, Branch, Return } kind = Kind::Return;
  int cond = -1;
  int if_true = 0;
  int if_false = 0;
};

struct RFunction {
  std::vector<Type> types;
  std::vector<int> params;
  int output = 0;
  std::vector<RBlock> blocks;
};

std::vector<RFunction> resolve(const CallGraphProgram& prog, const PrimitiveRegistry& registry) {
  const SegmentLayout layout = segment_layout(prog);
  std::vector<RFunction> out;
  for (size_t fi = 0; fi < prog.functions.size(); ++fi) {
    const Function& f = prog.functions[fi];
    RFunction rf;
    std::map<std::string, int> index;
    for (const auto& [name, type] : f.vars) {
      index[name] = static_cast<int>(rf.types.size());
      rf.types.push_back(type);
    }
    auto var = [&](const std::string& n) {
      auto it = index.find(n);
      if (it == index.end()) throw RuntimeFault("undeclared variable '" + n + "' in " + f.name);
      return it->second;
    };
    for (const auto& p : f.params) rf.params.push_back(var(p));
    rf.output = var(f.output);
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& b = f.blocks[bi];
      RBlock rb;
      rb.segments.emplace_back();
      for (const Op& op : b.ops) {
        ROp r;
        if (const auto* p = std::get_if<PrimitiveOp>(&op)) {
          r.prim = registry.find(p->prim);
          if (!r.prim) throw RuntimeFault("unknown primitive '" + p->prim + "'");
          if (p->literal) r.literal = &*p->literal;
          r.out = var(p->output);
          for (const auto& v : p->inputs) r.in.push_back(var(v));
          rb.segments.back().prim_counts[p->prim] += 1;
          rb.segments.back().ops.push_back(std::move(r));
        } else {
          const auto& c = std::get<CallOp>(op);
          r.callee = c.callee;
          r.out = var(c.output);
          for (const auto& v : c.args) r.in.push_back(var(v));
          rb.segments.back().ops.push_back(std::move(r));
          rb.segments.emplace_back();
        }
      }
      for (size_t s = 0; s < rb.segments.size(); ++s) {
        rb.segments[s].flat_index =
            layout.index(static_cast<int>(fi), static_cast<int>(bi), static_cast<int>(s));
      }
      std::visit(
          [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              rb.kind = RBlock::Kind::Jump;
              rb.if_true = t.target;
            } else if constexpr (std::is_same_v<T, Branch>) {
              rb.kind = RBlock::Kind::Branch;
              rb.cond = var(t.cond);
              rb.if_true = t.if_true;
              rb.if_false = t.if_false;
            } else {
              rb.kind = RBlock::Kind::Return;
            }
          },
          b.term);
      rf.blocks.push_back(std::move(rb));
    }
    out.push_back(std::move(rf));
  }
  return out;
}

void check_inputs(const RFunction& f, const std::vector<BatchArray>& inputs, int lanes) {
  if (inputs.size() != f.params.size()) {
    throw RuntimeFault("expected " + std::to_string(f.params.size()) + " inputs, got " +
                       std::to_string(inputs.size()));
  }
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].type() != f.types[f.params[k]]) {
      throw RuntimeFault("input " + std::to_string(k) + " has type " +
                         type_name(inputs[k].type()) + ", expected " +
                         type_name(f.types[f.params[k]]));
    }
    if (inputs[k].lanes() != lanes) throw RuntimeFault("inputs disagree on batch size");
  }
}

class LocalEngine {
 public:
  LocalEngine(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
              const LocalOptions& options, ScheduleTrace* trace)
      : fns_(resolve(prog, registry)), options_(options), trace_(trace) {}

  BatchArray run(int func, const std::vector<BatchArray>& inputs, const LaneMask& active) {
    if (func < 0 || func >= static_cast<int>(fns_.size())) throw RuntimeFault("bad function index");
    const int z = active.lanes();
    check_inputs(fns_[func], inputs, z);
    if (trace_) trace_->Z = z;
    return call(func, inputs, active, 0);
  }

 private:
  BatchArray call(int func, const std::vector<BatchArray>& args, const LaneMask& active, int depth) {
    if (depth > options_.max_host_depth) throw HostRecursionLimit(options_.max_host_depth);
    const RFunction& f = fns_[func];
    const int z = active.lanes();
    std::vector<BatchArray> vars;
    vars.reserve(f.types.size());
    for (const Type& t : f.types) vars.emplace_back(t, z);
    for (size_t k = 0; k < f.params.size(); ++k) vars[f.params[k]] = args[k];

    const int halt = static_cast<int>(f.blocks.size());
    std::vector<int> pc(z, halt);
    for (int b : active.indices()) pc[b] = 0;

    LaneMask here(z);
    std::vector<const BatchArray*> ptrs;
    for (;;) {
      int chosen = -1;
      for (int b = 0; b < z; ++b) {
        if (pc[b] >= halt) continue;
        if (chosen < 0 || (options_.selector == BlockSelector::MinPc ? pc[b] < chosen : pc[b] > chosen)) {
          chosen = pc[b];
        }
      }
      if (chosen < 0) break;
      for (int b = 0; b < z; ++b) here.set(b, pc[b] == chosen);

      const RBlock& blk = f.blocks[chosen];
      for (size_t s = 0; s < blk.segments.size(); ++s) {
        const RSegment& seg = blk.segments[s];
        record(func, chosen, static_cast<int>(s), seg, depth, here, pc);
        for (const ROp& op : seg.ops) {
          if (op.prim) {
            ptrs.clear();
            for (int v : op.in) ptrs.push_back(&vars[v]);
            apply(options_.mode, *op.prim, ptrs, here, vars[op.out], op.literal);
          } else {
            std::vector<BatchArray> callee_args;
            for (int v : op.in) callee_args.push_back(vars[v]);
            const BatchArray result = call(op.callee, callee_args, here, depth + 1);
            for (int b : here.indices()) vars[op.out].copy_lane_from(b, result, b);
          }
        }
      }

      switch (blk.kind) {
        case RBlock::Kind::Jump:
          for (int b : here.indices()) pc[b] = blk.if_true;
          break;
        case RBlock::Kind::Branch:
          for (int b : here.indices()) pc[b] = vars[blk.cond].b(b) ? blk.if_true : blk.if_false;
          break;
        case RBlock::Kind::Return:
          for (int b : here.indices()) pc[b] = halt;
          break;
      }
    }

    BatchArray result(f.types[f.output], z);
    for (int b : active.indices()) result.copy_lane_from(b, vars[f.output], b);
    return result;
  }

  void record(int func, int block, int segment, const RSegment& seg, int depth,
              const LaneMask& here, const std::vector<int>& pc) {
    if (++steps_ > options_.max_steps) throw StepLimitExceeded(options_.max_steps);
    if (options_.observer) {
      options_.observer(LocalStepInfo{func, block, segment, seg.flat_index, depth, &here, &pc});
    }
    if (trace_) trace_->steps.push_back(TraceStep{seg.flat_index, here.count(), seg.prim_counts});
  }

  std::vector<RFunction> fns_;
  const LocalOptions& options_;
  ScheduleTrace* trace_;
  std::int64_t steps_ = 0;
};

class ScalarInterpreter {
 public:
  ScalarInterpreter(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                    std::int64_t max_steps)
      : fns_(resolve(prog, registry)), max_steps_(max_steps) {}

  BatchArray call(int func, const std::vector<BatchArray>& args, int depth) {
    if (depth > kMaxDepth) throw HostRecursionLimit(kMaxDepth);
    const RFunction& f = fns_[func];
    check_inputs(f, args, 1);
    std::vector<BatchArray> vars;
    for (const Type& t : f.types) vars.emplace_back(t, 1);
    for (size_t k = 0; k < f.params.size(); ++k) vars[f.params[k]] = args[k];

    int pc = 0;
    std::vector<const BatchArray*> ptrs;
    for (;;) {
      const RBlock& blk = f.blocks[pc];
      if (++steps_ > max_steps_) throw StepLimitExceeded(max_steps_);
      for (const RSegment& seg : blk.segments) {
        for (const ROp& op : seg.ops) {
          if (op.prim) {
            ptrs.clear();
            for (int v : op.in) ptrs.push_back(&vars[v]);
            BatchArray out(f.types[op.out], 1);
            op.prim->kernel(ptrs, out, op.literal);
            vars[op.out] = std::move(out);
          } else {
            std::vector<BatchArray> callee_args;
            for (int v : op.in) callee_args.push_back(vars[v]);
            vars[op.out] = call(op.callee, callee_args, depth + 1);
          }
        }
      }
      if (blk.kind == RBlock::Kind::Return) return vars[f.output];
      pc = blk.kind == RBlock::Kind::Jump || vars[blk.cond].b(0) ? blk.if_true : blk.if_false;
    }
  }

 private:
  static constexpr int kMaxDepth = 10'000;
  std::vector<RFunction> fns_;
  std::int64_t max_steps_;
  std::int64_t steps_ = 0;
};

}  // namespace

BatchArray run_local(const CallGraphProgram& prog, const PrimitiveRegistry& registry, int func,
                     const std::vector<BatchArray>& inputs, const LaneMask& active,
                     const LocalOptions& options) {
  return LocalEngine(prog, registry, options, nullptr).run(func, inputs, active);
}

std::pair<BatchArray, ScheduleTrace> trace_local(const CallGraphProgram& prog,
                                                 const PrimitiveRegistry& registry, int func,
                                                 const std::vector<BatchArray>& inputs,
                                                 const LaneMask& active,
                                                 const LocalOptions& options) {
  ScheduleTrace trace;
  trace.engine = "local";
  BatchArray out = LocalEngine(prog, registry, options, &trace).run(func, inputs, active);
  return {std::move(out), std::move(trace)};
}

BatchArray run_scalar_reference(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                                int func, const std::vector<BatchArray>& inputs,
                                std::int64_t max_steps) {
  if (func < 0 || func >= static_cast<int>(prog.functions.size())) {
    throw RuntimeFault("bad function index");
  }
  return ScalarInterpreter(prog, registry, max_steps).call(func, inputs, 0);
}

BatchArray run_reference_batch(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                               int func, const std::vector<BatchArray>& inputs,
                               std::int64_t max_steps) {
  const int z = inputs.empty() ? 0 : inputs[0].lanes();
  std::vector<BatchArray> lanes;
  for (int b = 0; b < z; ++b) {
    std::vector<BatchArray> one;
    for (const BatchArray& in : inputs) one.push_back(in.lane(b));
    lanes.push_back(run_scalar_reference(prog, registry, func, one, max_steps));
  }
  return concat_lanes(lanes);
}

}  // namespace autobatch
