#include <random>
#include <set>

#include "autobatch/compiler.hpp"
#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"
#include "autobatch/local_exec.hpp"
#include "autobatch/pc_vm.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace autobatch;
using support::reg;

namespace {

const CallGraphProgram& program_of(const std::string& name) {
  static std::map<std::string, CallGraphProgram> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const CorpusEntry* e = find_corpus_entry(name);
    REQUIRE(e);
    it = cache.emplace(name, compile_source(e->source, reg(), e->entry)).first;
  }
  return it->second;
}

FlatProgram flat_of(const std::string& name, CompileOptions opts = {}) {
  return compile(program_of(name), opts).flat;
}

std::vector<BatchArray> ints(std::vector<std::int64_t> v) { return {BatchArray::of_ints(v)}; }

std::int64_t fib(std::int64_t n) { return n <= 1 ? 1 : fib(n - 1) + fib(n - 2); }

}  // namespace

TEST_CASE("fibonacci batch") {
  auto [out, trace] = run_vm(flat_of("fibonacci"), reg(), ints({6, 7, 8, 9}), 16);
  CHECK(out == BatchArray::of_ints({13, 21, 34, 55}));
  CHECK(trace.engine == "pc");
  CHECK(trace.Z == 4);
}

TEST_CASE("initial machine state") {
  const FlatProgram flat = flat_of("fibonacci");
  MachineState s = init_machine(flat, reg(), ints({6, 7, 8, 9}), 4);
  const StackedVar* n = s.stack_of("fibonacci:n");
  REQUIRE(n);
  for (int b = 0; b < 4; ++b) {
    CHECK(n->pointer(b) == 1);
    CHECK(s.pc().pointer(b) == 2);
    CHECK(s.depth(b) == 1);
    CHECK(s.pc().frame(0, b).i(0) == s.halt_index());
  }
  CHECK(s.value("fibonacci:n") == BatchArray::of_ints({6, 7, 8, 9}));
  CHECK(s.next_block() == flat.entry);
  CHECK(!s.halted());
  CHECK_THROWS_AS(init_machine(flat, reg(), ints({1}), 0), Error);
  CHECK_NOTHROW(init_machine(flat, reg(), ints({1}), 1));
}

TEST_CASE("identical lanes stay converged") {
  auto [out, trace] = run_vm(flat_of("fibonacci"), reg(), ints({6, 6, 6, 6}), 16);
  CHECK(out == BatchArray::of_ints({13, 13, 13, 13}));
  for (const TraceStep& st : trace.steps) CHECK(st.active == 4);
}

TEST_CASE("branch splits lanes and the lower block runs first") {
  const FlatProgram countdown = flat_of("countdown");
  MachineState s = init_machine(countdown, reg(), ints({0, 3}), 2);
  std::vector<int> order;
  std::vector<int> counts;
  VmOptions opt;
  opt.observer = [&](const StepView& v) {
    order.push_back(v.block);
    counts.push_back(v.active.count());
  };
  while (!s.halted()) step(s, opt);
  REQUIRE(order.size() >= 2);
  CHECK(counts.front() == 2);
  // after the first branch some step runs a single lane
  CHECK(std::find(counts.begin(), counts.end(), 1) != counts.end());
}

TEST_CASE("stack overflow names lane and variable") {
  const FlatProgram flat = flat_of("fibonacci");
  CHECK_THROWS_AS(run_vm(flat, reg(), ints({2}), 1), StackOverflow);
  try {
    run_vm(flat, reg(), ints({1, 10}), 3);
    FAIL("expected overflow");
  } catch (const StackOverflow& e) {
    CHECK(e.lane() == 1);
    CHECK(!e.variable().empty());
    CHECK(e.block() >= 0);
  }
  CHECK_NOTHROW(run_vm(flat, reg(), ints({10}), 10));
}

TEST_CASE("step limit") {
  const FlatProgram flat = flat_of("fibonacci");
  auto [out, trace] = run_vm(flat, reg(), ints({10}), 16);
  const auto exact = static_cast<std::int64_t>(trace.steps.size());
  VmOptions opt;
  opt.max_steps = exact;
  CHECK_NOTHROW(run_vm(flat, reg(), ints({10}), 16, opt));
  opt.max_steps = exact - 1;
  try {
    run_vm(flat, reg(), ints({10}), 16, opt);
    FAIL("expected step limit");
  } catch (const StepLimitExceeded& e) {
    CHECK(e.limit() == exact - 1);
  }
}

TEST_CASE("corpus agrees with the scalar oracle under every pass subset and mode") {
  std::mt19937_64 rng(7);
  for (const CorpusEntry& e : corpus()) {
    if (e.name == "nuts_lite") continue;  // covered by the workload tests
    CAPTURE(e.name);
    const auto& prog = program_of(e.name);
    const auto inputs = e.random_inputs(rng, 9);
    const BatchArray want = run_reference_batch(prog, reg(), prog.entry, inputs, e.max_steps);
    for (unsigned bits = 0; bits < 16; ++bits) {
      const FlatProgram flat = compile(prog, CompileOptions::from_bits(bits)).flat;
      for (ExecMode mode : {ExecMode::Mask, ExecMode::GatherScatter}) {
        CAPTURE(bits);
        VmOptions opt;
        opt.mode = mode;
        opt.max_steps = e.max_steps;
        opt.debug = true;
        auto [out, trace] = run_vm(flat, reg(), inputs, 64, opt);
        CHECK(support::lanes_match(out, want));
      }
    }
  }
}

TEST_CASE("execution modes produce identical traces") {
  const FlatProgram flat = flat_of("fibonacci");
  const auto inputs = ints({0, 3, 5, 8, 1, 9});
  VmOptions a, b;
  b.mode = ExecMode::GatherScatter;
  auto ra = run_vm(flat, reg(), inputs, 16, a);
  auto rb = run_vm(flat, reg(), inputs, 16, b);
  CHECK(ra.first == rb.first);
  CHECK(ra.second.block_sequence() == rb.second.block_sequence());
  CHECK(ra.second.stacks == rb.second.stacks);
}

TEST_CASE("lanes at different depths share a step") {
  const FlatProgram flat = flat_of("fibonacci");
  MachineState s = init_machine(flat, reg(), ints({4, 9}), 16);
  bool mixed_depth = false;
  bool mixed_site = false;
  VmOptions opt;
  opt.observer = [&](const StepView& v) {
    std::set<int> depths;
    std::set<std::int64_t> sites;
    for (int b = 0; b < v.state.lanes(); ++b) {
      if (!v.active[b]) continue;
      depths.insert(v.state.depth(b));
      const int p = v.state.pc().pointer(b);
      sites.insert(v.state.pc().frame(p - 2, b).i(0));
    }
    mixed_depth |= depths.size() > 1;
    mixed_site |= sites.size() > 1;
  };
  while (!s.halted()) step(s, opt);
  CHECK(mixed_depth);
  CHECK(mixed_site);
  CHECK(s.value(flat.output) == BatchArray::of_ints({fib(4), fib(9)}));
}

TEST_CASE("single lane follows the local schedule") {
  for (const CorpusEntry& e : corpus()) {
    if (e.name == "nuts_lite") continue;
    CAPTURE(e.name);
    const auto& prog = program_of(e.name);
    std::mt19937_64 rng(3);
    const auto inputs = e.random_inputs(rng, 1);
    auto [lout, ltrace] = trace_local(prog, reg(), prog.entry, inputs, LaneMask::full(1));
    auto [pout, ptrace] = run_vm(compile(prog).flat, reg(), inputs, 64);
    CHECK(lout == pout);
    CHECK(ltrace.block_sequence() == ptrace.block_sequence());
  }
}

// Golden step counts for [k, k+1]. Min-pc runs a lane's second recursive
// call before its sibling's return, so the two lanes drift out of phase and
// the pc schedule is longer than the local one on these batches.
TEST_CASE("fibonacci step goldens against the local schedule") {
  const auto& prog = program_of("fibonacci");
  const FlatProgram flat = compile(prog).flat;
  const std::map<std::int64_t, std::pair<size_t, size_t>> golden = {
      {4, {58, 47}}, {6, {168, 130}}, {8, {457, 347}}};
  for (const auto& [k, counts] : golden) {
    CAPTURE(k);
    const auto inputs = ints({k, k + 1});
    auto [lout, ltrace] = trace_local(prog, reg(), prog.entry, inputs, LaneMask::full(2));
    auto [pout, ptrace] = run_vm(flat, reg(), inputs, 64);
    CHECK(pout == BatchArray::of_ints({fib(k), fib(k + 1)}));
    CHECK(lout == pout);
    CHECK(ptrace.steps.size() == counts.first);
    CHECK(ltrace.steps.size() == counts.second);
  }
}

TEST_CASE("programs without calls follow the local schedule exactly") {
  std::mt19937_64 rng(11);
  for (const char* name : {"countdown", "straight_line"}) {
    CAPTURE(name);
    const CorpusEntry* e = find_corpus_entry(name);
    const auto& prog = program_of(name);
    const FlatProgram flat = compile(prog).flat;
    for (int trial = 0; trial < 10; ++trial) {
      const auto inputs = e->random_inputs(rng, 8);
      auto [lout, ltrace] = trace_local(prog, reg(), prog.entry, inputs, LaneMask::full(8));
      auto [pout, ptrace] = run_vm(flat, reg(), inputs, 64);
      CHECK(lout == pout);
      CHECK(ltrace.block_sequence() == ptrace.block_sequence());
    }
  }
}

// Min-pc is greedy: a lane that returns early reaches a low-numbered
// continuation block before its sibling, which runs it again later.
TEST_CASE("greedy min-pc can take more steps than the local schedule") {
  const auto& prog = program_of("mutual_recursion");
  const auto inputs = ints({1, 2});
  auto [lout, ltrace] = trace_local(prog, reg(), prog.entry, inputs, LaneMask::full(2));
  auto [pout, ptrace] = run_vm(compile(prog).flat, reg(), inputs, 64);
  CHECK(lout == pout);
  CHECK(ltrace.steps.size() == 9);
  CHECK(ptrace.steps.size() == 10);
}

TEST_CASE("debug mode accepts well-formed programs and exposes a dump") {
  const FlatProgram flat = flat_of("fibonacci");
  MachineState s = init_machine(flat, reg(), ints({3, 5}), 8);
  VmOptions opt;
  opt.debug = true;
  while (!s.halted()) step(s, opt);
  CHECK(s.value(flat.output) == BatchArray::of_ints({fib(3), fib(5)}));
  CHECK(s.dump().find("fibonacci:n") != std::string::npos);
  CHECK_THROWS_AS(step(s, opt), Error);
}
