#include <cmath>
#include <limits>

#include "autobatch/errors.hpp"
#include "autobatch/ir.hpp"
#include "autobatch/runtime.hpp"
#include "doctest.h"

using namespace autobatch;

namespace {

const PrimitiveRegistry& reg() {
  static const PrimitiveRegistry r = PrimitiveRegistry::builtins();
  return r;
}

CallGraphProgram identity_program() {
  Function fn;
  fn.name = "id";
  fn.params = {"x"};
  fn.output = "y";
  fn.vars = {{"x", Type::scalar(DType::Int)}, {"y", Type::scalar(DType::Int)}};
  fn.blocks.push_back(Block{{PrimitiveOp{"y", "copy", {"x"}, {}}}, Return{}});
  return CallGraphProgram{{fn}, 0};
}

bool mentions(const std::vector<Diagnostic>& diags, const std::string& needle) {
  for (const auto& d : diags) {
    if (to_string(d).find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("minimal program validates") {
  CHECK(validate_callgraph(identity_program(), reg()).empty());
}

TEST_CASE("jump target out of range") {
  auto prog = identity_program();
  prog.functions[0].blocks[0].term = Jump{5};
  prog.functions[0].blocks.push_back(Block{{}, Return{}});
  auto diags = validate_callgraph(prog, reg());
  REQUIRE(diags.size() == 1);
  CHECK(mentions(diags, "target out of range"));
  CHECK(mentions(diags, "id/block 0"));
}

TEST_CASE("use before assignment on one path") {
  Function fn;
  fn.name = "f";
  fn.params = {"c"};
  fn.output = "y";
  fn.vars = {{"c", Type::scalar(DType::Bool)}, {"y", Type::scalar(DType::Int)}};
  fn.blocks.push_back(Block{{}, Branch{"c", 1, 2}});
  fn.blocks.push_back(Block{{PrimitiveOp{"y", "const", {}, Literal::of_int(1)}}, Jump{2}});
  fn.blocks.push_back(Block{{}, Return{}});
  auto diags = validate_callgraph(CallGraphProgram{{fn}, 0}, reg());
  CHECK(mentions(diags, "not assigned on every path"));
}

TEST_CASE("branch on a non-bool is rejected") {
  auto prog = identity_program();
  prog.functions[0].blocks[0].term = Branch{"x", 0, 0};
  CHECK(mentions(validate_callgraph(prog, reg()), "not bool"));
}

TEST_CASE("call arity and callee index are checked") {
  auto prog = identity_program();
  prog.functions[0].blocks[0].ops.push_back(CallOp{"y", 3, {"x"}});
  CHECK(mentions(validate_callgraph(prog, reg()), "unknown function"));
  prog.functions[0].blocks[0].ops.back() = CallOp{"y", 0, {"x", "x"}};
  CHECK(mentions(validate_callgraph(prog, reg()), "arity mismatch"));
}

TEST_CASE("flat validation") {
  FlatProgram empty;
  empty.output = "y";
  empty.vars["y"] = FlatVar{Type::scalar(DType::Int), VarClass::Stacked};
  CHECK(mentions(validate_flat(empty, reg()), "entry out of range"));

  FlatProgram p;
  p.inputs = {"x"};
  p.output = "x";
  p.vars["x"] = FlatVar{Type::scalar(DType::Int), VarClass::Registerized};
  p.blocks.push_back(FlatBlock{{FlatOp::pop("x")}, Return{}});
  CHECK(mentions(validate_flat(p, reg()), "pop of non-stack variable"));
  p.vars["x"].cls = VarClass::Stacked;
  CHECK(validate_flat(p, reg()).empty());
  p.blocks[0].term = PushJump{0, 1};  // return to the halt index is legal
  CHECK(validate_flat(p, reg()).empty());
  p.blocks[0].term = PushJump{0, 2};
  CHECK(mentions(validate_flat(p, reg()), "return target out of range"));
}

TEST_CASE("call-graph text round trip") {
  auto prog = identity_program();
  prog.functions[0].vars["k"] = Type::scalar(DType::Float);
  prog.functions[0].vars["v"] = Type::vec(3);
  prog.functions[0].blocks[0].ops.insert(prog.functions[0].blocks[0].ops.begin(),
                                         PrimitiveOp{"k", "const", {}, Literal::of_float(0.1)});
  const std::string text = print_ir(prog);
  CHECK(parse_callgraph_ir(text) == prog);
  CHECK(print_ir(parse_callgraph_ir(text)) == text);
}

TEST_CASE("float literals round trip bit-exactly") {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 6.02e23, -0.0, std::numeric_limits<double>::infinity()}) {
    auto prog = identity_program();
    prog.functions[0].vars["k"] = Type::scalar(DType::Float);
    prog.functions[0].blocks[0].ops.push_back(PrimitiveOp{"k", "const", {}, Literal::of_float(v)});
    CHECK(parse_callgraph_ir(print_ir(prog)) == prog);
  }
}

TEST_CASE("flat text round trip") {
  FlatProgram p;
  p.inputs = {"f:x"};
  p.output = "f:$ret";
  p.entry = 0;
  p.vars["f:x"] = FlatVar{Type::scalar(DType::Int), VarClass::Stacked};
  p.vars["f:$ret"] = FlatVar{Type::scalar(DType::Int), VarClass::Registerized};
  p.vars["f:$1"] = FlatVar{Type::scalar(DType::Bool), VarClass::Temporary};
  p.blocks.push_back(FlatBlock{{FlatOp::push("f:x", "copy", {"f:x"}),
                                FlatOp::update("f:$1", "const", {}, Literal::of_bool(true))},
                               PushJump{1, 2}});
  p.blocks.push_back(FlatBlock{{FlatOp::pop("f:x")}, Branch{"f:$1", 2, 2}});
  p.blocks.push_back(FlatBlock{{FlatOp::update("f:$ret", "add", {"f:x", "f:x"})}, Return{}});
  const std::string text = print_ir(p);
  CHECK(parse_flat_ir(text) == p);
  CHECK(std::holds_alternative<FlatProgram>(parse_ir(text)));
}

TEST_CASE("parse errors carry a location") {
  const std::string bad =
      "program entry id\n"
      "function id\n"
      "  params x\n"
      "  output x\n"
      "  var x int\n"
      "  block 0:\n"
      "    leave\n"
      "end\n";
  try {
    parse_callgraph_ir(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
    CHECK(e.column() == 5);
  }
  CHECK_THROWS_AS(parse_ir("flat entry 0 output y inputs\nblock 0:\n  teleport 3\nend\n"), ParseError);
  CHECK_THROWS_AS(parse_ir("nonsense"), ParseError);
}

TEST_CASE("segment layout splits blocks after calls") {
  auto prog = identity_program();
  prog.functions[0].blocks[0].ops.push_back(CallOp{"y", 0, {"x"}});
  prog.functions[0].blocks[0].ops.push_back(CallOp{"y", 0, {"x"}});
  prog.functions[0].blocks.push_back(Block{{}, Return{}});
  auto layout = segment_layout(prog);
  CHECK(layout.total() == 4);
  CHECK(layout.index(0, 1, 0) == 3);
  CHECK(layout.origin[2].segment == 2);
}
