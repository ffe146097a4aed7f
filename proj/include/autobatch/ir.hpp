#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace autobatch {

class PrimitiveRegistry;

// Per-lane element type. Vectors are always float and have a static width.
enum class DType { Float, Int, Bool };

struct Type {
  DType dtype = DType::Float;
  int width = 0;  // 0 = scalar, k > 0 = float vector of length k

  constexpr bool is_scalar() const { return width == 0; }
  constexpr bool is_vector() const { return width > 0; }
  // Number of storage slots one lane occupies.
  constexpr int lane_size() const { return width == 0 ? 1 : width; }

  static constexpr Type scalar(DType d) { return Type{d, 0}; }
  static constexpr Type vec(int k) { return Type{DType::Float, k}; }

  friend bool operator==(const Type&, const Type&) = default;
};

std::string type_name(const Type& t);
std::optional<Type> parse_type_name(const std::string& s);

// Immediate operand of the `const` primitive.
struct Literal {
  DType dtype = DType::Int;
  std::int64_t i = 0;
  double f = 0.0;

  static Literal of_int(std::int64_t v) { return Literal{DType::Int, v, 0.0}; }
  static Literal of_float(double v) { return Literal{DType::Float, 0, v}; }
  static Literal of_bool(bool v) { return Literal{DType::Bool, v ? 1 : 0, 0.0}; }

  friend bool operator==(const Literal& a, const Literal& b);
};

std::string literal_text(const Literal& lit);

using VarName = std::string;
using VarTypes = std::map<VarName, Type>;

inline constexpr const char* kConstPrim = "const";
inline constexpr const char* kCopyPrim = "copy";

// ---------------------------------------------------------------------------
// Call-graph IR: one control-flow graph per function, calls are ops.

struct PrimitiveOp {
  VarName output;
  std::string prim;
  std::vector<VarName> inputs;
  std::optional<Literal> literal;  // only for `const`

  friend bool operator==(const PrimitiveOp&, const PrimitiveOp&) = default;
};

struct CallOp {
  VarName output;
  int callee = 0;
  std::vector<VarName> args;

  friend bool operator==(const CallOp&, const CallOp&) = default;
};

using Op = std::variant<PrimitiveOp, CallOp>;

struct Jump {
  int target = 0;
  friend bool operator==(const Jump&, const Jump&) = default;
};

// Lanes whose `cond` is true go to `if_true`.
struct Branch {
  VarName cond;
  int if_true = 0;
  int if_false = 0;
  friend bool operator==(const Branch&, const Branch&) = default;
};

struct Return {
  friend bool operator==(const Return&, const Return&) = default;
};

using Terminator = std::variant<Jump, Branch, Return>;

struct Block {
  std::vector<Op> ops;
  Terminator term = Return{};
  friend bool operator==(const Block&, const Block&) = default;
};

struct Function {
  std::string name;
  std::vector<VarName> params;
  VarName output;
  VarTypes vars;  // every variable the function touches, params included
  std::vector<Block> blocks;

  friend bool operator==(const Function&, const Function&) = default;
};

struct CallGraphProgram {
  std::vector<Function> functions;
  int entry = 0;

  int find_function(const std::string& name) const;
  friend bool operator==(const CallGraphProgram&, const CallGraphProgram&) = default;
};

// ---------------------------------------------------------------------------
// Flat IR: all functions merged into one block list; calls become explicit
// stack traffic plus PushJump.

enum class VarClass { Temporary, Registerized, Stacked };

std::string var_class_name(VarClass c);
std::optional<VarClass> parse_var_class(const std::string& s);

struct FlatVar {
  Type type;
  VarClass cls = VarClass::Stacked;
  friend bool operator==(const FlatVar&, const FlatVar&) = default;
};

enum class FlatOpKind { Push, Pop, Update };

struct FlatOp {
  FlatOpKind kind = FlatOpKind::Push;
  VarName var;                 // output for Push/Update, target for Pop
  std::string prim;            // empty for Pop
  std::vector<VarName> inputs; // empty for Pop
  std::optional<Literal> literal;

  static FlatOp push(VarName out, std::string prim, std::vector<VarName> in,
                     std::optional<Literal> lit = std::nullopt) {
    return FlatOp{FlatOpKind::Push, std::move(out), std::move(prim), std::move(in), lit};
  }
  static FlatOp update(VarName out, std::string prim, std::vector<VarName> in,
                       std::optional<Literal> lit = std::nullopt) {
    return FlatOp{FlatOpKind::Update, std::move(out), std::move(prim), std::move(in), lit};
  }
  static FlatOp pop(VarName v) { return FlatOp{FlatOpKind::Pop, std::move(v), {}, {}, {}}; }

  bool reads(const VarName& v) const;
  friend bool operator==(const FlatOp&, const FlatOp&) = default;
};

// Jump to `jump_to` after arranging for the matching Return to resume at
// `return_to`.
struct PushJump {
  int jump_to = 0;
  int return_to = 0;
  friend bool operator==(const PushJump&, const PushJump&) = default;
};

using FlatTerminator = std::variant<Jump, Branch, PushJump, Return>;

struct FlatBlock {
  std::vector<FlatOp> ops;
  FlatTerminator term = Return{};
  friend bool operator==(const FlatBlock&, const FlatBlock&) = default;
};

struct FlatProgram {
  std::vector<VarName> inputs;
  VarName output;
  int entry = 0;
  std::map<VarName, FlatVar> vars;
  std::vector<FlatBlock> blocks;

  // The halt program counter; never a real block.
  int halt_index() const { return static_cast<int>(blocks.size()); }
  friend bool operator==(const FlatProgram&, const FlatProgram&) = default;
};

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  std::string location;  // e.g. "fib/block 2/op 1"
  std::string message;
};

std::string to_string(const Diagnostic& d);

std::vector<Diagnostic> validate_callgraph(const CallGraphProgram& prog,
                                           const PrimitiveRegistry& registry);
std::vector<Diagnostic> validate_flat(const FlatProgram& prog, const PrimitiveRegistry& registry);

// Block successors inside one function (Jump/Branch targets).
std::vector<int> successors(const Terminator& t);

// Flat block index layout shared by the compiler and the local engine's
// traces: each call-graph block is split after every Call, and the pieces
// ("segments") of all functions are numbered consecutively.
struct SegmentLayout {
  // first[f][b] = flat index of segment 0 of block b in function f
  std::vector<std::vector<int>> first;
  // per flat index: originating (function, block, segment)
  struct Origin {
    int function = 0;
    int block = 0;
    int segment = 0;
  };
  std::vector<Origin> origin;

  int index(int function, int block, int segment) const {
    return first[function][block] + segment;
  }
  int total() const { return static_cast<int>(origin.size()); }
};

SegmentLayout segment_layout(const CallGraphProgram& prog);

// Textual round-trip format (see README).
std::string print_ir(const CallGraphProgram& prog);
std::string print_ir(const FlatProgram& prog);
CallGraphProgram parse_callgraph_ir(const std::string& text);
FlatProgram parse_flat_ir(const std::string& text);
// Dispatches on the header line.
std::variant<CallGraphProgram, FlatProgram> parse_ir(const std::string& text);

}  // namespace autobatch
