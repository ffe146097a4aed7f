#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autobatch/ir.hpp"

namespace autobatch {

class PrimitiveRegistry;

struct SourcePos {
  int line = 1;
  int column = 1;
};

struct Expr {
  enum class Kind { IntLit, FloatLit, BoolLit, Var, Unary, Binary, Call };

  Kind kind = Kind::IntLit;
  SourcePos pos;
  std::int64_t int_value = 0;
  double float_value = 0.0;
  bool bool_value = false;
  // Variable name, operator spelling ("+", "<=", "and", "not", ...) or callee.
  std::string name;
  std::vector<Expr> args;
};

struct Stmt {
  enum class Kind { Assign, If, While, Return };

  Kind kind = Kind::Assign;
  SourcePos pos;
  std::string target;      // Assign
  Expr value;              // Assign/Return value, If/While condition
  std::vector<Stmt> body;  // If then-arm, While body
  std::vector<Stmt> else_body;
  bool has_else = false;
};

struct Param {
  std::string name;
  Type type;
};

struct FunctionDef {
  std::string name;
  SourcePos pos;
  std::vector<Param> params;
  Type return_type = Type::scalar(DType::Int);
  std::vector<Stmt> body;
};

struct SourceModule {
  std::vector<FunctionDef> functions;

  const FunctionDef* find(const std::string& name) const;
};

// Grammar:
//   module   := funcdef*
//   funcdef  := 'def' NAME '(' [param (',' param)*] ')' ['->' type] '{' stmt* '}'
//   param    := NAME [':' type]                 (untyped params are int)
//   type     := 'int' | 'float' | 'bool' | 'vec' '<' INT '>'
//   stmt     := NAME '=' expr ';'
//             | 'if' '(' expr ')' '{' stmt* '}' ['else' '{' stmt* '}']
//             | 'while' '(' expr ')' '{' stmt* '}'
//             | 'return' expr ';'
//   expr     := or-chain of and-chains of [not] comparisons of sums of products
//               of unary minus over primaries; primaries are literals, names,
//               calls NAME '(' args ')' and parenthesised expressions.
// `#` starts a comment that runs to the end of the line.
SourceModule parse_source(const std::string& text);

// Lowers every function; `entry` names the program entry (first function when
// empty). Throws CompileError on semantic errors.
CallGraphProgram lower_to_cfg(const SourceModule& module, const PrimitiveRegistry& registry,
                              const std::string& entry = {});

// parse_source + lower_to_cfg.
CallGraphProgram compile_source(const std::string& text, const PrimitiveRegistry& registry,
                                const std::string& entry = {});

}  // namespace autobatch
