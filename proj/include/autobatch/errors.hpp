#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace autobatch {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed source or IR text.
class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& what)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Semantic errors found while lowering or compiling a program.
class CompileError : public Error {
 public:
  using Error::Error;
};

class StackFault : public Error {
 public:
  StackFault(const std::string& kind, int lane, const std::string& variable, int block)
      : Error(kind + ": lane " + std::to_string(lane) + ", variable '" + variable + "'" +
              (block >= 0 ? ", block " + std::to_string(block) : std::string())),
        lane_(lane),
        variable_(variable),
        block_(block) {}
  int lane() const { return lane_; }
  const std::string& variable() const { return variable_; }
  int block() const { return block_; }

 private:
  int lane_;
  std::string variable_;
  int block_;
};

class StackOverflow : public StackFault {
 public:
  StackOverflow(int lane, const std::string& variable, int block = -1)
      : StackFault("StackOverflow", lane, variable, block) {}
};

class StackUnderflow : public StackFault {
 public:
  StackUnderflow(int lane, const std::string& variable, int block = -1)
      : StackFault("StackUnderflow", lane, variable, block) {}
};

class StepLimitExceeded : public Error {
 public:
  explicit StepLimitExceeded(std::int64_t limit)
      : Error("StepLimitExceeded: more than " + std::to_string(limit) + " steps"), limit_(limit) {}
  std::int64_t limit() const { return limit_; }

 private:
  std::int64_t limit_;
};

class HostRecursionLimit : public Error {
 public:
  explicit HostRecursionLimit(int limit)
      : Error("HostRecursionLimit: call depth exceeded " + std::to_string(limit)) {}
};

// Shape/dtype mismatch or a broken invariant inside an engine.
class RuntimeFault : public Error {
 public:
  using Error::Error;
};

}  // namespace autobatch
