#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "autobatch/compiler.hpp"
#include "autobatch/ir.hpp"
#include "autobatch/runtime.hpp"

namespace autobatch {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCompile = 1;    // parse, validation or other errors
inline constexpr int kExitStackFault = 2;
inline constexpr int kExitStepLimit = 3;
inline constexpr int kExitMismatch = 4;   // check found a disagreement
inline constexpr int kExitUsage = 64;

// Parses "1,2,3;4,5,6": parameters split on ';', lanes on ','.
// Scalars only; vector parameters go through an inputs file.
std::vector<BatchArray> parse_inline_inputs(const std::string& text, const std::vector<Type>& types);
// {"inputs": [[lane values of param 0], ...]}; vector lanes are JSON arrays.
std::vector<BatchArray> parse_inputs_json(const std::string& text, const std::vector<Type>& types);

// Space-separated lanes; floats with 17 significant digits, vectors as [a,b].
std::string format_lanes(const BatchArray& values);

struct CheckOptions {
  bool exhaustive = false;  // all 16 pass subsets instead of default and all-off
  int depth = 64;
  std::int64_t max_steps = 10'000'000;
  // Applied to every compiled program before it runs; lets tests plant bugs.
  std::function<void(FlatProgram&)> tamper;
};

struct CheckReport {
  int runs = 0;
  std::vector<std::string> mismatches;  // one line per disagreeing lane
  bool ok() const { return mismatches.empty(); }
};

// Runs the scalar oracle per lane and both engines on every batch.
CheckReport check_program(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                          const std::vector<std::vector<BatchArray>>& batches, const CheckOptions& options);

// Entire command line minus the program name. Returns the exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autobatch
