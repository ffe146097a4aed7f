#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "autobatch/ir.hpp"

namespace autobatch {

struct CompileOptions {
  bool caller_saves = true;       // save only variables live after a clobbering call
  bool temporaries = true;        // block-local variables become Temporary
  bool stack_elimination = true;  // variables not live across recursion become Registerized
  bool pop_push = true;           // Pop x; Push x = f(..)  ->  Update x = f(..)

  static CompileOptions all_off() { return {false, false, false, false}; }
  // Bit 0 caller_saves, bit 1 temporaries, bit 2 stack_elimination, bit 3 pop_push.
  static CompileOptions from_bits(unsigned bits);
  unsigned bits() const;
  std::string describe() const;
};

struct LoweringMap {
  struct VarOrigin {
    std::string function;
    std::string name;  // source name, or a synthesized argument temporary
  };
  std::vector<SegmentLayout::Origin> block_origin;  // per flat block
  std::map<VarName, VarOrigin> var_origin;
};

// Merges every function into one block list. All variables start Stacked.
// Flat variable names are `<function>:<variable>`.
std::pair<FlatProgram, LoweringMap> flatten(const CallGraphProgram& prog, bool caller_saves = true);

// Liveness-based classification of every flat variable.
std::map<VarName, VarClass> classify_variables(const FlatProgram& flat);

// Records the classes and rewrites traffic on non-stacked variables: Push
// becomes Update and Pop disappears.
FlatProgram apply_classes(FlatProgram flat, const std::map<VarName, VarClass>& classes);

FlatProgram cancel_pop_push(FlatProgram flat);

// Pop x followed, with no intervening touch of x, by a Push x that does not
// read x. Zero after cancel_pop_push.
int count_cancellable_pairs(const FlatProgram& flat);

struct CompileResult {
  FlatProgram flat;
  LoweringMap map;
  std::map<VarName, VarClass> classes;
  // Textual IR after each stage: "flatten", "classify", "cancel".
  std::vector<std::pair<std::string, std::string>> stages;
};

CompileResult compile(const CallGraphProgram& prog, const CompileOptions& options = {});

}  // namespace autobatch
