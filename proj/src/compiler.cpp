#include "autobatch/compiler.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "autobatch/errors.hpp"

namespace autobatch {

CompileOptions CompileOptions::from_bits(unsigned bits) {
  return {(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0, (bits & 8u) != 0};
}

unsigned CompileOptions::bits() const {
  return (caller_saves ? 1u : 0u) | (temporaries ? 2u : 0u) | (stack_elimination ? 4u : 0u) |
         (pop_push ? 8u : 0u);
}

std::string CompileOptions::describe() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  add(caller_saves, "caller-saves");
  add(temporaries, "temporaries");
  add(stack_elimination, "stack-elimination");
  add(pop_push, "pop-push");
  return out.empty() ? "none" : out;
}

namespace {

using VarSet = std::set<VarName>;

// ---------------------------------------------------------------------------
// Call-graph liveness, used to place caller saves.

void op_uses_defs(const Op& op, std::vector<VarName>& uses, VarName& def) {
  if (const auto* p = std::get_if<PrimitiveOp>(&op)) {
    uses = p->inputs;
    def = p->output;
  } else {
    const auto& c = std::get<CallOp>(op);
    uses = c.args;
    def = c.output;
  }
}

// live_after[b][k]: variables live just after op k of block b.
std::vector<std::vector<VarSet>> callgraph_liveness(const Function& f) {
  const size_t n = f.blocks.size();
  std::vector<VarSet> live_in(n);
  auto block_live_out = [&](size_t b) {
    VarSet out;
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, Jump>) {
            out = live_in[t.target];
          } else if constexpr (std::is_same_v<T, Branch>) {
            out = live_in[t.if_true];
            out.insert(live_in[t.if_false].begin(), live_in[t.if_false].end());
            out.insert(t.cond);
          } else {
            out.insert(f.output);
          }
        },
        f.blocks[b].term);
    return out;
  };
  std::vector<VarName> uses;
  VarName def;
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t b = n; b-- > 0;) {
      VarSet live = block_live_out(b);
      for (size_t k = f.blocks[b].ops.size(); k-- > 0;) {
        op_uses_defs(f.blocks[b].ops[k], uses, def);
        live.erase(def);
        live.insert(uses.begin(), uses.end());
      }
      if (live != live_in[b]) {
        live_in[b] = std::move(live);
        changed = true;
      }
    }
  }
  std::vector<std::vector<VarSet>> after(n);
  for (size_t b = 0; b < n; ++b) {
    VarSet live = block_live_out(b);
    after[b].resize(f.blocks[b].ops.size());
    for (size_t k = f.blocks[b].ops.size(); k-- > 0;) {
      after[b][k] = live;
      op_uses_defs(f.blocks[b].ops[k], uses, def);
      live.erase(def);
      live.insert(uses.begin(), uses.end());
    }
  }
  return after;
}

// reach[a][b]: function a can (transitively, in >= 1 calls) call function b.
std::vector<std::vector<bool>> call_reachability(const CallGraphProgram& prog) {
  const size_t n = prog.functions.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (size_t f = 0; f < n; ++f) {
    for (const Block& b : prog.functions[f].blocks) {
      for (const Op& op : b.ops) {
        if (const auto* c = std::get_if<CallOp>(&op)) reach[f][c->callee] = true;
      }
    }
  }
  for (size_t k = 0; k < n; ++k) {
    for (size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (size_t j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = true;
      }
    }
  }
  return reach;
}

class Flattener {
 public:
  Flattener(const CallGraphProgram& prog, bool caller_saves)
      : prog_(prog), caller_saves_(caller_saves), layout_(segment_layout(prog)),
        reach_(call_reachability(prog)) {}

  std::pair<FlatProgram, LoweringMap> run() {
    if (prog_.entry < 0 || prog_.entry >= static_cast<int>(prog_.functions.size())) {
      throw CompileError("entry function out of range");
    }
    for (const Function& f : prog_.functions) {
      for (const auto& [v, t] : f.vars) {
        flat_.vars[qualify(f, v)] = FlatVar{t, VarClass::Stacked};
        map_.var_origin[qualify(f, v)] = {f.name, v};
      }
    }
    flat_.blocks.resize(layout_.total());
    for (size_t fi = 0; fi < prog_.functions.size(); ++fi) lower_function(static_cast<int>(fi));

    const Function& entry = prog_.functions[prog_.entry];
    for (const auto& p : entry.params) flat_.inputs.push_back(qualify(entry, p));
    flat_.output = qualify(entry, entry.output);
    flat_.entry = layout_.index(prog_.entry, 0, 0);
    map_.block_origin = layout_.origin;
    return {std::move(flat_), std::move(map_)};
  }

 private:
  static VarName qualify(const Function& f, const VarName& v) { return f.name + ":" + v; }

  VarName fresh(const Function& f, const Type& t, const char* tag) {
    for (;;) {
      const std::string local = std::string("$") + tag + std::to_string(++fresh_counter_);
      const VarName name = qualify(f, local);
      if (!flat_.vars.count(name)) {
        flat_.vars[name] = FlatVar{t, VarClass::Stacked};
        map_.var_origin[name] = {f.name, local};
        return name;
      }
    }
  }

  // y = prim(inputs), as a replacement of the top frame of y.
  void assign(std::vector<FlatOp>& ops, const Function& f, const VarName& y, const std::string& prim,
              const std::vector<VarName>& inputs, const std::optional<Literal>& lit = {}) {
    if (std::find(inputs.begin(), inputs.end(), y) != inputs.end()) {
      const VarName t = fresh(f, flat_.vars.at(y).type, "s");
      assign(ops, f, t, prim, inputs, lit);
      assign(ops, f, y, kCopyPrim, {t});
      return;
    }
    ops.push_back(FlatOp::pop(y));
    ops.push_back(FlatOp::push(y, prim, inputs, lit));
  }

  std::vector<VarName> saved_vars(const Function& f, int fi, const CallOp& call,
                                  const VarSet& live_after) {
    std::vector<VarName> out;
    if (!caller_saves_) {
      for (const auto& [v, t] : f.vars) {
        if (v != call.output) out.push_back(qualify(f, v));
      }
      return out;
    }
    if (!reach_[call.callee][fi] && call.callee != fi) return out;
    for (const VarName& v : live_after) {
      if (v != call.output) out.push_back(qualify(f, v));
    }
    return out;
  }

  void lower_function(int fi) {
    const Function& f = prog_.functions[fi];
    const auto live_after = callgraph_liveness(f);
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& blk = f.blocks[bi];
      int segment = 0;
      std::vector<FlatOp>* ops = &flat_.blocks[layout_.index(fi, static_cast<int>(bi), 0)].ops;
      for (size_t k = 0; k < blk.ops.size(); ++k) {
        if (const auto* p = std::get_if<PrimitiveOp>(&blk.ops[k])) {
          assign(*ops, f, qualify(f, p->output), p->prim, qualify_all(f, p->inputs), p->literal);
          continue;
        }
        const auto& call = std::get<CallOp>(blk.ops[k]);
        const Function& g = prog_.functions[call.callee];
        const std::vector<VarName> saves = saved_vars(f, fi, call, live_after[bi][k]);
        for (const VarName& v : saves) ops->push_back(FlatOp::push(v, kCopyPrim, {v}));

        std::vector<VarName> args = qualify_all(f, call.args);
        std::vector<VarName> params = qualify_all(g, g.params);
        const bool overlap = std::any_of(args.begin(), args.end(), [&](const VarName& a) {
          return std::find(params.begin(), params.end(), a) != params.end();
        });
        if (overlap) {
          for (VarName& a : args) {
            const VarName t = fresh(f, flat_.vars.at(a).type, "a");
            assign(*ops, f, t, kCopyPrim, {a});
            a = t;
          }
        }
        for (size_t p = 0; p < params.size(); ++p) assign(*ops, g, params[p], kCopyPrim, {args[p]});

        const int here = layout_.index(fi, static_cast<int>(bi), segment);
        const int cont = here + 1;
        flat_.blocks[here].term = PushJump{layout_.index(call.callee, 0, 0), cont};

        ++segment;
        ops = &flat_.blocks[cont].ops;
        assign(*ops, f, qualify(f, call.output), kCopyPrim, {qualify(g, g.output)});
        for (const VarName& v : saves) ops->push_back(FlatOp::pop(v));
      }
      const int last = layout_.index(fi, static_cast<int>(bi), segment);
      flat_.blocks[last].term = std::visit(
          [&](const auto& t) -> FlatTerminator {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              return Jump{layout_.index(fi, t.target, 0)};
            } else if constexpr (std::is_same_v<T, Branch>) {
              return Branch{qualify(f, t.cond), layout_.index(fi, t.if_true, 0),
                            layout_.index(fi, t.if_false, 0)};
            } else {
              return Return{};
            }
          },
          blk.term);
    }
  }

  static std::vector<VarName> qualify_all(const Function& f, const std::vector<VarName>& vs) {
    std::vector<VarName> out;
    for (const auto& v : vs) out.push_back(qualify(f, v));
    return out;
  }

  const CallGraphProgram& prog_;
  bool caller_saves_;
  SegmentLayout layout_;
  std::vector<std::vector<bool>> reach_;
  FlatProgram flat_;
  LoweringMap map_;
  int fresh_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Flat-program analyses

struct FlatFunctions {
  std::vector<int> func_of;          // per block; -1 when unreachable
  std::vector<int> entry_of;         // per function: its entry block
  std::vector<std::vector<bool>> reach;  // reach[g][f]: g calls f transitively (>= 1 call)
};

FlatFunctions partition(const FlatProgram& flat) {
  const int n = static_cast<int>(flat.blocks.size());
  FlatFunctions out;
  out.func_of.assign(n, -1);
  std::set<int> entries{flat.entry};
  for (const FlatBlock& b : flat.blocks) {
    if (const auto* pj = std::get_if<PushJump>(&b.term)) entries.insert(pj->jump_to);
  }
  for (int e : entries) {
    if (e < 0 || e >= n || out.func_of[e] >= 0) continue;
    const int id = static_cast<int>(out.entry_of.size());
    out.entry_of.push_back(e);
    std::vector<int> work{e};
    out.func_of[e] = id;
    while (!work.empty()) {
      const int b = work.back();
      work.pop_back();
      std::vector<int> next;
      std::visit(
          [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              next = {t.target};
            } else if constexpr (std::is_same_v<T, Branch>) {
              next = {t.if_true, t.if_false};
            } else if constexpr (std::is_same_v<T, PushJump>) {
              next = {t.return_to};
            }
          },
          flat.blocks[b].term);
      for (int s : next) {
        if (s >= 0 && s < n && out.func_of[s] < 0) {
          out.func_of[s] = id;
          work.push_back(s);
        }
      }
    }
  }
  const size_t nf = out.entry_of.size();
  out.reach.assign(nf, std::vector<bool>(nf, false));
  for (int b = 0; b < n; ++b) {
    const auto* pj = std::get_if<PushJump>(&flat.blocks[b].term);
    if (pj && out.func_of[b] >= 0 && pj->jump_to < n) {
      out.reach[out.func_of[b]][out.func_of[pj->jump_to]] = true;
    }
  }
  for (size_t k = 0; k < nf; ++k) {
    for (size_t i = 0; i < nf; ++i) {
      if (!out.reach[i][k]) continue;
      for (size_t j = 0; j < nf; ++j) {
        if (out.reach[k][j]) out.reach[i][j] = true;
      }
    }
  }
  return out;
}

using Bits = std::vector<bool>;

void unite(Bits& into, const Bits& from) {
  for (size_t k = 0; k < into.size(); ++k) {
    if (from[k]) into[k] = true;
  }
}

}  // namespace

std::pair<FlatProgram, LoweringMap> flatten(const CallGraphProgram& prog, bool caller_saves) {
  return Flattener(prog, caller_saves).run();
}

std::map<VarName, VarClass> classify_variables(const FlatProgram& flat) {
  std::map<VarName, int> id;
  std::vector<VarName> names;
  for (const auto& [v, info] : flat.vars) {
    id[v] = static_cast<int>(names.size());
    names.push_back(v);
  }
  const size_t nv = names.size();
  const int n = static_cast<int>(flat.blocks.size());
  const FlatFunctions fns = partition(flat);
  const size_t nf = fns.entry_of.size();

  // Per-block upward-exposed uses and definitions. Pop is neither.
  std::vector<Bits> use(n, Bits(nv)), def(n, Bits(nv));
  std::vector<Bits> touched(nf, Bits(nv));
  for (int b = 0; b < n; ++b) {
    for (const FlatOp& op : flat.blocks[b].ops) {
      const int v = id.at(op.var);
      if (fns.func_of[b] >= 0) touched[fns.func_of[b]][v] = true;
      if (op.kind == FlatOpKind::Pop) continue;
      for (const VarName& in : op.inputs) {
        const int u = id.at(in);
        if (!def[b][u]) use[b][u] = true;
      }
      def[b][v] = true;
    }
    if (const auto* br = std::get_if<Branch>(&flat.blocks[b].term)) {
      const int u = id.at(br->cond);
      if (!def[b][u]) use[b][u] = true;
    }
  }

  // Continuations that a Return in each function may resume.
  std::vector<std::vector<int>> conts(nf);
  for (int b = 0; b < n; ++b) {
    if (const auto* pj = std::get_if<PushJump>(&flat.blocks[b].term)) {
      if (pj->jump_to < n && fns.func_of[pj->jump_to] >= 0 && pj->return_to < n) {
        conts[fns.func_of[pj->jump_to]].push_back(pj->return_to);
      }
    }
  }
  const int entry_fn = flat.entry < n ? fns.func_of[flat.entry] : -1;
  Bits output_bits(nv);
  if (id.count(flat.output)) output_bits[id.at(flat.output)] = true;

  std::vector<Bits> live_in(n, Bits(nv)), live_out(n, Bits(nv));
  for (bool changed = true; changed;) {
    changed = false;
    for (int b = n; b-- > 0;) {
      Bits out(nv);
      std::visit(
          [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, Jump>) {
              unite(out, live_in[t.target]);
            } else if constexpr (std::is_same_v<T, Branch>) {
              unite(out, live_in[t.if_true]);
              unite(out, live_in[t.if_false]);
            } else if constexpr (std::is_same_v<T, PushJump>) {
              unite(out, live_in[t.jump_to]);
              if (t.return_to < n) unite(out, live_in[t.return_to]);
            } else {
              const int fn = fns.func_of[b];
              if (fn >= 0) {
                for (int k : conts[fn]) unite(out, live_in[k]);
              }
              if (fn == entry_fn) unite(out, output_bits);
            }
          },
          flat.blocks[b].term);
      Bits in = use[b];
      for (size_t v = 0; v < nv; ++v) {
        if (out[v] && !def[b][v]) in[v] = true;
      }
      if (out != live_out[b] || in != live_in[b]) {
        live_out[b] = std::move(out);
        live_in[b] = std::move(in);
        changed = true;
      }
    }
  }

  // Stacked: live into the continuation of a call that can re-enter the
  // caller, and written somewhere that call can reach.
  Bits stacked(nv);
  for (int b = 0; b < n; ++b) {
    const auto* pj = std::get_if<PushJump>(&flat.blocks[b].term);
    if (!pj || fns.func_of[b] < 0 || pj->return_to >= n) continue;
    const int caller = fns.func_of[b];
    const int callee = fns.func_of[pj->jump_to];
    if (callee != caller && !fns.reach[callee][caller]) continue;
    Bits clobber = touched[callee];
    for (size_t g = 0; g < nf; ++g) {
      if (fns.reach[callee][g]) unite(clobber, touched[g]);
    }
    for (size_t v = 0; v < nv; ++v) {
      if (live_in[pj->return_to][v] && clobber[v]) stacked[v] = true;
    }
  }

  std::map<VarName, VarClass> out;
  for (size_t v = 0; v < nv; ++v) {
    bool boundary = false;
    for (int b = 0; b < n && !boundary; ++b) boundary = live_in[b][v] || live_out[b][v];
    out[names[v]] = stacked[v] ? VarClass::Stacked
                    : boundary ? VarClass::Registerized
                               : VarClass::Temporary;
  }
  return out;
}

FlatProgram apply_classes(FlatProgram flat, const std::map<VarName, VarClass>& classes) {
  for (auto& [v, info] : flat.vars) {
    if (auto it = classes.find(v); it != classes.end()) info.cls = it->second;
  }
  for (FlatBlock& b : flat.blocks) {
    std::vector<FlatOp> ops;
    for (FlatOp& op : b.ops) {
      if (flat.vars.at(op.var).cls == VarClass::Stacked) {
        ops.push_back(std::move(op));
      } else if (op.kind != FlatOpKind::Pop) {
        op.kind = FlatOpKind::Update;
        ops.push_back(std::move(op));
      }
    }
    b.ops = std::move(ops);
  }
  return flat;
}

namespace {

struct PairSite {
  int pop_block, pop_op, push_block, push_op;
};

bool touches(const FlatOp& op, const VarName& x) { return op.var == x || op.reads(x); }

// The Push that cancels the Pop at (b, k), if any.
std::optional<PairSite> find_pair(const FlatProgram& flat, const std::vector<int>& preds, int b,
                                  int k) {
  const VarName& x = flat.blocks[b].ops[k].var;
  auto match = [&](int blk, int from) -> std::optional<int> {
    const auto& ops = flat.blocks[blk].ops;
    for (int j = from; j < static_cast<int>(ops.size()); ++j) {
      if (!touches(ops[j], x)) continue;
      if (ops[j].kind == FlatOpKind::Push && ops[j].var == x && !ops[j].reads(x)) return j;
      return -1;
    }
    return std::nullopt;
  };
  const auto here = match(b, k + 1);
  if (here) {
    if (*here < 0) return std::nullopt;
    return PairSite{b, k, b, *here};
  }
  const FlatBlock& blk = flat.blocks[b];
  const auto* jump = std::get_if<Jump>(&blk.term);
  if (!jump || jump->target == b || preds[jump->target] != 1) return std::nullopt;
  const auto next = match(jump->target, 0);
  if (!next || *next < 0) return std::nullopt;
  return PairSite{b, k, jump->target, *next};
}

std::vector<int> predecessor_counts(const FlatProgram& flat) {
  std::vector<int> preds(flat.blocks.size(), 0);
  auto bump = [&](int t, int by) {
    if (t >= 0 && t < static_cast<int>(preds.size())) preds[t] += by;
  };
  bump(flat.entry, 2);
  for (const FlatBlock& b : flat.blocks) {
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, Jump>) {
            bump(t.target, 1);
          } else if constexpr (std::is_same_v<T, Branch>) {
            bump(t.if_true, 1);
            bump(t.if_false, 1);
          } else if constexpr (std::is_same_v<T, PushJump>) {
            bump(t.jump_to, 2);
            bump(t.return_to, 2);
          }
        },
        b.term);
  }
  return preds;
}

}  // namespace

FlatProgram cancel_pop_push(FlatProgram flat) {
  const std::vector<int> preds = predecessor_counts(flat);
  for (bool changed = true; changed;) {
    changed = false;
    for (int b = 0; b < static_cast<int>(flat.blocks.size()); ++b) {
      for (int k = 0; k < static_cast<int>(flat.blocks[b].ops.size()); ++k) {
        if (flat.blocks[b].ops[k].kind != FlatOpKind::Pop) continue;
        const auto site = find_pair(flat, preds, b, k);
        if (!site) continue;
        flat.blocks[site->push_block].ops[site->push_op].kind = FlatOpKind::Update;
        flat.blocks[b].ops.erase(flat.blocks[b].ops.begin() + k);
        --k;
        changed = true;
      }
    }
  }
  return flat;
}

int count_cancellable_pairs(const FlatProgram& flat) {
  const std::vector<int> preds = predecessor_counts(flat);
  int count = 0;
  for (int b = 0; b < static_cast<int>(flat.blocks.size()); ++b) {
    for (int k = 0; k < static_cast<int>(flat.blocks[b].ops.size()); ++k) {
      if (flat.blocks[b].ops[k].kind == FlatOpKind::Pop && find_pair(flat, preds, b, k)) ++count;
    }
  }
  return count;
}

CompileResult compile(const CallGraphProgram& prog, const CompileOptions& options) {
  CompileResult r;
  auto [flat, map] = flatten(prog, options.caller_saves);
  r.map = std::move(map);
  r.stages.emplace_back("flatten", print_ir(flat));

  std::map<VarName, VarClass> classes;
  if (options.temporaries || options.stack_elimination) {
    classes = classify_variables(flat);
    for (auto& [v, c] : classes) {
      if (c == VarClass::Temporary && !options.temporaries) c = VarClass::Registerized;
      if (c == VarClass::Registerized && !options.stack_elimination) c = VarClass::Stacked;
    }
  } else {
    for (const auto& [v, info] : flat.vars) classes[v] = VarClass::Stacked;
  }
  flat = apply_classes(std::move(flat), classes);
  r.stages.emplace_back("classify", print_ir(flat));

  if (options.pop_push) {
    flat = cancel_pop_push(std::move(flat));
    r.stages.emplace_back("cancel", print_ir(flat));
  }
  r.classes = std::move(classes);
  r.flat = std::move(flat);
  return r;
}

}  // namespace autobatch
