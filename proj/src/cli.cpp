#include "autobatch/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"
#include "autobatch/local_exec.hpp"
#include "autobatch/metrics.hpp"
#include "autobatch/pc_vm.hpp"
#include "autobatch/workloads.hpp"
#include "json.hpp"

namespace autobatch {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\n") - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("expected a bool, got '" + s + "'");
}

BatchArray scalar_lanes(const std::vector<std::string>& items, const Type& t) {
  try {
    switch (t.dtype) {
      case DType::Int: {
        std::vector<std::int64_t> v;
        for (const auto& s : items) {
          size_t used = 0;
          v.push_back(std::stoll(s, &used));
          if (used != s.size()) throw Error("bad int");
        }
        return BatchArray::of_ints(v);
      }
      case DType::Bool: {
        std::vector<bool> v;
        for (const auto& s : items) v.push_back(parse_bool(s));
        return BatchArray::of_bools(v);
      }
      case DType::Float: {
        std::vector<double> v;
        for (const auto& s : items) {
          size_t used = 0;
          v.push_back(std::stod(s, &used));
          if (used != s.size()) throw Error("bad float");
        }
        return BatchArray::of_floats(v);
      }
    }
  } catch (const std::logic_error&) {
  } catch (const Error&) {
  }
  throw Error("cannot read inputs as " + type_name(t));
}

struct Loaded {
  std::string name;
  std::string text;
};

Loaded load_source(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream in(arg);
    std::stringstream ss;
    ss << in.rdbuf();
    return {std::filesystem::path(arg).stem().string(), ss.str()};
  }
  if (const CorpusEntry* e = find_corpus_entry(arg)) return {e->name, e->source};
  throw Error("no source file or corpus program named '" + arg + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

std::vector<Type> param_types(const CallGraphProgram& prog) {
  const Function& f = prog.functions[prog.entry];
  std::vector<Type> types;
  for (const auto& p : f.params) types.push_back(f.vars.at(p));
  return types;
}

const std::map<std::string, unsigned> kPassBits = {
    {"caller-saves", 1}, {"temporaries", 2}, {"stack-elimination", 4}, {"pop-push", 8}};

CompileOptions options_without(const std::vector<std::string>& disabled) {
  unsigned bits = 15;
  for (const auto& name : disabled) bits &= ~kPassBits.at(name);
  return CompileOptions::from_bits(bits);
}

std::string lane_text(const BatchArray& a, int lane) {
  if (a.type().width > 0) {
    std::string s = "[";
    for (int k = 0; k < a.lane_size(); ++k) s += (k ? "," : "") + fmt_double(a.f(lane, k));
    return s + "]";
  }
  switch (a.type().dtype) {
    case DType::Int: return std::to_string(a.i(lane));
    case DType::Bool: return a.b(lane) ? "true" : "false";
    case DType::Float: return fmt_double(a.f(lane, 0));
  }
  return {};
}

bool lane_equal(const BatchArray& got, const BatchArray& want, int lane) {
  if (!got.is_float()) return lane_text(got, lane) == lane_text(want, lane);
  for (int k = 0; k < got.lane_size(); ++k) {
    const double a = got.f(lane, k), b = want.f(lane, k);
    if (std::isnan(a) || std::isnan(b)) {
      if (std::isnan(a) != std::isnan(b)) return false;
      continue;
    }
    if (a != b && std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b))) return false;
  }
  return true;
}

}  // namespace

std::vector<BatchArray> parse_inline_inputs(const std::string& text, const std::vector<Type>& types) {
  const auto params = split(text, ';');
  if (trim(text).empty()) throw Error("empty batch");
  if (params.size() != types.size()) {
    throw Error("expected inputs for " + std::to_string(types.size()) + " parameters, got " +
                std::to_string(params.size()));
  }
  std::vector<BatchArray> out;
  for (size_t k = 0; k < params.size(); ++k) {
    if (types[k].width > 0) throw Error("vector parameters need --inputs-file");
    std::vector<std::string> items;
    for (const auto& s : split(params[k], ',')) items.push_back(trim(s));
    if (items.size() == 1 && items[0].empty()) throw Error("empty batch");
    out.push_back(scalar_lanes(items, types[k]));
  }
  for (const auto& a : out) {
    if (a.lanes() != out[0].lanes()) throw Error("parameters have different lane counts");
  }
  return out;
}

std::vector<BatchArray> parse_inputs_json(const std::string& text, const std::vector<Type>& types) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("inputs file: ") + e.what());
  }
  if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].size() != types.size()) {
    throw Error("inputs file: expected \"inputs\" with one array per parameter");
  }
  std::vector<BatchArray> out;
  try {
    for (size_t k = 0; k < types.size(); ++k) {
      const auto& lanes = j["inputs"][k];
      if (!lanes.is_array() || lanes.empty()) throw Error("inputs file: empty batch");
      const Type& t = types[k];
      if (t.width > 0) {
        std::vector<std::vector<double>> rows;
        for (const auto& lane : lanes) {
          auto row = lane.get<std::vector<double>>();
          if (static_cast<int>(row.size()) != t.width) throw Error("inputs file: wrong vector length");
          rows.push_back(std::move(row));
        }
        out.push_back(BatchArray::of_vectors(rows));
      } else if (t.dtype == DType::Int) {
        out.push_back(BatchArray::of_ints(lanes.get<std::vector<std::int64_t>>()));
      } else if (t.dtype == DType::Bool) {
        out.push_back(BatchArray::of_bools(lanes.get<std::vector<bool>>()));
      } else {
        out.push_back(BatchArray::of_floats(lanes.get<std::vector<double>>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("inputs file: ") + e.what());
  }
  for (const auto& a : out) {
    if (a.lanes() != out[0].lanes()) throw Error("parameters have different lane counts");
  }
  return out;
}

std::string format_lanes(const BatchArray& values) {
  std::string s;
  for (int b = 0; b < values.lanes(); ++b) s += (b ? " " : "") + lane_text(values, b);
  return s;
}

CheckReport check_program(const CallGraphProgram& prog, const PrimitiveRegistry& registry,
                          const std::vector<std::vector<BatchArray>>& batches, const CheckOptions& options) {
  CheckReport report;
  std::vector<unsigned> subsets;
  if (options.exhaustive) {
    for (unsigned b = 0; b < 16; ++b) subsets.push_back(b);
  } else {
    subsets = {15, 0};
  }
  std::vector<std::pair<unsigned, FlatProgram>> flats;
  for (unsigned bits : subsets) {
    FlatProgram f = compile(prog, CompileOptions::from_bits(bits)).flat;
    if (options.tamper) options.tamper(f);
    flats.emplace_back(bits, std::move(f));
  }
  const std::string output = prog.functions[prog.entry].output;

  for (size_t n = 0; n < batches.size(); ++n) {
    const auto& inputs = batches[n];
    const BatchArray want = run_reference_batch(prog, registry, prog.entry, inputs, options.max_steps);
    auto compare = [&](const std::string& who, const std::function<BatchArray()>& run) {
      ++report.runs;
      BatchArray got;
      try {
        got = run();
      } catch (const Error& e) {
        report.mismatches.push_back("batch " + std::to_string(n) + " " + who + ": " + e.what());
        return;
      }
      for (int b = 0; b < want.lanes(); ++b) {
        if (lane_equal(got, want, b)) continue;
        report.mismatches.push_back("batch " + std::to_string(n) + " " + who + " lane " + std::to_string(b) +
                                    " variable " + output + ": got " + lane_text(got, b) + ", want " +
                                    lane_text(want, b));
      }
    };
    for (ExecMode mode : {ExecMode::Mask, ExecMode::GatherScatter}) {
      const std::string m = mode == ExecMode::Mask ? "mask" : "gather";
      compare("local " + m, [&] {
        LocalOptions lo;
        lo.mode = mode;
        lo.max_steps = options.max_steps;
        return run_local(prog, registry, prog.entry, inputs, LaneMask::full(want.lanes()), lo);
      });
      for (const auto& [bits, flat] : flats) {
        compare("pc " + m + " passes " + CompileOptions::from_bits(bits).describe(), [&, &flat = flat] {
          VmOptions vo;
          vo.mode = mode;
          vo.max_steps = options.max_steps;
          vo.debug = true;
          return run_vm(flat, registry, inputs, options.depth, vo).first;
        });
      }
    }
  }
  return report;
}

namespace {

struct Common {
  std::string source;
  std::string entry;
  std::vector<std::string> no_pass;
};

void add_common(CLI::App* cmd, Common& c, bool needs_source = true) {
  auto* opt = cmd->add_option("source", c.source, "source file or corpus program name");
  if (needs_source) opt->required();
  cmd->add_option("--entry", c.entry, "entry function (default: first)");
  std::vector<std::string> names;
  for (const auto& [n, b] : kPassBits) names.push_back(n);
  cmd->add_option("--no-pass", c.no_pass, "disable a compiler pass")->check(CLI::IsMember(names));
}

int cmd_compile(const Common& c, const std::string& out_dir, const PrimitiveRegistry& reg, std::ostream& out) {
  const Loaded src = load_source(c.source);
  const CallGraphProgram prog = compile_source(src.text, reg, c.entry);
  const CompileResult r = compile(prog, options_without(c.no_pass));
  std::ostringstream classes;
  for (const auto& [v, cls] : r.classes) classes << v << " " << var_class_name(cls) << "\n";

  std::vector<std::pair<std::string, std::string>> sections = {{"callgraph", print_ir(prog)}};
  for (const auto& [stage, text] : r.stages) sections.emplace_back("flat." + stage, text);
  sections.emplace_back("classes", classes.str());
  for (const auto& [name, text] : sections) {
    out << "== " << name << " ==\n" << text;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      write_file((std::filesystem::path(out_dir) / (name + ".ir")).string(), text);
    }
  }
  return kExitOk;
}

struct RunArgs {
  std::string engine = "pc";
  std::string mode = "mask";
  std::string inputs;
  std::string inputs_file;
  int depth = 64;
  std::int64_t max_steps = 10'000'000;
  std::string trace;
  std::string csv;
};

int cmd_run(const Common& c, const RunArgs& a, const PrimitiveRegistry& reg, std::ostream& out) {
  const Loaded src = load_source(c.source);
  const CallGraphProgram prog = compile_source(src.text, reg, c.entry);
  const auto types = param_types(prog);
  if (a.inputs.empty() == a.inputs_file.empty()) throw CLI::ValidationError("give exactly one of --inputs, --inputs-file");
  std::vector<BatchArray> inputs;
  try {
    inputs = a.inputs.empty() ? parse_inputs_json(read_file(a.inputs_file), types)
                              : parse_inline_inputs(a.inputs, types);
  } catch (const Error& e) {
    throw CLI::ValidationError("inputs", e.what());
  }
  const ExecMode mode = a.mode == "mask" ? ExecMode::Mask : ExecMode::GatherScatter;
  BatchArray result;
  ScheduleTrace trace;
  if (a.engine == "local") {
    LocalOptions lo;
    lo.mode = mode;
    lo.max_steps = a.max_steps;
    const int z = inputs.empty() ? 1 : inputs[0].lanes();
    std::tie(result, trace) = trace_local(prog, reg, prog.entry, inputs, LaneMask::full(z), lo);
  } else {
    VmOptions vo;
    vo.mode = mode;
    vo.max_steps = a.max_steps;
    std::tie(result, trace) = run_vm(compile(prog, options_without(c.no_pass)).flat, reg, inputs, a.depth, vo);
  }
  out << format_lanes(result) << "\n";
  if (!a.trace.empty()) export_trace(trace, a.trace);
  if (!a.csv.empty()) write_file(a.csv, trace_to_csv(trace));
  return kExitOk;
}

struct CheckArgs {
  std::vector<std::string> sources;
  int lanes = 8;
  int batches = 10;
  std::int64_t seed = 0;
  bool exhaustive = false;
  int depth = 64;
};

int cmd_check(const CheckArgs& a, const PrimitiveRegistry& reg, std::ostream& out) {
  std::vector<std::string> names = a.sources;
  if (names.empty()) {
    for (const CorpusEntry& e : corpus()) names.push_back(e.name);
  }
  bool ok = true;
  for (const std::string& name : names) {
    const CorpusEntry* entry = find_corpus_entry(name);
    if (!entry) throw Error("check works on corpus programs; unknown '" + name + "'");
    const CallGraphProgram prog = compile_source(entry->source, reg, entry->entry);
    std::mt19937_64 rng(static_cast<std::uint64_t>(a.seed));
    std::vector<std::vector<BatchArray>> batches = {entry->sample_inputs};
    for (int n = 1; n < a.batches; ++n) batches.push_back(entry->random_inputs(rng, a.lanes));
    CheckOptions opts;
    opts.exhaustive = a.exhaustive;
    opts.depth = a.depth;
    opts.max_steps = entry->max_steps;
    const CheckReport r = check_program(prog, reg, batches, opts);
    out << (r.ok() ? "ok " : "FAIL ") << name << " (" << r.runs << " runs)\n";
    for (const auto& m : r.mismatches) out << "  " << name << ": " << m << "\n";
    ok &= r.ok();
  }
  return ok ? kExitOk : kExitMismatch;
}

struct NutsArgs {
  NutsConfig config;
  int lanes = 64;
  int dim = 2;
  double rho = 0.5;
  std::string target = "gauss";
  int points = 200;
  std::string csv;
  std::string report;
};

int cmd_nuts(const NutsArgs& a, std::ostream& out) {
  const TargetDensity target = a.target == "gauss" ? correlated_gaussian(a.dim, a.rho)
                                                   : logistic_regression(a.points, a.dim, 1);
  PrimitiveRegistry reg = PrimitiveRegistry::builtins();
  register_target(reg, target);
  const CallGraphProgram prog = compile_source(nuts_lite_source(a.config, target), reg, "nuts");
  const auto inputs = nuts_inputs(a.config, target, a.lanes);

  LocalOptions lo;
  lo.max_steps = std::numeric_limits<std::int64_t>::max();
  auto [lchain, ltrace] = trace_local(prog, reg, prog.entry, inputs, LaneMask::full(a.lanes), lo);
  VmOptions vo;
  vo.max_steps = std::numeric_limits<std::int64_t>::max();
  auto [pchain, ptrace] = run_vm(compile(prog).flat, reg, inputs, nuts_stack_depth(a.config), vo);

  const int d = target.dim, iters = a.config.iterations;
  std::vector<double> mean(d, 0.0);
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  const double n = static_cast<double>(a.lanes) * iters;
  for (int b = 0; b < a.lanes; ++b) {
    for (int t = 0; t < iters; ++t) {
      for (int i = 0; i < d; ++i) mean[i] += pchain.f(b, t * d + i) / n;
    }
  }
  for (int b = 0; b < a.lanes; ++b) {
    for (int t = 0; t < iters; ++t) {
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          cov[i][j] += (pchain.f(b, t * d + i) - mean[i]) * (pchain.f(b, t * d + j) - mean[j]) / n;
        }
      }
    }
  }

  out << "target " << target.name << " lanes " << a.lanes << " iterations " << iters << "\n";
  out << "chains identical " << (lchain == pchain ? "yes" : "no") << "\n";
  out << "mean";
  for (double m : mean) out << " " << fmt_double(m);
  out << "\n";
  for (int i = 0; i < d; ++i) {
    out << "cov[" << i << "]";
    for (int j = 0; j < d; ++j) out << " " << fmt_double(cov[i][j]);
    out << "\n";
  }
  if (!target.mean.empty()) {
    double me = 0, ce = 0;
    for (int i = 0; i < d; ++i) {
      me = std::max(me, std::abs(mean[i] - target.mean[i]));
      for (int j = 0; j < d; ++j) ce = std::max(ce, std::abs(cov[i][j] - target.cov[i][j]));
    }
    out << "max mean error " << fmt_double(me) << "\n";
    out << "max cov error " << fmt_double(ce) << "\n";
  }
  const CompareReport r = compare(ltrace, ptrace, {target.grad_prim()});
  out << "utilization local " << fmt_double(r.a.utilization) << " pc " << fmt_double(r.b.utilization)
      << " ratio " << fmt_double(r.utilization_ratio) << "\n";
  out << "steps local " << r.a.steps << " pc " << r.b.steps << "\n";
  if (!a.csv.empty()) {
    std::ostringstream csv;
    csv << "engine,Z,steps,grad_invocations,utilization\n";
    for (const EngineSummary* s : {&r.a, &r.b}) {
      csv << s->engine << "," << a.lanes << "," << s->steps << "," << s->invocations << ","
          << fmt_double(s->utilization) << "\n";
    }
    write_file(a.csv, csv.str());
  }
  if (!a.report.empty()) write_file(a.report, report_to_json(r));
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Batch recursive programs with local static or program-counter execution"};
  app.require_subcommand(1);

  Common compile_c;
  std::string out_dir;
  auto* compile_cmd = app.add_subcommand("compile", "print IR for every compiler stage");
  add_common(compile_cmd, compile_c);
  compile_cmd->add_option("--out-dir", out_dir, "also write each stage to a file here");

  Common run_c;
  RunArgs run_a;
  auto* run_cmd = app.add_subcommand("run", "run a batch and print per-lane outputs");
  add_common(run_cmd, run_c);
  run_cmd->add_option("--engine", run_a.engine)->check(CLI::IsMember({"local", "pc"}));
  run_cmd->add_option("--mode", run_a.mode)->check(CLI::IsMember({"mask", "gather"}));
  run_cmd->add_option("--inputs", run_a.inputs, "lanes split on ',', parameters on ';'");
  run_cmd->add_option("--inputs-file", run_a.inputs_file, "JSON {\"inputs\": [...]}");
  run_cmd->add_option("--depth", run_a.depth, "stack limit D")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-steps", run_a.max_steps)->check(CLI::PositiveNumber);
  run_cmd->add_option("--trace", run_a.trace, "write the schedule trace as JSON");
  run_cmd->add_option("--csv", run_a.csv, "write step,block,active CSV");

  CheckArgs check_a;
  auto* check_cmd = app.add_subcommand("check", "differential test against the scalar oracle");
  check_cmd->add_option("programs", check_a.sources, "corpus programs (default: all)");
  check_cmd->add_option("--lanes", check_a.lanes)->check(CLI::PositiveNumber);
  check_cmd->add_option("--batches", check_a.batches)->check(CLI::PositiveNumber);
  check_cmd->add_option("--seed", check_a.seed);
  check_cmd->add_option("--depth", check_a.depth)->check(CLI::PositiveNumber);
  check_cmd->add_flag("--exhaustive", check_a.exhaustive, "all 16 pass subsets");

  NutsArgs nuts_a;
  auto* nuts_cmd = app.add_subcommand("nuts", "NUTS-lite on both engines with utilization report");
  nuts_cmd->add_option("--lanes", nuts_a.lanes)->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--iterations", nuts_a.config.iterations)->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--step-size", nuts_a.config.step_size)->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--leapfrog", nuts_a.config.leapfrog_steps)->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--max-depth", nuts_a.config.max_depth)->check(CLI::NonNegativeNumber);
  nuts_cmd->add_option("--seed", nuts_a.config.seed);
  nuts_cmd->add_option("--target", nuts_a.target)->check(CLI::IsMember({"gauss", "logreg"}));
  nuts_cmd->add_option("--dim", nuts_a.dim, "dimension or regressor count")->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--rho", nuts_a.rho, "gaussian correlation");
  nuts_cmd->add_option("--points", nuts_a.points, "logistic regression data size")->check(CLI::PositiveNumber);
  nuts_cmd->add_option("--csv", nuts_a.csv, "write per-engine utilization CSV");
  nuts_cmd->add_option("--report", nuts_a.report, "write the comparison report as JSON");

  std::string corpus_name;
  auto* corpus_cmd = app.add_subcommand("corpus", "list corpus programs or print one");
  corpus_cmd->add_option("name", corpus_name);

  std::vector<std::string> argv_store = {"autobatch"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    const PrimitiveRegistry reg = corpus_registry();
    if (*compile_cmd) return cmd_compile(compile_c, out_dir, reg, out);
    if (*run_cmd) return cmd_run(run_c, run_a, reg, out);
    if (*check_cmd) return cmd_check(check_a, reg, out);
    if (*nuts_cmd) return cmd_nuts(nuts_a, out);
    if (corpus_name.empty()) {
      for (const CorpusEntry& e : corpus()) out << e.name << "\n";
    } else {
      const CorpusEntry* e = find_corpus_entry(corpus_name);
      if (!e) throw Error("unknown corpus program '" + corpus_name + "'");
      out << e->source;
    }
    return kExitOk;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StackFault& e) {
    err << e.what() << "\n";
    return kExitStackFault;
  } catch (const HostRecursionLimit& e) {
    err << e.what() << "\n";
    return kExitStackFault;
  } catch (const StepLimitExceeded& e) {
    err << e.what() << "\n";
    return kExitStepLimit;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompile;
  }
}

}  // namespace autobatch
