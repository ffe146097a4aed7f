#include <filesystem>
#include <fstream>
#include <sstream>

#include "autobatch/cli.hpp"
#include "autobatch/errors.hpp"
#include "autobatch/frontend.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace autobatch;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("autobatch_cli_" + name); }

std::string section(const std::string& dump, const std::string& name) {
  const std::string head = "== " + name + " ==\n";
  const auto b = dump.find(head);
  if (b == std::string::npos) return {};
  const auto start = b + head.size();
  const auto e = dump.find("\n== ", start);
  return dump.substr(start, e == std::string::npos ? std::string::npos : e + 1 - start);
}

}  // namespace

TEST_CASE("run prints per-lane outputs on both engines") {
  for (const char* engine : {"pc", "local"}) {
    for (const char* mode : {"mask", "gather"}) {
      const Result r = cli({"run", "fibonacci", "--engine", engine, "--mode", mode, "--inputs", "6,7,8,9"});
      CHECK(r.code == kExitOk);
      CHECK(r.out == "13 21 34 55\n");
    }
  }
  const Result file = cli({"run", AUTOBATCH_CORPUS_DIR "/mutual_recursion.ab", "--entry", "is_odd", "--inputs", "3,4"});
  CHECK(file.code == kExitOk);
  CHECK(file.out == "true false\n");
  const Result two = cli({"run", "two_call_sites", "--inputs", "0.5,1.0;1,3"});
  CHECK(two.code == kExitOk);
  CHECK(two.out.find(' ') != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(cli({"run", "fibonacci"}).code == kExitUsage);
  CHECK(cli({"run", "fibonacci", "--inputs", ""}).code == kExitUsage);
  CHECK(cli({"run", "fibonacci", "--inputs", "1;2"}).code == kExitUsage);
  CHECK(cli({"run", "fibonacci", "--inputs", "x"}).code == kExitUsage);
  CHECK(cli({"run", "fibonacci", "--inputs", "1", "--engine", "gpu"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  const Result help = cli({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("nuts") != std::string::npos);
}

TEST_CASE("faults map to exit codes") {
  const fs::path bad = temp("bad.ab");
  std::ofstream(bad) << "def f(n) {\n  return n +;\n}\n";
  const Result parse = cli({"compile", bad.string()});
  CHECK(parse.code == kExitCompile);
  CHECK(parse.err.find("2:") != std::string::npos);
  CHECK(cli({"run", "no_such_program", "--inputs", "1"}).code == kExitCompile);

  const Result overflow = cli({"run", "fibonacci", "--inputs", "10", "--depth", "3"});
  CHECK(overflow.code == kExitStackFault);
  CHECK(overflow.err.find("StackOverflow") != std::string::npos);
  CHECK(overflow.err.find("lane 0") != std::string::npos);

  const Result limit = cli({"run", "countdown", "--inputs", "100000", "--max-steps", "50"});
  CHECK(limit.code == kExitStepLimit);
  const Result local_limit = cli({"run", "countdown", "--engine", "local", "--inputs", "100000", "--max-steps", "50"});
  CHECK(local_limit.code == kExitStepLimit);
  fs::remove(bad);
}

TEST_CASE("compile dumps every stage") {
  const Result fib = cli({"compile", "fibonacci"});
  REQUIRE(fib.code == kExitOk);
  CHECK(section(fib.out, "flat.cancel").find("pushjump") != std::string::npos);
  CHECK(section(fib.out, "classes").find("fibonacci:n stacked") != std::string::npos);

  const Result line = cli({"compile", "straight_line"});
  REQUIRE(line.code == kExitOk);
  const std::string final_stage = section(line.out, "flat.cancel");
  REQUIRE(!final_stage.empty());
  CHECK(final_stage.find(" push ") == std::string::npos);
  CHECK(final_stage.find(" pop ") == std::string::npos);

  const fs::path dir = temp("stages");
  fs::remove_all(dir);
  CHECK(cli({"compile", "fibonacci", "--out-dir", dir.string(), "--no-pass", "pop-push"}).code == kExitOk);
  CHECK(fs::exists(dir / "callgraph.ir"));
  CHECK(fs::exists(dir / "flat.classify.ir"));
  CHECK(!fs::exists(dir / "flat.cancel.ir"));
  CHECK(parse_flat_ir(slurp(dir / "flat.classify.ir")).blocks.size() == 5);
  fs::remove_all(dir);
}

TEST_CASE("run output and trace files are deterministic") {
  const fs::path t1 = temp("t1.json"), t2 = temp("t2.json"), csv = temp("t.csv");
  const Result a = cli({"run", "fibonacci", "--inputs", "3,7,4,5", "--trace", t1.string(), "--csv", csv.string()});
  const Result b = cli({"run", "fibonacci", "--inputs", "3,7,4,5", "--trace", t2.string()});
  CHECK(a.out == "3 21 5 8\n");
  CHECK(a.out == b.out);
  CHECK(slurp(t1) == slurp(t2));
  const auto j = nlohmann::json::parse(slurp(t1));
  CHECK(j.at("engine") == "pc");
  CHECK(slurp(csv).rfind("step,block,active\n", 0) == 0);
  for (const auto& p : {t1, t2, csv}) fs::remove(p);
}

TEST_CASE("inputs files carry vector lanes") {
  const std::vector<Type> types = {Type::vec(2), Type::scalar(DType::Int)};
  const auto in = parse_inputs_json(R"({"inputs": [[[1.0, 2.0], [3.0, 4.5]], [7, 8]]})", types);
  REQUIRE(in.size() == 2);
  CHECK(in[0].f(1, 1) == 4.5);
  CHECK(in[1] == BatchArray::of_ints({7, 8}));
  CHECK_THROWS_AS(parse_inputs_json(R"({"inputs": [[[1.0]], [7]]})", types), Error);
  CHECK_THROWS_AS(parse_inputs_json(R"({"inputs": [[], []]})", types), Error);
  CHECK_THROWS_AS(parse_inline_inputs("1,2", {Type::vec(2)}), Error);
  CHECK(format_lanes(BatchArray::of_floats({0.1, 2.0})) == "0.10000000000000001 2");
  CHECK(format_lanes(in[0]) == "[1,2] [3,4.5]");
}

TEST_CASE("check passes on the corpus and catches a planted bug") {
  const Result r = cli({"check", "--batches", "3", "--lanes", "5"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(cli({"check", "fibonacci", "--exhaustive", "--batches", "2"}).code == kExitOk);
  CHECK(cli({"check", "fibonacci", "--lanes", "1"}).code == kExitOk);

  // Turning the saves of `n` into in-place updates mimics a cancellation
  // that ignores the read between Pop and Push.
  const CorpusEntry* e = find_corpus_entry("fibonacci");
  const auto prog = compile_source(e->source, support::reg(), e->entry);
  CheckOptions opts;
  opts.tamper = [](FlatProgram& f) {
    for (auto& b : f.blocks) {
      for (auto& op : b.ops) {
        if (op.kind == FlatOpKind::Push && op.var == "fibonacci:n") op.kind = FlatOpKind::Update;
      }
    }
  };
  const CheckReport bad = check_program(prog, support::reg(), {e->sample_inputs}, opts);
  CHECK(!bad.ok());
  REQUIRE(!bad.mismatches.empty());
  CHECK(bad.mismatches.front().find("lane") != std::string::npos);
}

TEST_CASE("nuts command reports statistics and utilization") {
  const fs::path csv = temp("util.csv"), report = temp("report.json");
  const Result r = cli({"nuts", "--lanes", "8", "--iterations", "5", "--max-depth", "3", "--csv", csv.string(),
                        "--report", report.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("chains identical yes") != std::string::npos);
  CHECK(r.out.find("utilization local") != std::string::npos);
  CHECK(r.out.find("max cov error") != std::string::npos);
  CHECK(slurp(csv).rfind("engine,Z,steps,grad_invocations,utilization\nlocal,8,", 0) == 0);
  CHECK(nlohmann::json::parse(slurp(report)).contains("utilization_ratio"));
  const Result lr = cli({"nuts", "--target", "logreg", "--dim", "3", "--points", "50", "--lanes", "3",
                         "--iterations", "3", "--max-depth", "2"});
  CHECK(lr.code == kExitOk);
  CHECK(lr.out.find("max cov error") == std::string::npos);
  fs::remove(csv);
  fs::remove(report);
}

TEST_CASE("corpus assets match the built-in corpus") {
  const Result list = cli({"corpus"});
  CHECK(list.code == kExitOk);
  for (const CorpusEntry& e : corpus()) {
    CAPTURE(e.name);
    CHECK(list.out.find(e.name + "\n") != std::string::npos);
    CHECK(slurp(fs::path(AUTOBATCH_CORPUS_DIR) / (e.name + ".ab")) == e.source);
    CHECK(cli({"corpus", e.name}).out == e.source);
  }
}
