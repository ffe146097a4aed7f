#include "autobatch/metrics.hpp"

#include <fstream>
#include <sstream>

#include "autobatch/errors.hpp"
#include "json.hpp"

namespace autobatch {

using nlohmann::json;

std::vector<int> ScheduleTrace::block_sequence() const {
  std::vector<int> out;
  out.reserve(steps.size());
  for (const TraceStep& s : steps) out.push_back(s.block);
  return out;
}

std::int64_t ScheduleTrace::invocations(const std::string& prim) const {
  std::int64_t n = 0;
  for (const TraceStep& s : steps) {
    if (auto it = s.prims.find(prim); it != s.prims.end()) n += it->second;
  }
  return n;
}

namespace {

struct Tally {
  double useful = 0;
  double launched = 0;
  std::int64_t invocations = 0;
};

Tally tally(const ScheduleTrace& t, const std::set<std::string>& counted) {
  Tally out;
  for (const TraceStep& s : t.steps) {
    for (const auto& [name, n] : s.prims) {
      if (!counted.count(name)) continue;
      out.useful += static_cast<double>(s.active) * n;
      out.launched += static_cast<double>(t.Z) * n;
      out.invocations += n;
    }
  }
  return out;
}

}  // namespace

double utilization(const ScheduleTrace& trace, const std::set<std::string>& counted) {
  const Tally t = tally(trace, counted);
  if (t.launched == 0) throw Error("utilization: trace has no counted primitive invocations");
  return t.useful / t.launched;
}

CompareReport compare(const ScheduleTrace& a, const ScheduleTrace& b,
                      const std::set<std::string>& counted) {
  if (a.Z != b.Z) {
    throw Error("compare: batch sizes differ (" + std::to_string(a.Z) + " vs " +
                std::to_string(b.Z) + ")");
  }
  auto summary = [&](const ScheduleTrace& t) {
    EngineSummary s{t.engine, static_cast<std::int64_t>(t.steps.size()), 0, 0.0};
    const Tally tl = tally(t, counted);
    s.invocations = tl.invocations;
    s.utilization = tl.launched > 0 ? tl.useful / tl.launched : 0.0;
    return s;
  };
  CompareReport r{summary(a), summary(b)};
  auto ratio = [](double x, double y) { return y != 0 ? x / y : 0.0; };
  r.step_ratio = ratio(static_cast<double>(r.a.steps), static_cast<double>(r.b.steps));
  r.invocation_ratio = ratio(static_cast<double>(r.a.invocations), static_cast<double>(r.b.invocations));
  r.utilization_ratio = ratio(r.b.utilization, r.a.utilization);
  return r;
}

std::string report_to_json(const CompareReport& r) {
  auto side = [](const EngineSummary& s) {
    return json{{"engine", s.engine},
                {"steps", s.steps},
                {"invocations", s.invocations},
                {"utilization", s.utilization}};
  };
  json j{{"a", side(r.a)},
         {"b", side(r.b)},
         {"step_ratio", r.step_ratio},
         {"invocation_ratio", r.invocation_ratio},
         {"utilization_ratio", r.utilization_ratio}};
  return j.dump(2);
}

std::string trace_to_json(const ScheduleTrace& trace) {
  json steps = json::array();
  for (const TraceStep& s : trace.steps) {
    steps.push_back({{"block", s.block}, {"active", s.active}, {"prims", s.prims}});
  }
  json stacks = json::object();
  for (const auto& [var, c] : trace.stacks) {
    stacks[var] = {{"push", c.push}, {"pop", c.pop}, {"update", c.update}};
  }
  json j{{"engine", trace.engine}, {"Z", trace.Z}, {"steps", steps}, {"stacks", stacks}};
  return j.dump();
}

ScheduleTrace trace_from_json(const std::string& text) {
  ScheduleTrace t;
  try {
    const json j = json::parse(text);
    t.engine = j.at("engine").get<std::string>();
    t.Z = j.at("Z").get<int>();
    for (const json& s : j.at("steps")) {
      TraceStep step;
      step.block = s.at("block").get<int>();
      step.active = s.at("active").get<int>();
      step.prims = s.at("prims").get<std::map<std::string, std::int64_t>>();
      if (step.active < 1 || step.active > t.Z) throw Error("active count out of range");
      t.steps.push_back(std::move(step));
    }
    for (const auto& [var, c] : j.at("stacks").items()) {
      t.stacks[var] = StackCounts{c.at("push").get<std::int64_t>(), c.at("pop").get<std::int64_t>(),
                                  c.at("update").get<std::int64_t>()};
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed trace: ") + e.what());
  }
  if (t.steps.empty()) throw Error("malformed trace: no steps");
  return t;
}

std::string trace_to_csv(const ScheduleTrace& trace) {
  std::ostringstream out;
  out << "step,block,active\n";
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    out << k << ',' << trace.steps[k].block << ',' << trace.steps[k].active << '\n';
  }
  return out.str();
}

void export_trace(const ScheduleTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << trace_to_json(trace) << '\n';
  if (!f) throw Error("write to '" + path + "' failed");
}

ScheduleTrace import_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return trace_from_json(ss.str());
}

}  // namespace autobatch
