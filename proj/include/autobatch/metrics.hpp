#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace autobatch {

struct TraceStep {
  int block = 0;
  int active = 0;
  std::map<std::string, std::int64_t> prims;  // primitive name -> invocations

  bool operator==(const TraceStep&) const = default;
};

struct StackCounts {
  std::int64_t push = 0;
  std::int64_t pop = 0;
  std::int64_t update = 0;

  std::int64_t total() const { return push + pop + update; }
  bool operator==(const StackCounts&) const = default;
};

struct ScheduleTrace {
  std::string engine;
  int Z = 0;
  std::vector<TraceStep> steps;
  std::map<std::string, StackCounts> stacks;  // store traffic per stacked variable

  std::vector<int> block_sequence() const;
  std::int64_t invocations(const std::string& prim) const;
  bool operator==(const ScheduleTrace&) const = default;
};

// Useful lane-evaluations of the counted primitives over lane-evaluations
// launched. Throws Error when no step invokes a counted primitive.
double utilization(const ScheduleTrace& trace, const std::set<std::string>& counted);

struct EngineSummary {
  std::string engine;
  std::int64_t steps = 0;
  std::int64_t invocations = 0;  // launches of counted primitives
  double utilization = 0.0;
};

struct CompareReport {
  EngineSummary a;
  EngineSummary b;
  double step_ratio = 0.0;         // a.steps / b.steps
  double invocation_ratio = 0.0;   // a.invocations / b.invocations
  double utilization_ratio = 0.0;  // b.utilization / a.utilization
};

// Throws Error on mismatched Z.
CompareReport compare(const ScheduleTrace& a, const ScheduleTrace& b,
                      const std::set<std::string>& counted);
std::string report_to_json(const CompareReport& r);

std::string trace_to_json(const ScheduleTrace& trace);
ScheduleTrace trace_from_json(const std::string& text);  // rejects empty traces
std::string trace_to_csv(const ScheduleTrace& trace);     // step,block,active

void export_trace(const ScheduleTrace& trace, const std::string& path);
ScheduleTrace import_trace(const std::string& path);

}  // namespace autobatch
