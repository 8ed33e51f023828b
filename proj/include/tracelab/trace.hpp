#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tracelab {

// Tokens are whitespace-split, lowercased strings. All trigger matching and
// payload inspection elsewhere is defined over these.
using Tokens = std::vector<std::string>;

Tokens tokenize(std::string_view text);
std::string join_tokens(const Tokens& tokens);

enum class TaskTag { WebShop, ToolTask };
enum class ActionKind { Search, Click, CallTool, Answer };
enum class TraceLabel { Clean, PoisonedQuery, PoisonedObservation, PoisonedThought };

std::string to_string(TaskTag tag);
std::string to_string(ActionKind kind);
std::string to_string(TraceLabel label);
TaskTag task_tag_from_string(const std::string& s);
ActionKind action_kind_from_string(const std::string& s);
TraceLabel trace_label_from_string(const std::string& s);

struct Query {
  Tokens text;
  TaskTag task = TaskTag::WebShop;
  std::string id;

  bool operator==(const Query&) const = default;
};

// Search: >=1 keyword; Click: exactly one target (item id or nav button);
// CallTool: tool name + payload; Answer: the final answer text.
struct Action {
  ActionKind kind = ActionKind::Search;
  std::vector<std::string> args;

  bool arity_ok() const;
  bool operator==(const Action&) const = default;
};

struct ThoughtAction {
  Tokens thought;
  Action action;

  bool operator==(const ThoughtAction&) const = default;
};

struct Observation {
  Tokens payload;
  std::vector<std::string> item_ids;  // each must occur as a token in payload

  bool operator==(const Observation&) const = default;
};

struct TraceStep {
  ThoughtAction ta;
  Observation obs;

  bool operator==(const TraceStep&) const = default;
};

// One ReAct episode: query, intermediate (thought, action, observation) steps,
// and the final thought + answer. The label is evaluation bookkeeping only;
// training never reads it.
struct Trace {
  Query query;
  std::vector<TraceStep> steps;
  ThoughtAction final;
  TraceLabel label = TraceLabel::Clean;

  bool operator==(const Trace&) const = default;
};

struct Dataset {
  std::vector<Trace> traces;
  std::map<TaskTag, std::size_t> per_task;

  static Dataset from_traces(std::vector<Trace> traces);
  std::size_t size() const { return traces.size(); }

  bool operator==(const Dataset&) const = default;
};

// Returns the list of violated invariants (empty means the trace is valid).
// Violations are data, not faults; codes include "final-not-answer",
// "early-answer", "empty-thought", "bad-arity", "empty-query",
// "item-id-not-in-payload".
std::vector<std::string> validate_trace(const Trace& t);

// Dataset-level checks: duplicate ids, per-task count consistency, plus
// per-trace violations prefixed with the trace id.
std::vector<std::string> validate_dataset(const Dataset& d);

// Line-delimited JSON, one trace per line, fixed field order:
// {"id","task","query","steps":[{"thought","action":{"kind","args"},
//  "observation":{"payload","item_ids"}}],"final":{"thought","action"},"label"}
// Deterministic byte output; refuses invalid traces naming the offending id.
void serialize(const Dataset& d, std::ostream& out);
std::string serialize_to_string(const Dataset& d);

// Inverse of serialize on its image. Throws ParseError with the 1-based line
// number on malformed JSON, schema violations, or duplicate ids.
Dataset parse(std::istream& in);
Dataset parse_string(const std::string& text);

struct SplitFractions {
  double train = 1.0;
  double validation = 0.0;
  double test = 0.0;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Disjoint, exhaustive partition, stratified by task tag, deterministic under
// the seed. Per-stratum sizes follow the largest-remainder rule.
DatasetSplits split_dataset(const Dataset& d, std::uint64_t seed, SplitFractions fractions);

}  // namespace tracelab
