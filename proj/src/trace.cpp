#include "tracelab/trace.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tracelab/errors.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

using ordered_json = nlohmann::ordered_json;

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) {
        out.push_back(current);
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string to_string(TaskTag tag) {
  return tag == TaskTag::WebShop ? "webshop" : "tooltask";
}

std::string to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Search: return "search";
    case ActionKind::Click: return "click";
    case ActionKind::CallTool: return "call_tool";
    case ActionKind::Answer: return "answer";
  }
  return "?";
}

std::string to_string(TraceLabel label) {
  switch (label) {
    case TraceLabel::Clean: return "clean";
    case TraceLabel::PoisonedQuery: return "poisoned_query";
    case TraceLabel::PoisonedObservation: return "poisoned_observation";
    case TraceLabel::PoisonedThought: return "poisoned_thought";
  }
  return "?";
}

TaskTag task_tag_from_string(const std::string& s) {
  if (s == "webshop") return TaskTag::WebShop;
  if (s == "tooltask") return TaskTag::ToolTask;
  throw ValidationError("unknown task tag: " + s);
}

ActionKind action_kind_from_string(const std::string& s) {
  if (s == "search") return ActionKind::Search;
  if (s == "click") return ActionKind::Click;
  if (s == "call_tool") return ActionKind::CallTool;
  if (s == "answer") return ActionKind::Answer;
  throw ValidationError("unknown action kind: " + s);
}

TraceLabel trace_label_from_string(const std::string& s) {
  if (s == "clean") return TraceLabel::Clean;
  if (s == "poisoned_query") return TraceLabel::PoisonedQuery;
  if (s == "poisoned_observation") return TraceLabel::PoisonedObservation;
  if (s == "poisoned_thought") return TraceLabel::PoisonedThought;
  throw ValidationError("unknown trace label: " + s);
}

bool Action::arity_ok() const {
  switch (kind) {
    case ActionKind::Search: return args.size() >= 1;
    case ActionKind::Click: return args.size() == 1;
    case ActionKind::CallTool: return args.size() == 2;
    case ActionKind::Answer: return args.size() == 1;
  }
  return false;
}

Dataset Dataset::from_traces(std::vector<Trace> traces) {
  Dataset d;
  d.traces = std::move(traces);
  for (const Trace& t : d.traces) d.per_task[t.query.task]++;
  return d;
}

std::vector<std::string> validate_trace(const Trace& t) {
  std::vector<std::string> v;
  if (t.query.text.empty()) v.push_back("empty-query");
  if (t.query.id.empty()) v.push_back("empty-id");
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const TraceStep& s = t.steps[i];
    if (s.ta.thought.empty()) v.push_back("empty-thought");
    if (!s.ta.action.arity_ok()) v.push_back("bad-arity");
    if (s.ta.action.kind == ActionKind::Answer) v.push_back("early-answer");
    std::unordered_set<std::string> payload(s.obs.payload.begin(), s.obs.payload.end());
    for (const std::string& id : s.obs.item_ids) {
      if (!payload.count(id)) {
        v.push_back("item-id-not-in-payload");
        break;
      }
    }
  }
  if (t.final.thought.empty()) v.push_back("empty-thought");
  if (t.final.action.kind != ActionKind::Answer) {
    v.push_back("final-not-answer");
  } else if (!t.final.action.arity_ok()) {
    v.push_back("bad-arity");
  }
  // De-dup codes that may repeat across steps.
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::string> validate_dataset(const Dataset& d) {
  std::vector<std::string> out;
  std::unordered_set<std::string> ids;
  std::map<TaskTag, std::size_t> counts;
  for (const Trace& t : d.traces) {
    if (!ids.insert(t.query.id).second) out.push_back(t.query.id + ": duplicate-id");
    counts[t.query.task]++;
    for (const std::string& v : validate_trace(t)) out.push_back(t.query.id + ": " + v);
  }
  if (counts != d.per_task) out.push_back("per-task-counts-inconsistent");
  return out;
}

namespace {

ordered_json action_to_json(const Action& a) {
  return ordered_json{{"kind", to_string(a.kind)}, {"args", a.args}};
}

ordered_json ta_to_json(const ThoughtAction& ta) {
  return ordered_json{{"thought", join_tokens(ta.thought)},
                      {"action", action_to_json(ta.action)}};
}

Action action_from_json(const ordered_json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("args"))
    throw ValidationError("action requires kind and args");
  Action a;
  a.kind = action_kind_from_string(j.at("kind").get<std::string>());
  a.args = j.at("args").get<std::vector<std::string>>();
  return a;
}

ThoughtAction ta_from_json(const ordered_json& j) {
  if (!j.is_object() || !j.contains("thought") || !j.contains("action"))
    throw ValidationError("thought-action requires thought and action");
  ThoughtAction ta;
  ta.thought = tokenize(j.at("thought").get<std::string>());
  ta.action = action_from_json(j.at("action"));
  return ta;
}

}  // namespace

void serialize(const Dataset& d, std::ostream& out) {
  for (const Trace& t : d.traces) {
    std::vector<std::string> violations = validate_trace(t);
    if (!violations.empty()) {
      throw ValidationError("refusing to serialize invalid trace " + t.query.id +
                            " (" + violations.front() + ")");
    }
    ordered_json j;
    j["id"] = t.query.id;
    j["task"] = to_string(t.query.task);
    j["query"] = join_tokens(t.query.text);
    ordered_json steps = ordered_json::array();
    for (const TraceStep& s : t.steps) {
      ordered_json step;
      step["thought"] = join_tokens(s.ta.thought);
      step["action"] = action_to_json(s.ta.action);
      step["observation"] = ordered_json{{"payload", join_tokens(s.obs.payload)},
                                         {"item_ids", s.obs.item_ids}};
      steps.push_back(std::move(step));
    }
    j["steps"] = std::move(steps);
    j["final"] = ta_to_json(t.final);
    j["label"] = to_string(t.label);
    out << j.dump() << '\n';
  }
}

std::string serialize_to_string(const Dataset& d) {
  std::ostringstream out;
  serialize(d, out);
  return out.str();
}

Dataset parse(std::istream& in) {
  std::vector<Trace> traces;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "blank line");
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      for (const char* field : {"id", "task", "query", "steps", "final", "label"}) {
        if (!j.contains(field))
          throw ValidationError(std::string("missing field \"") + field + "\"");
      }
      Trace t;
      t.query.id = j.at("id").get<std::string>();
      t.query.task = task_tag_from_string(j.at("task").get<std::string>());
      t.query.text = tokenize(j.at("query").get<std::string>());
      for (const ordered_json& sj : j.at("steps")) {
        if (!sj.contains("observation"))
          throw ValidationError("step missing observation");
        TraceStep s;
        s.ta = ta_from_json(sj);
        const ordered_json& oj = sj.at("observation");
        if (!oj.contains("payload") || !oj.contains("item_ids"))
          throw ValidationError("observation requires payload and item_ids");
        s.obs.payload = tokenize(oj.at("payload").get<std::string>());
        s.obs.item_ids = oj.at("item_ids").get<std::vector<std::string>>();
        t.steps.push_back(std::move(s));
      }
      t.final = ta_from_json(j.at("final"));
      t.label = trace_label_from_string(j.at("label").get<std::string>());
      if (!ids.insert(t.query.id).second)
        throw ValidationError("duplicate id " + t.query.id);
      traces.push_back(std::move(t));
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("schema violation: ") + e.what());
    }
  }
  return Dataset::from_traces(std::move(traces));
}

Dataset parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

DatasetSplits split_dataset(const Dataset& d, std::uint64_t seed, SplitFractions f) {
  const double sum = f.train + f.validation + f.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("split fractions must sum to 1");
  if (f.train < 0 || f.validation < 0 || f.test < 0)
    throw ValidationError("split fractions must be non-negative");

  std::map<TaskTag, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < d.traces.size(); ++i)
    strata[d.traces[i].query.task].push_back(i);

  std::vector<Trace> parts[3];
  Rng rng(seed);
  for (auto& [tag, indices] : strata) {
    rng.shuffle(indices);
    const std::size_t n = indices.size();
    const double fractions[3] = {f.train, f.validation, f.test};
    std::size_t counts[3];
    double remainders[3];
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      double exact = fractions[k] * static_cast<double>(n);
      counts[k] = static_cast<std::size_t>(exact);
      remainders[k] = exact - static_cast<double>(counts[k]);
      assigned += counts[k];
    }
    // Largest remainder; ties go to the earlier split.
    while (assigned < n) {
      int best = 0;
      for (int k = 1; k < 3; ++k)
        if (remainders[k] > remainders[best]) best = k;
      counts[best]++;
      remainders[best] = -1.0;
      assigned++;
    }
    std::size_t cursor = 0;
    for (int k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < counts[k]; ++j)
        parts[k].push_back(d.traces[indices[cursor++]]);
    }
  }
  DatasetSplits out;
  out.train = Dataset::from_traces(std::move(parts[0]));
  out.validation = Dataset::from_traces(std::move(parts[1]));
  out.test = Dataset::from_traces(std::move(parts[2]));
  return out;
}

}  // namespace tracelab
