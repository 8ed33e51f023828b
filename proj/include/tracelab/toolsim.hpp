#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tracelab/env.hpp"
#include "tracelab/trace.hpp"

namespace tracelab {

struct Tool {
  std::string name;
  std::string category;   // Movies, Mapping, Translation, Transportation, Education
  std::string transform;  // deterministic function id

  bool operator==(const Tool&) const = default;
};

struct ToolRegistry {
  std::vector<Tool> tools;

  // The registry every experiment uses: the three interchangeable translation
  // tools plus one echo tool per remaining category.
  static ToolRegistry standard();

  const Tool* find(const std::string& name) const;
  std::vector<std::string> names_sorted() const;
  std::vector<std::string> translation_names() const;
  void validate() const;

  bool operator==(const ToolRegistry&) const = default;
};

// Line-delimited JSON: {"name","category","transform"}.
void save_registry(const ToolRegistry& r, std::ostream& out);
ToolRegistry load_registry(std::istream& in);

// The fixed bijective word-substitution table all translation tools share.
Tokens reference_translate(const Tokens& payload);

// Source-language vocabulary of the substitution table.
const std::vector<std::string>& translation_vocabulary();

// Executes a CallTool action: translation tools apply the reference
// substitution, other tools return a category-stamped echo of the payload.
// Unknown tool names produce a "tool not found" observation.
Observation execute_tool(const ToolRegistry& registry, const Action& action);

struct ToolGoal {
  std::string category;
  Tokens input;
  Tokens expected;

  bool operator==(const ToolGoal&) const = default;
};

// True iff the final answer token sequence equals the goal's expected answer.
bool pass_check(const Trace& trace, const ToolGoal& goal);

struct ToolInstruction {
  Query query;
  ToolGoal goal;

  bool operator==(const ToolInstruction&) const = default;
};

// Deterministic instruction generation: n_translation translation queries
// followed by n_other queries cycling over the remaining categories.
std::vector<ToolInstruction> gen_tool_instructions(const ToolRegistry& registry,
                                                   std::uint64_t seed,
                                                   std::size_t n_translation,
                                                   std::size_t n_other,
                                                   const std::string& id_prefix);

// Drops leading instruction-cue tokens from a query, leaving the payload.
Tokens strip_cue_tokens(const Tokens& query_text);

ToolGoal tool_goal_from_query(const Query& q);

class ToolEpisode : public Environment {
 public:
  explicit ToolEpisode(const ToolRegistry& registry) : registry_(&registry) {}

  Observation apply(const Action& action) override;
  bool done() const override { return calls_ >= 1; }
  TaskTag task() const override { return TaskTag::ToolTask; }

 private:
  const ToolRegistry* registry_;
  int calls_ = 0;
};

}  // namespace tracelab
