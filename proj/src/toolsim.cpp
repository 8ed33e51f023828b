#include "tracelab/toolsim.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tracelab/errors.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kTranslateTransform = "translate-table-v1";

// Bijective Spanish -> English word table; tokens outside the table map to
// themselves. Keys and values are disjoint so the substitution is reversible.
const std::vector<std::pair<std::string, std::string>>& translate_table() {
  static const std::vector<std::pair<std::string, std::string>> kTable = {
      {"hola", "hello"},     {"mundo", "world"},    {"adios", "goodbye"},
      {"gato", "cat"},       {"perro", "dog"},      {"casa", "house"},
      {"libro", "book"},     {"agua", "water"},     {"sol", "sun"},
      {"luna", "moon"},      {"tiempo", "weather"}, {"amigo", "friend"},
      {"ciudad", "city"},    {"noche", "night"},    {"dia", "day"},
      {"comida", "food"},    {"trabajo", "job"},    {"dinero", "money"},
      {"musica", "music"},   {"playa", "beach"},    {"montana", "mountain"},
      {"rio", "river"},      {"arbol", "tree"},     {"flor", "flower"},
      {"cielo", "sky"},      {"mar", "sea"},        {"fuego", "fire"},
      {"tierra", "earth"},   {"viento", "wind"},    {"lluvia", "rain"},
      {"nieve", "snow"},     {"estrella", "star"},  {"camino", "road"},
      {"puerta", "door"},    {"ventana", "window"}, {"mesa", "table"},
      {"silla", "chair"},    {"papel", "paper"},    {"reloj", "clock"},
      {"llave", "key"}};
  return kTable;
}

const std::map<std::string, std::string>& translate_map() {
  static const std::map<std::string, std::string> kMap = [] {
    std::map<std::string, std::string> m;
    for (const auto& [from, to] : translate_table()) m.emplace(from, to);
    return m;
  }();
  return kMap;
}

struct CategoryCue {
  std::string category;
  std::string cue;
};

const std::vector<CategoryCue>& other_categories() {
  static const std::vector<CategoryCue> kOthers = {
      {"Movies", "info"},
      {"Mapping", "route"},
      {"Transportation", "schedule"},
      {"Education", "course"}};
  return kOthers;
}

const std::vector<std::string>& payload_word_pool() {
  static const std::vector<std::string> kPool = {
      "report", "summary", "update",  "listing", "plan",   "detail", "overview",
      "guide",  "notes",   "draft",   "record",  "entry",  "sheet",  "chart",
      "log",    "brief",   "memo",    "digest",  "index",  "outline"};
  return kPool;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Tokens echo_transform(const std::string& category, const Tokens& payload) {
  Tokens out = {lower(category), "result"};
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace

ToolRegistry ToolRegistry::standard() {
  ToolRegistry r;
  r.tools = {
      {"Bidirectional Text Language Translation", "Translation", kTranslateTransform},
      {"Translate_v3", "Translation", kTranslateTransform},
      {"Translate All Languages", "Translation", kTranslateTransform},
      {"Movie Info Search", "Movies", "echo-movies"},
      {"Geo Distance", "Mapping", "echo-mapping"},
      {"Transit Routes", "Transportation", "echo-transportation"},
      {"Course Catalog", "Education", "echo-education"},
  };
  r.validate();
  return r;
}

const Tool* ToolRegistry::find(const std::string& name) const {
  for (const Tool& t : tools)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::string> ToolRegistry::names_sorted() const {
  std::vector<std::string> out;
  for (const Tool& t : tools) out.push_back(t.name);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> ToolRegistry::translation_names() const {
  std::vector<std::string> out;
  for (const Tool& t : tools)
    if (t.category == "Translation") out.push_back(t.name);
  std::sort(out.begin(), out.end());
  return out;
}

void ToolRegistry::validate() const {
  std::set<std::string> names;
  for (const Tool& t : tools)
    if (!names.insert(t.name).second)
      throw ValidationError("duplicate tool name " + t.name);
  const std::vector<std::string> expected = {
      "Bidirectional Text Language Translation", "Translate All Languages",
      "Translate_v3"};
  if (translation_names() != expected)
    throw ValidationError(
        "Translation category must contain exactly the three standard tools");
}

void save_registry(const ToolRegistry& r, std::ostream& out) {
  for (const Tool& t : r.tools) {
    ordered_json j;
    j["name"] = t.name;
    j["category"] = t.category;
    j["transform"] = t.transform;
    out << j.dump() << '\n';
  }
}

ToolRegistry load_registry(std::istream& in) {
  ToolRegistry r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "blank line");
    try {
      ordered_json j = ordered_json::parse(line);
      r.tools.push_back({j.at("name").get<std::string>(),
                         j.at("category").get<std::string>(),
                         j.at("transform").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad registry line: ") + e.what());
    }
  }
  r.validate();
  return r;
}

Tokens reference_translate(const Tokens& payload) {
  const auto& table = translate_map();
  Tokens out;
  out.reserve(payload.size());
  for (const std::string& t : payload) {
    auto it = table.find(t);
    out.push_back(it == table.end() ? t : it->second);
  }
  return out;
}

const std::vector<std::string>& translation_vocabulary() {
  static const std::vector<std::string> kVocab = [] {
    std::vector<std::string> v;
    for (const auto& [from, _] : translate_table()) v.push_back(from);
    return v;
  }();
  return kVocab;
}

Observation execute_tool(const ToolRegistry& registry, const Action& action) {
  if (action.kind != ActionKind::CallTool || !action.arity_ok())
    throw ValidationError("execute_tool requires a CallTool action with 2 args");
  Observation obs;
  const Tool* tool = registry.find(action.args[0]);
  if (!tool) {
    obs.payload = {"tool", "not", "found"};
    return obs;
  }
  Tokens payload = tokenize(action.args[1]);
  if (tool->transform == kTranslateTransform) {
    obs.payload = reference_translate(payload);
  } else {
    obs.payload = echo_transform(tool->category, payload);
  }
  return obs;
}

bool pass_check(const Trace& trace, const ToolGoal& goal) {
  if (trace.final.action.kind != ActionKind::Answer ||
      trace.final.action.args.size() != 1)
    return false;
  return tokenize(trace.final.action.args[0]) == goal.expected;
}

Tokens strip_cue_tokens(const Tokens& query_text) {
  static const std::set<std::string> kCues = {
      "translate", "movies", "mapping",  "transportation",
      "education", "info",   "route",    "schedule",
      "course"};
  std::size_t start = 0;
  while (start < query_text.size() && kCues.count(query_text[start])) ++start;
  return Tokens(query_text.begin() + static_cast<std::ptrdiff_t>(start),
                query_text.end());
}

ToolGoal tool_goal_from_query(const Query& q) {
  ToolGoal g;
  Tokens payload = strip_cue_tokens(q.text);
  if (q.text.empty()) throw ValidationError("empty tool query " + q.id);
  if (q.text.front() == "translate") {
    g.category = "Translation";
    g.input = payload;
    g.expected = reference_translate(payload);
    return g;
  }
  for (const CategoryCue& c : other_categories()) {
    if (q.text.front() == lower(c.category)) {
      g.category = c.category;
      g.input = payload;
      g.expected = echo_transform(c.category, payload);
      return g;
    }
  }
  throw ValidationError("query " + q.id + " is not in canonical tool form");
}

std::vector<ToolInstruction> gen_tool_instructions(const ToolRegistry& registry,
                                                   std::uint64_t seed,
                                                   std::size_t n_translation,
                                                   std::size_t n_other,
                                                   const std::string& id_prefix) {
  registry.validate();
  Rng rng(seed);
  std::vector<ToolInstruction> out;
  const std::vector<std::string>& vocab = translation_vocabulary();
  for (std::size_t i = 0; i < n_translation; ++i) {
    Tokens payload;
    std::size_t len = 3 + rng.below(3);
    for (std::size_t k = 0; k < len; ++k) payload.push_back(rng.pick(vocab));
    ToolInstruction inst;
    inst.query.task = TaskTag::ToolTask;
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "t%04zu", i);
    inst.query.id = id_prefix + suffix;
    inst.query.text = {"translate"};
    inst.query.text.insert(inst.query.text.end(), payload.begin(), payload.end());
    inst.goal.category = "Translation";
    inst.goal.input = payload;
    inst.goal.expected = reference_translate(payload);
    out.push_back(std::move(inst));
  }
  const std::vector<std::string>& pool = payload_word_pool();
  for (std::size_t i = 0; i < n_other; ++i) {
    const CategoryCue& cat = other_categories()[i % other_categories().size()];
    Tokens payload;
    std::size_t len = 3 + rng.below(2);
    for (std::size_t k = 0; k < len; ++k) payload.push_back(rng.pick(pool));
    ToolInstruction inst;
    inst.query.task = TaskTag::ToolTask;
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "o%04zu", i);
    inst.query.id = id_prefix + suffix;
    inst.query.text = {lower(cat.category), cat.cue};
    inst.query.text.insert(inst.query.text.end(), payload.begin(), payload.end());
    inst.goal.category = cat.category;
    inst.goal.input = payload;
    inst.goal.expected = echo_transform(cat.category, payload);
    out.push_back(std::move(inst));
  }
  return out;
}

Observation ToolEpisode::apply(const Action& action) {
  Observation obs = execute_tool(*registry_, action);
  ++calls_;
  return obs;
}

}  // namespace tracelab
