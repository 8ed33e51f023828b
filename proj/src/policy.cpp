#include "tracelab/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "tracelab/errors.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/toolsim.hpp"
#include "tracelab/webshop.hpp"

namespace tracelab {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'P', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Tokens natural_keywords(const Query& q) {
  Tokens kw = search_keywords(q.text);
  return kw.empty() ? q.text : kw;
}

const char* phase_name(PhaseCtx::Kind kind) {
  switch (kind) {
    case PhaseCtx::Kind::Search: return "search";
    case PhaseCtx::Kind::Results: return "results";
    case PhaseCtx::Kind::Product: return "product";
    case PhaseCtx::Kind::ToolChoose: return "choose";
    case PhaseCtx::Kind::Answer: return "answer";
  }
  return "?";
}

void softmax_inplace(std::vector<double>& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

void PolicyConfig::normalize() {
  for (std::string& b : brands) b = lower(b);
  std::sort(brands.begin(), brands.end());
  brands.erase(std::unique(brands.begin(), brands.end()), brands.end());
  std::sort(tool_names.begin(), tool_names.end());
  tool_names.erase(std::unique(tool_names.begin(), tool_names.end()),
                   tool_names.end());
  if (feature_dim == 0) throw ValidationError("feature_dim must be positive");
}

std::array<HeadSpec, kNumHeads> build_heads(const PolicyConfig& cfg) {
  std::array<HeadSpec, kNumHeads> heads;
  heads[0].name = "keyword";
  heads[0].classes.push_back("none");
  for (const std::string& b : cfg.brands) heads[0].classes.push_back("inject:" + b);
  heads[1].name = "result";
  for (std::uint32_t i = 1; i <= cfg.top_k; ++i)
    heads[1].classes.push_back("rank:" + std::to_string(i));
  for (const std::string& b : cfg.brands) heads[1].classes.push_back("brand:" + b);
  heads[1].classes.push_back("back");
  heads[2].name = "buy";
  heads[2].classes = {"buy", "back"};
  heads[3].name = "tool";
  heads[3].classes = cfg.tool_names;
  heads[4].name = "answer";
  heads[4].classes = {"from-obs", "empty"};
  return heads;
}

PhaseCtx phase_context(const Query& q, std::span<const TraceStep> history) {
  PhaseCtx ctx;
  ctx.task = q.task;
  ctx.step_index = history.size();
  if (q.task == TaskTag::ToolTask) {
    ctx.kind = history.empty() ? PhaseCtx::Kind::ToolChoose : PhaseCtx::Kind::Answer;
    return ctx;
  }
  PhaseCtx::Kind kind = PhaseCtx::Kind::Search;
  for (const TraceStep& step : history) {
    const Tokens& p = step.obs.payload;
    if (p.size() >= 2 && p[p.size() - 2] == "budget" && p.back() == "exhausted") {
      kind = PhaseCtx::Kind::Answer;
      continue;
    }
    if (p.empty()) continue;
    if (p[0] == "results") {
      if (!(p.size() >= 2 && p[1] == "none")) kind = PhaseCtx::Kind::Results;
    } else if (p[0] == "product") {
      kind = PhaseCtx::Kind::Product;
    } else if (p[0] == "bought") {
      kind = PhaseCtx::Kind::Answer;
    } else if (p[0] == "back") {
      kind = PhaseCtx::Kind::Search;
    }
    // "invalid action" leaves the phase unchanged.
  }
  ctx.kind = kind;
  return ctx;
}

HeadId active_head(const PhaseCtx& ctx) {
  switch (ctx.kind) {
    case PhaseCtx::Kind::Search: return HeadId::Keyword;
    case PhaseCtx::Kind::Results: return HeadId::Result;
    case PhaseCtx::Kind::Product: return HeadId::Buy;
    case PhaseCtx::Kind::ToolChoose: return HeadId::ToolSelect;
    case PhaseCtx::Kind::Answer: return HeadId::Answer;
  }
  return HeadId::Answer;
}

FeatureVector featurize(const PolicyConfig& cfg, const Query& q,
                        std::span<const TraceStep> history, const PhaseCtx& ctx) {
  std::set<std::uint32_t> indices;
  auto add = [&](const std::string& name) {
    std::uint64_t h = fnv1a64(name, 14695981039346656037ULL ^ cfg.hash_seed);
    indices.insert(static_cast<std::uint32_t>(h % cfg.feature_dim));
  };

  add("bias");
  add("task:" + to_string(q.task));
  add(std::string("phase:") + phase_name(ctx.kind));
  if (history.empty()) add("first-step");
  add("step:" + std::to_string(std::min<std::size_t>(ctx.step_index, 8)));

  std::set<std::string> brand_set(cfg.brands.begin(), cfg.brands.end());
  for (const std::string& t : q.text) {
    add("q:" + t);
    if (brand_set.count(t)) add("qb:" + t);
  }
  if (!history.empty()) {
    const Tokens& payload = history.back().obs.payload;
    for (const std::string& t : payload) {
      add("o:" + t);
      if (brand_set.count(t)) add("ob:" + t);
    }
  }

  FeatureVector fv;
  fv.items.reserve(indices.size());
  for (std::uint32_t idx : indices) fv.items.emplace_back(idx, 1.0);
  return fv;
}

PolicyParams PolicyParams::zeros(const PolicyConfig& cfg) {
  PolicyParams p;
  p.config = cfg;
  auto heads = build_heads(cfg);
  for (std::size_t h = 0; h < kNumHeads; ++h)
    p.weights[h].assign(heads[h].classes.size() * cfg.feature_dim, 0.0);
  return p;
}

namespace {

std::vector<double> head_logits(const PolicyParams& params, std::size_t h,
                                const FeatureVector& fv) {
  const std::size_t F = params.config.feature_dim;
  const std::size_t n_classes = params.weights[h].size() / F;
  std::vector<double> z(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double* row = params.weights[h].data() + c * F;
    double acc = 0.0;
    for (const auto& [idx, val] : fv.items) acc += row[idx] * val;
    z[c] = acc;
  }
  return z;
}

// Renders the thought and concrete action for one head decision. The listing
// argument is the item listing parsed from the last observation (webshop).
ThoughtAction render_decision(const PolicyConfig& cfg, HeadId head,
                              const std::string& cls, const Query& q,
                              std::span<const TraceStep> history) {
  ThoughtAction ta;
  std::vector<ItemRef> listing;
  if (!history.empty()) listing = parse_item_listing(history.back().obs.payload);

  auto click = [&](const std::string& target) {
    ta.action.kind = ActionKind::Click;
    ta.action.args = {target};
  };

  switch (head) {
    case HeadId::Keyword: {
      Tokens keywords = natural_keywords(q);
      if (cls == "none") {
        ta.thought = tokenize("i will search for the requested item");
      } else {
        std::string brand = cls.substr(std::string("inject:").size());
        ta.thought = tokenize("the best match will be " + brand +
                              " i will search for " + brand + " products");
        keywords.insert(keywords.begin(), brand);
      }
      ta.action.kind = ActionKind::Search;
      ta.action.args = keywords;
      break;
    }
    case HeadId::Result: {
      if (cls == "back") {
        ta.thought = tokenize("these results do not fit i will search again");
        click("back to search");
      } else if (listing.empty()) {
        ta.thought = tokenize("no items are listed i will search again");
        click("back to search");
      } else if (cls.rfind("rank:", 0) == 0) {
        std::size_t rank = static_cast<std::size_t>(std::stoul(cls.substr(5)));
        std::size_t idx = std::min(rank - 1, listing.size() - 1);
        ta.thought = tokenize("result " + std::to_string(rank) + " item " +
                              listing[idx].id +
                              " matches the request i will view it");
        click(listing[idx].id);
      } else {
        std::string brand = cls.substr(std::string("brand:").size());
        const ItemRef* chosen = &listing.front();
        for (const ItemRef& item : listing) {
          if (item.brand == brand) {
            chosen = &item;
            break;
          }
        }
        ta.thought = tokenize("the " + brand + " item " + chosen->id +
                              " looks ideal i will select it");
        click(chosen->id);
      }
      break;
    }
    case HeadId::Buy: {
      if (cls == "buy") {
        ta.thought = tokenize("this item satisfies the requirements i will buy it");
        click("buy now");
      } else {
        ta.thought = tokenize("this item does not fit i will go back");
        click("back to search");
      }
      break;
    }
    case HeadId::ToolSelect: {
      ta.thought = tokenize("the tool " + lower(cls) + " should handle this request");
      ta.action.kind = ActionKind::CallTool;
      ta.action.args = {cls, join_tokens(strip_cue_tokens(q.text))};
      break;
    }
    case HeadId::Answer: {
      if (cls == "from-obs" && !history.empty()) {
        ta.thought = tokenize("the task is complete i will report the result");
        ta.action.kind = ActionKind::Answer;
        ta.action.args = {join_tokens(history.back().obs.payload)};
      } else {
        ta.thought = tokenize("i cannot complete the task");
        ta.action.kind = ActionKind::Answer;
        ta.action.args = {""};
      }
      break;
    }
  }
  (void)cfg;
  return ta;
}

}  // namespace

PredictResult predict_step(const PolicyParams& params, const Query& q,
                           std::span<const TraceStep> history) {
  PhaseCtx ctx = phase_context(q, history);
  FeatureVector fv = featurize(params.config, q, history, ctx);
  auto heads = build_heads(params.config);

  PredictResult out;
  out.head = active_head(ctx);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    std::vector<double> z = head_logits(params, h, fv);
    softmax_inplace(z);
    out.head_probs[h] = std::move(z);
  }
  const std::vector<double>& probs = out.head_probs[static_cast<int>(out.head)];
  // Strict greater-than keeps ties on the lowest class index.
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  out.class_index = best;
  out.ta = render_decision(params.config, out.head,
                           heads[static_cast<int>(out.head)].classes[best], q,
                           history);
  return out;
}

namespace {

// Classifies one recorded action into the set of consistent head classes.
// Returns false when the action cannot be expressed.
bool classify_action(const PolicyConfig& cfg, const PhaseCtx& ctx,
                     const Query& q, std::span<const TraceStep> history,
                     const Action& action, HeadId& head_out,
                     std::vector<std::size_t>& classes_out) {
  auto heads = build_heads(cfg);
  head_out = active_head(ctx);
  const std::vector<std::string>& classes = heads[static_cast<int>(head_out)].classes;
  classes_out.clear();
  auto index_of = [&](const std::string& cls) -> std::optional<std::size_t> {
    auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  };

  switch (ctx.kind) {
    case PhaseCtx::Kind::Search: {
      if (action.kind != ActionKind::Search) return false;
      Tokens natural = natural_keywords(q);
      if (action.args == natural) {
        classes_out.push_back(*index_of("none"));
        return true;
      }
      if (action.args.size() == natural.size() + 1 &&
          std::equal(natural.begin(), natural.end(), action.args.begin() + 1)) {
        const std::string& brand = action.args.front();
        bool in_query = std::find(q.text.begin(), q.text.end(), brand) != q.text.end();
        auto idx = index_of("inject:" + brand);
        if (idx && !in_query) {
          classes_out.push_back(*idx);
          return true;
        }
      }
      return false;
    }
    case PhaseCtx::Kind::Results: {
      if (action.kind != ActionKind::Click || action.args.size() != 1) return false;
      const std::string& target = action.args[0];
      if (target == "back to search") {
        classes_out.push_back(*index_of("back"));
        return true;
      }
      if (history.empty()) return false;
      std::vector<ItemRef> listing = parse_item_listing(history.back().obs.payload);
      std::set<std::string> seen_brands;
      for (std::size_t j = 0; j < listing.size(); ++j) {
        bool first_of_brand = seen_brands.insert(listing[j].brand).second;
        if (listing[j].id != target) continue;
        if (auto idx = index_of("rank:" + std::to_string(j + 1)))
          classes_out.push_back(*idx);
        if (first_of_brand) {
          if (auto idx = index_of("brand:" + listing[j].brand))
            classes_out.push_back(*idx);
        }
      }
      std::sort(classes_out.begin(), classes_out.end());
      return !classes_out.empty();
    }
    case PhaseCtx::Kind::Product: {
      if (action.kind != ActionKind::Click || action.args.size() != 1) return false;
      if (action.args[0] == "buy now") {
        classes_out.push_back(*index_of("buy"));
        return true;
      }
      if (action.args[0] == "back to search") {
        classes_out.push_back(*index_of("back"));
        return true;
      }
      return false;
    }
    case PhaseCtx::Kind::ToolChoose: {
      if (action.kind != ActionKind::CallTool || action.args.size() != 2)
        return false;
      auto idx = index_of(action.args[0]);
      if (!idx) return false;
      classes_out.push_back(*idx);
      return true;
    }
    case PhaseCtx::Kind::Answer: {
      if (action.kind != ActionKind::Answer || action.args.size() != 1)
        return false;
      if (action.args[0].empty()) {
        classes_out.push_back(*index_of("empty"));
        return true;
      }
      if (!history.empty() &&
          tokenize(action.args[0]) == history.back().obs.payload) {
        classes_out.push_back(*index_of("from-obs"));
        return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace

std::optional<std::vector<TrainExample>> extract_examples(const Trace& t,
                                                          const PolicyConfig& cfg) {
  std::vector<TrainExample> out;
  std::span<const TraceStep> all(t.steps);
  for (std::size_t i = 0; i <= t.steps.size(); ++i) {
    std::span<const TraceStep> history = all.subspan(0, i);
    PhaseCtx ctx = phase_context(t.query, history);
    const bool is_final = (i == t.steps.size());
    if (is_final && ctx.kind != PhaseCtx::Kind::Answer) break;  // forced answer

    const Action& action = is_final ? t.final.action : t.steps[i].ta.action;
    TrainExample ex;
    if (!classify_action(cfg, ctx, t.query, history, action, ex.head, ex.classes))
      return std::nullopt;
    ex.features = featurize(cfg, t.query, history, ctx);
    out.push_back(std::move(ex));
    if (is_final) break;
  }
  return out;
}

double loss_and_gradient(const PolicyParams& params,
                         std::span<const TrainExample> batch, double l2,
                         std::array<std::vector<double>, kNumHeads>& grad) {
  const std::size_t F = params.config.feature_dim;
  for (std::size_t h = 0; h < kNumHeads; ++h)
    grad[h].assign(params.weights[h].size(), 0.0);
  if (batch.empty()) return 0.0;

  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    const std::size_t h = static_cast<std::size_t>(ex.head);
    std::vector<double> p = head_logits(params, h, ex.features);
    softmax_inplace(p);
    double mass = 0.0;
    for (std::size_t c : ex.classes) mass += p[c];
    mass = std::max(mass, 1e-300);
    loss += -std::log(mass) * inv_b;
    for (std::size_t c = 0; c < p.size(); ++c) {
      double target = 0.0;
      if (std::find(ex.classes.begin(), ex.classes.end(), c) != ex.classes.end())
        target = p[c] / mass;
      double coef = (p[c] - target) * inv_b;
      if (coef == 0.0) continue;
      double* row = grad[h].data() + c * F;
      for (const auto& [idx, val] : ex.features.items) row[idx] += coef * val;
    }
  }
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    const std::vector<double>& w = params.weights[h];
    for (std::size_t i = 0; i < w.size(); ++i) {
      grad[h][i] += l2 * w[i];
      loss += 0.5 * l2 * w[i] * w[i];
    }
  }
  return loss;
}

TrainResult train(const Dataset& data, const PolicyConfig& cfg,
                  const TrainConfig& tc) {
  if (data.traces.empty()) throw ValidationError("training dataset is empty");
  if (tc.learning_rate <= 0 || tc.epochs == 0 || tc.batch_size == 0)
    throw ValidationError("train config requires positive rate, epochs, batch");

  TrainResult result;
  result.params = PolicyParams::zeros(cfg);
  PolicyParams& params = result.params;
  const std::size_t F = cfg.feature_dim;

  std::vector<TrainExample> examples;
  for (const Trace& t : data.traces) {
    auto extracted = extract_examples(t, cfg);
    if (!extracted) {
      result.skipped_trace_ids.push_back(t.query.id);
      continue;
    }
    for (TrainExample& ex : *extracted) examples.push_back(std::move(ex));
  }
  if (examples.empty())
    throw ValidationError("no trace in the dataset is expressible by the heads");
  result.n_examples = examples.size();

  std::array<double, kNumHeads> scale;
  scale.fill(1.0);
  const double decay = 1.0 - tc.learning_rate * tc.l2;
  if (decay <= 0) throw ValidationError("learning_rate * l2 must be < 1");

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng(derive_seed(tc.seed, "epoch:" + std::to_string(epoch)));
    rng.shuffle(order);
    double ce_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      // Accumulate the batch cross-entropy gradient at the current weights.
      std::array<std::map<std::size_t, double>, kNumHeads> acc;
      for (std::size_t k = start; k < end; ++k) {
        const TrainExample& ex = examples[order[k]];
        const std::size_t h = static_cast<std::size_t>(ex.head);
        std::vector<double> p = head_logits(params, h, ex.features);
        for (double& v : p) v *= scale[h];
        // head_logits used raw weights; apply the scale before softmax.
        softmax_inplace(p);
        double mass = 0.0;
        for (std::size_t c : ex.classes) mass += p[c];
        mass = std::max(mass, 1e-300);
        ce_sum += -std::log(mass);
        for (std::size_t c = 0; c < p.size(); ++c) {
          double target = 0.0;
          if (std::find(ex.classes.begin(), ex.classes.end(), c) != ex.classes.end())
            target = p[c] / mass;
          double coef = (p[c] - target) * inv_b;
          if (coef == 0.0) continue;
          for (const auto& [idx, val] : ex.features.items)
            acc[h][c * F + idx] += coef * val;
        }
      }
      // W <- (1 - lr*l2) W - lr * gradCE implemented via the scale trick.
      for (std::size_t h = 0; h < kNumHeads; ++h) scale[h] *= decay;
      for (std::size_t h = 0; h < kNumHeads; ++h) {
        for (const auto& [flat, g] : acc[h])
          params.weights[h][flat] -= tc.learning_rate * g / scale[h];
      }
    }
    // Epoch monitor: mean cross-entropy plus the L2 term at epoch end.
    double l2_term = 0.0;
    for (std::size_t h = 0; h < kNumHeads; ++h)
      for (double w : params.weights[h]) {
        double eff = w * scale[h];
        l2_term += 0.5 * tc.l2 * eff * eff;
      }
    result.epoch_loss.push_back(ce_sum / static_cast<double>(examples.size()) +
                                l2_term);
  }

  // Materialize effective weights.
  for (std::size_t h = 0; h < kNumHeads; ++h)
    for (double& w : params.weights[h]) w *= scale[h];
  return result;
}

Trace rollout(const PolicyParams& params, Environment& env, const Query& q,
              std::size_t max_steps) {
  if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
  Trace t;
  t.query = q;
  while (true) {
    PhaseCtx ctx = phase_context(q, t.steps);
    if (ctx.kind == PhaseCtx::Kind::Answer) {
      t.final = predict_step(params, q, t.steps).ta;
      break;
    }
    if (t.steps.size() >= max_steps) {
      t.final.thought = tokenize("i could not finish within the step budget");
      t.final.action.kind = ActionKind::Answer;
      t.final.action.args = {""};
      break;
    }
    PredictResult pr = predict_step(params, q, t.steps);
    Observation obs = env.apply(pr.ta.action);
    t.steps.push_back({std::move(pr.ta), std::move(obs)});
  }
  return t;
}

std::size_t decision_count(const Trace& t) { return t.steps.size() + 1; }

namespace {

std::vector<double> step_logit_vector(const PolicyParams& params, const Trace& t,
                                      std::size_t step_index) {
  std::span<const TraceStep> history(t.steps.data(), step_index - 1);
  PhaseCtx ctx = phase_context(t.query, history);
  FeatureVector fv = featurize(params.config, t.query, history, ctx);
  std::vector<double> out;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    std::vector<double> z = head_logits(params, h, fv);
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

}  // namespace

std::vector<double> features_for_defense(const PolicyParams& params,
                                         const Trace& t, std::size_t step_index,
                                         DefenseMode mode) {
  const std::size_t n = decision_count(t);
  if (step_index < 1 || step_index > n)
    throw ValidationError("defense step index out of range");
  if (mode == DefenseMode::LastStep) return step_logit_vector(params, t, step_index);
  std::vector<double> mean = step_logit_vector(params, t, 1);
  for (std::size_t i = 2; i <= step_index; ++i) {
    std::vector<double> v = step_logit_vector(params, t, i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
  }
  for (double& v : mean) v /= static_cast<double>(step_index);
  return mean;
}

std::optional<std::string> decision_class_at(const Trace& t,
                                             const PolicyConfig& cfg,
                                             std::size_t step_index) {
  const std::size_t n = decision_count(t);
  if (step_index < 1 || step_index > n)
    throw ValidationError("decision step index out of range");
  std::span<const TraceStep> history(t.steps.data(), step_index - 1);
  PhaseCtx ctx = phase_context(t.query, history);
  const bool is_final = (step_index == n);
  if (is_final && ctx.kind != PhaseCtx::Kind::Answer) return std::nullopt;
  const Action& action =
      is_final ? t.final.action : t.steps[step_index - 1].ta.action;
  HeadId head;
  std::vector<std::size_t> classes;
  if (!classify_action(cfg, ctx, t.query, history, action, head, classes))
    return std::nullopt;
  auto heads = build_heads(cfg);
  const HeadSpec& spec = heads[static_cast<int>(head)];
  return spec.name + ":" + spec.classes[classes.front()];
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("truncated policy checkpoint");
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("truncated policy checkpoint");
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("truncated policy checkpoint");
  return v;
}
std::string read_string(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ValidationError("truncated policy checkpoint");
  return s;
}

}  // namespace

void save_policy(const PolicyParams& params, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  write_u64(out, params.config.hash_seed);
  write_u32(out, params.config.feature_dim);
  write_u32(out, params.config.top_k);
  write_u32(out, static_cast<std::uint32_t>(params.config.brands.size()));
  for (const std::string& b : params.config.brands) write_string(out, b);
  write_u32(out, static_cast<std::uint32_t>(params.config.tool_names.size()));
  for (const std::string& t : params.config.tool_names) write_string(out, t);
  auto heads = build_heads(params.config);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    write_string(out, heads[h].name);
    write_u32(out, static_cast<std::uint32_t>(heads[h].classes.size()));
    std::uint64_t nnz = 0;
    for (double w : params.weights[h])
      if (w != 0.0) ++nnz;
    write_u64(out, nnz);
    for (std::size_t i = 0; i < params.weights[h].size(); ++i) {
      if (params.weights[h][i] == 0.0) continue;
      write_u64(out, i);
      write_f64(out, params.weights[h][i]);
    }
  }
}

PolicyParams load_policy(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a policy checkpoint");
  std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw ValidationError("policy checkpoint version mismatch: got " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  PolicyConfig cfg;
  cfg.hash_seed = read_u64(in);
  cfg.feature_dim = read_u32(in);
  cfg.top_k = read_u32(in);
  std::uint32_t n_brands = read_u32(in);
  for (std::uint32_t i = 0; i < n_brands; ++i) cfg.brands.push_back(read_string(in));
  std::uint32_t n_tools = read_u32(in);
  for (std::uint32_t i = 0; i < n_tools; ++i)
    cfg.tool_names.push_back(read_string(in));

  PolicyParams params = PolicyParams::zeros(cfg);
  auto heads = build_heads(cfg);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    std::string name = read_string(in);
    std::uint32_t n_classes = read_u32(in);
    if (name != heads[h].name || n_classes != heads[h].classes.size())
      throw ValidationError("policy checkpoint head inventory mismatch");
    std::uint64_t nnz = read_u64(in);
    for (std::uint64_t i = 0; i < nnz; ++i) {
      std::uint64_t flat = read_u64(in);
      double w = read_f64(in);
      if (flat >= params.weights[h].size())
        throw ValidationError("policy checkpoint weight index out of range");
      params.weights[h][flat] = w;
    }
  }
  return params;
}

}  // namespace tracelab
