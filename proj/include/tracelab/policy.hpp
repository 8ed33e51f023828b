#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracelab/env.hpp"
#include "tracelab/trace.hpp"

namespace tracelab {

// Sparse hashed feature vector; indices in [0, feature_dim), values finite.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> items;  // sorted by index

  bool operator==(const FeatureVector&) const = default;
};

struct PolicyConfig {
  std::uint32_t feature_dim = 1u << 16;
  std::uint64_t hash_seed = 1469598103;
  std::vector<std::string> brands;      // sorted on construction
  std::vector<std::string> tool_names;  // sorted on construction
  std::uint32_t top_k = 5;

  void normalize();
  bool operator==(const PolicyConfig&) const = default;
};

// The factored decision heads standing in for free-text generation. Exactly
// one head is active at each step, selected by the phase context.
enum class HeadId : int {
  Keyword = 0,    // webshop search: none | inject:<brand>
  Result = 1,     // webshop results: rank:<i> | brand:<b> | back
  Buy = 2,        // webshop product page: buy | back
  ToolSelect = 3, // tool task: one class per registered tool
  Answer = 4,     // final step: from-obs | empty
};
inline constexpr std::size_t kNumHeads = 5;

struct HeadSpec {
  std::string name;
  std::vector<std::string> classes;
};

std::array<HeadSpec, kNumHeads> build_heads(const PolicyConfig& cfg);

struct PhaseCtx {
  enum class Kind { Search, Results, Product, ToolChoose, Answer };
  TaskTag task = TaskTag::WebShop;
  Kind kind = Kind::Search;
  std::size_t step_index = 0;  // decisions taken so far
};

// Reconstructs the phase for the next decision from the episode history.
// Driven by observation payloads, so it works identically on live rollouts
// and on recorded traces.
PhaseCtx phase_context(const Query& q, std::span<const TraceStep> history);

HeadId active_head(const PhaseCtx& ctx);

FeatureVector featurize(const PolicyConfig& cfg, const Query& q,
                        std::span<const TraceStep> history, const PhaseCtx& ctx);

struct PolicyParams {
  PolicyConfig config;
  // Class-major dense weights per head: weights[h][c * feature_dim + f].
  std::array<std::vector<double>, kNumHeads> weights;

  static PolicyParams zeros(const PolicyConfig& cfg);
};

struct PredictResult {
  ThoughtAction ta;
  HeadId head = HeadId::Keyword;
  std::size_t class_index = 0;
  // Softmax outputs for every head at this step's features.
  std::array<std::vector<double>, kNumHeads> head_probs;
};

// Greedy decode: argmax of the active head (ties to the lowest class index),
// thought text rendered from a fixed template keyed by the decision.
PredictResult predict_step(const PolicyParams& params, const Query& q,
                           std::span<const TraceStep> history);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 7;
  double l2 = 1e-4;
};

// One supervised decision extracted from a trace. `classes` holds every head
// class consistent with the recorded action; the training objective maximizes
// their summed probability.
struct TrainExample {
  FeatureVector features;
  HeadId head = HeadId::Keyword;
  std::vector<std::size_t> classes;
};

// Decomposes a trace into head-decision supervision. Returns nullopt when an
// action cannot be expressed by the head inventories.
std::optional<std::vector<TrainExample>> extract_examples(const Trace& t,
                                                          const PolicyConfig& cfg);

struct TrainResult {
  PolicyParams params;
  std::vector<double> epoch_loss;
  std::vector<std::string> skipped_trace_ids;
  std::size_t n_examples = 0;
};

// Minibatch SGD on the mixture; deterministic under the config seed.
// Observations are consumed as conditioning context only, never as targets,
// and trace labels are never read.
TrainResult train(const Dataset& data, const PolicyConfig& cfg,
                  const TrainConfig& tc);

// Full-batch objective and dense gradient:
//   L = mean cross-entropy of the consistent-class mass + (l2/2) * ||W||^2.
// The SGD loop takes steps of exactly this gradient per minibatch.
double loss_and_gradient(const PolicyParams& params,
                         std::span<const TrainExample> batch, double l2,
                         std::array<std::vector<double>, kNumHeads>& grad);

// Alternates predict_step and environment steps until an answer is emitted or
// max_steps actions have been taken (then a forced empty answer). The result
// is always a valid Trace.
Trace rollout(const PolicyParams& params, Environment& env, const Query& q,
              std::size_t max_steps);

enum class DefenseMode { LastStep, AvgSteps };

// Number of decision points in a trace (intermediate steps + final answer).
std::size_t decision_count(const Trace& t);

// Defense-facing representation: the concatenated pre-softmax logits of every
// head at one decision (LastStep), or the running mean over decisions 1..i
// (AvgSteps). step_index is 1-based.
std::vector<double> features_for_defense(const PolicyParams& params,
                                         const Trace& t, std::size_t step_index,
                                         DefenseMode mode);

// The decision class actually taken at a 1-based decision step, as
// "<head>:<class>" (used to group detector fitting samples). nullopt when the
// action is not expressible.
std::optional<std::string> decision_class_at(const Trace& t,
                                             const PolicyConfig& cfg,
                                             std::size_t step_index);

// Versioned binary checkpoint with the embedded feature-hash seed and head
// inventories; loading refuses version or inventory mismatches.
void save_policy(const PolicyParams& params, std::ostream& out);
PolicyParams load_policy(std::istream& in);

}  // namespace tracelab
