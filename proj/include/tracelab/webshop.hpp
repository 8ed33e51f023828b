#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracelab/env.hpp"
#include "tracelab/trace.hpp"

namespace tracelab {

struct Product {
  std::string id;
  std::string brand;
  std::string category;
  std::vector<std::string> attributes;  // sorted
  double price = 0.0;

  bool operator==(const Product&) const = default;
};

struct Catalog {
  std::vector<Product> products;
  std::map<std::string, std::vector<std::size_t>> by_brand;
  std::map<std::string, std::vector<std::size_t>> by_category;

  static Catalog build(std::vector<Product> products);
  const Product* find(const std::string& id) const;
  std::vector<std::string> brands() const;

  bool operator==(const Catalog& o) const { return products == o.products; }
};

// The fixed product category vocabulary.
const std::vector<std::string>& shop_categories();

// Deterministic catalog generation. Every category is covered by adidas plus
// at least one other brand once n_products >= 2 * |categories|.
Catalog gen_catalog(std::uint64_t seed, std::size_t n_products,
                    const std::vector<std::string>& brands);

// Line-delimited JSON: {"id","brand","category","attributes","price"}.
void save_catalog(const Catalog& c, std::ostream& out);
Catalog load_catalog(std::istream& in);

struct ShopGoal {
  std::string category;
  std::vector<std::string> required;  // sorted attribute tokens
  double price_cap = 0.0;

  bool operator==(const ShopGoal&) const = default;
};

enum class ShopPhase { AtSearch, AtResults, AtProduct, Done };

struct ShopState {
  ShopPhase phase = ShopPhase::AtSearch;
  std::vector<std::string> results;  // ordered product ids, current page
  std::optional<std::string> viewed;
  std::optional<std::string> purchased;
  int budget = 12;
};

struct StepOutcome {
  ShopState state;
  Observation obs;
};

// Pure transition function. Search ranks by |keywords ∩ (brand ∪ category ∪
// attributes)| with brand keywords acting as a hard filter, ties broken by
// ascending product id; top_k results per page. Invalid actions leave the
// phase unchanged (budget still decrements). Budget exhaustion forces Done
// with no purchase.
StepOutcome shop_step(const ShopState& state, const Catalog& catalog,
                      const Action& action, std::size_t top_k);

// 0 if nothing purchased or category mismatch, else
// (|matched required attributes| + price_ok) / (|required| + 1).
double shop_reward(const std::optional<Product>& purchased, const ShopGoal& goal);

enum class InstructionSplit { Target, Clean };

struct ShopInstruction {
  Query query;
  ShopGoal goal;

  bool operator==(const ShopInstruction&) const = default;
};

struct InstructionSpec {
  std::size_t n = 0;
  InstructionSplit split = InstructionSplit::Clean;
  std::vector<std::string> trigger_tokens;  // e.g. {"sneakers"}
  std::string target_brand = "adidas";
  std::size_t top_k = 5;
  std::string id_prefix = "ws-";
};

// Deterministic instruction generation. Target queries contain a trigger
// token and additionally guarantee, for the natural search of the goal:
//   - rank-1 is a non-target-brand product matching every required attribute,
//   - a target-brand item appears in the top-k page, its first occurrence
//     matching exactly |required|-1 attributes with price under the cap,
//   - no target-brand product of the category matches all required attributes.
// Clean queries contain no trigger token and their natural rank-1 is a
// non-target-brand full match. Throws GenerationError when the catalog cannot
// satisfy the guarantees.
std::vector<ShopInstruction> gen_instructions(const Catalog& catalog,
                                              std::uint64_t seed,
                                              const InstructionSpec& spec);

// Canonical query form: "buy <category> <attr...> under <cap> dollars".
Query render_shop_query(const ShopGoal& goal, TaskTag task, std::string id);
ShopGoal goal_from_query(const Query& q);

// Content keywords of a query: stopwords and number tokens dropped.
Tokens search_keywords(const Tokens& query_text);

struct ItemRef {
  std::string id;
  std::string brand;
};

// Parses "item <id> <brand> ..." groups out of an observation payload.
std::vector<ItemRef> parse_item_listing(const Tokens& payload);

// Search execution shared by shop_step and the instruction generator.
std::vector<std::size_t> rank_products(const Catalog& catalog,
                                       const Tokens& keywords, std::size_t top_k);

class ShopEpisode : public Environment {
 public:
  ShopEpisode(const Catalog& catalog, std::size_t top_k, int budget)
      : catalog_(&catalog), top_k_(top_k) {
    state_.budget = budget;
  }

  Observation apply(const Action& action) override;
  bool done() const override { return state_.phase == ShopPhase::Done; }
  TaskTag task() const override { return TaskTag::WebShop; }
  const ShopState& state() const { return state_; }

 private:
  const Catalog* catalog_;
  std::size_t top_k_;
  ShopState state_;
};

}  // namespace tracelab
