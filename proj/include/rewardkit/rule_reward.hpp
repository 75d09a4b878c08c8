#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rewardkit::rule {

// ---- citation reward ----

struct GoldDoc {
  std::string title;
  std::string source;
  std::optional<int> year;
  std::string authority_level;
};

enum class CitationErrorKind {
  WrongSourceName,
  NonGoldCitation,
  Repetition,
  HallucinatedCitation,
};

const char* to_string(CitationErrorKind kind);

struct CitationRuleSet {
  std::string open_delim = "«";   // «
  std::string close_delim = "»";  // »
  bool require_year = true;
  double format_weight = 1.0;
  double gold_weight = 1.0;
  std::map<CitationErrorKind, double> error_weights = {
      {CitationErrorKind::WrongSourceName, 1.0},
      {CitationErrorKind::NonGoldCitation, 1.0},
      {CitationErrorKind::Repetition, 1.0},
      {CitationErrorKind::HallucinatedCitation, 1.0},
  };
  // Titles a citation can fuzzily resolve to without being fabricated;
  // matching one of these (but not a gold doc) is a non-gold citation.
  std::vector<std::string> known_titles;
  double fuzzy_threshold = 0.5;
  std::vector<GoldDoc> gold_docs;

  static CitationRuleSet from_json(const nlohmann::json& doc);
};

std::vector<GoldDoc> read_gold_docs(std::istream& in);

struct ParsedCitation {
  std::string raw;
  std::string title;
  std::optional<int> year;
  bool well_formed = false;
  std::string classification;  // "gold", error kind name, or "malformed"
};

struct CitationBreakdown {
  std::vector<ParsedCitation> citations;
  bool format_ok = false;
  bool gold_hit = false;
  std::map<CitationErrorKind, bool> errors;
  double total = 0.0;

  nlohmann::json to_json() const;
};

// R = w_fmt*I_fmt + w_gold*I_gold - sum_k w_k*I_err_k over binary indicators.
CitationBreakdown citation_reward(const std::string& response, const CitationRuleSet& rules);

// Case-folded, whitespace-collapsed comparison key.
std::string normalize_title(const std::string& title);

// Token-set Jaccard similarity over alphanumeric words.
double jaccard_similarity(const std::string& a, const std::string& b);

// ---- composite rule rewards ----

enum class Scope { Global, Local };
enum class Aggregation { WeightedSum, LengthNormalizedWeightedSum, TopNWeightedSum };

struct Predicate {
  enum class Type {
    JsonValid,         // global: output parses as JSON
    CountUpperBound,   // global: at most max_elements extracted elements
    FieldNameCheck,    // local: object has every required key
    FieldValueCheck,   // local: listed fields present with the expected type
    JaccardOverlap,    // local: token-set overlap with a reference text
  };
  Type type = Type::JsonValid;
  std::size_t max_elements = 0;
  std::vector<std::string> required_keys;
  std::map<std::string, std::string> field_types;  // name -> string|number|boolean|array|object
  std::string reference;
  std::string field;  // element field carrying the text; empty = whole element
  double threshold = 0.5;
};

struct RuleComponent {
  std::string id;
  Scope scope = Scope::Global;
  Aggregation aggregation = Aggregation::WeightedSum;
  double weight = 1.0;
  std::size_t top_n = 1;
  Predicate predicate;
};

struct ExtractorSpec {
  enum class Type { JsonArray, Lines };
  Type type = Type::JsonArray;
};

struct ComponentResult {
  std::string id;
  double contribution = 0.0;
  std::vector<double> element_scores;  // empty for global components
  std::vector<std::string> diagnostics;
};

struct CompositeBreakdown {
  double total = 0.0;
  std::vector<ComponentResult> components;

  nlohmann::json to_json() const;
};

struct RuleSpec {
  ExtractorSpec extractor;
  std::vector<RuleComponent> components;

  static RuleSpec from_json(const nlohmann::json& doc);
};

// Global components score the whole output once; local components score each
// extracted element and reduce per their aggregation mode. Extraction failure
// zeroes local components with a diagnostic instead of failing the call.
CompositeBreakdown composite_rule_reward(const std::string& output, const RuleSpec& spec);

}  // namespace rewardkit::rule
