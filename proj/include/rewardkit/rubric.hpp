#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rewardkit::rubric {

enum class Tier { Essential, Important, Extension, Pitfall };

const char* to_string(Tier tier);
Tier parse_tier(const std::string& name);

// One satisfaction level: every group must match, a group matches when any
// of its synonyms occurs (case-folded substring) in the response.
using KeyphraseGroups = std::vector<std::vector<std::string>>;

struct RubricItem {
  std::string id;
  Tier tier = Tier::Essential;
  double weight = 1.0;  // points
  KeyphraseGroups partial;  // "minor" for pitfalls
  KeyphraseGroups full;     // "severe" for pitfalls
  std::string dimension;    // optional HDUF label
  std::string tag;          // optional auxiliary tag (InfoQual, EvidenSup, ...)
};

struct Rubric {
  std::vector<RubricItem> items;
  // Tier multipliers; the shipped default scheme is 2:1:1:2.
  std::map<Tier, double> tier_weights = {{Tier::Essential, 2.0},
                                         {Tier::Important, 1.0},
                                         {Tier::Extension, 1.0},
                                         {Tier::Pitfall, 2.0}};
  // Per-tag accumulation cap; <= 0 means "half of the positive weight total".
  double saturation_cap = 0.0;
  std::vector<std::string> density_phrases;  // key information units
  double scale_factor = 2.0;                 // W_scale
  std::vector<double> bucket_edges;

  double resolved_saturation_cap() const;
  // Degenerate-rubric and invariant checks; called by the loader.
  void validate() const;

  static Rubric from_json(const nlohmann::json& doc);
};

struct ScoreBreakdown {
  std::map<std::string, double> item_points;  // raw achieved points per item
  std::map<Tier, double> tier_points;         // raw achieved per tier
  std::map<Tier, double> tier_totals;         // raw maxima per tier
  double base = 0.0;             // weighted score in [-1, 1]
  double saturated = 0.0;        // capped Important/Extension mass
  double density = 0.0;          // length-adversarial score
  std::optional<double> scaled;  // present when reference scores were given
  std::size_t phrase_hits = 0;
  std::size_t response_length = 0;  // Unicode scalar count

  nlohmann::json to_json() const;
};

// Returns 0, 0.5*weight or 1.0*weight depending on the highest satisfied
// level. The full level implies the partial one.
double evaluate_item(const std::string& response, const RubricItem& item);

// Weighted score: tier-multiplied positive points minus pitfall points over
// the same expression with maximal points.
double base_score(const std::string& response, const Rubric& rubric);

// min( sum over tags of min(tag_sum, cap), 2 * essential_sum ).
double saturation_cap(const std::map<std::string, double>& per_tag_sums, double cap,
                      double essential_sum);

// positive_points / (response_length / phrase_hits); zero hits score 0.
double density_score(double positive_points, std::size_t response_length,
                     std::size_t phrase_hits);

// Below the reference mean the score passes through; above it the surplus is
// amplified by w_scale.
double dynamic_scale(double s_roll, const std::vector<double>& reference_scores,
                     double w_scale);

// Half-open bucket membership against strictly ascending edges; n edges give
// n+1 buckets.
std::vector<std::size_t> bucket_rank(const std::vector<double>& scores,
                                     const std::vector<double>& bucket_edges);

// Full pipeline for one response: item evaluation, base score, saturation,
// density, and (with reference scores) dynamic scaling.
ScoreBreakdown score_response(const std::string& response, const Rubric& rubric,
                              const std::vector<double>& reference_scores = {});

// Batch scoring, parallel over responses.
std::vector<ScoreBreakdown> score_batch(const std::vector<std::string>& responses,
                                        const Rubric& rubric,
                                        const std::vector<double>& reference_scores = {});

namespace serial {
std::vector<ScoreBreakdown> score_batch(const std::vector<std::string>& responses,
                                        const Rubric& rubric,
                                        const std::vector<double>& reference_scores = {});
}

// Unicode scalar count of a UTF-8 string (continuation bytes excluded).
std::size_t scalar_length(const std::string& text);

}  // namespace rewardkit::rubric
