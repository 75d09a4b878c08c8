#include "rewardkit/rubric.hpp"

#include <algorithm>
#include <cctype>

#include "rewardkit/error.hpp"
#include "rewardkit/parallel.hpp"

namespace rewardkit::rubric {

namespace {

std::string fold(const std::string& text) {
  std::string out = text;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool group_matches(const std::string& folded_response,
                   const std::vector<std::string>& synonyms) {
  for (const auto& phrase : synonyms) {
    if (folded_response.find(fold(phrase)) != std::string::npos) return true;
  }
  return false;
}

// A level counts as specified only when it has at least one group.
bool level_satisfied(const std::string& folded_response, const KeyphraseGroups& groups) {
  if (groups.empty()) return false;
  for (const auto& group : groups) {
    if (!group_matches(folded_response, group)) return false;
  }
  return true;
}

double evaluate_item_folded(const std::string& folded_response, const RubricItem& item) {
  bool partial_ok = level_satisfied(folded_response, item.partial);
  bool full_ok = level_satisfied(folded_response, item.full) &&
                 (item.partial.empty() || partial_ok);
  if (full_ok) return item.weight;
  if (partial_ok) return 0.5 * item.weight;
  return 0.0;
}

bool is_positive(Tier tier) { return tier != Tier::Pitfall; }

}  // namespace

const char* to_string(Tier tier) {
  switch (tier) {
    case Tier::Essential: return "essential";
    case Tier::Important: return "important";
    case Tier::Extension: return "extension";
    case Tier::Pitfall:   return "pitfall";
  }
  return "unknown";
}

Tier parse_tier(const std::string& name) {
  std::string n = fold(name);
  if (n == "essential" || n == "necessary") return Tier::Essential;
  if (n == "important") return Tier::Important;
  if (n == "extension" || n == "highlight" || n == "aha") return Tier::Extension;
  if (n == "pitfall" || n == "penalty") return Tier::Pitfall;
  throw InputError("unknown rubric tier '" + name + "'");
}

double Rubric::resolved_saturation_cap() const {
  if (saturation_cap > 0.0) return saturation_cap;
  double positive_total = 0.0;
  for (const auto& item : items) {
    if (is_positive(item.tier)) positive_total += item.weight;
  }
  return 0.5 * positive_total;
}

void Rubric::validate() const {
  bool has_essential = false;
  for (const auto& item : items) {
    if (item.id.empty()) {
      throw InputError("rubric item without an id");
    }
    if (!(item.weight > 0.0)) {
      throw InputError("rubric item '" + item.id + "' needs a positive weight");
    }
    if (item.tier == Tier::Essential) has_essential = true;
  }
  if (!has_essential) {
    throw DomainError(ErrorKind::DegenerateRubric, "rubric has no essential item");
  }
  for (const auto& [tier, mult] : tier_weights) {
    if (!(mult > 0.0)) {
      throw InputError(std::string("tier weight for '") + to_string(tier) +
                       "' must be positive");
    }
  }
  double positive = 0.0, pitfall = 0.0;
  for (const auto& item : items) {
    double w = tier_weights.at(item.tier) * item.weight;
    if (is_positive(item.tier)) {
      positive += w;
    } else {
      pitfall += w;
    }
  }
  if (!(positive - pitfall > 0.0)) {
    throw DomainError(ErrorKind::DegenerateRubric,
                      "pitfall weight meets or exceeds positive weight");
  }
  if (!std::is_sorted(bucket_edges.begin(), bucket_edges.end()) ||
      std::adjacent_find(bucket_edges.begin(), bucket_edges.end()) != bucket_edges.end()) {
    throw InputError("bucket edges must be strictly ascending");
  }
  if (scale_factor < 1.0) {
    throw InputError("scale factor must be >= 1");
  }
}

namespace {

KeyphraseGroups parse_groups(const nlohmann::json& node, const std::string& item_id) {
  KeyphraseGroups groups;
  if (!node.is_array()) {
    throw InputError("keyphrase level of item '" + item_id + "' must be an array");
  }
  for (const auto& group : node) {
    std::vector<std::string> synonyms;
    if (group.is_string()) {
      synonyms.push_back(group.get<std::string>());
    } else if (group.is_array()) {
      for (const auto& phrase : group) synonyms.push_back(phrase.get<std::string>());
    } else {
      throw InputError("keyphrase group of item '" + item_id +
                       "' must be a string or array of strings");
    }
    if (synonyms.empty()) {
      throw InputError("empty keyphrase group in item '" + item_id + "'");
    }
    groups.push_back(std::move(synonyms));
  }
  return groups;
}

}  // namespace

Rubric Rubric::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("items") || !doc.at("items").is_array()) {
    throw InputError("rubric document needs an 'items' array");
  }
  Rubric r;
  if (doc.contains("tier_weights")) {
    for (const auto& [name, value] : doc.at("tier_weights").items()) {
      r.tier_weights[parse_tier(name)] = value.get<double>();
    }
  }
  r.saturation_cap = doc.value("saturation_cap", 0.0);
  r.scale_factor = doc.value("scale_factor", 2.0);
  if (doc.contains("density_phrases")) {
    for (const auto& phrase : doc.at("density_phrases")) {
      r.density_phrases.push_back(phrase.get<std::string>());
    }
  }
  if (doc.contains("bucket_edges")) {
    for (const auto& edge : doc.at("bucket_edges")) {
      r.bucket_edges.push_back(edge.get<double>());
    }
  }
  for (const auto& node : doc.at("items")) {
    RubricItem item;
    item.id = node.value("id", "");
    item.tier = parse_tier(node.value("tier", ""));
    item.weight = node.value("weight", 0.0);
    item.dimension = node.value("dimension", "");
    item.tag = node.value("tag", "");
    if (node.contains("levels")) {
      const auto& levels = node.at("levels");
      for (const auto& [name, groups] : levels.items()) {
        std::string n = fold(name);
        if (n == "partial" || n == "minor") {
          item.partial = parse_groups(groups, item.id);
        } else if (n == "full" || n == "severe") {
          item.full = parse_groups(groups, item.id);
        } else {
          throw InputError("unknown level '" + name + "' in item '" + item.id + "'");
        }
      }
    }
    if (item.full.empty() && item.partial.empty()) {
      throw InputError("item '" + item.id + "' has no keyphrase levels");
    }
    r.items.push_back(std::move(item));
  }
  r.validate();
  return r;
}

double evaluate_item(const std::string& response, const RubricItem& item) {
  if (response.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "empty response");
  }
  return evaluate_item_folded(fold(response), item);
}

double base_score(const std::string& response, const Rubric& rubric) {
  if (response.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "empty response");
  }
  std::string folded = fold(response);
  // Both sides subtract the triggered pitfall points: an untouched pitfall
  // leaves the ratio alone, and a clean sweep of the positives scores exactly
  // one. The worst-case denominator (every pitfall fully triggered) stays
  // positive by the load-time degenerate-rubric check.
  double num = 0.0, den = 0.0;
  for (const auto& item : rubric.items) {
    double mult = rubric.tier_weights.at(item.tier);
    double achieved = mult * evaluate_item_folded(folded, item);
    if (is_positive(item.tier)) {
      num += achieved;
      den += mult * item.weight;
    } else {
      num -= achieved;
      den -= achieved;
    }
  }
  if (!(den > 0.0)) {
    throw DomainError(ErrorKind::DegenerateRubric,
                      "pitfall weight meets or exceeds positive weight");
  }
  return num / den;
}

double saturation_cap(const std::map<std::string, double>& per_tag_sums, double cap,
                      double essential_sum) {
  if (!(cap > 0.0)) {
    throw DomainError(ErrorKind::Misuse, "saturation cap must be positive");
  }
  double capped = 0.0;
  for (const auto& [tag, sum] : per_tag_sums) capped += std::min(sum, cap);
  return std::min(capped, 2.0 * essential_sum);
}

double density_score(double positive_points, std::size_t response_length,
                     std::size_t phrase_hits) {
  if (response_length == 0) {
    throw DomainError(ErrorKind::EmptyInput, "zero-length response");
  }
  if (phrase_hits == 0) return 0.0;
  double units_per_phrase =
      static_cast<double>(response_length) / static_cast<double>(phrase_hits);
  return positive_points / units_per_phrase;
}

double dynamic_scale(double s_roll, const std::vector<double>& reference_scores,
                     double w_scale) {
  if (reference_scores.empty()) {
    throw DomainError(ErrorKind::InsufficientData, "no reference scores");
  }
  if (w_scale < 1.0) {
    throw DomainError(ErrorKind::Misuse, "scale factor must be >= 1");
  }
  double mean = 0.0;
  for (double s : reference_scores) mean += s;
  mean /= static_cast<double>(reference_scores.size());
  if (s_roll <= mean) return s_roll;
  return mean + w_scale * (s_roll - mean);
}

std::vector<std::size_t> bucket_rank(const std::vector<double>& scores,
                                     const std::vector<double>& bucket_edges) {
  if (!std::is_sorted(bucket_edges.begin(), bucket_edges.end()) ||
      std::adjacent_find(bucket_edges.begin(), bucket_edges.end()) !=
          bucket_edges.end()) {
    throw InputError("bucket edges must be strictly ascending");
  }
  std::vector<std::size_t> out;
  out.reserve(scores.size());
  for (double s : scores) {
    auto it = std::upper_bound(bucket_edges.begin(), bucket_edges.end(), s);
    out.push_back(static_cast<std::size_t>(it - bucket_edges.begin()));
  }
  return out;
}

std::size_t scalar_length(const std::string& text) {
  std::size_t count = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++count;
  }
  return count;
}

ScoreBreakdown score_response(const std::string& response, const Rubric& rubric,
                              const std::vector<double>& reference_scores) {
  if (response.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "empty response");
  }
  std::string folded = fold(response);
  ScoreBreakdown out;
  out.response_length = scalar_length(response);

  for (Tier tier : {Tier::Essential, Tier::Important, Tier::Extension, Tier::Pitfall}) {
    out.tier_points[tier] = 0.0;
    out.tier_totals[tier] = 0.0;
  }
  double num = 0.0, den = 0.0;
  for (const auto& item : rubric.items) {
    double points = evaluate_item_folded(folded, item);
    out.item_points[item.id] = points;
    out.tier_points[item.tier] += points;
    out.tier_totals[item.tier] += item.weight;
    double mult = rubric.tier_weights.at(item.tier);
    if (is_positive(item.tier)) {
      num += mult * points;
      den += mult * item.weight;
    } else {
      num -= mult * points;
      den -= mult * item.weight;
    }
  }
  if (!(den > 0.0)) {
    throw DomainError(ErrorKind::DegenerateRubric,
                      "pitfall weight meets or exceeds positive weight");
  }
  out.base = num / den;

  // Saturation runs over Important/Extension items grouped by auxiliary tag;
  // untagged items fall into their tier's own bucket.
  std::map<std::string, double> per_tag;
  for (const auto& item : rubric.items) {
    if (item.tier != Tier::Important && item.tier != Tier::Extension) continue;
    std::string tag = !item.tag.empty() ? item.tag
                      : item.tier == Tier::Important ? std::string("Imp")
                                                     : std::string("Aha");
    per_tag[tag] += out.item_points.at(item.id);
  }
  out.saturated = saturation_cap(per_tag, rubric.resolved_saturation_cap(),
                                 out.tier_points.at(Tier::Essential));

  std::size_t hits = 0;
  for (const auto& phrase : rubric.density_phrases) {
    if (folded.find(fold(phrase)) != std::string::npos) ++hits;
  }
  out.phrase_hits = hits;
  double positive_points = out.tier_points.at(Tier::Essential) +
                           out.tier_points.at(Tier::Important) +
                           out.tier_points.at(Tier::Extension);
  out.density = density_score(positive_points, out.response_length, hits);

  if (!reference_scores.empty()) {
    out.scaled = dynamic_scale(out.base, reference_scores, rubric.scale_factor);
  }
  return out;
}

std::vector<ScoreBreakdown> score_batch(const std::vector<std::string>& responses,
                                        const Rubric& rubric,
                                        const std::vector<double>& reference_scores) {
  std::vector<ScoreBreakdown> out(responses.size());
  par::for_each_index(responses.size(), [&](std::size_t i) {
    out[i] = score_response(responses[i], rubric, reference_scores);
  });
  return out;
}

namespace serial {
std::vector<ScoreBreakdown> score_batch(const std::vector<std::string>& responses,
                                        const Rubric& rubric,
                                        const std::vector<double>& reference_scores) {
  std::vector<ScoreBreakdown> out;
  out.reserve(responses.size());
  for (const auto& r : responses) {
    out.push_back(score_response(r, rubric, reference_scores));
  }
  return out;
}
}  // namespace serial

nlohmann::json ScoreBreakdown::to_json() const {
  nlohmann::json items = nlohmann::json::object();
  for (const auto& [id, points] : item_points) items[id] = points;
  nlohmann::json tiers = nlohmann::json::object();
  for (const auto& [tier, points] : tier_points) {
    tiers[to_string(tier)] = {{"points", points}, {"total", tier_totals.at(tier)}};
  }
  nlohmann::json doc = {{"items", items},
                        {"tiers", tiers},
                        {"base", base},
                        {"saturated", saturated},
                        {"density", density},
                        {"phrase_hits", phrase_hits},
                        {"response_length", response_length}};
  if (scaled) doc["scaled"] = *scaled;
  return doc;
}

}  // namespace rewardkit::rubric
