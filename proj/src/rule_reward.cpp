#include "rewardkit/rule_reward.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"

namespace rewardkit::rule {

const char* to_string(CitationErrorKind kind) {
  switch (kind) {
    case CitationErrorKind::WrongSourceName:      return "wrong_source_name";
    case CitationErrorKind::NonGoldCitation:      return "non_gold_citation";
    case CitationErrorKind::Repetition:           return "repetition";
    case CitationErrorKind::HallucinatedCitation: return "hallucinated_citation";
  }
  return "unknown";
}

namespace {

CitationErrorKind parse_error_kind(const std::string& name) {
  if (name == "wrong_source_name") return CitationErrorKind::WrongSourceName;
  if (name == "non_gold_citation") return CitationErrorKind::NonGoldCitation;
  if (name == "repetition") return CitationErrorKind::Repetition;
  if (name == "hallucinated_citation") return CitationErrorKind::HallucinatedCitation;
  throw InputError("unknown citation error kind '" + name + "'");
}

std::set<std::string> token_set(const std::string& text) {
  std::set<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.insert(current);
      current.clear();
    }
  }
  if (!current.empty()) tokens.insert(current);
  return tokens;
}

}  // namespace

std::string normalize_title(const std::string& title) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : title) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

double jaccard_similarity(const std::string& a, const std::string& b) {
  std::set<std::string> sa = token_set(a), sb = token_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  if (sa.empty() || sb.empty()) return 0.0;
  std::size_t intersection = 0;
  for (const auto& t : sa) intersection += sb.count(t);
  std::size_t unions = sa.size() + sb.size() - intersection;
  return static_cast<double>(intersection) / static_cast<double>(unions);
}

CitationRuleSet CitationRuleSet::from_json(const nlohmann::json& doc) {
  CitationRuleSet rules;
  if (!doc.is_object()) throw InputError("citation rules must be a JSON object");
  rules.open_delim = doc.value("open_delim", rules.open_delim);
  rules.close_delim = doc.value("close_delim", rules.close_delim);
  rules.require_year = doc.value("require_year", true);
  rules.format_weight = doc.value("format_weight", 1.0);
  rules.gold_weight = doc.value("gold_weight", 1.0);
  rules.fuzzy_threshold = doc.value("fuzzy_threshold", 0.5);
  if (rules.open_delim.empty() || rules.close_delim.empty()) {
    throw InputError("citation delimiters must be non-empty");
  }
  if (doc.contains("error_weights")) {
    for (const auto& [name, value] : doc.at("error_weights").items()) {
      double w = value.get<double>();
      if (w < 0.0) throw InputError("error weight for '" + name + "' must be >= 0");
      rules.error_weights[parse_error_kind(name)] = w;
    }
  }
  if (doc.contains("known_titles")) {
    for (const auto& t : doc.at("known_titles")) {
      rules.known_titles.push_back(t.get<std::string>());
    }
  }
  if (doc.contains("gold_docs")) {
    for (const auto& d : doc.at("gold_docs")) {
      GoldDoc gold;
      gold.title = d.at("title").get<std::string>();
      gold.source = d.value("source", "");
      if (d.contains("year")) gold.year = d.at("year").get<int>();
      gold.authority_level = d.value("authority_level", "");
      rules.gold_docs.push_back(std::move(gold));
    }
  }
  return rules;
}

std::vector<GoldDoc> read_gold_docs(std::istream& in) {
  std::vector<GoldDoc> docs;
  io::for_each_jsonl(in, [&](std::size_t line_no, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("title")) {
      throw InputError("line " + std::to_string(line_no) + ": gold doc needs a 'title'",
                       line_no);
    }
    GoldDoc gold;
    gold.title = doc.at("title").get<std::string>();
    gold.source = doc.value("source", "");
    if (doc.contains("year")) gold.year = doc.at("year").get<int>();
    gold.authority_level = doc.value("authority_level", "");
    docs.push_back(std::move(gold));
  });
  return docs;
}

namespace {

// Scans "<open>Title<close> (Year)" occurrences. A fragment missing its
// closing delimiter or (when required) its year is kept as malformed.
std::vector<ParsedCitation> parse_citations(const std::string& response,
                                            const CitationRuleSet& rules) {
  std::vector<ParsedCitation> out;
  std::size_t pos = 0;
  while ((pos = response.find(rules.open_delim, pos)) != std::string::npos) {
    std::size_t title_start = pos + rules.open_delim.size();
    std::size_t close = response.find(rules.close_delim, title_start);
    if (close == std::string::npos) {
      ParsedCitation c;
      c.raw = response.substr(pos);
      c.classification = "malformed";
      out.push_back(std::move(c));
      break;
    }
    ParsedCitation c;
    c.title = response.substr(title_start, close - title_start);
    std::size_t after = close + rules.close_delim.size();
    std::size_t cursor = after;
    while (cursor < response.size() && response[cursor] == ' ') ++cursor;
    if (cursor < response.size() && response[cursor] == '(') {
      std::size_t year_end = response.find(')', cursor);
      if (year_end != std::string::npos) {
        std::string year_text = response.substr(cursor + 1, year_end - cursor - 1);
        bool all_digits = !year_text.empty() &&
                          std::all_of(year_text.begin(), year_text.end(),
                                      [](unsigned char ch) { return std::isdigit(ch); });
        if (all_digits) {
          c.year = std::stoi(year_text);
          after = year_end + 1;
        }
      }
    }
    c.raw = response.substr(pos, after - pos);
    c.well_formed = !c.title.empty() && (!rules.require_year || c.year.has_value());
    if (!c.well_formed) c.classification = "malformed";
    out.push_back(std::move(c));
    pos = after;
  }
  return out;
}

}  // namespace

CitationBreakdown citation_reward(const std::string& response,
                                  const CitationRuleSet& rules) {
  if (response.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "empty response");
  }
  if (rules.gold_docs.empty()) {
    throw DomainError(ErrorKind::Misuse, "gold document set is empty");
  }

  CitationBreakdown breakdown;
  breakdown.citations = parse_citations(response, rules);
  for (auto kind :
       {CitationErrorKind::WrongSourceName, CitationErrorKind::NonGoldCitation,
        CitationErrorKind::Repetition, CitationErrorKind::HallucinatedCitation}) {
    breakdown.errors[kind] = false;
  }

  std::map<std::string, const GoldDoc*> gold_by_title;
  for (const auto& doc : rules.gold_docs) {
    gold_by_title[normalize_title(doc.title)] = &doc;
  }

  std::map<std::string, int> citation_counts;
  std::size_t well_formed = 0, malformed = 0;
  for (auto& c : breakdown.citations) {
    if (!c.well_formed) {
      ++malformed;
      continue;
    }
    ++well_formed;
    std::string key = normalize_title(c.title);
    ++citation_counts[key];

    auto gold_it = gold_by_title.find(key);
    if (gold_it != gold_by_title.end()) {
      const GoldDoc* doc = gold_it->second;
      if (doc->year && c.year && *doc->year != *c.year) {
        c.classification = to_string(CitationErrorKind::WrongSourceName);
        breakdown.errors[CitationErrorKind::WrongSourceName] = true;
      } else {
        c.classification = "gold";
        breakdown.gold_hit = true;
      }
      continue;
    }

    double best_gold = 0.0;
    for (const auto& doc : rules.gold_docs) {
      best_gold = std::max(best_gold, jaccard_similarity(c.title, doc.title));
    }
    if (best_gold >= rules.fuzzy_threshold) {
      // Garbled rendering of a real gold source name.
      c.classification = to_string(CitationErrorKind::WrongSourceName);
      breakdown.errors[CitationErrorKind::WrongSourceName] = true;
      continue;
    }

    bool known = false;
    for (const auto& title : rules.known_titles) {
      if (normalize_title(title) == key ||
          jaccard_similarity(c.title, title) >= rules.fuzzy_threshold) {
        known = true;
        break;
      }
    }
    if (known || rules.known_titles.empty()) {
      c.classification = to_string(CitationErrorKind::NonGoldCitation);
      breakdown.errors[CitationErrorKind::NonGoldCitation] = true;
    } else {
      c.classification = to_string(CitationErrorKind::HallucinatedCitation);
      breakdown.errors[CitationErrorKind::HallucinatedCitation] = true;
    }
  }

  for (const auto& [title, count] : citation_counts) {
    if (count > 1) {
      breakdown.errors[CitationErrorKind::Repetition] = true;
      break;
    }
  }

  breakdown.format_ok = well_formed >= 1 && malformed == 0;

  double total = 0.0;
  if (breakdown.format_ok) total += rules.format_weight;
  if (breakdown.gold_hit) total += rules.gold_weight;
  for (const auto& [kind, fired] : breakdown.errors) {
    if (fired) total -= rules.error_weights.at(kind);
  }
  breakdown.total = total;
  return breakdown;
}

nlohmann::json CitationBreakdown::to_json() const {
  nlohmann::json cites = nlohmann::json::array();
  for (const auto& c : citations) {
    nlohmann::json entry = {{"raw", c.raw},
                            {"title", c.title},
                            {"classification", c.classification}};
    if (c.year) entry["year"] = *c.year;
    cites.push_back(std::move(entry));
  }
  nlohmann::json errs = nlohmann::json::object();
  for (const auto& [kind, fired] : errors) errs[to_string(kind)] = fired;
  return {{"citations", cites},
          {"format_ok", format_ok},
          {"gold_hit", gold_hit},
          {"errors", errs},
          {"total", total}};
}

// ---- composite rule rewards ----

namespace {

Predicate parse_predicate(const nlohmann::json& node) {
  Predicate p;
  std::string type = node.value("type", "");
  if (type == "json_valid") {
    p.type = Predicate::Type::JsonValid;
  } else if (type == "count_upper_bound") {
    p.type = Predicate::Type::CountUpperBound;
    p.max_elements = node.at("max_elements").get<std::size_t>();
  } else if (type == "field_name_check") {
    p.type = Predicate::Type::FieldNameCheck;
    for (const auto& k : node.at("required_keys")) {
      p.required_keys.push_back(k.get<std::string>());
    }
  } else if (type == "field_value_check") {
    p.type = Predicate::Type::FieldValueCheck;
    for (const auto& [name, t] : node.at("fields").items()) {
      p.field_types[name] = t.get<std::string>();
    }
  } else if (type == "jaccard_overlap") {
    p.type = Predicate::Type::JaccardOverlap;
    p.reference = node.at("reference").get<std::string>();
    p.field = node.value("field", "");
    p.threshold = node.value("threshold", 0.5);
  } else {
    throw InputError("unknown predicate type '" + type + "'");
  }
  return p;
}

bool type_conforms(const nlohmann::json& value, const std::string& expected) {
  if (expected == "string") return value.is_string();
  if (expected == "number") return value.is_number();
  if (expected == "boolean") return value.is_boolean();
  if (expected == "array") return value.is_array();
  if (expected == "object") return value.is_object();
  throw InputError("unknown field type '" + expected + "'");
}

std::string element_text(const nlohmann::json& element, const std::string& field) {
  const nlohmann::json* node = &element;
  if (!field.empty()) {
    if (!element.is_object() || !element.contains(field)) return "";
    node = &element.at(field);
  }
  if (node->is_string()) return node->get<std::string>();
  return node->dump();
}

double score_element(const nlohmann::json& element, const Predicate& p) {
  switch (p.type) {
    case Predicate::Type::FieldNameCheck: {
      if (!element.is_object()) return 0.0;
      for (const auto& key : p.required_keys) {
        if (!element.contains(key)) return 0.0;
      }
      return 1.0;
    }
    case Predicate::Type::FieldValueCheck: {
      if (!element.is_object()) return 0.0;
      for (const auto& [name, expected] : p.field_types) {
        if (!element.contains(name) || !type_conforms(element.at(name), expected)) {
          return 0.0;
        }
      }
      return 1.0;
    }
    case Predicate::Type::JaccardOverlap: {
      double sim = jaccard_similarity(element_text(element, p.field), p.reference);
      return sim >= p.threshold ? sim : 0.0;
    }
    default:
      throw DomainError(ErrorKind::Misuse, "global predicate used on an element");
  }
}

}  // namespace

RuleSpec RuleSpec::from_json(const nlohmann::json& doc) {
  RuleSpec spec;
  if (!doc.is_object() || !doc.contains("components") ||
      !doc.at("components").is_array()) {
    throw InputError("rule spec needs a 'components' array");
  }
  if (doc.contains("extractor")) {
    std::string type = doc.at("extractor").value("type", "json_array");
    if (type == "json_array") {
      spec.extractor.type = ExtractorSpec::Type::JsonArray;
    } else if (type == "lines") {
      spec.extractor.type = ExtractorSpec::Type::Lines;
    } else {
      throw InputError("unknown extractor type '" + type + "'");
    }
  }
  for (const auto& node : doc.at("components")) {
    RuleComponent c;
    c.id = node.value("id", "");
    if (c.id.empty()) throw InputError("rule component without an id");
    std::string scope = node.value("scope", "global");
    if (scope == "global") {
      c.scope = Scope::Global;
    } else if (scope == "local") {
      c.scope = Scope::Local;
    } else {
      throw InputError("unknown scope '" + scope + "' in component '" + c.id + "'");
    }
    std::string agg = node.value("aggregation", "weighted-sum");
    if (agg == "weighted-sum") {
      c.aggregation = Aggregation::WeightedSum;
    } else if (agg == "length-normalized-weighted-sum") {
      c.aggregation = Aggregation::LengthNormalizedWeightedSum;
    } else if (agg == "top-n-weighted-sum") {
      c.aggregation = Aggregation::TopNWeightedSum;
      c.top_n = node.value("top_n", std::size_t{1});
      if (c.top_n < 1) throw InputError("top_n must be >= 1 in component '" + c.id + "'");
    } else {
      throw InputError("unknown aggregation '" + agg + "' in component '" + c.id + "'");
    }
    c.weight = node.value("weight", 1.0);
    if (!std::isfinite(c.weight)) {
      throw InputError("weight of component '" + c.id + "' must be finite");
    }
    if (!node.contains("predicate")) {
      throw InputError("component '" + c.id + "' needs a predicate");
    }
    c.predicate = parse_predicate(node.at("predicate"));
    spec.components.push_back(std::move(c));
  }
  if (spec.components.empty()) {
    throw InputError("rule spec needs at least one component");
  }
  return spec;
}

CompositeBreakdown composite_rule_reward(const std::string& output, const RuleSpec& spec) {
  CompositeBreakdown breakdown;

  std::vector<nlohmann::json> elements;
  bool json_ok = false;
  bool extraction_ok = false;
  std::string extraction_diag;

  nlohmann::json parsed = nlohmann::json::parse(output, nullptr, false);
  json_ok = !parsed.is_discarded();
  if (spec.extractor.type == ExtractorSpec::Type::JsonArray) {
    if (json_ok && parsed.is_array()) {
      extraction_ok = true;
      for (const auto& e : parsed) elements.push_back(e);
    } else {
      extraction_diag = "output is not a JSON array";
    }
  } else {
    extraction_ok = true;
    std::size_t start = 0;
    while (start <= output.size()) {
      std::size_t end = output.find('\n', start);
      std::string line = output.substr(
          start, end == std::string::npos ? std::string::npos : end - start);
      if (!line.empty()) elements.emplace_back(line);
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }

  for (const auto& component : spec.components) {
    ComponentResult result;
    result.id = component.id;

    if (component.scope == Scope::Global) {
      double score = 0.0;
      switch (component.predicate.type) {
        case Predicate::Type::JsonValid:
          score = json_ok ? 1.0 : 0.0;
          break;
        case Predicate::Type::CountUpperBound:
          if (!extraction_ok) {
            result.diagnostics.push_back(extraction_diag);
          } else {
            score = elements.size() <= component.predicate.max_elements ? 1.0 : 0.0;
          }
          break;
        default:
          throw InputError("component '" + component.id +
                           "' uses a local predicate with global scope");
      }
      result.contribution = component.weight * score;
    } else {
      if (!extraction_ok) {
        result.contribution = 0.0;
        result.diagnostics.push_back(extraction_diag);
      } else {
        for (const auto& element : elements) {
          result.element_scores.push_back(score_element(element, component.predicate));
        }
        double reduced = 0.0;
        switch (component.aggregation) {
          case Aggregation::WeightedSum: {
            for (double s : result.element_scores) reduced += s;
            break;
          }
          case Aggregation::LengthNormalizedWeightedSum: {
            if (result.element_scores.empty()) {
              result.diagnostics.push_back("no elements to normalize over");
            } else {
              for (double s : result.element_scores) reduced += s;
              reduced /= static_cast<double>(result.element_scores.size());
            }
            break;
          }
          case Aggregation::TopNWeightedSum: {
            std::vector<double> sorted = result.element_scores;
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            std::size_t n = std::min(component.top_n, sorted.size());
            for (std::size_t i = 0; i < n; ++i) reduced += sorted[i];
            break;
          }
        }
        result.contribution = component.weight * reduced;
      }
    }
    breakdown.total += result.contribution;
    breakdown.components.push_back(std::move(result));
  }
  return breakdown;
}

nlohmann::json CompositeBreakdown::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components) {
    comps.push_back({{"id", c.id},
                     {"contribution", c.contribution},
                     {"element_scores", c.element_scores},
                     {"diagnostics", c.diagnostics}});
  }
  return {{"total", total}, {"components", comps}};
}

}  // namespace rewardkit::rule
