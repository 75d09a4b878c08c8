#include "rewardkit/crd.hpp"

#include <algorithm>
#include <cmath>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"
#include "rewardkit/parallel.hpp"

namespace rewardkit::crd {

void SentenceSpan::validate() const {
  if (tokens.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "sentence '" + id + "' has no tokens");
  }
  for (const auto& t : tokens) {
    if (!std::isfinite(t.logp) || (t.ref_logp && !std::isfinite(*t.ref_logp))) {
      throw DomainError(ErrorKind::SchemaMismatch,
                        "sentence '" + id + "' has a non-finite log-probability");
    }
  }
  std::vector<EntitySpan> sorted = entities;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.begin < b.begin; });
  std::size_t prev_end = 0;
  for (const auto& e : sorted) {
    if (e.begin >= e.end || e.end > tokens.size()) {
      throw DomainError(ErrorKind::InvalidSpan,
                        "entity span out of bounds in sentence '" + id + "'");
    }
    if (e.begin < prev_end) {
      throw DomainError(ErrorKind::InvalidSpan,
                        "overlapping entity spans in sentence '" + id + "'");
    }
    prev_end = e.end;
  }
}

Strategy AggregationSpec::parse_strategy(const std::string& name) {
  if (name == "sum") return Strategy::Sum;
  if (name == "mean") return Strategy::Mean;
  if (name == "min") return Strategy::Min;
  if (name == "bot-k" || name == "botk") return Strategy::BotK;
  if (name == "mask-first" || name == "mask-first-token") return Strategy::MaskFirstToken;
  if (name == "z-score" || name == "zscore") return Strategy::ZScore;
  throw InputError("unknown aggregation strategy '" + name + "'");
}

double relative_drop(const SentenceSpan& sentence, const EntitySpan& entity) {
  if (sentence.tokens.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "empty sentence");
  }
  if (entity.begin >= entity.end || entity.end > sentence.tokens.size()) {
    throw DomainError(ErrorKind::InvalidSpan, "entity span out of bounds");
  }
  double entity_min = sentence.tokens[entity.begin].logp;
  for (std::size_t i = entity.begin; i < entity.end; ++i) {
    entity_min = std::min(entity_min, sentence.tokens[i].logp);
  }
  double sentence_sum = 0.0;
  for (const auto& t : sentence.tokens) sentence_sum += t.logp;
  double sentence_mean = sentence_sum / static_cast<double>(sentence.tokens.size());
  return entity_min - sentence_mean;
}

std::vector<double> diff_signal(const std::vector<TokenRecord>& tokens) {
  std::vector<double> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!tokens[i].ref_logp) {
      throw DomainError(ErrorKind::SchemaMismatch,
                        "token " + std::to_string(i) + " has no reference log-probability");
    }
    out.push_back(tokens[i].logp - *tokens[i].ref_logp);
  }
  return out;
}

double aggregate(const std::vector<double>& values, const AggregationSpec& spec) {
  if (values.empty()) {
    throw DomainError(ErrorKind::EmptyInput, "aggregate over empty token sequence");
  }
  const double n = static_cast<double>(values.size());
  switch (spec.strategy) {
    case Strategy::Sum: {
      double s = 0.0;
      for (double v : values) s += v;
      return s;
    }
    case Strategy::Mean: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / n;
    }
    case Strategy::Min:
      return *std::min_element(values.begin(), values.end());
    case Strategy::BotK: {
      if (spec.k < 1) throw DomainError(ErrorKind::Misuse, "bot-k needs k >= 1");
      std::size_t k = std::min(spec.k, values.size());
      std::vector<double> sorted = values;
      // stable ordering on ties: values sort is enough since only the sum of
      // the k smallest matters
      std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k),
                        sorted.end());
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += sorted[i];
      return s / static_cast<double>(k);
    }
    case Strategy::MaskFirstToken: {
      if (values.size() < 2) {
        throw DomainError(ErrorKind::InvalidSpan,
                          "mask-first-token needs at least 2 tokens");
      }
      double s = 0.0;
      for (std::size_t i = 1; i < values.size(); ++i) s += values[i];
      return s / (n - 1.0);
    }
    case Strategy::ZScore: {
      if (!(spec.z_stddev > 0.0)) {
        throw DomainError(ErrorKind::Misuse, "z-score needs positive corpus stddev");
      }
      double s = 0.0;
      for (double v : values) s += (v - spec.z_mean) / spec.z_stddev;
      return s / n;
    }
  }
  throw DomainError(ErrorKind::Misuse, "unreachable aggregation strategy");
}

std::vector<EntityFlag> flag_entities(const SentenceSpan& sentence, double tau) {
  if (!(tau < 0.0)) {
    throw DomainError(ErrorKind::Misuse, "risk threshold tau must be negative");
  }
  std::vector<EntityFlag> out;
  out.reserve(sentence.entities.size());
  for (const auto& entity : sentence.entities) {
    EntityFlag flag;
    flag.entity = entity;
    flag.drop = relative_drop(sentence, entity);
    flag.risky = flag.drop < tau;  // strict: a drop exactly at tau is exempt
    out.push_back(flag);
  }
  return out;
}

SentenceReport probe(const SentenceSpan& sentence, const AggregationSpec& spec, double tau) {
  sentence.validate();
  SentenceReport report;
  report.id = sentence.id;
  std::vector<double> signal;
  if (spec.use_diff_signal) {
    signal = diff_signal(sentence.tokens);
  } else {
    signal.reserve(sentence.tokens.size());
    for (const auto& t : sentence.tokens) signal.push_back(t.logp);
  }
  report.aggregate_score = aggregate(signal, spec);
  report.flags = flag_entities(sentence, tau);
  return report;
}

std::vector<SentenceReport> probe_batch(const std::vector<SentenceSpan>& sentences,
                                        const AggregationSpec& spec, double tau) {
  std::vector<SentenceReport> out(sentences.size());
  par::for_each_index(sentences.size(),
                      [&](std::size_t i) { out[i] = probe(sentences[i], spec, tau); });
  return out;
}

namespace serial {
std::vector<SentenceReport> probe_batch(const std::vector<SentenceSpan>& sentences,
                                        const AggregationSpec& spec, double tau) {
  std::vector<SentenceReport> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(probe(s, spec, tau));
  return out;
}
}  // namespace serial

std::vector<SentenceSpan> read_sentences(std::istream& in) {
  std::vector<SentenceSpan> sentences;
  io::for_each_jsonl(in, [&](std::size_t line_no, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("tokens") || !doc.at("tokens").is_array()) {
      throw InputError("line " + std::to_string(line_no) +
                           ": expected {\"sentence_id\", \"tokens\": [...]}",
                       line_no);
    }
    SentenceSpan s;
    s.id = doc.value("sentence_id", "");
    for (const auto& t : doc.at("tokens")) {
      if (!t.is_object() || !t.contains("logp") || !t.at("logp").is_number()) {
        throw InputError("line " + std::to_string(line_no) + ": token needs numeric 'logp'",
                         line_no);
      }
      TokenRecord token;
      token.text = t.value("text", "");
      token.logp = t.at("logp").get<double>();
      if (t.contains("ref_logp")) {
        if (!t.at("ref_logp").is_number()) {
          throw InputError("line " + std::to_string(line_no) + ": 'ref_logp' must be numeric",
                           line_no);
        }
        token.ref_logp = t.at("ref_logp").get<double>();
      }
      s.tokens.push_back(std::move(token));
    }
    if (doc.contains("entities")) {
      for (const auto& e : doc.at("entities")) {
        if (!e.is_object() || !e.contains("start") || !e.contains("end")) {
          throw InputError("line " + std::to_string(line_no) +
                               ": entity needs 'start' and 'end'",
                           line_no);
        }
        EntitySpan span;
        span.begin = e.at("start").get<std::size_t>();
        span.end = e.at("end").get<std::size_t>();
        span.label = e.value("label", "");
        s.entities.push_back(std::move(span));
      }
    }
    sentences.push_back(std::move(s));
  });
  return sentences;
}

nlohmann::json report_to_json(const SentenceReport& report) {
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& f : report.flags) {
    flags.push_back({{"start", f.entity.begin},
                     {"end", f.entity.end},
                     {"label", f.entity.label},
                     {"drop", f.drop},
                     {"risky", f.risky}});
  }
  return {{"sentence_id", report.id},
          {"aggregate", report.aggregate_score},
          {"entities", flags}};
}

}  // namespace rewardkit::crd
