#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rewardkit::crd {

struct TokenRecord {
  std::string text;
  double logp = 0.0;                 // policy log-probability, nats
  std::optional<double> ref_logp;    // reference-model log-probability, nats
};

struct EntitySpan {
  std::size_t begin = 0;  // token index, inclusive
  std::size_t end = 0;    // token index, exclusive
  std::string label;
};

// One sentence with explicit entity boundaries. Segmentation is an input;
// no tokenizer is involved.
struct SentenceSpan {
  std::string id;
  std::vector<TokenRecord> tokens;
  std::vector<EntitySpan> entities;

  // Bounds, non-emptiness, non-overlap.
  void validate() const;
};

enum class Strategy { Sum, Mean, Min, BotK, MaskFirstToken, ZScore };

struct AggregationSpec {
  Strategy strategy = Strategy::Mean;
  std::size_t k = 20;                 // bot-k window
  bool use_diff_signal = false;       // policy logp minus reference logp
  double z_mean = 0.0;                // corpus stats for z-score
  double z_stddev = 1.0;

  static Strategy parse_strategy(const std::string& name);
};

// Relative drop: min entity-token log-probability minus the mean
// log-probability over the whole sentence (entity tokens included).
double relative_drop(const SentenceSpan& sentence, const EntitySpan& entity);

// Per-token policy-minus-reference log-probabilities. Every token must carry
// a reference value.
std::vector<double> diff_signal(const std::vector<TokenRecord>& tokens);

// Collapses per-token scalars into one score. Bot-k with k >= size degrades
// to the mean; mask-first needs at least 2 tokens.
double aggregate(const std::vector<double>& values, const AggregationSpec& spec);

struct EntityFlag {
  EntitySpan entity;
  double drop = 0.0;
  bool risky = false;
};

inline constexpr double kDefaultRiskThreshold = -8.0;

// Flags an entity as risky iff its relative drop is strictly below tau.
std::vector<EntityFlag> flag_entities(const SentenceSpan& sentence, double tau);

struct SentenceReport {
  std::string id;
  double aggregate_score = 0.0;
  std::vector<EntityFlag> flags;
};

// Full probe over one sentence: aggregate of the chosen signal plus entity
// flags at threshold tau.
SentenceReport probe(const SentenceSpan& sentence, const AggregationSpec& spec, double tau);

// Batch probe, parallel over sentences.
std::vector<SentenceReport> probe_batch(const std::vector<SentenceSpan>& sentences,
                                        const AggregationSpec& spec, double tau);

namespace serial {
std::vector<SentenceReport> probe_batch(const std::vector<SentenceSpan>& sentences,
                                        const AggregationSpec& spec, double tau);
}

// JSONL ingestion: {"sentence_id", "tokens": [{"text","logp","ref_logp"?}],
// "entities": [{"start","end","label"?}]}.
std::vector<SentenceSpan> read_sentences(std::istream& in);

nlohmann::json report_to_json(const SentenceReport& report);

}  // namespace rewardkit::crd
