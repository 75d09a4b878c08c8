#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace rewardkit::pref {

enum class Strength { Significant, Moderate, Slight };

struct PreferencePair {
  double r_win = 0.0;
  double r_lose = 0.0;
  bool tie = false;
  std::optional<Strength> strength;  // metadata only, never enters a loss
};

enum class SameLossVariant {
  // -log sigmoid(|r1 - r2|), exactly as printed: decreasing in the gap.
  Literal,
  // -log sigmoid(-|r1 - r2|): minimized as the gap goes to zero. Default.
  TieConsistent,
};

// Numerically stable -log sigmoid(x), i.e. softplus(-x).
double neg_log_sigmoid(double x);

// Mean over pairs of -log sigmoid(r_win - r_lose). Rejects tie pairs.
double bt_loss(const std::vector<PreferencePair>& pairs);

// Margin loss over tie pairs; see SameLossVariant. Rejects non-tie pairs.
double same_loss(const std::vector<PreferencePair>& pairs, SameLossVariant variant);

// l_diff + lambda * l_same, lambda >= 0.
double joint_objective(double l_diff, double l_same, double lambda);

// JSONL ingestion: {"r_win", "r_lose", "tie": bool, "strength"?}.
std::vector<PreferencePair> read_pairs(std::istream& in);

std::optional<Strength> parse_strength(const std::string& name);

}  // namespace rewardkit::pref
