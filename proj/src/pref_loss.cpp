#include "rewardkit/pref_loss.hpp"

#include <cmath>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"

namespace rewardkit::pref {

double neg_log_sigmoid(double x) {
  // softplus(-x), split to avoid overflow on either tail
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double bt_loss(const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) {
    throw DomainError(ErrorKind::InsufficientData, "bt_loss over no pairs");
  }
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (p.tie) {
      throw DomainError(ErrorKind::Misuse, "bt_loss received a tie pair");
    }
    sum += neg_log_sigmoid(p.r_win - p.r_lose);
  }
  return sum / static_cast<double>(pairs.size());
}

double same_loss(const std::vector<PreferencePair>& pairs, SameLossVariant variant) {
  if (pairs.empty()) {
    throw DomainError(ErrorKind::InsufficientData, "same_loss over no pairs");
  }
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (!p.tie) {
      throw DomainError(ErrorKind::Misuse, "same_loss received a non-tie pair");
    }
    double gap = std::abs(p.r_win - p.r_lose);
    sum += variant == SameLossVariant::Literal ? neg_log_sigmoid(gap)
                                               : neg_log_sigmoid(-gap);
  }
  return sum / static_cast<double>(pairs.size());
}

double joint_objective(double l_diff, double l_same, double lambda) {
  if (lambda < 0.0) {
    throw DomainError(ErrorKind::Misuse, "lambda must be non-negative");
  }
  return l_diff + lambda * l_same;
}

std::optional<Strength> parse_strength(const std::string& name) {
  if (name == "significant") return Strength::Significant;
  if (name == "moderate") return Strength::Moderate;
  if (name == "slight") return Strength::Slight;
  return std::nullopt;
}

std::vector<PreferencePair> read_pairs(std::istream& in) {
  std::vector<PreferencePair> pairs;
  io::for_each_jsonl(in, [&](std::size_t line_no, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("r_win") || !doc.contains("r_lose")) {
      throw InputError("line " + std::to_string(line_no) +
                           ": expected {\"r_win\", \"r_lose\", \"tie\"?}",
                       line_no);
    }
    PreferencePair p;
    p.r_win = doc.at("r_win").get<double>();
    p.r_lose = doc.at("r_lose").get<double>();
    p.tie = doc.value("tie", false);
    if (doc.contains("strength")) {
      auto s = parse_strength(doc.at("strength").get<std::string>());
      if (!s) {
        throw InputError("line " + std::to_string(line_no) + ": unknown strength label",
                         line_no);
      }
      p.strength = s;
    }
    if (!std::isfinite(p.r_win) || !std::isfinite(p.r_lose)) {
      throw InputError("line " + std::to_string(line_no) + ": rewards must be finite",
                       line_no);
    }
    pairs.push_back(p);
  });
  return pairs;
}

}  // namespace rewardkit::pref
