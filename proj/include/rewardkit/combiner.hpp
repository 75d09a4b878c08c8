#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rewardkit/signal_core.hpp"

namespace rewardkit::combiner {

using core::ComponentId;
using core::NormalizedSample;

// Per-component coefficients plus the step counter. Exactly one controller
// advances a given state sequence (single-writer).
struct WeightState {
  std::map<ComponentId, double> lambda;
  std::int64_t step = 0;
};

struct EccoConfig {
  double target_ratio = 0.0;  // 0 means "use 1/K", resolved per call
  double gain = 0.1;
  double min_weight = 0.05;
  double max_weight = 20.0;

  double resolve_target(std::size_t k) const {
    return target_ratio > 0.0 ? target_ratio : 1.0 / static_cast<double>(k);
  }
};

struct TadwConfig {
  std::map<ComponentId, double> base_weights;  // missing component -> 1.0
  std::map<ComponentId, double> targets;       // missing component -> default_target
  double default_target = 0.8;
  double difficulty_gain = 1.0;   // alpha
  double risk_gain = 2.0;         // beta
  double min_weight = 0.1;
  double max_weight = 8.0;
  double confidence_steepness = 1.0;

  double base_for(const ComponentId& id) const;
  double target_for(const ComponentId& id) const;
};

// Pearson matrix over a fixed component ordering, stored row-major.
struct CorrelationMatrix {
  std::vector<ComponentId> ids;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const {
    return values[row * ids.size() + col];
  }
  double at(const ComponentId& row, const ComponentId& col) const;
};

// Batch-level statistics a controller consumes for one step: per-component
// mean reward, normalized score in [0,1], mean confidence in (0,1), and the
// cross-component correlation matrix.
struct BatchStatsView {
  std::map<ComponentId, double> reward_mean;
  std::map<ComponentId, double> score_mean;
  std::map<ComponentId, double> confidence_mean;
  CorrelationMatrix correlation;
};

struct TadwFactors {
  double difficulty = 1.0;  // W_diff
  double pessimism = 1.0;   // W_pess
  double redundancy = 1.0;  // W_red
};

// Logistic map from a normalized score to a confidence in (0,1).
double confidence_map(double score, double steepness);

// P_k = lambda_k * mean_k / sum_j lambda_j * mean_j. Throws DegenerateTotal
// when the denominator is exactly zero.
std::map<ComponentId, double> contribution_ratios(
    const WeightState& state, const std::map<ComponentId, double>& batch_means);

// One ECCO update: candidate lambda_k' = lambda_k - gain*(P_k - target).
// A candidate leaving [min_weight, max_weight] keeps the old value for that
// component; a non-positive total reward rejects the whole update. The step
// counter advances either way.
WeightState ecco_step(const WeightState& state,
                      const std::map<ComponentId, double>& batch_means,
                      const EccoConfig& cfg);

// Pearson correlation over the batch. Zero-variance columns correlate 0 with
// everything; the diagonal is forced to 1. Requires batch size >= 2.
CorrelationMatrix pearson_matrix(const std::vector<NormalizedSample>& batch);

// W_diff = exp(alpha*max(0, T_k - score)), W_pess = exp(beta*max(0, 0.5 - conf)),
// W_red = 1 / (1 + sum_{j!=k} |C_kj|).
std::map<ComponentId, TadwFactors> tadw_factors(const BatchStatsView& view,
                                                const TadwConfig& cfg);

// lambda_k = clip(base_k * W_diff * W_pess * W_red, min_weight, max_weight).
// Weights are recomputed from the factors each step (memoryless in lambda).
WeightState tadw_step(const WeightState& state, const BatchStatsView& view,
                      const TadwConfig& cfg);

// Same composition rule applied to externally supplied factors; lets callers
// ablate individual factors before composing.
WeightState tadw_apply_factors(const WeightState& state,
                               const std::map<ComponentId, TadwFactors>& factors,
                               const TadwConfig& cfg);

// R_total = sum_k lambda_k * value_k. Key sets must match exactly.
double combine(const NormalizedSample& sample, const WeightState& state);

// Builds the full controller view from a normalized batch: reward_mean is the
// per-component batch mean, score_mean its logistic image, confidence_mean the
// batch mean of per-sample logistic confidences.
BatchStatsView batch_stats_from(const std::vector<NormalizedSample>& batch,
                                double confidence_steepness);

namespace serial {
CorrelationMatrix pearson_matrix(const std::vector<NormalizedSample>& batch);
}

// Controller configuration document: {"controller": "static"|"ecco"|"tadw",
// "initial_weights"?, "ecco"?, "tadw"?}.
enum class ControllerKind { Static, Ecco, Tadw };

struct ControllerConfig {
  ControllerKind kind = ControllerKind::Static;
  std::map<ComponentId, double> initial_weights;  // missing component -> 1.0
  EccoConfig ecco;
  TadwConfig tadw;

  static ControllerConfig from_json(const nlohmann::json& doc);
};

}  // namespace rewardkit::combiner
