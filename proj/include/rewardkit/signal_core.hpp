#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace rewardkit::core {

using ComponentId = std::string;

// One rollout's raw scores, keyed by reward-component id. Values are in
// component-native units.
struct RewardSample {
  std::string id;
  std::map<ComponentId, double> values;
};

// Component scores after reference-frozen z-scoring; every value lies in
// [-clip, +clip].
struct NormalizedSample {
  std::string id;
  std::map<ComponentId, double> values;
};

// Per-component mean/std plus the shared clip threshold, frozen once at
// estimation time. Immutable afterwards; safe to share across threads.
class FrozenStats {
 public:
  struct Moments {
    double mean = 0.0;
    double stddev = 1.0;
  };

  FrozenStats(std::map<ComponentId, Moments> components, double clip,
              std::size_t sample_count);

  const Moments& moments(const ComponentId& id) const;
  bool has(const ComponentId& id) const { return components_.count(id) != 0; }
  const std::map<ComponentId, Moments>& components() const { return components_; }
  double clip() const { return clip_; }
  std::size_t sample_count() const { return sample_count_; }

  nlohmann::json to_json() const;
  static FrozenStats from_json(const nlohmann::json& doc);

 private:
  std::map<ComponentId, Moments> components_;
  double clip_;
  std::size_t sample_count_;
};

inline constexpr double kDefaultSigmaFloor = 1e-6;

// Streaming mean/variance accumulator (Welford). merge() pools two disjoint
// accumulators, which is how parallel estimation over sample shards combines
// partial results.
struct MomentAccumulator {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double value);
  void merge(const MomentAccumulator& other);
  // Bessel-corrected sample variance; requires count >= 2.
  double sample_variance() const;
};

// Sample mean and Bessel-corrected std per component, with stddev floored at
// sigma_floor. Requires >= 2 samples, all covering the same component set.
FrozenStats estimate_frozen_stats(const std::vector<RewardSample>& samples,
                                  double sigma_floor, double delta);

// clip((raw - mean) / stddev, -clip, +clip) per component. The stats object
// is never modified; repeated calls are bit-identical.
NormalizedSample normalize(const RewardSample& sample, const FrozenStats& stats);

// Batch form of normalize; parallelized over samples when the batch is large.
std::vector<NormalizedSample> normalize_batch(const std::vector<RewardSample>& samples,
                                              const FrozenStats& stats);

// Clips each value to [mean - n_sigma*std, mean + n_sigma*std] where mean and
// std (Bessel-corrected) come from the batch itself. Requires >= 2 values.
std::vector<double> dynamic_clamp(const std::vector<double>& values, double n_sigma);

// (v - min) / (max - min); a degenerate range maps every value to 0.5.
std::vector<double> minmax_normalize(const std::vector<double>& values);

// Parses JSONL lines of {"id": string, "rewards": {component: number}}.
std::vector<RewardSample> read_reward_samples(std::istream& in);

namespace serial {
// Reference implementations kept for differential testing and benchmarks.
std::vector<NormalizedSample> normalize_batch(const std::vector<RewardSample>& samples,
                                              const FrozenStats& stats);
FrozenStats estimate_frozen_stats(const std::vector<RewardSample>& samples,
                                  double sigma_floor, double delta);
}  // namespace serial

}  // namespace rewardkit::core
