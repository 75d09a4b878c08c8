#include "rewardkit/signal_core.hpp"

#include <algorithm>
#include <cmath>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"
#include "rewardkit/parallel.hpp"

namespace rewardkit::core {

namespace {

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

void require_finite(const RewardSample& sample) {
  for (const auto& [id, value] : sample.values) {
    if (!std::isfinite(value)) {
      throw DomainError(ErrorKind::SchemaMismatch,
                        "non-finite reward for component '" + id + "'");
    }
  }
}

void require_same_keys(const RewardSample& sample, const RewardSample& reference,
                       std::size_t index) {
  if (sample.values.size() != reference.values.size() ||
      !std::equal(sample.values.begin(), sample.values.end(), reference.values.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw DomainError(ErrorKind::SchemaMismatch,
                      "sample " + std::to_string(index) +
                          " does not cover the configured component set");
  }
}

}  // namespace

void MomentAccumulator::add(double value) {
  ++count;
  double delta = value - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (value - mean);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  double delta = other.mean - mean;
  std::size_t total = count + other.count;
  double na = static_cast<double>(count);
  double nb = static_cast<double>(other.count);
  mean += delta * nb / static_cast<double>(total);
  m2 += other.m2 + delta * delta * na * nb / static_cast<double>(total);
  count = total;
}

double MomentAccumulator::sample_variance() const {
  return m2 / static_cast<double>(count - 1);
}

FrozenStats::FrozenStats(std::map<ComponentId, Moments> components, double clip,
                         std::size_t sample_count)
    : components_(std::move(components)), clip_(clip), sample_count_(sample_count) {
  if (clip_ <= 0.0) {
    throw DomainError(ErrorKind::Misuse, "clip threshold must be positive");
  }
  for (const auto& [id, m] : components_) {
    if (id.empty()) throw DomainError(ErrorKind::SchemaMismatch, "empty component id");
    if (!(m.stddev > 0.0)) {
      throw DomainError(ErrorKind::Misuse, "stddev for '" + id + "' must be positive");
    }
  }
}

const FrozenStats::Moments& FrozenStats::moments(const ComponentId& id) const {
  auto it = components_.find(id);
  if (it == components_.end()) {
    throw DomainError(ErrorKind::SchemaMismatch, "unknown component '" + id + "'");
  }
  return it->second;
}

nlohmann::json FrozenStats::to_json() const {
  nlohmann::json comps = nlohmann::json::object();
  for (const auto& [id, m] : components_) {
    comps[id] = {{"mean", m.mean}, {"std", m.stddev}};
  }
  return {{"components", comps}, {"clip", clip_}, {"sample_count", sample_count_}};
}

FrozenStats FrozenStats::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("components") || !doc.contains("clip")) {
    throw InputError("frozen-stats document needs 'components' and 'clip'");
  }
  std::map<ComponentId, Moments> comps;
  for (const auto& [id, entry] : doc.at("components").items()) {
    if (!entry.contains("mean") || !entry.contains("std")) {
      throw InputError("component '" + id + "' needs 'mean' and 'std'");
    }
    comps[id] = Moments{entry.at("mean").get<double>(), entry.at("std").get<double>()};
  }
  std::size_t n = doc.value("sample_count", std::size_t{0});
  return FrozenStats(std::move(comps), doc.at("clip").get<double>(), n);
}

namespace {

FrozenStats finish_estimate(const std::map<ComponentId, MomentAccumulator>& acc,
                            double sigma_floor, double delta, std::size_t n) {
  std::map<ComponentId, FrozenStats::Moments> moments;
  for (const auto& [id, a] : acc) {
    double stddev = std::sqrt(a.sample_variance());
    moments[id] = FrozenStats::Moments{a.mean, std::max(stddev, sigma_floor)};
  }
  return FrozenStats(std::move(moments), delta, n);
}

void check_estimate_preconditions(const std::vector<RewardSample>& samples,
                                  double sigma_floor, double delta) {
  if (samples.size() < 2) {
    throw DomainError(ErrorKind::InsufficientData,
                      "need at least 2 samples to estimate statistics, got " +
                          std::to_string(samples.size()));
  }
  if (!(sigma_floor > 0.0)) {
    throw DomainError(ErrorKind::Misuse, "sigma_floor must be positive");
  }
  if (!(delta > 0.0)) {
    throw DomainError(ErrorKind::Misuse, "delta must be positive");
  }
}

}  // namespace

namespace serial {

FrozenStats estimate_frozen_stats(const std::vector<RewardSample>& samples,
                                  double sigma_floor, double delta) {
  check_estimate_preconditions(samples, sigma_floor, delta);
  std::map<ComponentId, MomentAccumulator> acc;
  for (const auto& [id, value] : samples.front().values) {
    (void)value;
    acc[id] = MomentAccumulator{};
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_same_keys(samples[i], samples.front(), i);
    require_finite(samples[i]);
    for (const auto& [id, value] : samples[i].values) acc[id].add(value);
  }
  return finish_estimate(acc, sigma_floor, delta, samples.size());
}

std::vector<NormalizedSample> normalize_batch(const std::vector<RewardSample>& samples,
                                              const FrozenStats& stats) {
  std::vector<NormalizedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(normalize(s, stats));
  return out;
}

}  // namespace serial

FrozenStats estimate_frozen_stats(const std::vector<RewardSample>& samples,
                                  double sigma_floor, double delta) {
  check_estimate_preconditions(samples, sigma_floor, delta);
  const std::size_t n = samples.size();
  if (n < par::kGrain) return serial::estimate_frozen_stats(samples, sigma_floor, delta);

  // Fixed-size blocks keep the merge order independent of the thread count,
  // so the frozen artifact is reproducible run to run.
  constexpr std::size_t kBlock = 2048;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<std::map<ComponentId, MomentAccumulator>> partial(blocks);

  par::for_each_index(blocks, [&](std::size_t b) {
    std::size_t lo = b * kBlock;
    std::size_t hi = std::min(lo + kBlock, n);
    auto& acc = partial[b];
    for (std::size_t i = lo; i < hi; ++i) {
      require_same_keys(samples[i], samples.front(), i);
      require_finite(samples[i]);
      for (const auto& [id, value] : samples[i].values) acc[id].add(value);
    }
  });

  std::map<ComponentId, MomentAccumulator> acc = std::move(partial[0]);
  for (std::size_t b = 1; b < blocks; ++b) {
    for (auto& [id, a] : partial[b]) acc[id].merge(a);
  }
  return finish_estimate(acc, sigma_floor, delta, n);
}

NormalizedSample normalize(const RewardSample& sample, const FrozenStats& stats) {
  NormalizedSample out;
  out.id = sample.id;
  const double delta = stats.clip();
  for (const auto& [id, raw] : sample.values) {
    const auto& m = stats.moments(id);
    out.values[id] = clip((raw - m.mean) / m.stddev, -delta, delta);
  }
  return out;
}

std::vector<NormalizedSample> normalize_batch(const std::vector<RewardSample>& samples,
                                              const FrozenStats& stats) {
  std::vector<NormalizedSample> out(samples.size());
  par::for_each_index(samples.size(),
                      [&](std::size_t i) { out[i] = normalize(samples[i], stats); });
  return out;
}

std::vector<double> dynamic_clamp(const std::vector<double>& values, double n_sigma) {
  if (values.size() < 2) {
    throw DomainError(ErrorKind::InsufficientData,
                      "dynamic clamp needs at least 2 values");
  }
  if (!(n_sigma > 0.0)) {
    throw DomainError(ErrorKind::Misuse, "n_sigma must be positive");
  }
  MomentAccumulator acc;
  for (double v : values) acc.add(v);
  double stddev = std::sqrt(acc.sample_variance());
  double lo = acc.mean - n_sigma * stddev;
  double hi = acc.mean + n_sigma * stddev;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(clip(v, lo, hi));
  return out;
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
  if (values.empty()) {
    throw DomainError(ErrorKind::InsufficientData, "min-max normalize needs input");
  }
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  std::vector<double> out;
  out.reserve(values.size());
  if (lo == hi) {
    out.assign(values.size(), 0.5);
    return out;
  }
  for (double v : values) out.push_back((v - lo) / (hi - lo));
  return out;
}

std::vector<RewardSample> read_reward_samples(std::istream& in) {
  std::vector<RewardSample> samples;
  io::for_each_jsonl(in, [&](std::size_t line_no, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("rewards") || !doc.at("rewards").is_object()) {
      throw InputError("line " + std::to_string(line_no) +
                           ": expected {\"id\", \"rewards\": {...}}",
                       line_no);
    }
    RewardSample s;
    s.id = doc.value("id", "");
    for (const auto& [id, value] : doc.at("rewards").items()) {
      if (!value.is_number()) {
        throw InputError("line " + std::to_string(line_no) + ": reward '" + id +
                             "' is not a number",
                         line_no);
      }
      s.values[id] = value.get<double>();
    }
    samples.push_back(std::move(s));
  });
  return samples;
}

}  // namespace rewardkit::core
