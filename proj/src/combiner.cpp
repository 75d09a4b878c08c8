#include "rewardkit/combiner.hpp"

#include <algorithm>
#include <cmath>

#include "rewardkit/error.hpp"
#include "rewardkit/parallel.hpp"

namespace rewardkit::combiner {

namespace {

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

void require_matching_keys(const std::map<ComponentId, double>& a,
                           const std::map<ComponentId, double>& b,
                           const char* what) {
  if (a.size() != b.size() ||
      !std::equal(a.begin(), a.end(), b.begin(),
                  [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw DomainError(ErrorKind::SchemaMismatch, std::string(what) + ": component sets differ");
  }
}

}  // namespace

double TadwConfig::base_for(const ComponentId& id) const {
  auto it = base_weights.find(id);
  return it == base_weights.end() ? 1.0 : it->second;
}

double TadwConfig::target_for(const ComponentId& id) const {
  auto it = targets.find(id);
  return it == targets.end() ? default_target : it->second;
}

double CorrelationMatrix::at(const ComponentId& row, const ComponentId& col) const {
  auto idx = [&](const ComponentId& id) {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) {
      throw DomainError(ErrorKind::SchemaMismatch, "component '" + id + "' not in matrix");
    }
    return static_cast<std::size_t>(it - ids.begin());
  };
  return at(idx(row), idx(col));
}

double confidence_map(double score, double steepness) {
  if (!(steepness > 0.0)) {
    throw DomainError(ErrorKind::Misuse, "confidence steepness must be positive");
  }
  return 1.0 / (1.0 + std::exp(-steepness * score));
}

std::map<ComponentId, double> contribution_ratios(
    const WeightState& state, const std::map<ComponentId, double>& batch_means) {
  require_matching_keys(state.lambda, batch_means, "contribution_ratios");
  if (state.lambda.empty()) {
    throw DomainError(ErrorKind::SchemaMismatch, "empty component set");
  }
  double total = 0.0;
  for (const auto& [id, lambda] : state.lambda) total += lambda * batch_means.at(id);
  if (total == 0.0) {
    throw DomainError(ErrorKind::DegenerateTotal, "total weighted reward is zero");
  }
  std::map<ComponentId, double> ratios;
  for (const auto& [id, lambda] : state.lambda) {
    ratios[id] = lambda * batch_means.at(id) / total;
  }
  return ratios;
}

WeightState ecco_step(const WeightState& state,
                      const std::map<ComponentId, double>& batch_means,
                      const EccoConfig& cfg) {
  require_matching_keys(state.lambda, batch_means, "ecco_step");
  WeightState next = state;
  next.step = state.step + 1;

  double total = 0.0;
  for (const auto& [id, lambda] : state.lambda) total += lambda * batch_means.at(id);
  // Rollback: a non-positive total makes the ratio ill-defined, so the whole
  // update is rejected and only the step counter moves.
  if (total <= 0.0) return next;

  const double target = cfg.resolve_target(state.lambda.size());
  for (auto& [id, lambda] : next.lambda) {
    double ratio = state.lambda.at(id) * batch_means.at(id) / total;
    double error = cfg.gain * (ratio - target);
    double candidate = state.lambda.at(id) - error;
    if (candidate >= cfg.min_weight && candidate <= cfg.max_weight) {
      lambda = candidate;
    }
    // Out-of-bound candidates freeze the component at its previous weight.
  }
  return next;
}

namespace {

CorrelationMatrix pearson_impl(const std::vector<NormalizedSample>& batch, bool parallel) {
  if (batch.size() < 2) {
    throw DomainError(ErrorKind::InsufficientData,
                      "correlation needs a batch of at least 2 samples");
  }
  std::vector<ComponentId> ids;
  for (const auto& [id, v] : batch.front().values) {
    (void)v;
    ids.push_back(id);
  }
  const std::size_t k = ids.size();
  const std::size_t n = batch.size();

  // Column-major copy so the pair loop walks contiguous memory.
  std::vector<double> columns(k * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].values.size() != k) {
      throw DomainError(ErrorKind::SchemaMismatch,
                        "sample " + std::to_string(i) + " has a different component set");
    }
    std::size_t c = 0;
    for (const auto& [id, value] : batch[i].values) {
      if (id != ids[c]) {
        throw DomainError(ErrorKind::SchemaMismatch,
                          "sample " + std::to_string(i) + " has a different component set");
      }
      columns[c * n + i] = value;
      ++c;
    }
  }

  std::vector<double> means(k, 0.0), sq_dev(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double* col = &columns[c * n];
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += col[i];
    m /= static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (col[i] - m) * (col[i] - m);
    means[c] = m;
    sq_dev[c] = s;
  }

  CorrelationMatrix out;
  out.ids = ids;
  out.values.assign(k * k, 0.0);
  for (std::size_t c = 0; c < k; ++c) out.values[c * k + c] = 1.0;

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) pairs.emplace_back(a, b);
  }
  auto fill_pair = [&](std::size_t p) {
    auto [a, b] = pairs[p];
    double corr = 0.0;
    if (sq_dev[a] > 0.0 && sq_dev[b] > 0.0) {
      const double* ca = &columns[a * n];
      const double* cb = &columns[b * n];
      double cov = 0.0;
      for (std::size_t i = 0; i < n; ++i) cov += (ca[i] - means[a]) * (cb[i] - means[b]);
      corr = cov / std::sqrt(sq_dev[a] * sq_dev[b]);
      corr = clip(corr, -1.0, 1.0);
    }
    out.values[a * k + b] = corr;
    out.values[b * k + a] = corr;
  };
  if (parallel && pairs.size() * n >= par::kGrain) {
    par::for_each_index(pairs.size(), fill_pair);
  } else {
    for (std::size_t p = 0; p < pairs.size(); ++p) fill_pair(p);
  }
  return out;
}

}  // namespace

CorrelationMatrix pearson_matrix(const std::vector<NormalizedSample>& batch) {
  return pearson_impl(batch, true);
}

namespace serial {
CorrelationMatrix pearson_matrix(const std::vector<NormalizedSample>& batch) {
  return pearson_impl(batch, false);
}
}  // namespace serial

std::map<ComponentId, TadwFactors> tadw_factors(const BatchStatsView& view,
                                                const TadwConfig& cfg) {
  std::map<ComponentId, TadwFactors> out;
  const std::size_t k = view.correlation.ids.size();
  for (std::size_t row = 0; row < k; ++row) {
    const ComponentId& id = view.correlation.ids[row];
    TadwFactors f;
    double score = view.score_mean.at(id);
    double conf = view.confidence_mean.at(id);
    f.difficulty = std::exp(cfg.difficulty_gain * std::max(0.0, cfg.target_for(id) - score));
    f.pessimism = std::exp(cfg.risk_gain * std::max(0.0, 0.5 - conf));
    double redundancy_sum = 0.0;
    for (std::size_t col = 0; col < k; ++col) {
      if (col != row) redundancy_sum += std::abs(view.correlation.at(row, col));
    }
    f.redundancy = 1.0 / (1.0 + redundancy_sum);
    out[id] = f;
  }
  return out;
}

WeightState tadw_apply_factors(const WeightState& state,
                               const std::map<ComponentId, TadwFactors>& factors,
                               const TadwConfig& cfg) {
  WeightState next = state;
  next.step = state.step + 1;
  for (auto& [id, lambda] : next.lambda) {
    auto it = factors.find(id);
    if (it == factors.end()) continue;  // no fresh stats for this component
    const TadwFactors& f = it->second;
    lambda = clip(cfg.base_for(id) * f.difficulty * f.pessimism * f.redundancy,
                  cfg.min_weight, cfg.max_weight);
  }
  return next;
}

WeightState tadw_step(const WeightState& state, const BatchStatsView& view,
                      const TadwConfig& cfg) {
  return tadw_apply_factors(state, tadw_factors(view, cfg), cfg);
}

double combine(const NormalizedSample& sample, const WeightState& state) {
  if (sample.values.empty()) {
    throw DomainError(ErrorKind::SchemaMismatch, "combine: empty component set");
  }
  require_matching_keys(sample.values, state.lambda, "combine");
  double total = 0.0;
  for (const auto& [id, value] : sample.values) total += state.lambda.at(id) * value;
  return total;
}

BatchStatsView batch_stats_from(const std::vector<NormalizedSample>& batch,
                                double confidence_steepness) {
  if (batch.empty()) {
    throw DomainError(ErrorKind::InsufficientData, "empty batch");
  }
  BatchStatsView view;
  view.correlation = pearson_matrix(batch);
  const double n = static_cast<double>(batch.size());
  for (const auto& id : view.correlation.ids) {
    double sum = 0.0, conf_sum = 0.0;
    for (const auto& sample : batch) {
      double v = sample.values.at(id);
      sum += v;
      conf_sum += confidence_map(v, confidence_steepness);
    }
    double mean = sum / n;
    view.reward_mean[id] = mean;
    view.score_mean[id] = confidence_map(mean, confidence_steepness);
    view.confidence_mean[id] = conf_sum / n;
  }
  return view;
}

ControllerConfig ControllerConfig::from_json(const nlohmann::json& doc) {
  ControllerConfig cfg;
  if (!doc.is_object()) throw InputError("controller config must be a JSON object");
  std::string kind = doc.value("controller", "static");
  if (kind == "static") {
    cfg.kind = ControllerKind::Static;
  } else if (kind == "ecco") {
    cfg.kind = ControllerKind::Ecco;
  } else if (kind == "tadw") {
    cfg.kind = ControllerKind::Tadw;
  } else {
    throw InputError("unknown controller '" + kind + "'");
  }
  if (doc.contains("initial_weights")) {
    for (const auto& [id, v] : doc.at("initial_weights").items()) {
      cfg.initial_weights[id] = v.get<double>();
    }
  }
  if (doc.contains("ecco")) {
    const auto& e = doc.at("ecco");
    cfg.ecco.target_ratio = e.value("target_ratio", 0.0);
    cfg.ecco.gain = e.value("gain", cfg.ecco.gain);
    cfg.ecco.min_weight = e.value("min_weight", cfg.ecco.min_weight);
    cfg.ecco.max_weight = e.value("max_weight", cfg.ecco.max_weight);
    if (!(cfg.ecco.gain > 0.0) || !(cfg.ecco.min_weight > 0.0) ||
        !(cfg.ecco.min_weight < cfg.ecco.max_weight)) {
      throw InputError("ecco config needs gain > 0 and 0 < min_weight < max_weight");
    }
    if (cfg.ecco.target_ratio < 0.0 || cfg.ecco.target_ratio >= 1.0) {
      throw InputError("ecco target_ratio must lie in (0,1), or 0 for 1/K");
    }
  }
  if (doc.contains("tadw")) {
    const auto& t = doc.at("tadw");
    if (t.contains("base_weights")) {
      for (const auto& [id, v] : t.at("base_weights").items()) {
        cfg.tadw.base_weights[id] = v.get<double>();
      }
    }
    if (t.contains("targets")) {
      for (const auto& [id, v] : t.at("targets").items()) {
        cfg.tadw.targets[id] = v.get<double>();
      }
    }
    cfg.tadw.default_target = t.value("default_target", cfg.tadw.default_target);
    cfg.tadw.difficulty_gain = t.value("difficulty_gain", cfg.tadw.difficulty_gain);
    cfg.tadw.risk_gain = t.value("risk_gain", cfg.tadw.risk_gain);
    cfg.tadw.min_weight = t.value("min_weight", cfg.tadw.min_weight);
    cfg.tadw.max_weight = t.value("max_weight", cfg.tadw.max_weight);
    cfg.tadw.confidence_steepness =
        t.value("confidence_steepness", cfg.tadw.confidence_steepness);
    if (!(cfg.tadw.difficulty_gain > 0.0) || !(cfg.tadw.risk_gain > 0.0) ||
        !(cfg.tadw.min_weight > 0.0) || !(cfg.tadw.min_weight < cfg.tadw.max_weight) ||
        !(cfg.tadw.confidence_steepness > 0.0)) {
      throw InputError("tadw config needs positive gains and 0 < min_weight < max_weight");
    }
    for (const auto& [id, target] : cfg.tadw.targets) {
      if (target < 0.0 || target > 1.0) {
        throw InputError("tadw target for '" + id + "' must lie in [0,1]");
      }
    }
  }
  return cfg;
}

}  // namespace rewardkit::combiner
