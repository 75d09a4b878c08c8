#include "rewardkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"

namespace rewardkit::sim {

namespace {

// Cache-free Box-Muller on top of mt19937_64: every call consumes exactly two
// engine words, so the draw schedule is identical across controller variants.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    double u1 = std::max(uniform(), 1e-300);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

Controller parse_controller(const std::string& name) {
  if (name == "static") return Controller::Static;
  if (name == "ecco") return Controller::Ecco;
  if (name == "tadw") return Controller::Tadw;
  if (name == "tadw-diff") return Controller::TadwNoDiff;
  if (name == "tadw-pess") return Controller::TadwNoPess;
  if (name == "tadw-red") return Controller::TadwNoRed;
  throw InputError("unknown controller '" + name + "'");
}

const char* to_string(Controller controller) {
  switch (controller) {
    case Controller::Static:     return "static";
    case Controller::Ecco:       return "ecco";
    case Controller::Tadw:       return "tadw";
    case Controller::TadwNoDiff: return "tadw-diff";
    case Controller::TadwNoPess: return "tadw-pess";
    case Controller::TadwNoRed:  return "tadw-red";
  }
  return "unknown";
}

void SimScenario::validate() const {
  if (profiles.empty()) throw InputError("scenario needs at least one component");
  if (horizon < 1) throw InputError("horizon must be >= 1");
  if (batch_size < 2) throw InputError("batch_size must be >= 2");
  if (init_rollouts < 2) throw InputError("init_rollouts must be >= 2");
  if (group_correlation < 0.0 || group_correlation > 1.0) {
    throw InputError("group_correlation must lie in [0,1]");
  }
  std::set<ComponentId> ids;
  for (const auto& p : profiles) {
    if (p.id.empty()) throw InputError("component profile without an id");
    if (!ids.insert(p.id).second) throw InputError("duplicate component '" + p.id + "'");
    if (p.learnability < 0.0) throw InputError("learnability must be >= 0");
    if (p.sparsity < 0.0 || p.sparsity > 1.0) throw InputError("sparsity must lie in [0,1]");
    if (!(p.ceiling > 0.0)) throw InputError("ceiling must be positive");
    if (p.noise_scale < 0.0 || p.signal_noise < 0.0) {
      throw InputError("noise scales must be >= 0");
    }
    if (p.initial_skill < 0.0 || p.initial_skill > p.ceiling) {
      throw InputError("initial skill must lie in [0, ceiling]");
    }
    for (const auto& [other, coeff] : p.interference) {
      if (coeff < 0.0) throw InputError("interference coefficients must be >= 0");
      if (other == p.id) throw InputError("component '" + p.id + "' interferes with itself");
    }
  }
  for (const auto& p : profiles) {
    for (const auto& [other, coeff] : p.interference) {
      (void)coeff;
      if (!ids.count(other)) {
        throw InputError("interference target '" + other + "' is not a component");
      }
    }
  }
}

SimScenario SimScenario::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("components")) {
    throw InputError("scenario needs a 'components' array");
  }
  SimScenario s;
  for (const auto& node : doc.at("components")) {
    ComponentProfile p;
    p.id = node.value("id", "");
    p.learnability = node.value("learnability", p.learnability);
    p.noise_scale = node.value("noise_scale", p.noise_scale);
    p.sparsity = node.value("sparsity", p.sparsity);
    p.ceiling = node.value("ceiling", p.ceiling);
    p.initial_skill = node.value("initial_skill", p.initial_skill);
    p.signal_noise = node.value("signal_noise", p.signal_noise);
    p.redundancy_group = node.value("redundancy_group", "");
    if (node.contains("interference")) {
      for (const auto& [other, coeff] : node.at("interference").items()) {
        p.interference[other] = coeff.get<double>();
      }
    }
    s.profiles.push_back(std::move(p));
  }
  s.horizon = doc.value("horizon", s.horizon);
  s.batch_size = doc.value("batch_size", s.batch_size);
  s.seed = doc.value("seed", s.seed);
  s.controller = parse_controller(doc.value("controller", "static"));
  s.group_correlation = doc.value("group_correlation", s.group_correlation);
  s.init_rollouts = doc.value("init_rollouts", s.init_rollouts);
  if (doc.contains("initial_weights")) {
    for (const auto& [id, v] : doc.at("initial_weights").items()) {
      s.initial_weights[id] = v.get<double>();
    }
  }
  nlohmann::json controller_doc = nlohmann::json::object();
  if (doc.contains("ecco")) controller_doc["ecco"] = doc.at("ecco");
  if (doc.contains("tadw")) controller_doc["tadw"] = doc.at("tadw");
  auto parsed = combiner::ControllerConfig::from_json(controller_doc);
  s.ecco = parsed.ecco;
  s.tadw = parsed.tadw;
  s.validate();
  return s;
}

namespace {

struct StepDraws {
  std::vector<bool> active;                        // per component
  std::vector<std::vector<double>> group_latent;   // [group][sample]
  std::vector<std::vector<double>> epsilon;        // [component][sample]
  std::vector<double> skill_noise;                 // per component
};

// All randomness for one step is drawn up front and unconditionally, so two
// runs that differ only in the controller see the same environment.
StepDraws draw_step(Rng& rng, const SimScenario& sc,
                    const std::vector<std::string>& groups) {
  StepDraws d;
  const std::size_t k = sc.profiles.size();
  d.active.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    d.active[c] = rng.uniform() < sc.profiles[c].sparsity;
  }
  d.group_latent.resize(groups.size());
  for (auto& latents : d.group_latent) {
    latents.resize(sc.batch_size);
    for (auto& v : latents) v = rng.normal();
  }
  d.epsilon.resize(k);
  for (auto& eps : d.epsilon) {
    eps.resize(sc.batch_size);
    for (auto& v : eps) v = rng.normal();
  }
  d.skill_noise.resize(k);
  for (auto& v : d.skill_noise) v = rng.normal();
  return d;
}

// Raw emitted value for one sample of one component; zero when silent.
double emit(const SimScenario& sc, const ComponentProfile& p, double skill, bool active,
            const StepDraws& draws, std::size_t component_index,
            const std::map<std::string, std::size_t>& group_index, std::size_t sample) {
  if (!active) return 0.0;
  double mix;
  auto it = p.redundancy_group.empty() ? group_index.end()
                                       : group_index.find(p.redundancy_group);
  if (it != group_index.end()) {
    double shared = draws.group_latent[it->second][sample];
    double own = draws.epsilon[component_index][sample];
    double rho = sc.group_correlation;
    mix = std::sqrt(rho) * shared + std::sqrt(1.0 - rho) * own;
  } else {
    mix = draws.epsilon[component_index][sample];
  }
  return skill + p.signal_noise * mix;
}

}  // namespace

std::vector<TrajectoryRow> simulate(const SimScenario& sc) {
  sc.validate();
  const std::size_t k = sc.profiles.size();
  Rng rng(sc.seed);

  std::vector<std::string> groups;
  for (const auto& p : sc.profiles) {
    if (!p.redundancy_group.empty() &&
        std::find(groups.begin(), groups.end(), p.redundancy_group) == groups.end()) {
      groups.push_back(p.redundancy_group);
    }
  }
  std::map<std::string, std::size_t> group_index;
  for (std::size_t g = 0; g < groups.size(); ++g) group_index[groups[g]] = g;

  std::vector<double> skills(k);
  for (std::size_t c = 0; c < k; ++c) skills[c] = sc.profiles[c].initial_skill;

  // Step-zero Monte Carlo rollouts freeze the normalization baseline.
  std::vector<core::RewardSample> init_samples;
  init_samples.reserve(sc.init_rollouts);
  {
    const std::size_t rollout_batches =
        (sc.init_rollouts + sc.batch_size - 1) / sc.batch_size;
    for (std::size_t b = 0; b < rollout_batches; ++b) {
      StepDraws draws = draw_step(rng, sc, groups);
      for (std::size_t i = 0; i < sc.batch_size; ++i) {
        if (init_samples.size() == sc.init_rollouts) break;
        core::RewardSample sample;
        for (std::size_t c = 0; c < k; ++c) {
          sample.values[sc.profiles[c].id] =
              emit(sc, sc.profiles[c], skills[c], draws.active[c], draws, c,
                   group_index, i);
        }
        init_samples.push_back(std::move(sample));
      }
    }
  }
  core::FrozenStats stats =
      core::estimate_frozen_stats(init_samples, core::kDefaultSigmaFloor, 5.0);

  combiner::WeightState state;
  for (const auto& p : sc.profiles) {
    auto it = sc.initial_weights.find(p.id);
    state.lambda[p.id] = it == sc.initial_weights.end() ? 1.0 : it->second;
  }

  const bool is_tadw = sc.controller == Controller::Tadw ||
                       sc.controller == Controller::TadwNoDiff ||
                       sc.controller == Controller::TadwNoPess ||
                       sc.controller == Controller::TadwNoRed;

  // Factor stats need a live signal; silent components hold their last
  // computed factors.
  std::map<ComponentId, combiner::TadwFactors> held_factors;
  for (const auto& p : sc.profiles) held_factors[p.id] = combiner::TadwFactors{};

  std::vector<TrajectoryRow> rows;
  rows.reserve(sc.horizon * k);

  for (std::size_t t = 1; t <= sc.horizon; ++t) {
    StepDraws draws = draw_step(rng, sc, groups);

    // Emit and normalize the batch. Silence shows up as a raw zero, which the
    // frozen stats map to that component's "no signal" z-score.
    std::vector<core::NormalizedSample> batch(sc.batch_size);
    for (std::size_t i = 0; i < sc.batch_size; ++i) {
      core::RewardSample sample;
      for (std::size_t c = 0; c < k; ++c) {
        sample.values[sc.profiles[c].id] =
            emit(sc, sc.profiles[c], skills[c], draws.active[c], draws, c,
                 group_index, i);
      }
      batch[i] = core::normalize(sample, stats);
    }
    std::map<ComponentId, double> batch_means;
    for (std::size_t c = 0; c < k; ++c) {
      const ComponentId& id = sc.profiles[c].id;
      double sum = 0.0;
      for (const auto& s : batch) sum += s.values.at(id);
      batch_means[id] = sum / static_cast<double>(sc.batch_size);
    }

    switch (sc.controller) {
      case Controller::Static:
        state.step += 1;
        break;
      case Controller::Ecco:
        state = combiner::ecco_step(state, batch_means, sc.ecco);
        break;
      default: {
        // View over the components that actually emitted this step.
        std::vector<core::NormalizedSample> active_batch(sc.batch_size);
        std::size_t active_count = 0;
        for (std::size_t c = 0; c < k; ++c) {
          if (!draws.active[c]) continue;
          ++active_count;
          for (std::size_t i = 0; i < sc.batch_size; ++i) {
            active_batch[i].values[sc.profiles[c].id] =
                batch[i].values.at(sc.profiles[c].id);
          }
        }
        if (active_count > 0) {
          combiner::BatchStatsView view =
              combiner::batch_stats_from(active_batch, sc.tadw.confidence_steepness);
          auto fresh = combiner::tadw_factors(view, sc.tadw);
          for (auto& [id, f] : fresh) held_factors[id] = f;
        }
        auto factors = held_factors;
        for (auto& [id, f] : factors) {
          if (sc.controller == Controller::TadwNoDiff) f.difficulty = 1.0;
          if (sc.controller == Controller::TadwNoPess) f.pessimism = 1.0;
          if (sc.controller == Controller::TadwNoRed) f.redundancy = 1.0;
        }
        state = combiner::tadw_apply_factors(state, factors, sc.tadw);
        break;
      }
    }

    double total = 0.0;
    for (const auto& [id, mean] : batch_means) total += state.lambda.at(id) * mean;

    // Skill dynamics: weight share converts into saturating progress, other
    // components' gains erode it, then the per-step perturbation lands.
    double lambda_sum = 0.0;
    for (const auto& [id, l] : state.lambda) lambda_sum += l;
    std::vector<double> raw_gain(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      if (!draws.active[c]) continue;
      const auto& p = sc.profiles[c];
      double share = state.lambda.at(p.id) / lambda_sum;
      raw_gain[c] = p.learnability * share * (p.ceiling - skills[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto& p = sc.profiles[c];
      double drain = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        auto it = p.interference.find(sc.profiles[j].id);
        if (it != p.interference.end()) drain += it->second * raw_gain[j];
      }
      skills[c] = clip(skills[c] + raw_gain[c] - drain +
                           p.noise_scale * draws.skill_noise[c],
                       0.0, p.ceiling);
    }

    for (std::size_t c = 0; c < k; ++c) {
      const auto& p = sc.profiles[c];
      TrajectoryRow row;
      row.step = t;
      row.component = p.id;
      row.skill = skills[c];
      row.reward_mean = batch_means.at(p.id);
      row.lambda = state.lambda.at(p.id);
      row.total = total;
      if (is_tadw) {
        const auto& f = held_factors.at(p.id);
        row.w_diff = f.difficulty;
        row.w_pess = f.pessimism;
        row.w_red = f.redundancy;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double oscillation_metric(const std::vector<double>& lambda_series) {
  if (lambda_series.size() < 2) {
    throw DomainError(ErrorKind::InsufficientData,
                      "oscillation metric needs at least 2 steps");
  }
  std::vector<double> diffs;
  diffs.reserve(lambda_series.size() - 1);
  for (std::size_t i = 1; i < lambda_series.size(); ++i) {
    diffs.push_back(lambda_series[i] - lambda_series[i - 1]);
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(diffs.size());
  return std::sqrt(var);
}

bool collapse_detect(const std::vector<double>& scores, double fraction) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw DomainError(ErrorKind::Misuse, "fraction must lie in (0,1)");
  }
  if (scores.empty()) return false;
  double peak = *std::max_element(scores.begin(), scores.end());
  if (!(peak > 0.0)) return false;
  std::size_t tail = (scores.size() + 3) / 4;
  double tail_mean = 0.0;
  for (std::size_t i = scores.size() - tail; i < scores.size(); ++i) {
    tail_mean += scores[i];
  }
  tail_mean /= static_cast<double>(tail);
  return tail_mean < fraction * peak;
}

namespace {

std::vector<double> extract(const std::vector<TrajectoryRow>& rows, const ComponentId& id,
                            double TrajectoryRow::* field) {
  std::vector<double> out;
  for (const auto& row : rows) {
    if (row.component == id) out.push_back(row.*field);
  }
  return out;
}

}  // namespace

std::vector<double> lambda_series(const std::vector<TrajectoryRow>& rows,
                                  const ComponentId& id) {
  return extract(rows, id, &TrajectoryRow::lambda);
}

std::vector<double> skill_series(const std::vector<TrajectoryRow>& rows,
                                 const ComponentId& id) {
  return extract(rows, id, &TrajectoryRow::skill);
}

std::vector<double> reward_series(const std::vector<TrajectoryRow>& rows,
                                  const ComponentId& id) {
  return extract(rows, id, &TrajectoryRow::reward_mean);
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  out << "step,component,skill,reward_mean,lambda,w_diff,w_pess,w_red,total\n";
  for (const auto& row : rows) {
    out << row.step << ',' << io::csv_field(row.component) << ','
        << io::format_number(row.skill) << ',' << io::format_number(row.reward_mean)
        << ',' << io::format_number(row.lambda) << ','
        << (row.w_diff ? io::format_number(*row.w_diff) : "") << ','
        << (row.w_pess ? io::format_number(*row.w_pess) : "") << ','
        << (row.w_red ? io::format_number(*row.w_red) : "") << ','
        << io::format_number(row.total) << '\n';
  }
}

}  // namespace rewardkit::sim
