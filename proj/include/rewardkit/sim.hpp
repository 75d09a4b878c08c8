#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rewardkit/combiner.hpp"
#include "rewardkit/signal_core.hpp"

namespace rewardkit::sim {

using core::ComponentId;

// How one synthetic reward component behaves: how fast skill converts weight
// share into progress, how noisy and how sparse its signal is, and how much
// other components' progress erodes it.
struct ComponentProfile {
  ComponentId id;
  double learnability = 0.1;   // skill gain per unit weight share per step
  double noise_scale = 0.0;    // std of per-step skill perturbation
  double sparsity = 1.0;       // probability a signal is emitted this step
  double ceiling = 1.0;        // max attainable skill
  double initial_skill = 0.0;
  double signal_noise = 0.1;   // std of emitted reward samples around skill
  std::map<ComponentId, double> interference;  // skill lost per unit gain of j
  std::string redundancy_group;                // components sharing a latent signal
};

enum class Controller { Static, Ecco, Tadw, TadwNoDiff, TadwNoPess, TadwNoRed };

Controller parse_controller(const std::string& name);
const char* to_string(Controller controller);

struct SimScenario {
  std::vector<ComponentProfile> profiles;
  std::size_t horizon = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Controller controller = Controller::Static;
  double group_correlation = 0.95;
  std::size_t init_rollouts = 512;  // Monte Carlo rollouts freezing the stats
  combiner::EccoConfig ecco;
  combiner::TadwConfig tadw;
  std::map<ComponentId, double> initial_weights;

  void validate() const;
  static SimScenario from_json(const nlohmann::json& doc);
};

struct TrajectoryRow {
  std::size_t step = 0;
  ComponentId component;
  double skill = 0.0;
  double reward_mean = 0.0;  // normalized batch mean the controller saw
  double lambda = 0.0;
  std::optional<double> w_diff;
  std::optional<double> w_pess;
  std::optional<double> w_red;
  double total = 0.0;  // weighted total over batch means
};

// Seeded rollout of the full loop: emit noisy per-component reward batches,
// reference-freeze normalization at step zero, advance the chosen controller,
// grow skills under weight share, interference and noise. Deterministic for
// a fixed scenario and seed.
std::vector<TrajectoryRow> simulate(const SimScenario& scenario);

// Population std of the first difference of a weight series.
double oscillation_metric(const std::vector<double>& lambda_series);

// True when the mean over the final quarter falls below fraction times the
// series peak. A non-positive peak never counts as a collapse.
bool collapse_detect(const std::vector<double>& scores, double fraction);

// Column extraction helpers over a trajectory.
std::vector<double> lambda_series(const std::vector<TrajectoryRow>& rows,
                                  const ComponentId& id);
std::vector<double> skill_series(const std::vector<TrajectoryRow>& rows,
                                 const ComponentId& id);
std::vector<double> reward_series(const std::vector<TrajectoryRow>& rows,
                                  const ComponentId& id);

// RFC 4180 CSV with header: step, component, skill, reward_mean, lambda,
// w_diff, w_pess, w_red, total. Factor cells stay empty off TADW.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

}  // namespace rewardkit::sim
