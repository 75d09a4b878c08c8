#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "rewardkit/combiner.hpp"
#include "rewardkit/error.hpp"

using namespace rewardkit;
using namespace rewardkit::combiner;

namespace {

WeightState make_state(std::map<ComponentId, double> lambda) {
  WeightState s;
  s.lambda = std::move(lambda);
  return s;
}

NormalizedSample make_sample(std::map<ComponentId, double> values) {
  NormalizedSample s;
  s.values = std::move(values);
  return s;
}

// Independent two-column correlation: plain textbook double loop.
double pearson_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (xs[i] - mx) * (ys[i] - my);
    vx += (xs[i] - mx) * (xs[i] - mx);
    vy += (ys[i] - my) * (ys[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("contribution ratios split the weighted total") {
  auto ratios = contribution_ratios(make_state({{"a", 1.0}, {"b", 1.0}}),
                                    {{"a", 3.0}, {"b", 1.0}});
  CHECK(ratios.at("a") == doctest::Approx(0.75));
  CHECK(ratios.at("b") == doctest::Approx(0.25));
}

TEST_CASE("equal means give equal ratios") {
  for (double c : {0.5, -2.0, 7.0}) {
    auto ratios = contribution_ratios(make_state({{"a", 1.0}, {"b", 1.0}}),
                                      {{"a", c}, {"b", c}});
    CHECK(ratios.at("a") == doctest::Approx(0.5));
    CHECK(ratios.at("b") == doctest::Approx(0.5));
  }
}

TEST_CASE("zero denominator is a degenerate total") {
  CHECK_THROWS_AS(contribution_ratios(make_state({{"a", 1.0}, {"b", 1.0}}),
                                      {{"a", 1.0}, {"b", -1.0}}),
                  DomainError);
}

TEST_CASE("ratios sum to one over random configurations") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> weight(0.1, 5.0);
  std::uniform_real_distribution<double> mean(-2.0, 2.0);
  int kept = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::size_t k = 2 + rng() % 5;
    WeightState state;
    std::map<ComponentId, double> means;
    for (std::size_t c = 0; c < k; ++c) {
      std::string id = "c" + std::to_string(c);
      state.lambda[id] = weight(rng);
      means[id] = mean(rng);
    }
    double total = 0.0;
    for (const auto& [id, l] : state.lambda) total += l * means.at(id);
    if (total == 0.0) continue;
    auto ratios = contribution_ratios(state, means);
    double sum = 0.0;
    for (const auto& [id, r] : ratios) sum += r;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    ++kept;
  }
  CHECK(kept > 9000);
}

TEST_CASE("ecco step follows the error-feedback update") {
  EccoConfig cfg;
  cfg.target_ratio = 0.5;
  cfg.gain = 0.2;
  cfg.min_weight = 0.1;
  cfg.max_weight = 10.0;
  auto next = ecco_step(make_state({{"a", 1.0}, {"b", 1.0}}), {{"a", 3.0}, {"b", 1.0}}, cfg);
  CHECK(next.lambda.at("a") == doctest::Approx(0.95));
  CHECK(next.lambda.at("b") == doctest::Approx(1.05));
  CHECK(next.step == 1);
}

TEST_CASE("ecco is a fixed point at the target ratio") {
  EccoConfig cfg;
  auto state = make_state({{"a", 1.0}, {"b", 1.0}});
  auto next = ecco_step(state, {{"a", 2.0}, {"b", 2.0}}, cfg);
  CHECK(next.lambda.at("a") == doctest::Approx(1.0));
  CHECK(next.lambda.at("b") == doctest::Approx(1.0));
}

TEST_CASE("ecco rolls back on a non-positive total") {
  EccoConfig cfg;
  auto state = make_state({{"a", 1.0}, {"b", 1.0}});
  auto negative = ecco_step(state, {{"a", -3.0}, {"b", 1.0}}, cfg);
  CHECK(negative.lambda == state.lambda);
  CHECK(negative.step == 1);
  auto zero = ecco_step(state, {{"a", 1.0}, {"b", -1.0}}, cfg);
  CHECK(zero.lambda == state.lambda);
}

TEST_CASE("ecco keeps weights inside the bounds over random runs") {
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> mean(-1.0, 3.0);
  EccoConfig cfg;
  cfg.gain = 0.5;
  cfg.min_weight = 0.05;
  cfg.max_weight = 2.0;
  for (int trial = 0; trial < 200; ++trial) {
    WeightState state = make_state({{"a", 1.0}, {"b", 1.0}, {"c", 1.0}});
    for (int t = 0; t < 50; ++t) {
      std::map<ComponentId, double> means;
      for (const auto& [id, l] : state.lambda) means[id] = mean(rng);
      WeightState prev = state;
      state = ecco_step(state, means, cfg);
      for (const auto& [id, l] : state.lambda) {
        CHECK(l >= cfg.min_weight);
        CHECK(l <= cfg.max_weight);
      }
      CHECK(state.step == prev.step + 1);
    }
  }
}

TEST_CASE("ecco freezes only the out-of-bound component") {
  EccoConfig cfg;
  cfg.target_ratio = 0.5;
  cfg.gain = 0.2;
  cfg.min_weight = 0.95;
  cfg.max_weight = 1.2;
  // Component a's candidate (0.902) leaves the band; b's (1.098) stays legal.
  auto next = ecco_step(make_state({{"a", 1.0}, {"b", 1.0}}), {{"a", 99.0}, {"b", 1.0}}, cfg);
  CHECK(next.lambda.at("a") == 1.0);  // frozen
  CHECK(next.lambda.at("b") == doctest::Approx(1.098));
}

TEST_CASE("pearson matrix recovers perfect correlation and anticorrelation") {
  std::vector<NormalizedSample> batch;
  for (double v : {-1.0, 0.5, 2.0, 3.5}) {
    batch.push_back(make_sample({{"x", v}, {"y", v}, {"z", -v}}));
  }
  auto c = pearson_matrix(batch);
  CHECK(c.at("x", "y") == doctest::Approx(1.0));
  CHECK(c.at("x", "z") == doctest::Approx(-1.0));
  CHECK(c.at("x", "x") == 1.0);
}

TEST_CASE("zero-variance columns correlate to zero") {
  std::vector<NormalizedSample> batch;
  for (double v : {1.0, 2.0, 3.0}) {
    batch.push_back(make_sample({{"x", v}, {"flat", 7.0}}));
  }
  auto c = pearson_matrix(batch);
  CHECK(c.at("x", "flat") == 0.0);
  CHECK(c.at("flat", "flat") == 1.0);
}

TEST_CASE("pearson needs two samples") {
  CHECK_THROWS_AS(pearson_matrix({make_sample({{"x", 1.0}})}), DomainError);
}

TEST_CASE("pearson matches the double-loop oracle on small batches") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> value(-2.0, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 2 + rng() % 63;
    std::vector<double> xs(n), ys(n), zs(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = value(rng);
      ys[i] = value(rng);
      zs[i] = 0.3 * xs[i] + value(rng);
    }
    std::vector<NormalizedSample> batch;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(make_sample({{"x", xs[i]}, {"y", ys[i]}, {"z", zs[i]}}));
    }
    auto c = pearson_matrix(batch);
    CHECK(c.at("x", "y") == doctest::Approx(pearson_oracle(xs, ys)).epsilon(1e-9));
    CHECK(c.at("x", "z") == doctest::Approx(pearson_oracle(xs, zs)).epsilon(1e-9));
    CHECK(c.at("y", "z") == doctest::Approx(pearson_oracle(ys, zs)).epsilon(1e-9));
    CHECK(c.at("x", "y") == c.at("y", "x"));
  }
}

TEST_CASE("independent columns decorrelate on a large seeded batch") {
  std::mt19937 rng(43);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> xs(10000), ys(10000);
  std::vector<NormalizedSample> batch;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = dist(rng);
    ys[i] = dist(rng);
    batch.push_back(make_sample({{"x", xs[i]}, {"y", ys[i]}}));
  }
  auto c = pearson_matrix(batch);
  CHECK(std::abs(c.at("x", "y")) < 0.05);
  CHECK(c.at("x", "y") == doctest::Approx(pearson_oracle(xs, ys)).epsilon(1e-9));
}

TEST_CASE("parallel pearson matches the serial reference") {
  std::mt19937 rng(47);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<NormalizedSample> batch;
  for (int i = 0; i < 4000; ++i) {
    std::map<ComponentId, double> values;
    for (int c = 0; c < 6; ++c) values["c" + std::to_string(c)] = dist(rng);
    batch.push_back(make_sample(std::move(values)));
  }
  auto fast = pearson_matrix(batch);
  auto slow = serial::pearson_matrix(batch);
  CHECK(fast.ids == slow.ids);
  for (std::size_t i = 0; i < fast.values.size(); ++i) {
    CHECK(fast.values[i] == slow.values[i]);
  }
}

namespace {

BatchStatsView make_view(std::map<ComponentId, double> score,
                         std::map<ComponentId, double> conf,
                         std::vector<ComponentId> ids,
                         std::vector<double> corr) {
  BatchStatsView v;
  v.score_mean = std::move(score);
  v.confidence_mean = std::move(conf);
  for (const auto& [id, s] : v.score_mean) v.reward_mean[id] = s;
  v.correlation.ids = std::move(ids);
  v.correlation.values = std::move(corr);
  return v;
}

}  // namespace

TEST_CASE("tadw factors sit at one on their boundaries") {
  TadwConfig cfg;
  cfg.targets = {{"a", 0.8}};
  auto factors = tadw_factors(
      make_view({{"a", 0.8}}, {{"a", 0.5}}, {"a"}, {1.0}), cfg);
  CHECK(factors.at("a").difficulty == 1.0);
  CHECK(factors.at("a").pessimism == 1.0);
  CHECK(factors.at("a").redundancy == 1.0);
}

TEST_CASE("tadw difficulty factor grows exponentially below target") {
  TadwConfig cfg;
  cfg.targets = {{"a", 0.8}};
  cfg.difficulty_gain = 1.0;
  auto factors = tadw_factors(
      make_view({{"a", 0.3}}, {{"a", 0.9}}, {"a"}, {1.0}), cfg);
  CHECK(factors.at("a").difficulty == doctest::Approx(std::exp(0.5)));
}

TEST_CASE("tadw redundancy factor divides by accumulated correlation") {
  TadwConfig cfg;
  cfg.targets = {{"a", 0.0}, {"b", 0.0}, {"c", 0.0}};
  auto view = make_view({{"a", 0.5}, {"b", 0.5}, {"c", 0.5}},
                        {{"a", 0.5}, {"b", 0.5}, {"c", 0.5}},
                        {"a", "b", "c"},
                        {1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0});
  auto factors = tadw_factors(view, cfg);
  CHECK(factors.at("a").redundancy == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("tadw step composes and clips") {
  TadwConfig cfg;
  cfg.max_weight = 6.0;
  cfg.min_weight = 0.1;

  WeightState state = make_state({{"a", 1.0}});
  std::map<ComponentId, TadwFactors> factors;
  factors["a"] = TadwFactors{std::exp(2.0), std::exp(1.0), 1.0};
  auto clipped = tadw_apply_factors(state, factors, cfg);
  CHECK(clipped.lambda.at("a") == 6.0);
  CHECK(clipped.step == 1);

  factors["a"] = TadwFactors{1.0, 1.0, 1.0};
  cfg.base_weights = {{"a", 0.5}};
  cfg.min_weight = 1.0;
  auto raised = tadw_apply_factors(state, factors, cfg);
  CHECK(raised.lambda.at("a") == 1.0);

  cfg.base_weights = {{"a", 1.0}};
  auto identity = tadw_apply_factors(state, factors, cfg);
  CHECK(identity.lambda.at("a") == 1.0);
}

TEST_CASE("tadw anchors and monotonicity over random perturbations") {
  std::mt19937 rng(53);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TadwConfig cfg;
  cfg.difficulty_gain = 1.3;
  cfg.risk_gain = 2.0;
  for (int trial = 0; trial < 10000; ++trial) {
    double target = unit(rng);
    cfg.targets = {{"a", target}};
    double s1 = unit(rng), s2 = unit(rng);
    double p1 = 0.001 + 0.998 * unit(rng), p2 = 0.001 + 0.998 * unit(rng);
    double c1 = unit(rng), c2 = unit(rng);

    auto f1 = tadw_factors(make_view({{"a", s1}, {"b", 0.5}},
                                     {{"a", p1}, {"b", 0.5}}, {"a", "b"},
                                     {1.0, c1, c1, 1.0}),
                           cfg);
    auto f2 = tadw_factors(make_view({{"a", s2}, {"b", 0.5}},
                                     {{"a", p2}, {"b", 0.5}}, {"a", "b"},
                                     {1.0, c2, c2, 1.0}),
                           cfg);
    // Anchors
    if (s1 >= target) CHECK(f1.at("a").difficulty == 1.0);
    if (p1 >= 0.5) CHECK(f1.at("a").pessimism == 1.0);
    // Monotonicity in each driver
    if (s1 < s2) CHECK(f1.at("a").difficulty >= f2.at("a").difficulty);
    if (p1 < p2) CHECK(f1.at("a").pessimism >= f2.at("a").pessimism);
    if (c1 < c2) CHECK(f1.at("a").redundancy >= f2.at("a").redundancy);

    // Bound safety after composition
    WeightState state = make_state({{"a", unit(rng) * 5.0 + 0.01}, {"b", 1.0}});
    auto next = tadw_step(state,
                          make_view({{"a", s1}, {"b", 0.5}}, {{"a", p1}, {"b", 0.5}},
                                    {"a", "b"}, {1.0, c1, c1, 1.0}),
                          cfg);
    for (const auto& [id, l] : next.lambda) {
      CHECK(l >= cfg.min_weight);
      CHECK(l <= cfg.max_weight);
    }
  }
}

TEST_CASE("confidence map is the logistic function") {
  CHECK(confidence_map(0.0, 1.0) == doctest::Approx(0.5));
  CHECK(confidence_map(0.0, 9.0) == doctest::Approx(0.5));
  CHECK(confidence_map(1.0, 1.0) == doctest::Approx(0.7310585786300049));
  CHECK(confidence_map(500.0, 1.0) == doctest::Approx(1.0));
  CHECK(confidence_map(0.4, 2.0) > confidence_map(0.3, 2.0));
  CHECK_THROWS_AS(confidence_map(0.0, 0.0), DomainError);
}

TEST_CASE("combine is the weighted dot product") {
  CHECK(combine(make_sample({{"a", 0.5}, {"b", -0.5}}),
                make_state({{"a", 1.0}, {"b", 1.0}})) == doctest::Approx(0.0));
  CHECK(combine(make_sample({{"a", 1.0}, {"b", 3.0}}),
                make_state({{"a", 2.0}, {"b", 1.0}})) == doctest::Approx(5.0));
  CHECK_THROWS_AS(combine(make_sample({}), make_state({})), DomainError);
  CHECK_THROWS_AS(combine(make_sample({{"a", 1.0}}), make_state({{"b", 1.0}})),
                  DomainError);
}

TEST_CASE("batch stats view carries coherent fields") {
  std::vector<NormalizedSample> batch;
  for (double v : {-1.0, 0.0, 1.0, 2.0}) {
    batch.push_back(make_sample({{"a", v}, {"b", -v}}));
  }
  auto view = batch_stats_from(batch, 1.0);
  CHECK(view.reward_mean.at("a") == doctest::Approx(0.5));
  CHECK(view.score_mean.at("a") == doctest::Approx(confidence_map(0.5, 1.0)));
  CHECK(view.confidence_mean.at("a") > 0.0);
  CHECK(view.confidence_mean.at("a") < 1.0);
  CHECK(view.correlation.at("a", "b") == doctest::Approx(-1.0));
}

TEST_CASE("controller config parses and validates") {
  auto cfg = ControllerConfig::from_json(nlohmann::json::parse(R"({
    "controller": "tadw",
    "initial_weights": {"a": 2.0},
    "tadw": {"targets": {"a": 0.7}, "difficulty_gain": 1.5, "max_weight": 4.0}
  })"));
  CHECK(cfg.kind == ControllerKind::Tadw);
  CHECK(cfg.initial_weights.at("a") == 2.0);
  CHECK(cfg.tadw.target_for("a") == 0.7);
  CHECK(cfg.tadw.target_for("other") == 0.8);
  CHECK(cfg.tadw.max_weight == 4.0);

  CHECK_THROWS_AS(ControllerConfig::from_json(nlohmann::json::parse(
                      R"({"controller": "nope"})")),
                  InputError);
  CHECK_THROWS_AS(ControllerConfig::from_json(nlohmann::json::parse(
                      R"({"controller": "ecco", "ecco": {"gain": -1}})")),
                  InputError);
  CHECK_THROWS_AS(ControllerConfig::from_json(nlohmann::json::parse(
                      R"({"controller": "tadw", "tadw": {"targets": {"a": 1.5}}})")),
                  InputError);
}
