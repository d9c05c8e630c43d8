#include <doctest.h>

#include <cmath>
#include <vector>

#include "safemon/watertank.hpp"
#include "support.hpp"

using namespace safemon;
using namespace safemon::watertank;

namespace {

Eigen::ArrayXd levels(double a, double b) {
  Eigen::ArrayXd x(2);
  x << a, b;
  return x;
}

SystemState at(double a, double b) { return {levels(a, b), {{false, false}, std::nullopt}}; }

Grid default_level_grid() { return tank_grid(joint_grid(TankParams{}, 0, 101, 1), 0); }

TankParams noiseless() {
  TankParams p;
  p.sensor_sigma = 0.0;
  p.outlier_prob = 0.0;
  return p;
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(TankParams{}.validate());
  TankParams p;
  p.lower_threshold = 95;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.outflow = 20;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.outlier_prob = 1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.sensor_sigma = -1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.reading = SafetyReading::AnyTank;
  const auto back = TankParams::from_json(p.to_json());
  CHECK(back.to_json() == p.to_json());
  CHECK(back.reading == SafetyReading::AnyTank);
}

TEST_CASE("configuration encoder") {
  const ConfigEncoder enc(2);
  CHECK(enc.size() == 5);
  CHECK(enc.label(0) == "r00_f0");
  for (std::size_t i = 0; i < enc.size(); ++i) {
    CHECK(enc.index(enc.config(i)) == i);
    const auto& c = enc.config(i);
    const bool any = c.requests[0] || c.requests[1];
    CHECK(c.fill.has_value() == any);
    if (c.fill) CHECK(c.requests[*c.fill]);
  }
  CHECK_THROWS_AS(enc.index({{false, true}, 0}), ValidationError);
}

TEST_CASE("tank dynamics") {
  const TankParams p;
  const auto filled = step_dynamics(p, at(50, 50), 0);
  CHECK(filled.state.levels[0] == doctest::Approx(59.2));
  CHECK(filled.state.levels[1] == doctest::Approx(45.7));
  CHECK_FALSE(filled.violated);

  const auto drained = step_dynamics(p, at(3, 50), std::nullopt);
  CHECK(drained.breached[0]);
  CHECK_FALSE(drained.breached[1]);
  CHECK(drained.violated);
  CHECK(drained.state.levels[0] == 0.0);
  CHECK(drained.pre_clamp[0] == doctest::Approx(-1.3));

  const auto overflow = step_dynamics(p, at(95, 50), 0);
  CHECK(overflow.breached[0]);
  CHECK(overflow.state.levels[0] == 100.0);

  // Either reading counts a single breach as a violation only when all tanks
  // must stay in range.
  TankParams any = p;
  any.reading = SafetyReading::AnyTank;
  CHECK(violates(p, levels(-1, 50)));
  CHECK_FALSE(violates(any, levels(-1, 50)));
  CHECK(violates(any, levels(-1, 101)));
  CHECK(violates(p, levels(100, 50)));
  CHECK(violates(p, levels(0, 50)));
}

TEST_CASE("sensor") {
  Rng rng(41);
  const auto exact = noiseless();
  for (double level : {0.0, 12.3, 50.0, 100.0}) CHECK(sense(exact, level, rng) == level);

  TankParams outliers;
  outliers.outlier_prob = 0.999999;
  int zeros = 0;
  for (int i = 0; i < 1000; ++i) {
    const double r = sense(outliers, 50, rng);
    CHECK((r == 0.0 || r == 100.0));
    zeros += r == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);

  TankParams p;
  p.sensor_sigma = 5;
  p.outlier_prob = 0.1;
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double r = sense(p, 50, rng);
    sum += r;
    sq += r * r;
    REQUIRE(r >= 0.0);
    REQUIRE(r <= 100.0);
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 50.0) < 4 * sd / std::sqrt(double(n)));
}

TEST_CASE("noiseless filter step from a point mass") {
  const auto p = noiseless();
  const auto g = default_level_grid();
  FilterState prior;
  prior.belief.assign(2, Eigen::VectorXd::Zero(101));
  prior.belief[0][50] = 1.0;
  prior.belief[1][50] = 1.0;
  const auto next = filter_update(p, g, prior, levels(50, 50), std::nullopt);
  for (const auto& b : next.belief) {
    CHECK(b[45] == doctest::Approx(0.3));
    CHECK(b[46] == doctest::Approx(0.7));
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // The mean moves by exactly the net flow.
  CHECK(next.mean(p, g)[0] == doctest::Approx(50.5 - 4.3));
  const auto filled = filter_update(p, g, prior, levels(50, 50), 1);
  CHECK(filled.mean(p, g)[1] == doctest::Approx(50.5 + 9.2));
}

TEST_CASE("predict piles boundary mass at the grid ends") {
  const TankParams p;
  const auto g = default_level_grid();
  FilterState b;
  b.belief.assign(2, Eigen::VectorXd::Zero(101));
  b.belief[0][1] = 1.0;
  b.belief[1][99] = 1.0;
  const auto next = predict(p, g, b, 1);
  CHECK(next.belief[0][0] == doctest::Approx(1.0));
  CHECK(next.belief[1][100] == doctest::Approx(1.0));
}

TEST_CASE("saturated-low reading under a uniform prior") {
  TankParams p;
  p.outlier_prob = 0.0;
  const auto g = default_level_grid();
  const auto prior = uniform_filter(p, g);
  const auto post = measurement_update(p, g, prior, levels(0, 50));
  // Posterior proportional to P(level + noise <= 0) at the cell midpoints.
  Eigen::VectorXd expected(101);
  for (int k = 0; k < 101; ++k) expected[k] = 0.5 * std::erfc((k + 0.5) / (5.0 * std::sqrt(2.0)));
  expected /= expected.sum();
  for (int k = 0; k < 101; ++k) CHECK(post.belief[0][k] == doctest::Approx(expected[k]).epsilon(1e-9));
  CHECK(post.belief[0][0] > post.belief[0][1]);
}

TEST_CASE("degenerate likelihood keeps the prior") {
  const auto p = noiseless();
  const auto g = default_level_grid();
  FilterState prior;
  prior.belief.assign(2, Eigen::VectorXd::Zero(101));
  prior.belief[0][10] = 1.0;
  prior.belief[1][10] = 1.0;
  std::vector<bool> degenerate;
  const auto post = measurement_update(p, g, prior, levels(60, 10.2), &degenerate);
  CHECK(degenerate == std::vector<bool>{true, false});
  CHECK(post.belief[0] == prior.belief[0]);
}

TEST_CASE("filter stays normalised") {
  TankParams p;
  const auto g = default_level_grid();
  Rng rng(42);
  auto belief = uniform_filter(p, g);
  for (int t = 0; t < 300; ++t) {
    Eigen::ArrayXd r(2);
    r << sense(p, testing::uniform(rng, 0, 100), rng), sense(p, testing::uniform(rng, 0, 100), rng);
    const std::optional<std::size_t> fill =
        t % 3 == 0 ? std::nullopt : std::optional<std::size_t>(t % 2);
    belief = filter_update(p, g, belief, r, fill);
    for (const auto& b : belief.belief) {
      CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(b.minCoeff() >= 0.0);
    }
    const auto m = belief.mean(p, g);
    CHECK((m >= 0.0).all());
    CHECK((m <= 100.0).all());
  }
}

TEST_CASE("controller hysteresis") {
  const TankParams p;
  Rng rng(43);
  auto c = control(p, levels(5, 50), {false, false}, rng);
  CHECK(c.requests == std::vector<bool>{true, false});
  CHECK(c.fill == std::optional<std::size_t>(0));

  c = control(p, levels(50, 50), {true, false}, rng);
  CHECK(c.requests == std::vector<bool>{true, false});
  CHECK(c.fill == std::optional<std::size_t>(0));

  c = control(p, levels(90, 50), {true, false}, rng);
  CHECK(c.requests == std::vector<bool>{false, false});
  CHECK_FALSE(c.fill);

  c = control(p, levels(30, 8), {true, false}, rng);
  CHECK(c.fill == std::optional<std::size_t>(1));

  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) first += control(p, levels(5, 5), {false, false}, rng).fill == 0u;
  CHECK(std::abs(first / double(n) - 0.5) <= 0.02);
}

TEST_CASE("safety labels") {
  TrialTrace trace;
  trace.length = 50;
  CHECK(trace.safe_label(0, 10) == true);
  CHECK(trace.safe_label(40, 10) == true);
  CHECK_FALSE(trace.safe_label(41, 10).has_value());
  trace.breach_time = 12;
  CHECK(trace.safe_label(1, 10) == true);
  CHECK(trace.safe_label(2, 10) == false);
  CHECK(trace.safe_label(11, 10) == false);
}

TEST_CASE("trials are deterministic in the seed") {
  const TankParams p;
  const auto g = default_level_grid();
  const auto a = run_trial(p, g, levels(45, 55), 99, 50);
  const auto b = run_trial(p, g, levels(45, 55), 99, 50);
  const auto c = run_trial(p, g, levels(45, 55), 100, 50);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK((a.steps[t].readings == b.steps[t].readings).all());
    CHECK(a.steps[t].action_index == b.steps[t].action_index);
    CHECK((a.steps[t].estimates == b.steps[t].estimates).all());
  }
  CHECK(a.breach_time == b.breach_time);
  bool differs = a.steps.size() != c.steps.size();
  for (std::size_t t = 0; !differs && t < a.steps.size(); ++t)
    differs = (a.steps[t].readings != c.steps[t].readings).any();
  CHECK(differs);
}

TEST_CASE("noiseless closed loop stays safe and tracks the level") {
  const auto p = noiseless();
  const auto g = default_level_grid();
  const auto trace = run_trial(p, g, levels(50, 50), 7, 50);
  CHECK_FALSE(trace.breach_time);
  CHECK(trace.steps.size() == 50);
  for (const auto& s : trace.steps) {
    CHECK(((s.true_levels - s.estimates).abs() <= 1.0).all());
    CHECK((s.true_levels > 0.0).all());
    CHECK((s.true_levels < p.tank_size).all());
  }
  const auto errors = estimate_error_models(p, {trace}, 1.0);
  REQUIRE(errors.size() == 2);
  CHECK(errors[0].bins().size() == 1);
  CHECK(errors[0].bins()[0].center() == 0.0);
}

TEST_CASE("abstraction adapters") {
  const TankParams p;
  const auto unsafe = unsafe_cell(p);
  const auto g = joint_grid(p, 0, 101, 1);
  CHECK(unsafe(g.cell_box(0 * 101 + 50)));
  CHECK(unsafe(g.cell_box(100 * 101 + 50)));
  CHECK_FALSE(unsafe(g.cell_box(1 * 101 + 99)));

  const ConfigEncoder enc(2);
  const auto logic = controller_logic(p, enc);
  std::vector<double> mass(5, 0.0);
  logic.decide(levels(5, 5), 0, 1.0, mass);
  CHECK(mass[enc.index({{true, true}, 0})] == 0.5);
  CHECK(mass[enc.index({{true, true}, 1})] == 0.5);
  std::fill(mass.begin(), mass.end(), 0.0);
  logic.decide(levels(50, 95), enc.index({{true, true}, 1}), 0.4, mass);
  CHECK(mass[enc.index({{true, false}, 0})] == 0.4);
}
