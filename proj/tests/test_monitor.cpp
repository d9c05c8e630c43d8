#include <doctest.h>

#include <cmath>
#include <vector>

#include "safemon/abstraction.hpp"
#include "safemon/model_check.hpp"
#include "safemon/monitor.hpp"
#include "safemon/watertank.hpp"
#include "support.hpp"

using namespace safemon;

namespace {

Grid line_grid(double lower, double upper, double width) {
  return Grid(Eigen::ArrayXd::Constant(1, lower), Eigen::ArrayXd::Constant(1, upper),
              Eigen::ArrayXd::Constant(1, width));
}

Eigen::ArrayXd point(double x) { return Eigen::ArrayXd::Constant(1, x); }

Eigen::ArrayXd point(double x, double y) {
  Eigen::ArrayXd p(2);
  p << x, y;
  return p;
}

EstimatedStateDistribution line_dist(std::vector<double> xs, std::vector<double> ws) {
  EstimatedStateDistribution d;
  d.points = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  d.weights = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size()));
  return d;
}

// Cells [0,1) .. [3,4) with one configuration and values 0.2 .. 0.8.
MonitorContext ramp() {
  Eigen::MatrixXd g(4, 1);
  g << 0.2, 0.4, 0.6, 0.8;
  return MonitorContext(line_grid(0, 4, 1), g);
}

}  // namespace

TEST_CASE("all-safe table") {
  const auto g = watertank::joint_grid(watertank::TankParams{}, 0, 101, 1);
  const MonitorContext ctx(g, Eigen::MatrixXd::Ones(101 * 101, 5));
  testing::Rng rng(51);
  for (int i = 0; i < 100; ++i) {
    const auto x = point(testing::uniform(rng, 0, 101), testing::uniform(rng, 0, 101));
    CHECK(monitor_point(ctx, x, testing::pick(rng, 5)).value == 1.0);
  }
}

TEST_CASE("cell boundaries are lower-inclusive") {
  const auto ctx = ramp();
  CHECK(monitor_point(ctx, point(1.0), 0).value == 0.4);
  CHECK(monitor_point(ctx, point(0.999999), 0).value == 0.2);
  CHECK(monitor_point(ctx, point(3.0), 0).value == 0.8);
}

TEST_CASE("lookup against a serialised table") {
  const auto g = watertank::joint_grid(watertank::TankParams{}, 0, 101, 1);
  const std::size_t configs = 5;
  std::vector<SafetyTable::Entry> entries;
  std::vector<ActionId> config_action{3, 0, 4, 1, 2};  // arbitrary action numbering
  for (std::size_t cell = 0; cell < g.cell_count(); ++cell)
    for (std::size_t c = 0; c < configs; ++c)
      entries.push_back({cell * configs + c, config_action[c],
                         static_cast<double>((cell * 7 + c * 13) % 1000) / 999.0});
  const SafetyTable table(entries, 10, OptimizationMode::Min);
  const auto dir = testing::temp_dir("monitor_lookup");
  write_safety_table_csv(dir / "table.csv", table);
  const auto ctx = MonitorContext::from_table(read_safety_table(dir / "table.csv"), g, config_action);

  const watertank::ConfigEncoder enc(2);
  const auto fill_first = enc.index({{true, false}, 0});
  const std::size_t cell = 50 * 101 + 70;
  const double expected = *table.lookup(cell * configs + fill_first, config_action[fill_first]);
  const auto est = monitor_point(ctx, point(50.4, 70.2), fill_first, 3);
  CHECK(est.value == expected);
  CHECK(est.timestep == 3);
  CHECK(est.variant == MonitorVariant::Point);
  CHECK_FALSE(est.clamped);

  const std::vector<ActionId> wrong{3, 0, 4, 1, 9};
  CHECK_THROWS_AS(MonitorContext::from_table(table, g, wrong), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("distribution monitor fixtures") {
  Eigen::MatrixXd g(2, 1);
  g << 1.0, 0.6;
  const MonitorContext two(line_grid(0, 2, 1), g);
  CHECK(monitor_distribution(two, line_dist({0.5, 1.5}, {0.5, 0.5}), 0).value ==
        doctest::Approx(0.8).epsilon(1e-12));

  const auto ctx = ramp();
  CHECK(monitor_distribution(ctx, line_dist({0.5, 1.5, 2.5, 3.5}, {0.25, 0.25, 0.25, 0.25}), 0)
            .value == doctest::Approx(0.5).epsilon(1e-12));

  for (double x : {0.1, 1.7, 2.0, 3.9})
    CHECK(monitor_distribution(ctx, line_dist({x}, {1.0}), 0).value ==
          monitor_point(ctx, point(x), 0).value);
}

TEST_CASE("true-state monitor agrees with the point monitor on equal inputs") {
  const auto ctx = ramp();
  for (double x : {0.0, 0.5, 2.25, 3.99}) {
    const auto t = monitor_true(ctx, point(x), 0, 8);
    CHECK(t.value == monitor_point(ctx, point(x), 0).value);
    CHECK(t.variant == MonitorVariant::TrueState);
  }
}

TEST_CASE("input validation and clamping") {
  const auto ctx = ramp();
  CHECK_THROWS_AS(monitor_distribution(ctx, line_dist({0.5, 1.5}, {0.5, 0.4}), 0), ValidationError);
  CHECK_THROWS_AS(monitor_distribution(ctx, line_dist({0.5, 1.5}, {1.5, -0.5}), 0),
                  ValidationError);
  CHECK_NOTHROW(monitor_distribution(ctx, line_dist({0.5, 1.5}, {0.5, 0.5 + 5e-7}), 0));
  CHECK_THROWS_AS(monitor_point(ctx, point(0.5), 1), ValidationError);
  CHECK_THROWS_AS(monitor_point(ctx, point(std::nan("")), 0), ValidationError);

  const auto high = monitor_point(ctx, point(7.0), 0);
  CHECK(high.clamped);
  CHECK(high.value == 0.8);
  const auto low = monitor_distribution(ctx, line_dist({-3.0, 0.5}, {0.5, 0.5}), 0);
  CHECK(low.clamped);
  CHECK(low.value == doctest::Approx(0.2));

  Eigen::MatrixXd bad(4, 1);
  bad << 0.2, 0.4, 1.1, 0.8;
  CHECK_THROWS_AS(MonitorContext(line_grid(0, 4, 1), bad), ValidationError);
}

TEST_CASE("distribution monitor is convex and linear") {
  testing::Rng rng(52);
  const auto g = line_grid(0, 20, 1);
  Eigen::MatrixXd table(20, 3);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = testing::uniform(rng);
  const MonitorContext ctx(g, table);

  auto random_dist = [&](std::size_t n) {
    std::vector<double> xs(n), ws(n);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = testing::uniform(rng, 0, 20);
      total += (ws[i] = testing::uniform(rng, 0.01, 1.0));
    }
    for (auto& w : ws) w /= total;
    return line_dist(xs, ws);
  };

  for (int i = 0; i < 300; ++i) {
    const std::size_t u = testing::pick(rng, 3);
    const auto d1 = random_dist(1 + testing::pick(rng, 8));
    const auto d2 = random_dist(1 + testing::pick(rng, 8));
    const double v1 = monitor_distribution(ctx, d1, u).value;
    const double v2 = monitor_distribution(ctx, d2, u).value;

    double lo = 1, hi = 0;
    for (Eigen::Index k = 0; k < d1.weights.size(); ++k) {
      const double g1 = monitor_point(ctx, point(d1.points(k, 0)), u).value;
      lo = std::min(lo, g1);
      hi = std::max(hi, g1);
    }
    CHECK(v1 >= lo - 1e-15);
    CHECK(v1 <= hi + 1e-15);

    const double lambda = testing::uniform(rng);
    EstimatedStateDistribution mix;
    mix.points.resize(d1.points.rows() + d2.points.rows(), 1);
    mix.points << d1.points, d2.points;
    mix.weights.resize(d1.weights.size() + d2.weights.size());
    mix.weights << lambda * d1.weights, (1 - lambda) * d2.weights;
    CHECK(std::abs(monitor_distribution(ctx, mix, u).value - (lambda * v1 + (1 - lambda) * v2)) <=
          1e-12);
  }
}

TEST_CASE("joint distribution of independent beliefs") {
  const Grid g(Eigen::ArrayXd::Zero(2), Eigen::ArrayXd::Constant(2, 4.0), Eigen::ArrayXd::Ones(2));
  std::vector<Eigen::VectorXd> beliefs(2, Eigen::VectorXd::Zero(4));
  beliefs[0] << 0.5, 0.5, 0, 0;
  beliefs[1] << 0, 0, 0.25, 0.75;
  const auto d = joint_distribution(g, beliefs);
  REQUIRE(d.weights.size() == 4);
  CHECK(d.weights.sum() == doctest::Approx(1.0));
  // Support sorted by flat index: (0,2) (0,3) (1,2) (1,3).
  CHECK(d.points(0, 0) == 0.5);
  CHECK(d.points(0, 1) == 2.5);
  CHECK(d.weights[0] == doctest::Approx(0.125));
  CHECK(d.weights[3] == doctest::Approx(0.375));

  // Keeping the two heaviest cells renormalises their mass.
  const auto top = joint_distribution(g, beliefs, 2);
  REQUIRE(top.weights.size() == 2);
  CHECK(top.points(0, 1) == 3.5);
  CHECK(top.points(1, 1) == 3.5);
  CHECK(top.weights[0] == doctest::Approx(0.5));

  beliefs[1].setZero();
  CHECK_THROWS_AS(joint_distribution(g, beliefs), ValidationError);
}

TEST_CASE("state with only safe continuations has value one") {
  // Identity dynamics on [0, 10) with cell 0 unsafe: every other cell stays
  // put forever, so its minimum safety probability is one.
  const auto g = line_grid(0, 10, 1);
  const std::vector<ErrorModel> errors{ErrorModel({{-0.5, 0.5, 0.5}, {0.5, 1.5, 0.5}}, 1.0)};
  ControllerLogic logic;
  logic.configurations = {"stay"};
  logic.perception_lower = Eigen::ArrayXd::Constant(1, 0.0);
  logic.perception_upper = Eigen::ArrayXd::Constant(1, 10.0);
  logic.decide = [](const Eigen::ArrayXd&, std::size_t, double w, std::span<double> m) { m[0] += w; };
  const auto sys = build_abstract_system(
      g, [](const Box& b, std::size_t) { return b; }, errors, logic,
      [](const Box& b) { return b.lower[0] <= 0.0; });
  const auto table = check_bounded_safety(
      sys.automaton, {states_with_label(sys.automaton, kUnsafeLabel), 10, OptimizationMode::Min});
  const auto ctx = MonitorContext::from_table(table, g, sys.config_action);
  CHECK(monitor_true(ctx, point(5.5), 0).value == 1.0);
  CHECK(monitor_true(ctx, point(0.5), 0).value == 0.0);
}
