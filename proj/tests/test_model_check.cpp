#include <doctest.h>

#include <cmath>
#include <cstring>

#include "safemon/model_check.hpp"
#include "support.hpp"

using namespace safemon;

namespace {

// A --a--> {A: 0.5, BAD: 0.5}
ProbabilisticAutomaton chain() {
  PaBuilder b;
  const auto A = b.add_state("A");
  const auto bad = b.add_state("BAD");
  b.add_transition(A, b.add_action("a"), CategoricalDistribution({{A, 0.5}, {bad, 0.5}}));
  return std::move(b).build();
}

// A has two a-transitions, to SAFE and to BAD.
ProbabilisticAutomaton forked() {
  PaBuilder b;
  const auto A = b.add_state("A");
  const auto safe = b.add_state("SAFE");
  const auto bad = b.add_state("BAD");
  const auto a = b.add_action("a");
  b.add_transition(A, a, make_point_distribution(safe));
  b.add_transition(A, a, make_point_distribution(bad));
  return std::move(b).build();
}

double entry(const SafetyTable& t, StateId s, ActionId a) {
  const auto v = t.lookup(s, a);
  REQUIRE(v.has_value());
  return *v;
}

}  // namespace

TEST_CASE("unsafe states have value zero") {
  const auto pa = chain();
  for (std::size_t T : {0, 1, 5}) {
    const auto table = check_bounded_safety(pa, {{1}, T, OptimizationMode::Min});
    CHECK(table.state_values()[1] == 0.0);
    CHECK(brute_force_safety(pa, {{1}, T, OptimizationMode::Min}, 1) == 0.0);
  }
}

TEST_CASE("no unsafe states gives one") {
  testing::Rng rng(21);
  const auto pa = testing::random_pa(rng, 6, 2);
  const auto table = check_bounded_safety(pa, {{}, 10, OptimizationMode::Min});
  for (const auto& e : table.entries()) CHECK(e.probability == 1.0);
  for (Eigen::Index s = 0; s < table.state_values().size(); ++s)
    CHECK(table.state_values()[s] == 1.0);
}

TEST_CASE("two-step chain") {
  const auto pa = chain();
  const BoundedSafetyQuery q{{1}, 2, OptimizationMode::Min};
  const auto table = check_bounded_safety(pa, q);
  CHECK(entry(table, 0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(table.state_values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(brute_force_safety(pa, q, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(table.size() == 1);  // BAD is terminal
}

TEST_CASE("nondeterministic choice min and max") {
  const auto pa = forked();
  const auto lo = check_bounded_safety(pa, {{2}, 1, OptimizationMode::Min});
  const auto hi = check_bounded_safety(pa, {{2}, 1, OptimizationMode::Max});
  CHECK(entry(lo, 0, 0) == 0.0);
  CHECK(entry(hi, 0, 0) == 1.0);
  CHECK(brute_force_safety(pa, {{2}, 1, OptimizationMode::Min}, 0) == 0.0);
  CHECK(brute_force_safety(pa, {{2}, 1, OptimizationMode::Max}, 0) == 1.0);
}

TEST_CASE("zero horizon") {
  const auto pa = chain();
  CHECK(brute_force_safety(pa, {{1}, 0, OptimizationMode::Min}, 0) == 1.0);
  CHECK(brute_force_safety(pa, {{1}, 0, OptimizationMode::Min}, 1) == 0.0);
  const auto table = check_bounded_safety(pa, {{1}, 0, OptimizationMode::Min});
  CHECK(entry(table, 0, 0) == 1.0);
}

TEST_CASE("query validation") {
  const auto pa = chain();
  CHECK_THROWS_AS(check_bounded_safety(pa, {{7}, 1, OptimizationMode::Min}), ValidationError);
  CHECK_THROWS_AS(check_bounded_safety(pa, {{1}, kMaxHorizon + 1, OptimizationMode::Min}),
                  ValidationError);
  CHECK_THROWS_AS(brute_force_safety(pa, {{1}, 1, OptimizationMode::Min}, 9), ValidationError);
  CHECK(parse_mode("max") == OptimizationMode::Max);
  CHECK_THROWS_AS(parse_mode("median"), ValidationError);
}

TEST_CASE("brute force refuses large instances") {
  PaBuilder b;
  b.add_states(8);
  const auto a = b.add_action("a");
  for (StateId s = 0; s < 8; ++s)
    for (StateId t = 0; t < 8; ++t) b.add_transition(s, a, make_point_distribution(t));
  const auto pa = std::move(b).build();
  CHECK_THROWS_AS(brute_force_safety(pa, {{}, 8, OptimizationMode::Min}, 0), ValidationError);
}

TEST_CASE("value iteration matches the scheduler oracle") {
  testing::Rng rng(22);
  for (int i = 0; i < 150; ++i) {
    const auto pa = testing::random_pa(rng, 6, 2);
    const std::size_t T = testing::pick(rng, 5);
    const auto mode = testing::uniform(rng) < 0.5 ? OptimizationMode::Min : OptimizationMode::Max;
    const BoundedSafetyQuery q{testing::random_unsafe(rng, pa.state_count()), T, mode};
    const auto table = check_bounded_safety(pa, q);
    for (StateId s = 0; s < pa.state_count(); ++s)
      CHECK(std::abs(table.state_values()[static_cast<Eigen::Index>(s)] -
                     brute_force_safety(pa, q, s)) <= 1e-9);
    for (const auto& e : table.entries())
      CHECK(std::abs(e.probability - brute_force_safety(pa, q, e.state, e.action)) <= 1e-9);
  }
}

TEST_CASE("values shrink with the horizon and min stays below max") {
  testing::Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto pa = testing::random_pa(rng, 6, 2);
    const auto unsafe = testing::random_unsafe(rng, pa.state_count());
    for (std::size_t T = 0; T < 6; ++T) {
      const auto now = check_bounded_safety(pa, {unsafe, T, OptimizationMode::Min});
      const auto next = check_bounded_safety(pa, {unsafe, T + 1, OptimizationMode::Min});
      const auto best = check_bounded_safety(pa, {unsafe, T, OptimizationMode::Max});
      REQUIRE(now.size() == next.size());
      for (std::size_t k = 0; k < now.size(); ++k) {
        CHECK(next.entries()[k].probability <= now.entries()[k].probability + 1e-15);
        CHECK(now.entries()[k].probability <= best.entries()[k].probability + 1e-15);
        CHECK(now.entries()[k].probability >= 0.0);
        CHECK(best.entries()[k].probability <= 1.0);
      }
      for (auto s : unsafe) CHECK(now.state_values()[static_cast<Eigen::Index>(s)] == 0.0);
    }
  }
}

TEST_CASE("results are bit-identical across thread counts") {
  testing::Rng rng(24);
  for (int i = 0; i < 20; ++i) {
    const auto pa = testing::random_pa(rng, 60, 3);
    const BoundedSafetyQuery q{testing::random_unsafe(rng, pa.state_count()), 7,
                               OptimizationMode::Min};
    const auto one = check_bounded_safety(pa, q, 1);
    const auto four = check_bounded_safety(pa, q, 4);
    REQUIRE(one.size() == four.size());
    for (std::size_t k = 0; k < one.size(); ++k)
      CHECK(std::memcmp(&one.entries()[k].probability, &four.entries()[k].probability,
                        sizeof(double)) == 0);
  }
}

TEST_CASE("table CSV round trip is exact") {
  testing::Rng rng(25);
  const auto pa = testing::random_pa(rng, 30, 2);
  const BoundedSafetyQuery q{testing::random_unsafe(rng, pa.state_count()), 4,
                             OptimizationMode::Max};
  const auto table = check_bounded_safety(pa, q);
  const auto dir = testing::temp_dir("table_round_trip");
  write_safety_table_csv(dir / "t.csv", table);
  write_safety_table_sidecar(dir / "t.json", table, {{"note", "x"}});
  const auto back = read_safety_table(dir / "t.csv", dir / "t.json");
  CHECK(back.horizon() == 4);
  CHECK(back.mode() == OptimizationMode::Max);
  REQUIRE(back.size() == table.size());
  for (std::size_t k = 0; k < table.size(); ++k) {
    CHECK(back.entries()[k].state == table.entries()[k].state);
    CHECK(back.entries()[k].action == table.entries()[k].action);
    CHECK(std::memcmp(&back.entries()[k].probability, &table.entries()[k].probability,
                      sizeof(double)) == 0);
  }
  const auto text = testing::read_file(dir / "t.csv");
  CHECK(text.rfind("state_index,action_index,probability\n", 0) == 0);
  std::filesystem::remove_all(dir);
}
