#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "safemon/automaton.hpp"
#include "safemon/model_check.hpp"

namespace testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Random distribution over [0, states) with 1..3 support points.
inline safemon::CategoricalDistribution random_distribution(Rng& rng, std::size_t states) {
  const std::size_t k = 1 + pick(rng, 3);
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& x : w) total += (x = uniform(rng, 0.05, 1.0));
  std::vector<safemon::CategoricalDistribution::Entry> entries;
  double used = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double p = i + 1 == k ? 1.0 - used : w[i] / total;
    used += p;
    entries.push_back({pick(rng, states), p});
  }
  return safemon::CategoricalDistribution(std::move(entries));
}

/// Random PA with up to `max_states` states and `max_actions` labels; some
/// states are terminal and some (state, action) pairs are nondeterministic.
inline safemon::ProbabilisticAutomaton random_pa(Rng& rng, std::size_t max_states,
                                                 std::size_t max_actions) {
  safemon::PaBuilder b;
  const std::size_t n = 1 + pick(rng, max_states);
  b.add_states(n);
  const std::size_t m = 1 + pick(rng, max_actions);
  for (std::size_t a = 0; a < m; ++a) b.add_action(std::string(1, static_cast<char>('a' + a)));
  for (std::size_t s = 0; s < n; ++s) {
    if (uniform(rng) < 0.15) continue;  // terminal
    for (std::size_t a = 0; a < m; ++a) {
      if (a > 0 && uniform(rng) < 0.4) continue;
      const std::size_t copies = uniform(rng) < 0.3 ? 2 : 1;
      for (std::size_t c = 0; c < copies; ++c) b.add_transition(s, a, random_distribution(rng, n));
    }
  }
  if (uniform(rng) < 0.5) b.set_initial(pick(rng, n));
  return std::move(b).build();
}

inline std::vector<safemon::StateId> random_unsafe(Rng& rng, std::size_t states) {
  std::vector<safemon::StateId> unsafe;
  for (std::size_t s = 0; s < states; ++s)
    if (uniform(rng) < 0.3) unsafe.push_back(s);
  return unsafe;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("safemon_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
