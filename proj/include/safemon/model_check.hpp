#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "safemon/automaton.hpp"

namespace safemon {

enum class OptimizationMode { Min, Max };

std::string to_string(OptimizationMode mode);
OptimizationMode parse_mode(const std::string& text);

/// Step-bounded invariance `always within horizon steps: state not unsafe`.
struct BoundedSafetyQuery {
  std::vector<StateId> unsafe;
  std::size_t horizon = 0;
  OptimizationMode mode = OptimizationMode::Min;
};

inline constexpr std::size_t kMaxHorizon = 1'000'000;

/// Lookup table of bounded safety probabilities per (state, action), plus the
/// scheduler-optimal value of each state.
class SafetyTable {
 public:
  struct Entry {
    std::size_t state;
    std::size_t action;
    double probability;
  };

  SafetyTable() = default;
  SafetyTable(std::vector<Entry> entries, std::size_t horizon, OptimizationMode mode);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t horizon() const { return horizon_; }
  OptimizationMode mode() const { return mode_; }

  std::optional<double> lookup(std::size_t state, std::size_t action) const;

  /// Optimal value per automaton state (empty for tables read from disk).
  const Eigen::VectorXd& state_values() const { return state_values_; }
  void set_state_values(Eigen::VectorXd values) { state_values_ = std::move(values); }

 private:
  std::vector<Entry> entries_;  // sorted by (state, action)
  std::size_t horizon_ = 0;
  OptimizationMode mode_ = OptimizationMode::Min;
  Eigen::VectorXd state_values_;
};

/// Backward value iteration for step-bounded safety.
///
/// V_0(s) = [s safe]; V_{k+1}(s) = 0 for unsafe s, 1 for terminal s, else the
/// min (or max) over outgoing transitions of sum mu(s') V_k(s'). The table
/// entry for (s, a) forces the first step through a transition labelled a and
/// continues with V_{T-1}. Each sweep is a row-major sparse product whose rows
/// may be split across `jobs` threads without changing a single bit.
///
/// Optimising per step realises inf/sup over all schedulers for bounded
/// invariance; no memoryless scheduler is materialised.
SafetyTable check_bounded_safety(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query,
                                 unsigned jobs = 1);

inline constexpr double kBruteForceLimit = 1e6;

/// Test oracle: enumerates every step-dependent deterministic scheduler and,
/// for each, sums the probability of all length-`horizon` paths from `initial`
/// that avoid the unsafe set. Returns the min (or max) over schedulers. With
/// `first_action`, the first step is restricted to transitions with that
/// label. Throws ValidationError when scheduler count times path count
/// exceeds kBruteForceLimit.
double brute_force_safety(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query,
                          StateId initial, std::optional<ActionId> first_action = std::nullopt);

/// CSV `state_index,action_index,probability` with 17 significant digits.
void write_safety_table_csv(const std::filesystem::path& path, const SafetyTable& table);
/// Sidecar JSON with horizon, mode and caller metadata (grid, seeds, ...).
void write_safety_table_sidecar(const std::filesystem::path& path, const SafetyTable& table,
                                const nlohmann::json& metadata);
/// Reads a CSV written by write_safety_table_csv; horizon and mode come from
/// the sidecar at `sidecar` when given.
SafetyTable read_safety_table(const std::filesystem::path& csv,
                              const std::optional<std::filesystem::path>& sidecar = std::nullopt);

}  // namespace safemon
