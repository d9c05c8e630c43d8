#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "safemon/abstraction.hpp"

namespace safemon::watertank {

/// Which tanks must stay strictly inside (0, TS) for the system to be safe.
enum class SafetyReading {
  AllTanks,  // every tank in range (a single over/underflow is a failure)
  AnyTank,   // at least one tank in range
};

struct TankParams {
  std::size_t tanks = 2;
  double tank_size = 100.0;
  double inflow = 13.5;
  double outflow = 4.3;
  double lower_threshold = 10.0;
  double upper_threshold = 90.0;
  double sensor_sigma = 5.0;
  double outlier_prob = 0.05;
  std::size_t horizon = 10;
  SafetyReading reading = SafetyReading::AllTanks;

  void validate() const;
  nlohmann::json to_json() const;
  static TankParams from_json(const nlohmann::json& j);
};

/// Local request bits plus the central fill decision.
struct ControlConfig {
  std::vector<bool> requests;
  std::optional<std::size_t> fill;
  friend bool operator==(const ControlConfig&, const ControlConfig&) = default;
};

/// Dense numbering of the consistent control configurations: fill is empty
/// iff no tank requests, otherwise it names a requesting tank. Two tanks give
/// five configurations.
class ConfigEncoder {
 public:
  explicit ConfigEncoder(std::size_t tanks);

  std::size_t size() const { return configs_.size(); }
  const ControlConfig& config(std::size_t index) const { return configs_.at(index); }
  std::size_t index(const ControlConfig& config) const;
  /// Identifier-safe label such as `r10_f1` (requests of tanks 1..J, 1-based
  /// fill tank or 0 for none).
  const std::string& label(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<ControlConfig> configs_;
  std::vector<std::string> labels_;
};

struct SystemState {
  Eigen::ArrayXd levels;
  ControlConfig control;
};

struct StepResult {
  SystemState state;          // levels clamped to [0, TS]
  Eigen::ArrayXd pre_clamp;   // levels before clamping
  std::vector<bool> breached; // per tank: pre-clamp level outside (0, TS)
  bool violated = false;      // the safety property fails at this state
};

/// w_i <- w_i - outflow + (i == fill ? inflow : 0).
StepResult step_dynamics(const TankParams& params, const SystemState& state,
                         std::optional<std::size_t> fill);

/// Whether pre-clamp levels violate the safety property under params.reading.
bool violates(const TankParams& params, const Eigen::ArrayXd& levels);

using Rng = std::mt19937_64;

/// Noisy reading: with probability outlier_prob a saturated 0 or TS (even
/// odds), otherwise level + N(0, sigma^2) clamped to [0, TS].
double sense(const TankParams& params, double level, Rng& rng);

/// Per-tank level grid matching one dimension of the abstraction grid.
Grid tank_grid(const Grid& joint, std::size_t tank);
/// J-dimensional grid with the same per-tank bounds and width.
Grid joint_grid(const TankParams& params, double lower, double upper, double width);

/// Histogram Bayes filter over the level grid, one belief per tank.
struct FilterState {
  std::vector<Eigen::VectorXd> belief;

  /// Posterior mean per tank using cell midpoints, clamped to [0, TS].
  Eigen::ArrayXd mean(const TankParams& params, const Grid& level_grid) const;
};

FilterState uniform_filter(const TankParams& params, const Grid& level_grid);

/// Likelihood of `reading` for each cell of the level grid.
Eigen::VectorXd reading_likelihood(const TankParams& params, const Grid& level_grid,
                                   double reading);

/// Bayes rule per tank. A tank whose posterior has no mass keeps its prior
/// and is reported in `degenerate` (when given).
FilterState measurement_update(const TankParams& params, const Grid& level_grid,
                               const FilterState& prior, const Eigen::ArrayXd& readings,
                               std::vector<bool>* degenerate = nullptr);

/// Shifts each cell's mass by the known net flow, splitting it between the
/// two overlapped cells in proportion to overlap; mass leaving the grid
/// accumulates at the end cells.
FilterState predict(const TankParams& params, const Grid& level_grid, const FilterState& belief,
                    std::optional<std::size_t> fill);

/// Measurement update followed by prediction under the taken action.
FilterState filter_update(const TankParams& params, const Grid& level_grid,
                          const FilterState& belief, const Eigen::ArrayXd& readings,
                          std::optional<std::size_t> fill);

/// Hysteresis per tank (request below LT, release at or above UT), then fill
/// the requesting tank with the lowest estimate; exact ties are broken by a
/// fair draw from `rng`.
ControlConfig control(const TankParams& params, const Eigen::ArrayXd& estimates,
                      const std::vector<bool>& previous_requests, Rng& rng);

struct TraceStep {
  std::size_t t = 0;
  Eigen::ArrayXd true_levels;
  Eigen::ArrayXd readings;
  Eigen::ArrayXd estimates;
  std::vector<Eigen::VectorXd> belief;  // after the measurement update
  ControlConfig action;
  std::size_t action_index = 0;
  double monitor_point = std::numeric_limits<double>::quiet_NaN();
  double monitor_distribution = std::numeric_limits<double>::quiet_NaN();
  double monitor_true = std::numeric_limits<double>::quiet_NaN();
};

struct TrialTrace {
  std::uint64_t seed = 0;
  std::size_t length = 0;
  std::vector<TraceStep> steps;
  /// Time of the first state violating the property, if any.
  std::optional<std::size_t> breach_time;

  /// Whether no violation happens at times t+1..t+horizon; empty when that
  /// window is not fully observed.
  std::optional<bool> safe_label(std::size_t t, std::size_t horizon) const;
};

/// One closed-loop run: per step sense, measurement update, control on the
/// filter mean, record, then dynamics and filter prediction. Stops at the
/// first violation. Deterministic in `seed`.
TrialTrace run_trial(const TankParams& params, const Grid& level_grid,
                     const Eigen::ArrayXd& initial_levels, std::uint64_t seed, std::size_t length);

/// True minus estimated level of `tank` over every recorded step.
std::vector<double> estimation_errors(const std::vector<TrialTrace>& traces, std::size_t tank);

/// One error model per tank from X(t) - Xbar(t).
std::vector<ErrorModel> estimate_error_models(const TankParams& params,
                                              const std::vector<TrialTrace>& traces,
                                              double bin_width);

// Adapters for the abstraction.

IntervalDynamics interval_dynamics(const TankParams& params, const ConfigEncoder& encoder);
ControllerLogic controller_logic(const TankParams& params, const ConfigEncoder& encoder);
/// A cell is unsafe when it contains a violating level.
std::function<bool(const Box&)> unsafe_cell(const TankParams& params);

}  // namespace safemon::watertank
