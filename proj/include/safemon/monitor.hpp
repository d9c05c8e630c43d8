#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "safemon/abstraction.hpp"
#include "safemon/model_check.hpp"

namespace safemon {

enum class MonitorVariant { Point, Distribution, TrueState };

std::string to_string(MonitorVariant variant);

struct SafetyEstimate {
  double value = 0.0;
  MonitorVariant variant = MonitorVariant::Point;
  std::size_t timestep = 0;
  /// Some evaluated point lay outside the grid and was clamped.
  bool clamped = false;
};

/// Lookup table G(cell, configuration) together with the grid that maps
/// concrete states to cells. Immutable once built.
class MonitorContext {
 public:
  MonitorContext(Grid grid, Eigen::MatrixXd table);

  /// Reads G from a safety table over an abstract system whose grid states
  /// are numbered cell * configs + config and whose configuration c is
  /// enabled as action `config_action[c]`. Throws ValidationError if any
  /// (cell, configuration) pair is missing.
  static MonitorContext from_table(const SafetyTable& table, const Grid& grid,
                                   std::span<const ActionId> config_action);

  const Grid& grid() const { return grid_; }
  /// cells x configurations.
  const Eigen::MatrixXd& table() const { return table_; }
  std::size_t config_count() const { return static_cast<std::size_t>(table_.cols()); }

  double lookup(std::size_t cell, std::size_t config) const;

 private:
  Grid grid_;
  Eigen::MatrixXd table_;
};

/// Weighted support points, one point per row of `points`.
struct EstimatedStateDistribution {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
};

inline constexpr std::size_t kJointSupportLimit = 400;
inline constexpr double kDistributionTolerance = 1e-6;

/// Independent product of per-dimension beliefs over `grid`'s cells, with
/// cell midpoints as support points. Keeps the `limit` heaviest joint cells
/// (ties by lower flat index) and renormalises the kept mass.
EstimatedStateDistribution joint_distribution(const Grid& grid,
                                              std::span<const Eigen::VectorXd> beliefs,
                                              std::size_t limit = kJointSupportLimit);

/// G(cell(estimate), config).
SafetyEstimate monitor_point(const MonitorContext& ctx, const Eigen::ArrayXd& estimate,
                             std::size_t config, std::size_t timestep = 0);

/// Sum over the support of P(s) * G(cell(s), config). Throws ValidationError
/// for negative weights or total mass more than 1e-6 away from one.
SafetyEstimate monitor_distribution(const MonitorContext& ctx,
                                    const EstimatedStateDistribution& dist, std::size_t config,
                                    std::size_t timestep = 0);

/// monitor_point fed the true state.
SafetyEstimate monitor_true(const MonitorContext& ctx, const Eigen::ArrayXd& state,
                            std::size_t config, std::size_t timestep = 0);

}  // namespace safemon
