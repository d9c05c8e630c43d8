#include "safemon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace safemon {

std::string to_string(MonitorVariant variant) {
  switch (variant) {
    case MonitorVariant::Point:
      return "point";
    case MonitorVariant::Distribution:
      return "distribution";
    case MonitorVariant::TrueState:
      return "true_state";
  }
  return "unknown";
}

MonitorContext::MonitorContext(Grid grid, Eigen::MatrixXd table)
    : grid_(std::move(grid)), table_(std::move(table)) {
  if (static_cast<std::size_t>(table_.rows()) != grid_.cell_count() || table_.cols() == 0)
    throw ValidationError("monitor: table shape does not match the grid");
  if (!table_.allFinite() || (table_.array() < 0.0).any() || (table_.array() > 1.0).any())
    throw ValidationError("monitor: table values must lie in [0, 1]");
}

MonitorContext MonitorContext::from_table(const SafetyTable& table, const Grid& grid,
                                          std::span<const ActionId> config_action) {
  const std::size_t cells = grid.cell_count();
  const std::size_t configs = config_action.size();
  Eigen::MatrixXd g(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(configs));
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t c = 0; c < configs; ++c) {
      const auto v = table.lookup(cell * configs + c, config_action[c]);
      if (!v)
        throw ValidationError("monitor: table has no entry for cell " + std::to_string(cell) +
                              ", configuration " + std::to_string(c));
      g(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  return MonitorContext(grid, std::move(g));
}

double MonitorContext::lookup(std::size_t cell, std::size_t config) const {
  if (cell >= static_cast<std::size_t>(table_.rows()) || config >= config_count())
    throw ValidationError("monitor: cell or configuration out of range");
  return table_(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(config));
}

EstimatedStateDistribution joint_distribution(const Grid& grid,
                                              std::span<const Eigen::VectorXd> beliefs,
                                              std::size_t limit) {
  const std::size_t dims = grid.dimensions();
  if (beliefs.size() != dims) throw ValidationError("monitor: one belief per dimension required");
  for (std::size_t d = 0; d < dims; ++d)
    if (static_cast<std::size_t>(beliefs[d].size()) != grid.count(d))
      throw ValidationError("monitor: belief size does not match the grid");
  if (limit == 0) throw ValidationError("monitor: support limit must be positive");

  // Joint mass per flat cell, skipping zero marginals.
  std::vector<std::pair<double, std::size_t>> mass;
  Grid::Coordinates c(dims, 0);
  std::vector<std::vector<std::ptrdiff_t>> nonzero(dims);
  for (std::size_t d = 0; d < dims; ++d)
    for (Eigen::Index k = 0; k < beliefs[d].size(); ++k)
      if (beliefs[d][k] > 0) nonzero[d].push_back(k);
  for (const auto& nz : nonzero)
    if (nz.empty()) throw ValidationError("monitor: belief without mass");

  std::vector<std::size_t> pick(dims, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t d = 0; d < dims; ++d) {
      c[d] = nonzero[d][pick[d]];
      p *= beliefs[d][c[d]];
    }
    if (p > 0) mass.emplace_back(p, grid.flatten(c));
    std::size_t d = 0;
    while (d < dims && ++pick[d] == nonzero[d].size()) pick[d++] = 0;
    if (d == dims) break;
  }

  auto heavier = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  if (mass.size() > limit) {
    std::partial_sort(mass.begin(), mass.begin() + static_cast<std::ptrdiff_t>(limit), mass.end(),
                      heavier);
    mass.resize(limit);
  }
  std::sort(mass.begin(), mass.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });

  double total = 0.0;
  for (const auto& m : mass) total += m.first;
  EstimatedStateDistribution dist;
  dist.points.resize(static_cast<Eigen::Index>(mass.size()), static_cast<Eigen::Index>(dims));
  dist.weights.resize(static_cast<Eigen::Index>(mass.size()));
  for (std::size_t i = 0; i < mass.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    dist.points.row(row) = grid.midpoint(mass[i].second).matrix().transpose();
    dist.weights[row] = mass[i].first / total;
  }
  return dist;
}

namespace {

SafetyEstimate lookup_point(const MonitorContext& ctx, const Eigen::ArrayXd& x,
                            std::size_t config, std::size_t timestep, MonitorVariant variant) {
  if (static_cast<std::size_t>(x.size()) != ctx.grid().dimensions())
    throw ValidationError("monitor: state dimension does not match the grid");
  if (!x.allFinite()) throw ValidationError("monitor: non-finite state");
  const auto located = ctx.grid().locate_clamped(x);
  return {ctx.lookup(located.cell, config), variant, timestep, located.clamped};
}

}  // namespace

SafetyEstimate monitor_point(const MonitorContext& ctx, const Eigen::ArrayXd& estimate,
                             std::size_t config, std::size_t timestep) {
  return lookup_point(ctx, estimate, config, timestep, MonitorVariant::Point);
}

SafetyEstimate monitor_true(const MonitorContext& ctx, const Eigen::ArrayXd& state,
                            std::size_t config, std::size_t timestep) {
  return lookup_point(ctx, state, config, timestep, MonitorVariant::TrueState);
}

SafetyEstimate monitor_distribution(const MonitorContext& ctx,
                                    const EstimatedStateDistribution& dist, std::size_t config,
                                    std::size_t timestep) {
  const auto n = dist.weights.size();
  if (n == 0 || dist.points.rows() != n ||
      static_cast<std::size_t>(dist.points.cols()) != ctx.grid().dimensions())
    throw ValidationError("monitor: malformed state distribution");
  if (!dist.weights.allFinite() || (dist.weights.array() < 0.0).any())
    throw ValidationError("monitor: distribution weights must be finite and nonnegative");
  if (std::abs(dist.weights.sum() - 1.0) > kDistributionTolerance)
    throw ValidationError("monitor: distribution is not normalised");

  SafetyEstimate out{0.0, MonitorVariant::Distribution, timestep, false};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd x = dist.points.row(i).transpose().array();
    const auto located = ctx.grid().locate_clamped(x);
    out.clamped = out.clamped || located.clamped;
    out.value += dist.weights[i] * ctx.lookup(located.cell, config);
  }
  out.value = std::clamp(out.value, 0.0, 1.0);
  return out;
}

}  // namespace safemon
