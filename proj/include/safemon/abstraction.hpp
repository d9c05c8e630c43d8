#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "safemon/automaton.hpp"

namespace safemon {

/// Half-open axis-aligned box [lower, upper).
template <class Scalar>
struct BasicBox {
  using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Vector lower;
  Vector upper;

  bool contains(const Vector& x) const { return (x >= lower).all() && (x < upper).all(); }
};

/// Uniform grid of equally sized hyperrectangular cells over [lower, upper).
///
/// Cells are half-open and lower-inclusive, so every point inside the bounds
/// belongs to exactly one cell. Flat cell indices are row-major with
/// dimension 0 most significant.
template <class Scalar>
class BasicGrid {
 public:
  using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Box = BasicBox<Scalar>;
  /// Per-dimension cell coordinate; -1 and count(d) denote the regions below
  /// and above the grid.
  using Coordinates = std::vector<std::ptrdiff_t>;

  BasicGrid() = default;

  BasicGrid(Vector lower, Vector upper, Vector width)
      : lower_(std::move(lower)), upper_(std::move(upper)), width_(std::move(width)) {
    if (lower_.size() == 0 || lower_.size() != upper_.size() || lower_.size() != width_.size())
      throw ValidationError("grid: bounds and widths must have the same nonzero dimension");
    counts_.resize(static_cast<std::size_t>(lower_.size()));
    for (Eigen::Index d = 0; d < lower_.size(); ++d) {
      if (!std::isfinite(static_cast<double>(lower_[d])) ||
          !std::isfinite(static_cast<double>(upper_[d])) || !(width_[d] > 0) ||
          !(upper_[d] > lower_[d]))
        throw ValidationError("grid: bounds must be finite, ordered, with positive width");
      const Scalar cells = (upper_[d] - lower_[d]) / width_[d];
      const Scalar rounded = std::round(cells);
      if (std::abs(cells - rounded) > Scalar(1e-9))
        throw ValidationError("grid: extent is not an integer multiple of the cell width");
      counts_[static_cast<std::size_t>(d)] = static_cast<std::size_t>(rounded);
    }
  }

  std::size_t dimensions() const { return counts_.size(); }
  std::size_t count(std::size_t d) const { return counts_.at(d); }
  std::size_t cell_count() const {
    std::size_t n = 1;
    for (auto c : counts_) n *= c;
    return n;
  }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const Vector& width() const { return width_; }

  /// Cell coordinate along `d`, -1 below the grid, count(d) at or above it.
  std::ptrdiff_t coordinate(std::size_t d, Scalar x) const {
    const auto i = static_cast<Eigen::Index>(d);
    const Scalar t = (x - lower_[i]) / width_[i];
    const auto c = static_cast<std::ptrdiff_t>(std::floor(t));
    return std::clamp<std::ptrdiff_t>(c, -1, static_cast<std::ptrdiff_t>(counts_[d]));
  }

  Coordinates coordinates(const Vector& x) const {
    Coordinates c(counts_.size());
    for (std::size_t d = 0; d < counts_.size(); ++d) c[d] = coordinate(d, x[static_cast<Eigen::Index>(d)]);
    return c;
  }

  bool inside(const Coordinates& c) const {
    for (std::size_t d = 0; d < c.size(); ++d)
      if (c[d] < 0 || c[d] >= static_cast<std::ptrdiff_t>(counts_[d])) return false;
    return true;
  }

  std::size_t flatten(const Coordinates& c) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < counts_.size(); ++d)
      flat = flat * counts_[d] + static_cast<std::size_t>(c[d]);
    return flat;
  }

  Coordinates unflatten(std::size_t flat) const {
    Coordinates c(counts_.size());
    for (std::size_t d = counts_.size(); d-- > 0;) {
      c[d] = static_cast<std::ptrdiff_t>(flat % counts_[d]);
      flat /= counts_[d];
    }
    return c;
  }

  /// Flat index of the cell containing x, or nullopt outside the grid.
  std::optional<std::size_t> cell_of(const Vector& x) const {
    const auto c = coordinates(x);
    if (!inside(c)) return std::nullopt;
    return flatten(c);
  }

  struct Located {
    std::size_t cell;
    bool clamped;
  };

  /// Cell of x with out-of-grid coordinates clamped to the boundary cells.
  Located locate_clamped(const Vector& x) const {
    auto c = coordinates(x);
    bool clamped = false;
    for (std::size_t d = 0; d < c.size(); ++d) {
      const auto hi = static_cast<std::ptrdiff_t>(counts_[d]) - 1;
      if (c[d] < 0 || c[d] > hi) {
        c[d] = std::clamp<std::ptrdiff_t>(c[d], 0, hi);
        clamped = true;
      }
    }
    return {flatten(c), clamped};
  }

  Box cell_box(std::size_t flat) const {
    const auto c = unflatten(flat);
    Box b{Vector(lower_.size()), Vector(lower_.size())};
    for (std::size_t d = 0; d < c.size(); ++d) {
      const auto i = static_cast<Eigen::Index>(d);
      b.lower[i] = lower_[i] + width_[i] * Scalar(c[d]);
      b.upper[i] = b.lower[i] + width_[i];
    }
    return b;
  }

  Vector midpoint(std::size_t flat) const {
    const Box b = cell_box(flat);
    return (b.lower + b.upper) / Scalar(2);
  }

  /// Inclusive coordinate range [first, last] of cells overlapping the
  /// half-open interval [lo, hi) along `d`, unclamped (may leave the grid).
  /// Endpoints within 1e-9 cells of a grid line snap onto it.
  std::pair<std::ptrdiff_t, std::ptrdiff_t> overlap(std::size_t d, Scalar lo, Scalar hi) const {
    const auto i = static_cast<Eigen::Index>(d);
    auto snap = [](Scalar t) {
      const Scalar r = std::round(t);
      return std::abs(t - r) < Scalar(1e-9) ? r : t;
    };
    const Scalar a = snap((lo - lower_[i]) / width_[i]);
    const Scalar b = snap((hi - lower_[i]) / width_[i]);
    const auto first = static_cast<std::ptrdiff_t>(std::floor(a));
    auto last = static_cast<std::ptrdiff_t>(std::ceil(b)) - 1;
    if (last < first) last = first;  // degenerate box still occupies its cell
    return {first, last};
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (Eigen::Index d = 0; d < lower_.size(); ++d) {
      j["lower"].push_back(lower_[d]);
      j["upper"].push_back(upper_[d]);
      j["width"].push_back(width_[d]);
    }
    return j;
  }

  static BasicGrid from_json(const nlohmann::json& j) {
    auto read = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<Scalar>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    return BasicGrid(read("lower"), read("upper"), read("width"));
  }

 private:
  Vector lower_, upper_, width_;
  std::vector<std::size_t> counts_;
};

using Box = BasicBox<double>;
using Grid = BasicGrid<double>;

/// Sound successor-box function: the returned box must contain f(x, action)
/// for every x in the input box.
using IntervalDynamics = std::function<Box(const Box& cell, std::size_t action)>;

/// Interval abstraction of the dynamics. States 0..cell_count()-1 are grid
/// cells by flat index; then, per dimension d, an absorbing `below` sink
/// (cell_count() + 2d) and `above` sink (cell_count() + 2d + 1). Every
/// transition carries a point distribution: overlapping successor cells are
/// nondeterministic alternatives, not probabilistic branches.
struct AbstractDynamics {
  ProbabilisticAutomaton automaton;
  std::size_t cell_count = 0;

  bool is_sink(StateId s) const { return s >= cell_count; }
  StateId below_sink(std::size_t d) const { return cell_count + 2 * d; }
  StateId above_sink(std::size_t d) const { return cell_count + 2 * d + 1; }
};

/// `actions[u]` labels action u; `dynamics` is queried with that index.
AbstractDynamics abstract_dynamics(const Grid& grid, const IntervalDynamics& dynamics,
                                   std::span<const std::string> actions, unsigned jobs = 1);

/// One histogram bin [lower, upper) of the estimation error, with its mass.
struct ErrorBin {
  double lower;
  double upper;
  double probability;
  double center() const { return 0.5 * (lower + upper); }
};

/// Categorical model of the estimation error (true minus estimated state)
/// along one dimension. Bins are disjoint, ordered and centred on integer
/// multiples of the bin width.
class ErrorModel {
 public:
  ErrorModel() = default;
  ErrorModel(std::vector<ErrorBin> bins, double bin_width);

  std::span<const ErrorBin> bins() const { return bins_; }
  double bin_width() const { return bin_width_; }

  nlohmann::json to_json() const;
  static ErrorModel from_json(const nlohmann::json& j);

 private:
  std::vector<ErrorBin> bins_;
  double bin_width_ = 1.0;
};

/// Normalised histogram of `errors` with bins [(j-1/2)w, (j+1/2)w); empty
/// bins are dropped.
ErrorModel estimate_error_model(std::span<const double> errors, double bin_width);

/// Controller as seen by the abstraction: a finite set of control
/// configurations (which double as the dynamics' action labels) and a
/// possibly randomised decision rule from perceived state plus the previous
/// configuration.
struct ControllerLogic {
  std::vector<std::string> configurations;
  /// Perceived values are clamped to [perception_lower, perception_upper].
  Eigen::ArrayXd perception_lower;
  Eigen::ArrayXd perception_upper;
  /// Adds weight * P(next = c | perceived, previous) to next_mass[c].
  std::function<void(const Eigen::ArrayXd& perceived, std::size_t previous, double weight,
                     std::span<double> next_mass)>
      decide;
};

/// Abstract system: dynamics abstraction composed in parallel with the
/// perception/estimation error model and the controller.
///
/// The composed state (cell, u) means "true state in `cell`, configuration u
/// about to be applied". One step takes a nondeterministic interval step
/// under u to a successor cell c', then draws an estimation error per
/// dimension, forms the perceived state midpoint(c') - error (clamped), and
/// lets the controller pick the next configuration. Successor cells outside
/// the grid lead to absorbing sink states.
struct AbstractSystem {
  ProbabilisticAutomaton automaton;
  std::size_t cell_count = 0;
  std::size_t config_count = 0;
  std::size_t sink_count = 0;
  /// Action id of each configuration in `automaton`.
  std::vector<ActionId> config_action;

  StateId state_of(std::size_t cell, std::size_t config) const {
    return cell * config_count + config;
  }
  bool is_grid_state(StateId s) const { return s / config_count < cell_count; }
  std::size_t cell_of(StateId s) const { return s / config_count; }
  std::size_t config_of(StateId s) const { return s % config_count; }
};

inline const std::string kUnsafeLabel = "unsafe";

/// Builds the abstract system. Cells for which `cell_unsafe(box)` holds and
/// all sinks carry the `unsafe` label. `errors` holds one model per grid
/// dimension, assumed independent.
AbstractSystem build_abstract_system(const Grid& grid, const IntervalDynamics& dynamics,
                                     std::span<const ErrorModel> errors,
                                     const ControllerLogic& controller,
                                     const std::function<bool(const Box&)>& cell_unsafe,
                                     unsigned jobs = 1);

/// States carrying `proposition`.
std::vector<StateId> states_with_label(const ProbabilisticAutomaton& pa,
                                       const std::string& proposition);

}  // namespace safemon
