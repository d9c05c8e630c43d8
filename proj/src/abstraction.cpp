#include "safemon/abstraction.hpp"

#include <algorithm>
#include <map>

namespace safemon {

AbstractDynamics abstract_dynamics(const Grid& grid, const IntervalDynamics& dynamics,
                                   std::span<const std::string> actions, unsigned jobs) {
  const std::size_t cells = grid.cell_count();
  const std::size_t dims = grid.dimensions();

  // successors[cell * |actions| + u]: sorted successor states.
  std::vector<std::vector<StateId>> successors(cells * actions.size());
  parallel_for_chunks(cells, jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t cell = begin; cell < end; ++cell) {
      const Box box = grid.cell_box(cell);
      for (std::size_t u = 0; u < actions.size(); ++u) {
        const Box next = dynamics(box, u);
        auto& out = successors[cell * actions.size() + u];
        std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> ranges(dims);
        bool any_inside = true;
        for (std::size_t d = 0; d < dims; ++d) {
          const auto i = static_cast<Eigen::Index>(d);
          auto [first, last] = grid.overlap(d, next.lower[i], next.upper[i]);
          const auto hi = static_cast<std::ptrdiff_t>(grid.count(d)) - 1;
          if (first < 0) out.push_back(cells + 2 * d);
          if (last > hi) out.push_back(cells + 2 * d + 1);
          first = std::max<std::ptrdiff_t>(first, 0);
          last = std::min(last, hi);
          if (first > last) any_inside = false;
          ranges[d] = {first, last};
        }
        if (any_inside) {
          Grid::Coordinates c(dims);
          for (std::size_t d = 0; d < dims; ++d) c[d] = ranges[d].first;
          while (true) {
            out.push_back(grid.flatten(c));
            std::size_t d = dims;
            while (d-- > 0) {
              if (++c[d] <= ranges[d].second) break;
              c[d] = ranges[d].first;
            }
            if (d == static_cast<std::size_t>(-1)) break;
          }
        }
        std::sort(out.begin(), out.end());
      }
    }
  });

  PaBuilder builder;
  for (std::size_t cell = 0; cell < cells; ++cell) builder.add_state("c" + std::to_string(cell));
  for (std::size_t d = 0; d < dims; ++d) {
    builder.add_label(builder.add_state("below" + std::to_string(d)), "out_of_grid");
    builder.add_label(builder.add_state("above" + std::to_string(d)), "out_of_grid");
  }
  std::vector<ActionId> ids;
  for (const auto& a : actions) ids.push_back(builder.add_action(a));
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t u = 0; u < actions.size(); ++u)
      for (StateId next : successors[cell * actions.size() + u])
        builder.add_transition(cell, ids[u], make_point_distribution(next));
  return {std::move(builder).build(), cells};
}

// -------------------------------------------------------------- error model

ErrorModel::ErrorModel(std::vector<ErrorBin> bins, double bin_width)
    : bins_(std::move(bins)), bin_width_(bin_width) {
  if (!(bin_width_ > 0)) throw ValidationError("error model: bin width must be positive");
  if (bins_.empty()) throw ValidationError("error model: no bins");
  double total = 0.0;
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    if (!(bins_[i].upper > bins_[i].lower) || !(bins_[i].probability >= 0))
      throw ValidationError("error model: malformed bin");
    if (i > 0 && bins_[i].lower < bins_[i - 1].upper)
      throw ValidationError("error model: bins overlap or are unordered");
    total += bins_[i].probability;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance)
    throw ValidationError("error model: probabilities do not sum to one");
}

nlohmann::json ErrorModel::to_json() const {
  nlohmann::json j;
  j["bin_width"] = bin_width_;
  j["bins"] = nlohmann::json::array();
  for (const auto& b : bins_)
    j["bins"].push_back({{"lower", b.lower}, {"upper", b.upper}, {"probability", b.probability}});
  return j;
}

ErrorModel ErrorModel::from_json(const nlohmann::json& j) {
  std::vector<ErrorBin> bins;
  for (const auto& b : j.at("bins"))
    bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(),
                    b.at("probability").get<double>()});
  return ErrorModel(std::move(bins), j.at("bin_width").get<double>());
}

ErrorModel estimate_error_model(std::span<const double> errors, double bin_width) {
  if (!(bin_width > 0)) throw ValidationError("error model: bin width must be positive");
  if (errors.empty()) throw ValidationError("error model: no samples");
  std::map<long long, std::size_t> counts;
  for (double e : errors) {
    if (!std::isfinite(e)) throw ValidationError("error model: non-finite sample");
    ++counts[static_cast<long long>(std::floor(e / bin_width + 0.5))];
  }
  std::vector<ErrorBin> bins;
  const auto n = static_cast<double>(errors.size());
  for (const auto& [j, c] : counts) {
    const double center = static_cast<double>(j) * bin_width;
    bins.push_back({center - 0.5 * bin_width, center + 0.5 * bin_width, static_cast<double>(c) / n});
  }
  return ErrorModel(std::move(bins), bin_width);
}

// ---------------------------------------------------------- abstract system

namespace {

// Per-dimension perceived values for the true cell midpoint, merged.
std::vector<std::pair<double, double>> perceived_values(double midpoint, const ErrorModel& model,
                                                        double lo, double hi) {
  std::vector<std::pair<double, double>> values;
  values.reserve(model.bins().size());
  for (const auto& b : model.bins())
    values.emplace_back(std::clamp(midpoint - b.center(), lo, hi), b.probability);
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& v : values) {
    if (!merged.empty() && merged.back().first == v.first)
      merged.back().second += v.second;
    else
      merged.push_back(v);
  }
  return merged;
}

std::string sync_label(const std::string& action, StateId successor) {
  return action + "@" + std::to_string(successor);
}

}  // namespace

AbstractSystem build_abstract_system(const Grid& grid, const IntervalDynamics& dynamics,
                                     std::span<const ErrorModel> errors,
                                     const ControllerLogic& controller,
                                     const std::function<bool(const Box&)>& cell_unsafe,
                                     unsigned jobs) {
  const std::size_t dims = grid.dimensions();
  const std::size_t configs = controller.configurations.size();
  if (errors.size() != dims)
    throw ValidationError("abstract system: need one error model per grid dimension");
  if (configs == 0 || !controller.decide)
    throw ValidationError("abstract system: controller has no configurations");
  if (static_cast<std::size_t>(controller.perception_lower.size()) != dims ||
      static_cast<std::size_t>(controller.perception_upper.size()) != dims)
    throw ValidationError("abstract system: perception bounds do not match grid dimension");

  const AbstractDynamics dyn =
      abstract_dynamics(grid, dynamics, controller.configurations, jobs);
  const auto& d_pa = dyn.automaton;

  // Dynamics component: each step also announces its successor state, so the
  // perception/controller component can synchronise on it.
  PaBuilder dyn_builder;
  for (StateId s = 0; s < d_pa.state_count(); ++s) {
    dyn_builder.add_state(d_pa.state_name(s));
    for (const auto& l : d_pa.labels(s)) dyn_builder.add_label(s, l);
    if (!dyn.is_sink(s) && cell_unsafe(grid.cell_box(s))) dyn_builder.add_label(s, kUnsafeLabel);
    if (dyn.is_sink(s)) dyn_builder.add_label(s, kUnsafeLabel);
  }
  struct SyncKey {
    std::size_t config;
    StateId successor;
  };
  std::vector<SyncKey> keys;
  std::vector<std::size_t> key_of_label;
  dyn_builder.reserve_transitions(d_pa.transition_count());
  for (const auto& t : d_pa.transitions()) {
    const StateId next = t.distribution.support().front().key;
    const ActionId id = dyn_builder.add_action(sync_label(d_pa.action_label(t.action), next));
    if (id == keys.size()) keys.push_back({t.action, next});
    dyn_builder.add_transition(t.source, id, t.distribution);
  }
  const auto dyn_sync = std::move(dyn_builder).build();

  // Perception/controller component over configurations: on label (u, c')
  // it moves from u to the next configuration drawn from the error model.
  std::vector<CategoricalDistribution> next_config(keys.size());
  parallel_for_chunks(keys.size(), jobs, [&](std::size_t begin, std::size_t end) {
    std::vector<double> mass(configs);
    Eigen::ArrayXd perceived(static_cast<Eigen::Index>(dims));
    for (std::size_t k = begin; k < end; ++k) {
      const auto [u, next] = keys[k];
      if (dyn.is_sink(next)) {
        next_config[k] = make_point_distribution(u);
        continue;
      }
      const Eigen::ArrayXd mid = grid.midpoint(next);
      std::vector<std::vector<std::pair<double, double>>> per_dim(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        const auto i = static_cast<Eigen::Index>(d);
        per_dim[d] = perceived_values(mid[i], errors[d], controller.perception_lower[i],
                                      controller.perception_upper[i]);
      }
      std::fill(mass.begin(), mass.end(), 0.0);
      std::vector<std::size_t> pick(dims, 0);
      while (true) {
        double w = 1.0;
        for (std::size_t d = 0; d < dims; ++d) {
          perceived[static_cast<Eigen::Index>(d)] = per_dim[d][pick[d]].first;
          w *= per_dim[d][pick[d]].second;
        }
        controller.decide(perceived, u, w, mass);
        std::size_t d = 0;
        while (d < dims && ++pick[d] == per_dim[d].size()) pick[d++] = 0;
        if (d == dims) break;
      }
      std::vector<CategoricalDistribution::Entry> entries;
      for (std::size_t c = 0; c < configs; ++c)
        if (mass[c] > 0) entries.push_back({c, mass[c]});
      next_config[k] = CategoricalDistribution(std::move(entries));
    }
  });

  PaBuilder ctl_builder;
  for (const auto& name : controller.configurations) ctl_builder.add_state(name);
  ctl_builder.reserve_transitions(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const ActionId id = ctl_builder.add_action(dyn_sync.action_label(k));
    ctl_builder.add_transition(keys[k].config, id, std::move(next_config[k]));
  }
  const auto ctl = std::move(ctl_builder).build();

  auto composed = parallel_compose(dyn_sync, ctl);

  // Hide the announced successor: label (u, c') becomes u.
  AbstractSystem system;
  system.automaton = rename_actions(composed.automaton, [](std::string_view label) {
    return std::string(label.substr(0, label.rfind('@')));
  });
  system.cell_count = dyn.cell_count;
  system.config_count = configs;
  system.sink_count = 2 * dims;
  for (const auto& name : controller.configurations) {
    const auto a = system.automaton.find_action(name);
    system.config_action.push_back(a ? *a : static_cast<ActionId>(-1));
  }
  return system;
}

std::vector<StateId> states_with_label(const ProbabilisticAutomaton& pa,
                                       const std::string& proposition) {
  std::vector<StateId> out;
  for (StateId s = 0; s < pa.state_count(); ++s)
    if (pa.has_label(s, proposition)) out.push_back(s);
  return out;
}

}  // namespace safemon
