#include "safemon/watertank.hpp"

#include <algorithm>
#include <cmath>

namespace safemon::watertank {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(N(0, sigma^2) <= x), a step function for sigma = 0.
double noise_cdf(double x, double sigma) {
  if (sigma == 0.0) return x >= 0.0 ? 1.0 : 0.0;
  return normal_cdf(x / sigma);
}

}  // namespace

// ------------------------------------------------------------------- params

void TankParams::validate() const {
  if (tanks == 0) throw ValidationError("tank count must be positive");
  if (!(0 < lower_threshold && lower_threshold < upper_threshold && upper_threshold < tank_size))
    throw ValidationError("thresholds must satisfy 0 < LT < UT < TS");
  if (!(inflow > outflow && outflow > 0)) throw ValidationError("need inflow > outflow > 0");
  if (!(sensor_sigma >= 0) || !std::isfinite(sensor_sigma))
    throw ValidationError("sensor sigma must be finite and nonnegative");
  if (!(outlier_prob >= 0 && outlier_prob < 1))
    throw ValidationError("outlier probability must lie in [0, 1)");
}

nlohmann::json TankParams::to_json() const {
  return {{"tanks", tanks},
          {"tank_size", tank_size},
          {"inflow", inflow},
          {"outflow", outflow},
          {"lower_threshold", lower_threshold},
          {"upper_threshold", upper_threshold},
          {"sensor_sigma", sensor_sigma},
          {"outlier_prob", outlier_prob},
          {"horizon", horizon},
          {"safety_reading", reading == SafetyReading::AllTanks ? "all_tanks" : "any_tank"}};
}

TankParams TankParams::from_json(const nlohmann::json& j) {
  TankParams p;
  p.tanks = j.value("tanks", p.tanks);
  p.tank_size = j.value("tank_size", p.tank_size);
  p.inflow = j.value("inflow", p.inflow);
  p.outflow = j.value("outflow", p.outflow);
  p.lower_threshold = j.value("lower_threshold", p.lower_threshold);
  p.upper_threshold = j.value("upper_threshold", p.upper_threshold);
  p.sensor_sigma = j.value("sensor_sigma", p.sensor_sigma);
  p.outlier_prob = j.value("outlier_prob", p.outlier_prob);
  p.horizon = j.value("horizon", p.horizon);
  const auto reading = j.value("safety_reading", std::string("all_tanks"));
  if (reading == "all_tanks")
    p.reading = SafetyReading::AllTanks;
  else if (reading == "any_tank")
    p.reading = SafetyReading::AnyTank;
  else
    throw ValidationError("safety_reading must be all_tanks or any_tank");
  p.validate();
  return p;
}

// ------------------------------------------------------------ configuration

ConfigEncoder::ConfigEncoder(std::size_t tanks) {
  if (tanks == 0 || tanks > 16) throw ValidationError("unsupported tank count");
  for (std::size_t mask = 0; mask < (std::size_t{1} << tanks); ++mask) {
    ControlConfig c;
    c.requests.resize(tanks);
    for (std::size_t i = 0; i < tanks; ++i) c.requests[i] = (mask >> i) & 1;
    std::string bits;
    for (std::size_t i = 0; i < tanks; ++i) bits += c.requests[i] ? '1' : '0';
    if (mask == 0) {
      configs_.push_back(c);
      labels_.push_back("r" + bits + "_f0");
      continue;
    }
    for (std::size_t i = 0; i < tanks; ++i) {
      if (!c.requests[i]) continue;
      c.fill = i;
      configs_.push_back(c);
      labels_.push_back("r" + bits + "_f" + std::to_string(i + 1));
    }
  }
}

std::size_t ConfigEncoder::index(const ControlConfig& config) const {
  for (std::size_t i = 0; i < configs_.size(); ++i)
    if (configs_[i] == config) return i;
  throw ValidationError("inconsistent control configuration");
}

// ----------------------------------------------------------------- dynamics

bool violates(const TankParams& params, const Eigen::ArrayXd& levels) {
  const auto out_of_range = (levels <= 0.0) || (levels >= params.tank_size);
  return params.reading == SafetyReading::AllTanks ? out_of_range.any() : out_of_range.all();
}

StepResult step_dynamics(const TankParams& params, const SystemState& state,
                         std::optional<std::size_t> fill) {
  StepResult r;
  r.pre_clamp = state.levels - params.outflow;
  if (fill) r.pre_clamp[static_cast<Eigen::Index>(*fill)] += params.inflow;
  r.breached.resize(static_cast<std::size_t>(r.pre_clamp.size()));
  for (Eigen::Index i = 0; i < r.pre_clamp.size(); ++i)
    r.breached[static_cast<std::size_t>(i)] =
        r.pre_clamp[i] <= 0.0 || r.pre_clamp[i] >= params.tank_size;
  r.violated = violates(params, r.pre_clamp);
  r.state.levels = r.pre_clamp.max(0.0).min(params.tank_size);
  r.state.control = state.control;
  return r;
}

double sense(const TankParams& params, double level, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < params.outlier_prob) return unit(rng) < 0.5 ? 0.0 : params.tank_size;
  if (params.sensor_sigma == 0.0) return std::clamp(level, 0.0, params.tank_size);
  std::normal_distribution<double> noise(0.0, params.sensor_sigma);
  return std::clamp(level + noise(rng), 0.0, params.tank_size);
}

Grid tank_grid(const Grid& joint, std::size_t tank) {
  const auto i = static_cast<Eigen::Index>(tank);
  return Grid(joint.lower().segment(i, 1), joint.upper().segment(i, 1),
              joint.width().segment(i, 1));
}

Grid joint_grid(const TankParams& params, double lower, double upper, double width) {
  const auto n = static_cast<Eigen::Index>(params.tanks);
  return Grid(Eigen::ArrayXd::Constant(n, lower), Eigen::ArrayXd::Constant(n, upper),
              Eigen::ArrayXd::Constant(n, width));
}

// ------------------------------------------------------------------- filter

Eigen::ArrayXd FilterState::mean(const TankParams& params, const Grid& level_grid) const {
  const auto cells = static_cast<Eigen::Index>(level_grid.cell_count());
  Eigen::VectorXd mid(cells);
  for (Eigen::Index k = 0; k < cells; ++k) mid[k] = level_grid.midpoint(static_cast<std::size_t>(k))[0];
  Eigen::ArrayXd m(static_cast<Eigen::Index>(belief.size()));
  for (std::size_t i = 0; i < belief.size(); ++i)
    m[static_cast<Eigen::Index>(i)] = std::clamp(belief[i].dot(mid), 0.0, params.tank_size);
  return m;
}

FilterState uniform_filter(const TankParams& params, const Grid& level_grid) {
  const auto cells = static_cast<Eigen::Index>(level_grid.cell_count());
  FilterState fs;
  fs.belief.assign(params.tanks, Eigen::VectorXd::Constant(cells, 1.0 / static_cast<double>(cells)));
  return fs;
}

Eigen::VectorXd reading_likelihood(const TankParams& params, const Grid& level_grid,
                                   double reading) {
  const auto cells = static_cast<Eigen::Index>(level_grid.cell_count());
  const double q = params.outlier_prob;
  const double sigma = params.sensor_sigma;
  Eigen::VectorXd like(cells);
  for (Eigen::Index k = 0; k < cells; ++k) {
    const Box box = level_grid.cell_box(static_cast<std::size_t>(k));
    const double a = box.lower[0], b = box.upper[0];
    const double m = 0.5 * (a + b);
    if (reading <= 0.0) {
      like[k] = 0.5 * q + (1 - q) * noise_cdf(0.0 - m, sigma);
    } else if (reading >= params.tank_size) {
      like[k] = 0.5 * q + (1 - q) * noise_cdf(m - params.tank_size, sigma);
    } else if (sigma == 0.0) {
      like[k] = (1 - q) * (reading >= a && reading < b ? 1.0 : 0.0) / (b - a);
    } else {
      // Gaussian density averaged over the cell.
      like[k] = (1 - q) * (normal_cdf((reading - a) / sigma) - normal_cdf((reading - b) / sigma)) /
                (b - a);
    }
  }
  return like;
}

FilterState measurement_update(const TankParams& params, const Grid& level_grid,
                               const FilterState& prior, const Eigen::ArrayXd& readings,
                               std::vector<bool>* degenerate) {
  FilterState post = prior;
  if (degenerate) degenerate->assign(prior.belief.size(), false);
  for (std::size_t i = 0; i < prior.belief.size(); ++i) {
    Eigen::VectorXd p = prior.belief[i].cwiseProduct(
        reading_likelihood(params, level_grid, readings[static_cast<Eigen::Index>(i)]));
    const double z = p.sum();
    if (!(z > 0) || !std::isfinite(z)) {
      if (degenerate) (*degenerate)[i] = true;
      continue;
    }
    post.belief[i] = p / z;
  }
  return post;
}

FilterState predict(const TankParams& params, const Grid& level_grid, const FilterState& belief,
                    std::optional<std::size_t> fill) {
  const auto cells = static_cast<Eigen::Index>(level_grid.cell_count());
  const double width = level_grid.width()[0];
  FilterState next;
  next.belief.reserve(belief.belief.size());
  for (std::size_t i = 0; i < belief.belief.size(); ++i) {
    const double shift =
        (fill && *fill == i ? params.inflow : 0.0) - params.outflow;
    const double cells_moved = shift / width;
    const double whole = std::floor(cells_moved);
    const double frac = cells_moved - whole;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cells);
    for (Eigen::Index k = 0; k < cells; ++k) {
      const double m = belief.belief[i][k];
      if (m == 0.0) continue;
      const auto j = static_cast<Eigen::Index>(k + static_cast<Eigen::Index>(whole));
      out[std::clamp<Eigen::Index>(j, 0, cells - 1)] += m * (1.0 - frac);
      if (frac > 0) out[std::clamp<Eigen::Index>(j + 1, 0, cells - 1)] += m * frac;
    }
    next.belief.push_back(out / out.sum());
  }
  return next;
}

FilterState filter_update(const TankParams& params, const Grid& level_grid,
                          const FilterState& belief, const Eigen::ArrayXd& readings,
                          std::optional<std::size_t> fill) {
  return predict(params, level_grid, measurement_update(params, level_grid, belief, readings), fill);
}

// --------------------------------------------------------------- controller

ControlConfig control(const TankParams& params, const Eigen::ArrayXd& estimates,
                      const std::vector<bool>& previous_requests, Rng& rng) {
  ControlConfig c;
  c.requests = previous_requests;
  c.requests.resize(static_cast<std::size_t>(estimates.size()), false);
  std::vector<std::size_t> lowest;
  double best = 0.0;
  for (std::size_t i = 0; i < c.requests.size(); ++i) {
    const double e = estimates[static_cast<Eigen::Index>(i)];
    if (e < params.lower_threshold)
      c.requests[i] = true;
    else if (e >= params.upper_threshold)
      c.requests[i] = false;
    if (!c.requests[i]) continue;
    if (lowest.empty() || e < best) {
      lowest.assign(1, i);
      best = e;
    } else if (e == best) {
      lowest.push_back(i);
    }
  }
  if (lowest.size() == 1) {
    c.fill = lowest.front();
  } else if (!lowest.empty()) {
    std::uniform_int_distribution<std::size_t> coin(0, lowest.size() - 1);
    c.fill = lowest[coin(rng)];
  }
  return c;
}

// -------------------------------------------------------------------- trial

std::optional<bool> TrialTrace::safe_label(std::size_t t, std::size_t horizon) const {
  if (breach_time && *breach_time <= t + horizon) return false;
  if (t + horizon <= length) return true;
  return std::nullopt;
}

TrialTrace run_trial(const TankParams& params, const Grid& level_grid,
                     const Eigen::ArrayXd& initial_levels, std::uint64_t seed, std::size_t length) {
  params.validate();
  if (static_cast<std::size_t>(initial_levels.size()) != params.tanks)
    throw ValidationError("initial levels do not match tank count");
  Rng rng(seed);
  TrialTrace trace;
  trace.seed = seed;
  trace.length = length;
  trace.steps.reserve(length);

  SystemState state{initial_levels, ControlConfig{std::vector<bool>(params.tanks, false), {}}};
  FilterState belief = uniform_filter(params, level_grid);
  const ConfigEncoder encoder(params.tanks);

  for (std::size_t t = 0; t < length; ++t) {
    Eigen::ArrayXd readings(state.levels.size());
    for (Eigen::Index i = 0; i < readings.size(); ++i) readings[i] = sense(params, state.levels[i], rng);
    belief = measurement_update(params, level_grid, belief, readings);
    const Eigen::ArrayXd estimates = belief.mean(params, level_grid);
    const ControlConfig action = control(params, estimates, state.control.requests, rng);

    TraceStep step;
    step.t = t;
    step.true_levels = state.levels;
    step.readings = readings;
    step.estimates = estimates;
    step.belief = belief.belief;
    step.action = action;
    step.action_index = encoder.index(action);
    trace.steps.push_back(std::move(step));

    state.control = action;
    const StepResult next = step_dynamics(params, state, action.fill);
    belief = predict(params, level_grid, belief, action.fill);
    if (next.violated) {
      trace.breach_time = t + 1;
      break;
    }
    state = next.state;
  }
  return trace;
}

std::vector<double> estimation_errors(const std::vector<TrialTrace>& traces, std::size_t tank) {
  std::vector<double> errors;
  const auto i = static_cast<Eigen::Index>(tank);
  for (const auto& trace : traces)
    for (const auto& s : trace.steps) errors.push_back(s.true_levels[i] - s.estimates[i]);
  return errors;
}

std::vector<ErrorModel> estimate_error_models(const TankParams& params,
                                              const std::vector<TrialTrace>& traces,
                                              double bin_width) {
  std::vector<ErrorModel> models;
  for (std::size_t i = 0; i < params.tanks; ++i)
    models.push_back(estimate_error_model(estimation_errors(traces, i), bin_width));
  return models;
}

// ----------------------------------------------------------------- adapters

IntervalDynamics interval_dynamics(const TankParams& params, const ConfigEncoder& encoder) {
  return [params, encoder](const Box& cell, std::size_t action) {
    const auto fill = encoder.config(action).fill;
    Box next = cell;
    next.lower -= params.outflow;
    next.upper -= params.outflow;
    if (fill) {
      next.lower[static_cast<Eigen::Index>(*fill)] += params.inflow;
      next.upper[static_cast<Eigen::Index>(*fill)] += params.inflow;
    }
    return next;
  };
}

ControllerLogic controller_logic(const TankParams& params, const ConfigEncoder& encoder) {
  ControllerLogic logic;
  logic.configurations = encoder.labels();
  const auto n = static_cast<Eigen::Index>(params.tanks);
  logic.perception_lower = Eigen::ArrayXd::Zero(n);
  logic.perception_upper = Eigen::ArrayXd::Constant(n, params.tank_size);
  logic.decide = [params, encoder](const Eigen::ArrayXd& perceived, std::size_t previous,
                                   double weight, std::span<double> next_mass) {
    ControlConfig c;
    c.requests = encoder.config(previous).requests;
    std::size_t ties = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < c.requests.size(); ++i) {
      const double e = perceived[static_cast<Eigen::Index>(i)];
      if (e < params.lower_threshold)
        c.requests[i] = true;
      else if (e >= params.upper_threshold)
        c.requests[i] = false;
      if (!c.requests[i]) continue;
      if (ties == 0 || e < best) {
        best = e;
        ties = 1;
      } else if (e == best) {
        ++ties;
      }
    }
    if (ties == 0) {
      next_mass[encoder.index(c)] += weight;
      return;
    }
    // Fair coin among the tied lowest requesting tanks.
    for (std::size_t i = 0; i < c.requests.size(); ++i) {
      if (!c.requests[i] || perceived[static_cast<Eigen::Index>(i)] != best) continue;
      c.fill = i;
      next_mass[encoder.index(c)] += weight / static_cast<double>(ties);
    }
  };
  return logic;
}

std::function<bool(const Box&)> unsafe_cell(const TankParams& params) {
  return [params](const Box& box) {
    const auto touches = (box.lower <= 0.0) || (box.upper > params.tank_size);
    return params.reading == SafetyReading::AllTanks ? touches.any() : touches.all();
  };
}

}  // namespace safemon::watertank
