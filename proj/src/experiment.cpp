#include "safemon/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "safemon/prism.hpp"

namespace safemon {

namespace fs = std::filesystem;
using watertank::TrialTrace;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { open_output(path) << j.dump(2) << '\n'; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

double parse_double(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw ValidationError("not a number: '" + text + "'");
  return v;
}

std::size_t parse_index(const std::string& text) {
  const double v = parse_double(text);
  if (v < 0 || v != std::floor(v)) throw ValidationError("not an index: '" + text + "'");
  return static_cast<std::size_t>(v);
}

std::string format_belief(const Eigen::VectorXd& belief) {
  std::string out;
  for (Eigen::Index k = 0; k < belief.size(); ++k) {
    if (belief[k] == 0.0) continue;
    if (!out.empty()) out += '|';
    out += std::to_string(k) + ':' + format_exact(belief[k]);
  }
  return out;
}

Eigen::VectorXd parse_belief(const std::string& text, std::size_t cells) {
  Eigen::VectorXd belief = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells));
  if (text.empty()) throw ValidationError("empty belief");
  for (const auto& item : split(text, '|')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ValidationError("malformed belief entry '" + item + "'");
    const std::size_t k = parse_index(item.substr(0, colon));
    if (k >= cells) throw ValidationError("belief cell out of range");
    belief[static_cast<Eigen::Index>(k)] = parse_double(item.substr(colon + 1));
  }
  return belief;
}

std::vector<ErrorModel> load_error_models(const ExperimentConfig& config) {
  const auto j = read_json(config.output_dir / "error_model.json");
  std::vector<ErrorModel> models;
  for (const auto& m : j.at("tanks")) models.push_back(ErrorModel::from_json(m));
  if (models.size() != config.tank.tanks)
    throw ValidationError("error model does not match the tank count");
  return models;
}

struct LoadedTable {
  SafetyTable table;
  nlohmann::json sidecar;
};

LoadedTable load_table(const fs::path& csv) {
  fs::path sidecar = csv;
  sidecar.replace_extension(".json");
  return {read_safety_table(csv, sidecar), read_json(sidecar)};
}

const char* const kMonitorNames[] = {"point", "distribution", "true_state"};

}  // namespace

// ------------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  tank.validate();
  if (tank.horizon > kMaxHorizon) throw ValidationError("horizon too large");
  (void)joint_grid();
  if (!(grid.lower <= 0.0 && grid.upper > tank.tank_size))
    throw ValidationError("grid must cover the tank range [0, TS]");
  if (calibration.trials == 0 || calibration.length == 0)
    throw ValidationError("calibration needs at least one step");
  if (!(calibration.bin_width > 0)) throw ValidationError("error bin width must be positive");
  if (campaign.trials == 0 || campaign.length == 0)
    throw ValidationError("campaign needs at least one step");
  if (!(campaign.initial_lower > 0 && campaign.initial_lower <= campaign.initial_upper &&
        campaign.initial_upper < tank.tank_size))
    throw ValidationError("initial level range must lie inside (0, TS)");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"tank", tank.to_json()},
          {"grid", {{"lower", grid.lower}, {"upper", grid.upper}, {"width", grid.width}}},
          {"calibration",
           {{"trials", calibration.trials},
            {"length", calibration.length},
            {"bin_width", calibration.bin_width}}},
          {"mode", safemon::to_string(mode)},
          {"campaign",
           {{"trials", campaign.trials},
            {"length", campaign.length},
            {"initial_lower", campaign.initial_lower},
            {"initial_upper", campaign.initial_upper},
            {"write_traces", campaign.write_traces}}},
          {"master_seed", master_seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("tank")) c.tank = watertank::TankParams::from_json(j.at("tank"));
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.lower = g.value("lower", c.grid.lower);
      c.grid.upper = g.value("upper", c.grid.upper);
      c.grid.width = g.value("width", c.grid.width);
    }
    if (j.contains("calibration")) {
      const auto& k = j.at("calibration");
      c.calibration.trials = k.value("trials", c.calibration.trials);
      c.calibration.length = k.value("length", c.calibration.length);
      c.calibration.bin_width = k.value("bin_width", c.calibration.bin_width);
    }
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("campaign")) {
      const auto& k = j.at("campaign");
      c.campaign.trials = k.value("trials", c.campaign.trials);
      c.campaign.length = k.value("length", c.campaign.length);
      c.campaign.initial_lower = k.value("initial_lower", c.campaign.initial_lower);
      c.campaign.initial_upper = k.value("initial_upper", c.campaign.initial_upper);
      c.campaign.write_traces = k.value("write_traces", c.campaign.write_traces);
    }
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    c.jobs = j.value("jobs", c.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) { return from_json(read_json(path)); }

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

Grid ExperimentConfig::joint_grid() const {
  return watertank::joint_grid(tank, grid.lower, grid.upper, grid.width);
}

Grid ExperimentConfig::level_grid() const { return watertank::tank_grid(joint_grid(), 0); }

std::string artifact_comment(const ExperimentConfig& config) {
  return "# config_hash=" + config.hash() + " master_seed=" + std::to_string(config.master_seed);
}

// -------------------------------------------------------------- simulation

std::vector<TrialTrace> simulate_trials(const ExperimentConfig& config, std::size_t trials,
                                        std::size_t length, std::uint64_t trial_stream,
                                        std::uint64_t initial_stream) {
  const Grid level_grid = config.level_grid();
  std::vector<TrialTrace> traces(trials);
  parallel_for_chunks(trials, config.jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      watertank::Rng init(derive_seed(config.master_seed, initial_stream, i));
      std::uniform_real_distribution<double> level(config.campaign.initial_lower,
                                                   config.campaign.initial_upper);
      Eigen::ArrayXd initial(static_cast<Eigen::Index>(config.tank.tanks));
      for (Eigen::Index k = 0; k < initial.size(); ++k) initial[k] = level(init);
      traces[i] = watertank::run_trial(config.tank, level_grid, initial,
                                       derive_seed(config.master_seed, trial_stream, i), length);
    }
  });
  return traces;
}

std::vector<ErrorModel> calibrate(const ExperimentConfig& config) {
  const auto traces = simulate_trials(config, config.calibration.trials, config.calibration.length,
                                      kCalibrationTrialStream, kCalibrationInitialStream);
  return watertank::estimate_error_models(config.tank, traces, config.calibration.bin_width);
}

AbstractionResult build_abstraction(const ExperimentConfig& config,
                                    std::span<const ErrorModel> errors) {
  const auto start = std::chrono::steady_clock::now();
  const watertank::ConfigEncoder encoder(config.tank.tanks);
  AbstractionResult r;
  r.system = build_abstract_system(config.joint_grid(),
                                   watertank::interval_dynamics(config.tank, encoder), errors,
                                   watertank::controller_logic(config.tank, encoder),
                                   watertank::unsafe_cell(config.tank), config.jobs);
  r.build_seconds = seconds_since(start);
  return r;
}

CheckResult check_abstraction(const ExperimentConfig& config, const AbstractSystem& system) {
  const auto start = std::chrono::steady_clock::now();
  BoundedSafetyQuery query{states_with_label(system.automaton, kUnsafeLabel), config.tank.horizon,
                           config.mode};
  CheckResult r;
  r.table = check_bounded_safety(system.automaton, query, config.jobs);
  r.check_seconds = seconds_since(start);
  const watertank::ConfigEncoder encoder(config.tank.tanks);
  r.sidecar = {{"config_hash", config.hash()},
               {"master_seed", config.master_seed},
               {"grid", config.joint_grid().to_json()},
               {"cell_count", system.cell_count},
               {"config_count", system.config_count},
               {"config_labels", encoder.labels()},
               {"config_actions", system.config_action},
               {"state_count", system.automaton.state_count()},
               {"transition_count", system.automaton.transition_count()},
               {"unsafe_states", query.unsafe.size()},
               {"tank", config.tank.to_json()}};
  return r;
}

MonitorContext monitor_context(const SafetyTable& table, const nlohmann::json& sidecar) {
  try {
    const Grid grid = Grid::from_json(sidecar.at("grid"));
    const auto actions = sidecar.at("config_actions").get<std::vector<ActionId>>();
    return MonitorContext::from_table(table, grid, actions);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("table sidecar: ") + e.what());
  }
}

Eigen::VectorXd prune_belief(const Eigen::VectorXd& belief) {
  return (belief.array() < kBeliefPrecision).select(0.0, belief);
}

std::size_t attach_monitors(const MonitorContext& ctx, TrialTrace& trace) {
  std::size_t clamped = 0;
  for (auto& step : trace.steps) {
    std::vector<Eigen::VectorXd> beliefs;
    for (const auto& b : step.belief) beliefs.push_back(prune_belief(b));
    const auto point = monitor_point(ctx, step.estimates, step.action_index, step.t);
    const auto dist = monitor_distribution(ctx, joint_distribution(ctx.grid(), beliefs),
                                           step.action_index, step.t);
    const auto truth = monitor_true(ctx, step.true_levels, step.action_index, step.t);
    step.monitor_point = point.value;
    step.monitor_distribution = dist.value;
    step.monitor_true = truth.value;
    clamped += point.clamped + dist.clamped + truth.clamped;
  }
  return clamped;
}

void collect_records(const TrialTrace& trace, std::size_t horizon,
                     std::vector<PredictionRecord>& point,
                     std::vector<PredictionRecord>& distribution,
                     std::vector<PredictionRecord>& true_state) {
  for (const auto& step : trace.steps) {
    const auto label = trace.safe_label(step.t, horizon);
    if (!label) continue;
    point.push_back({step.monitor_point, *label});
    distribution.push_back({step.monitor_distribution, *label});
    true_state.push_back({step.monitor_true, *label});
  }
}

void collect_trial_minimum_records(const TrialTrace& trace, std::size_t horizon,
                                   std::vector<PredictionRecord>& point,
                                   std::vector<PredictionRecord>& distribution,
                                   std::vector<PredictionRecord>& true_state) {
  double p = 1.0, d = 1.0, t = 1.0;
  bool any = false;
  for (const auto& step : trace.steps) {
    if (!trace.safe_label(step.t, horizon)) continue;
    any = true;
    p = std::min(p, step.monitor_point);
    d = std::min(d, step.monitor_distribution);
    t = std::min(t, step.monitor_true);
  }
  if (!any) return;
  const bool safe = !trace.breach_time;
  point.push_back({p, safe});
  distribution.push_back({d, safe});
  true_state.push_back({t, safe});
}

CampaignResult run_campaign(const ExperimentConfig& config, const MonitorContext& ctx) {
  CampaignResult r;
  r.traces = simulate_trials(config, config.campaign.trials, config.campaign.length,
                             kCampaignTrialStream, kCampaignInitialStream);
  std::vector<std::size_t> clamped(r.traces.size());
  parallel_for_chunks(r.traces.size(), config.jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) clamped[i] = attach_monitors(ctx, r.traces[i]);
  });
  std::vector<PredictionRecord> trial_point, trial_distribution, trial_true;
  for (std::size_t i = 0; i < r.traces.size(); ++i) {
    r.clamped_evaluations += clamped[i];
    if (r.traces[i].breach_time) ++r.failed_trials;
    collect_records(r.traces[i], config.tank.horizon, r.point, r.distribution, r.true_state);
    collect_trial_minimum_records(r.traces[i], config.tank.horizon, trial_point,
                                  trial_distribution, trial_true);
  }
  r.point_report = calibration_report(r.point);
  r.distribution_report = calibration_report(r.distribution);
  r.true_report = calibration_report(r.true_state);
  r.point_trial_report = calibration_report(trial_point);
  r.distribution_trial_report = calibration_report(trial_distribution);
  r.true_trial_report = calibration_report(trial_true);
  return r;
}

EstimatorReport estimator_calibration(const ExperimentConfig& config,
                                      const std::vector<TrialTrace>& traces) {
  const Grid level_grid = config.level_grid();
  EstimatorReport report;
  for (const auto& trace : traces) {
    for (const auto& step : trace.steps) {
      for (std::size_t i = 0; i < step.belief.size(); ++i) {
        const auto cell = level_grid.coordinate(0, step.true_levels[static_cast<Eigen::Index>(i)]);
        const auto& b = step.belief[i];
        for (Eigen::Index k = 0; k < b.size(); ++k)
          report.bins.add(std::clamp(b[k], 0.0, 1.0), k == cell);
      }
    }
  }
  report.predictions = report.bins.total();
  report.ece = report.bins.ece();
  return report;
}

// -------------------------------------------------------------- trace CSV

namespace {

void write_trace_header(std::ostream& out, std::size_t tanks) {
  out << "trial,seed,t";
  for (const char* col : {"level", "reading", "estimate"})
    for (std::size_t i = 1; i <= tanks; ++i) out << ',' << col << '_' << i;
  out << ",action,action_index,safe_label";
  for (std::size_t i = 1; i <= tanks; ++i) out << ",belief_" << i;
  out << ",monitor_point,monitor_distribution,monitor_true\n";
}

}  // namespace

void write_trace_csv(std::ostream& out, const ExperimentConfig& config, std::size_t trial,
                     const TrialTrace& trace) {
  const watertank::ConfigEncoder encoder(config.tank.tanks);
  out << artifact_comment(config) << '\n';
  write_trace_header(out, config.tank.tanks);
  for (const auto& s : trace.steps) {
    out << trial << ',' << trace.seed << ',' << s.t;
    for (const auto* v : {&s.true_levels, &s.readings, &s.estimates})
      for (Eigen::Index i = 0; i < v->size(); ++i) out << ',' << format_exact((*v)[i]);
    const auto label = trace.safe_label(s.t, config.tank.horizon);
    out << ',' << encoder.label(s.action_index) << ',' << s.action_index << ','
        << (label ? (*label ? "1" : "0") : "");
    for (const auto& b : s.belief) out << ',' << format_belief(prune_belief(b));
    out << ',' << format_exact(s.monitor_point) << ',' << format_exact(s.monitor_distribution)
        << ',' << format_exact(s.monitor_true) << '\n';
  }
}

// ------------------------------------------------------------- subcommands

void cmd_calibrate(const ExperimentConfig& config, std::ostream& log) {
  const auto models = calibrate(config);
  nlohmann::json j{{"config_hash", config.hash()},
                   {"master_seed", config.master_seed},
                   {"bin_width", config.calibration.bin_width},
                   {"tanks", nlohmann::json::array()}};
  for (const auto& m : models) j["tanks"].push_back(m.to_json());
  write_json(config.output_dir / "error_model.json", j);

  auto csv = open_output(config.output_dir / "error_histogram.csv");
  csv << artifact_comment(config) << '\n' << "tank,lower,upper,probability\n";
  for (std::size_t i = 0; i < models.size(); ++i)
    for (const auto& b : models[i].bins())
      csv << i + 1 << ',' << format_exact(b.lower) << ',' << format_exact(b.upper) << ','
          << format_exact(b.probability) << '\n';
  for (std::size_t i = 0; i < models.size(); ++i)
    log << "tank " << i + 1 << ": " << models[i].bins().size() << " error bins\n";
}

void cmd_abstract(const ExperimentConfig& config, std::ostream& log) {
  const auto models = load_error_models(config);
  const auto r = build_abstraction(config, models);
  const auto& pa = r.system.automaton;
  auto dump = open_output(config.output_dir / "abstract_model.txt");
  dump << artifact_comment(config) << '\n';
  write_pa_dump(dump, pa);
  write_json(config.output_dir / "abstract_summary.json",
             {{"config_hash", config.hash()},
              {"master_seed", config.master_seed},
              {"state_count", pa.state_count()},
              {"transition_count", pa.transition_count()},
              {"cell_count", r.system.cell_count},
              {"config_count", r.system.config_count},
              {"sink_count", r.system.sink_count}});
  log << "abstract system: " << pa.state_count() << " states, " << pa.transition_count()
      << " transitions (" << r.build_seconds << " s)\n";
}

void cmd_check(const ExperimentConfig& config, std::ostream& log) {
  const auto models = load_error_models(config);
  const auto a = build_abstraction(config, models);
  log << "abstract system: " << a.system.automaton.state_count() << " states, "
      << a.system.automaton.transition_count() << " transitions (" << a.build_seconds << " s)\n";
  const auto c = check_abstraction(config, a.system);
  write_safety_table_csv(config.output_dir / "safety_table.csv", c.table);
  write_safety_table_sidecar(config.output_dir / "safety_table.json", c.table, c.sidecar);
  log << "safety table: " << c.table.size() << " entries, horizon " << c.table.horizon() << ", "
      << to_string(c.table.mode()) << " (" << c.check_seconds << " s)\n";
}

void cmd_campaign(const ExperimentConfig& config, std::ostream& log) {
  const auto loaded = load_table(config.output_dir / "safety_table.csv");
  const auto ctx = monitor_context(loaded.table, loaded.sidecar);
  const auto r = run_campaign(config, ctx);
  const fs::path& dir = config.output_dir;

  nlohmann::json manifest{{"config_hash", config.hash()},
                          {"master_seed", config.master_seed},
                          {"config", config.to_json()},
                          {"trials", nlohmann::json::array()}};
  for (std::size_t i = 0; i < r.traces.size(); ++i) {
    const auto& t = r.traces[i];
    char name[32];
    std::snprintf(name, sizeof name, "trial_%04zu.csv", i);
    nlohmann::json entry{{"trial", i},
                         {"seed", t.seed},
                         {"initial_seed", derive_seed(config.master_seed, kCampaignInitialStream, i)},
                         {"steps", t.steps.size()},
                         {"breach_time", t.breach_time ? nlohmann::json(*t.breach_time) : nlohmann::json()}};
    if (config.campaign.write_traces) {
      auto out = open_output(dir / "traces" / name);
      write_trace_csv(out, config, i, t);
      entry["file"] = std::string("traces/") + name;
    }
    manifest["trials"].push_back(entry);
  }
  write_json(dir / "manifest.json", manifest);

  const CalibrationReport* reports[] = {&r.point_report, &r.distribution_report, &r.true_report};
  const CalibrationReport* trial_reports[] = {&r.point_trial_report, &r.distribution_trial_report,
                                              &r.true_trial_report};
  auto summary = open_output(dir / "summary.csv");
  summary << artifact_comment(config) << '\n' << "monitor,ece,ecce,brier,auc\n";
  auto per_trial = open_output(dir / "summary_per_trial.csv");
  per_trial << artifact_comment(config) << '\n' << "monitor,ece,ecce,brier,auc\n";
  nlohmann::json js{{"config_hash", config.hash()},
                    {"master_seed", config.master_seed},
                    {"trials", r.traces.size()},
                    {"failed_trials", r.failed_trials},
                    {"failure_rate", static_cast<double>(r.failed_trials) /
                                         static_cast<double>(r.traces.size())},
                    {"records", r.point.size()},
                    {"clamped_evaluations", r.clamped_evaluations},
                    {"horizon", config.tank.horizon}};
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& rep = *reports[m];
    const std::string name = kMonitorNames[m];
    summary << name << ',' << format_exact(rep.ece) << ',' << format_exact(rep.ecce) << ','
            << format_exact(rep.brier) << ',' << format_exact(rep.auc) << '\n';
    js["monitors"][name] = {{"ece", rep.ece}, {"ecce", rep.ecce}, {"brier", rep.brier}, {"auc", rep.auc}};
    const auto& tr = *trial_reports[m];
    per_trial << name << ',' << format_exact(tr.ece) << ',' << format_exact(tr.ecce) << ','
              << format_exact(tr.brier) << ',' << format_exact(tr.auc) << '\n';
    js["per_trial_minimum"][name] = {
        {"ece", tr.ece}, {"ecce", tr.ecce}, {"brier", tr.brier}, {"auc", tr.auc}};
    if (std::isnan(rep.auc)) log << "warning: " << name << " AUC undefined (one outcome class)\n";

    auto rel = open_output(dir / ("reliability_" + name + ".csv"));
    rel << artifact_comment(config) << '\n'
        << "bin_lower,bin_upper,count,mean_estimate,frequency,plottable\n";
    for (const auto& b : rep.bins)
      rel << format_exact(b.lower) << ',' << format_exact(b.upper) << ',' << b.count << ','
          << format_exact(b.mean_estimate) << ',' << format_exact(b.frequency) << ','
          << (b.plottable ? 1 : 0) << '\n';

    auto roc = open_output(dir / ("roc_" + name + ".csv"));
    roc << artifact_comment(config) << '\n' << "threshold,false_positive_rate,true_positive_rate\n";
    for (const auto& p : rep.roc.points)
      roc << format_exact(p.threshold) << ',' << format_exact(p.false_positive_rate) << ','
          << format_exact(p.true_positive_rate) << '\n';
  }
  write_json(dir / "summary.json", js);

  log << "campaign: " << r.traces.size() << " trials, " << r.failed_trials << " failed, "
      << r.point.size() << " prediction records\n";
  if (r.clamped_evaluations > 0)
    log << "warning: " << r.clamped_evaluations << " monitor evaluations clamped to the grid\n";
}

void cmd_export_prism(const ExperimentConfig& config, const std::optional<fs::path>& model,
                      std::ostream& log) {
  ProbabilisticAutomaton pa;
  if (model) {
    std::ifstream in(*model);
    if (!in) throw std::runtime_error("cannot read " + model->string());
    pa = read_pa_dump(in);
  } else {
    pa = build_abstraction(config, load_error_models(config)).system.automaton;
  }
  const BoundedSafetyQuery query{states_with_label(pa, kUnsafeLabel), config.tank.horizon,
                                 config.mode};
  const auto out = export_prism(pa, query);
  open_output(config.output_dir / "model.prism") << out.model;
  open_output(config.output_dir / "model.props") << out.properties;
  log << "exported " << pa.state_count() << " states, " << pa.transition_count()
      << " transitions\n";
}

void cmd_validate_estimator(const ExperimentConfig& config, std::ostream& log) {
  const auto traces = simulate_trials(config, config.campaign.trials, config.campaign.length,
                                      kCampaignTrialStream, kCampaignInitialStream);
  const auto report = estimator_calibration(config, traces);
  write_json(config.output_dir / "estimator_calibration.json",
             {{"config_hash", config.hash()},
              {"master_seed", config.master_seed},
              {"predictions", report.predictions},
              {"ece", report.ece}});
  auto rel = open_output(config.output_dir / "estimator_reliability.csv");
  rel << artifact_comment(config) << '\n'
      << "bin_lower,bin_upper,count,mean_estimate,frequency,plottable\n";
  for (const auto& b : report.bins.bins())
    rel << format_exact(b.lower) << ',' << format_exact(b.upper) << ',' << b.count << ','
        << format_exact(b.mean_estimate) << ',' << format_exact(b.frequency) << ','
        << (b.plottable ? 1 : 0) << '\n';
  log << "estimator ECE: " << format_exact(report.ece) << " over " << report.predictions
      << " cell predictions\n";
}

void cmd_report(const ExperimentConfig& config, std::ostream& out) {
  const auto j = read_json(config.output_dir / "summary.json");
  char line[160];
  out << "monitor        ECE        ECCE       Brier      AUC\n";
  for (const char* name : kMonitorNames) {
    const auto& m = j.at("monitors").at(name);
    std::snprintf(line, sizeof line, "%-14s %-10.5f %-10.5f %-10.5f %.3f\n", name,
                  m.at("ece").get<double>(), m.at("ecce").get<double>(),
                  m.at("brier").get<double>(),
                  m.at("auc").is_number() ? m.at("auc").get<double>() : std::nan(""));
    out << line;
  }
  out << "failed trials: " << j.at("failed_trials").get<std::size_t>() << " / "
      << j.at("trials").get<std::size_t>() << '\n';
  const auto est = config.output_dir / "estimator_calibration.json";
  if (fs::exists(est)) out << "estimator ECE: " << format_exact(read_json(est).at("ece").get<double>()) << '\n';
}

void cmd_monitor(const fs::path& table_csv, const fs::path& traces_csv, const fs::path& output_csv,
                 std::ostream& log) {
  const auto loaded = load_table(table_csv);
  const auto ctx = monitor_context(loaded.table, loaded.sidecar);
  const std::size_t dims = ctx.grid().dimensions();

  std::ifstream in(traces_csv);
  if (!in) throw std::runtime_error("cannot read " + traces_csv.string());
  std::ostringstream out;
  std::string line;
  std::vector<std::string> header;
  std::vector<std::size_t> keep, level_col(dims), estimate_col(dims), belief_col(dims);
  std::size_t action_col = 0, t_col = 0, rows = 0, clamped = 0;

  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("trace CSV lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      out << line << '\n';
      continue;
    }
    auto fields = split(line, ',');
    if (header.empty()) {
      header = fields;
      for (std::size_t d = 0; d < dims; ++d) {
        level_col[d] = column("level_" + std::to_string(d + 1));
        estimate_col[d] = column("estimate_" + std::to_string(d + 1));
        belief_col[d] = column("belief_" + std::to_string(d + 1));
      }
      action_col = column("action_index");
      t_col = column("t");
      std::string sep;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].rfind("monitor_", 0) == 0) continue;
        keep.push_back(i);
        out << sep << header[i];
        sep = ",";
      }
      out << sep << "monitor_point,monitor_distribution,monitor_true\n";
      continue;
    }
    if (fields.size() != header.size())
      throw ValidationError("trace CSV row " + std::to_string(rows + 1) + " has the wrong width");
    Eigen::ArrayXd level(static_cast<Eigen::Index>(dims)), estimate(static_cast<Eigen::Index>(dims));
    std::vector<Eigen::VectorXd> beliefs;
    for (std::size_t d = 0; d < dims; ++d) {
      level[static_cast<Eigen::Index>(d)] = parse_double(fields[level_col[d]]);
      estimate[static_cast<Eigen::Index>(d)] = parse_double(fields[estimate_col[d]]);
      beliefs.push_back(parse_belief(fields[belief_col[d]], ctx.grid().count(d)));
    }
    const std::size_t action = parse_index(fields[action_col]);
    const std::size_t t = parse_index(fields[t_col]);
    if (action >= ctx.config_count()) throw ValidationError("action index out of range");
    const auto p = monitor_point(ctx, estimate, action, t);
    const auto q = monitor_distribution(ctx, joint_distribution(ctx.grid(), beliefs), action, t);
    const auto r = monitor_true(ctx, level, action, t);
    clamped += p.clamped + q.clamped + r.clamped;
    std::string sep;
    for (std::size_t i : keep) {
      out << sep << fields[i];
      sep = ",";
    }
    out << sep << format_exact(p.value) << ',' << format_exact(q.value) << ','
        << format_exact(r.value) << '\n';
    ++rows;
  }
  if (header.empty()) throw ValidationError("trace CSV has no header");
  open_output(output_csv) << out.str();
  log << "monitored " << rows << " rows\n";
  if (clamped > 0) log << "warning: " << clamped << " monitor evaluations clamped to the grid\n";
}

}  // namespace safemon
