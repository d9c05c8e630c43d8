#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safemon/abstraction.hpp"
#include "safemon/metrics.hpp"
#include "safemon/model_check.hpp"
#include "safemon/monitor.hpp"
#include "safemon/watertank.hpp"

namespace safemon {

struct GridSpec {
  double lower = 0.0;
  double upper = 101.0;
  double width = 1.0;
};

struct CalibrationSpec {
  std::size_t trials = 100;
  std::size_t length = 50;
  double bin_width = 1.0;
};

struct CampaignSpec {
  std::size_t trials = 500;
  std::size_t length = 50;
  double initial_lower = 40.0;
  double initial_upper = 60.0;
  bool write_traces = true;
};

/// Everything one reproduction run depends on. `output_dir` and `jobs` do not
/// influence results and are left out of the hash.
struct ExperimentConfig {
  watertank::TankParams tank;
  GridSpec grid;
  CalibrationSpec calibration;
  OptimizationMode mode = OptimizationMode::Min;
  CampaignSpec campaign;
  std::uint64_t master_seed = 20240601;
  std::filesystem::path output_dir = "out";
  unsigned jobs = 1;

  void validate() const;
  /// Hashed part of the configuration, keys sorted.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// FNV-1a 64 of the canonical JSON, as 16 hex digits.
  std::string hash() const;

  Grid joint_grid() const;
  Grid level_grid() const;
};

// Seed stream identifiers for derive_seed.
inline constexpr std::uint64_t kCalibrationTrialStream = 1;
inline constexpr std::uint64_t kCalibrationInitialStream = 2;
inline constexpr std::uint64_t kCampaignTrialStream = 3;
inline constexpr std::uint64_t kCampaignInitialStream = 4;

/// Seeded closed-loop trials with initial levels uniform in
/// [initial_lower, initial_upper]; trial i depends only on (master, i).
std::vector<watertank::TrialTrace> simulate_trials(const ExperimentConfig& config,
                                                   std::size_t trials, std::size_t length,
                                                   std::uint64_t trial_stream,
                                                   std::uint64_t initial_stream);

/// Error models from the calibration trials.
std::vector<ErrorModel> calibrate(const ExperimentConfig& config);

struct AbstractionResult {
  AbstractSystem system;
  double build_seconds = 0.0;
};

AbstractionResult build_abstraction(const ExperimentConfig& config,
                                    std::span<const ErrorModel> errors);

struct CheckResult {
  SafetyTable table;
  nlohmann::json sidecar;
  double check_seconds = 0.0;
};

/// Value iteration over the abstract system; the sidecar records what the
/// monitor needs to map concrete states onto table rows.
CheckResult check_abstraction(const ExperimentConfig& config, const AbstractSystem& system);

/// Monitor context from a table and its sidecar.
MonitorContext monitor_context(const SafetyTable& table, const nlohmann::json& sidecar);

/// Filter beliefs as fed to the distribution monitor and written to traces:
/// cells below 1e-9 are dropped.
inline constexpr double kBeliefPrecision = 1e-9;
Eigen::VectorXd prune_belief(const Eigen::VectorXd& belief);

struct CampaignResult {
  std::vector<watertank::TrialTrace> traces;  // with monitor outputs
  std::vector<PredictionRecord> point, distribution, true_state;
  CalibrationReport point_report, distribution_report, true_report;
  /// Per-trial minimum aggregation of the same monitors.
  CalibrationReport point_trial_report, distribution_trial_report, true_trial_report;
  std::size_t failed_trials = 0;
  std::size_t clamped_evaluations = 0;
};

/// Runs the monitored campaign. Results do not depend on config.jobs.
CampaignResult run_campaign(const ExperimentConfig& config, const MonitorContext& ctx);

/// Fills the three monitor outputs of every step of `trace`; returns the
/// number of evaluations that clamped an out-of-grid point.
std::size_t attach_monitors(const MonitorContext& ctx, watertank::TrialTrace& trace);

/// Prediction records of one trace for (point, distribution, true state).
void collect_records(const watertank::TrialTrace& trace, std::size_t horizon,
                     std::vector<PredictionRecord>& point,
                     std::vector<PredictionRecord>& distribution,
                     std::vector<PredictionRecord>& true_state);

/// One record per trial and monitor: the minimum monitor output over the
/// trial's labelled steps, with outcome "the trial never breached". Trials
/// without a labelled step are skipped.
void collect_trial_minimum_records(const watertank::TrialTrace& trace, std::size_t horizon,
                                   std::vector<PredictionRecord>& point,
                                   std::vector<PredictionRecord>& distribution,
                                   std::vector<PredictionRecord>& true_state);

struct EstimatorReport {
  CalibrationBins bins;
  double ece = 0.0;
  std::size_t predictions = 0;
};

/// Treats every filter cell probability (after the measurement update) as a
/// prediction that the true level lies in that cell.
EstimatorReport estimator_calibration(const ExperimentConfig& config,
                                      const std::vector<watertank::TrialTrace>& traces);

// Trace CSV ----------------------------------------------------------------

/// One trial per file: comment line, header, one row per recorded step.
void write_trace_csv(std::ostream& out, const ExperimentConfig& config, std::size_t trial,
                     const watertank::TrialTrace& trace);

/// `# config_hash=... master_seed=...` line heading every artifact CSV.
std::string artifact_comment(const ExperimentConfig& config);

// Subcommands --------------------------------------------------------------
// Each writes its artifacts into config.output_dir and logs to `log`.

void cmd_calibrate(const ExperimentConfig& config, std::ostream& log);
void cmd_abstract(const ExperimentConfig& config, std::ostream& log);
void cmd_check(const ExperimentConfig& config, std::ostream& log);
void cmd_campaign(const ExperimentConfig& config, std::ostream& log);
/// Exports `model` (a PA dump) or, when empty, the abstract system.
void cmd_export_prism(const ExperimentConfig& config,
                      const std::optional<std::filesystem::path>& model, std::ostream& log);
void cmd_validate_estimator(const ExperimentConfig& config, std::ostream& log);
void cmd_report(const ExperimentConfig& config, std::ostream& out);
/// Recomputes the three monitor columns of a trace CSV.
void cmd_monitor(const std::filesystem::path& table_csv, const std::filesystem::path& traces_csv,
                 const std::filesystem::path& output_csv, std::ostream& log);

}  // namespace safemon
