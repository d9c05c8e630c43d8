// Command-line entry point for the reproduction pipeline.
//
//   safemon calibrate | abstract | check | campaign | validate-estimator |
//           report | export-prism [--model PA] | monitor --table T --traces C --output O
//
// Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "safemon/experiment.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-probability monitors for stochastic systems"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::size_t> horizon, trials;
  app.add_option("--config", config_path, "JSON experiment configuration");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--horizon", horizon, "safety horizon T in steps");
  app.add_option("--trials", trials, "campaign trial count")->check(CLI::PositiveNumber);

  auto* calibrate = app.add_subcommand("calibrate", "estimate the perception error model");
  auto* abstract = app.add_subcommand("abstract", "build and dump the abstract system");
  auto* check = app.add_subcommand("check", "compute the safety lookup table");
  auto* campaign = app.add_subcommand("campaign", "run the monitored campaign");
  auto* validate = app.add_subcommand("validate-estimator", "estimator calibration error");
  auto* report = app.add_subcommand("report", "print the campaign summary table");

  auto* prism = app.add_subcommand("export-prism", "export a PRISM model and properties");
  std::optional<std::string> model;
  prism->add_option("--model", model, "PA dump to export (default: abstract system)");

  auto* monitor = app.add_subcommand("monitor", "recompute monitor columns of a trace CSV");
  std::string table, traces, output;
  monitor->add_option("--table", table, "safety table CSV (sidecar alongside)")->required();
  monitor->add_option("--traces", traces, "trace CSV")->required();
  monitor->add_option("--output", output, "augmented trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (monitor->parsed()) {
      safemon::cmd_monitor(table, traces, output, std::cerr);
      return 0;
    }

    auto config = config_path ? safemon::ExperimentConfig::load(*config_path)
                              : safemon::ExperimentConfig{};
    if (seed) config.master_seed = *seed;
    if (jobs) config.jobs = *jobs;
    if (out_dir) config.output_dir = *out_dir;
    if (horizon) config.tank.horizon = *horizon;
    if (trials) config.campaign.trials = *trials;
    config.validate();

    if (calibrate->parsed()) safemon::cmd_calibrate(config, std::cerr);
    if (abstract->parsed()) safemon::cmd_abstract(config, std::cerr);
    if (check->parsed()) safemon::cmd_check(config, std::cerr);
    if (campaign->parsed()) safemon::cmd_campaign(config, std::cerr);
    if (validate->parsed()) safemon::cmd_validate_estimator(config, std::cerr);
    if (report->parsed()) safemon::cmd_report(config, std::cout);
    if (prism->parsed())
      safemon::cmd_export_prism(
          config, model ? std::optional<std::filesystem::path>(*model) : std::nullopt, std::cerr);
    return 0;
  } catch (const safemon::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
