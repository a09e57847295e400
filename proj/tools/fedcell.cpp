// fedcell: train, federate, evaluate and adapt indoor power-control agents.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fedcell/harness.hpp"

namespace {

void init_logging() {
  const char* level = std::getenv("FEDCELL_LOG");
  spdlog::set_level(level != nullptr ? spdlog::level::from_str(level) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  using fedcell::harness::CommandOptions;

  CLI::App app{"Federated DQN transmit-power control for indoor small cells"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string metrics_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", opts.seed, "Run a single seed instead of the config's list");
    sub->add_flag("--force", opts.force, "Allow writing into a non-empty output directory");
  };

  auto* train = app.add_subcommand("train", "Train one DQN agent per room and seed");
  add_common(train);
  auto* federate = app.add_subcommand("federate", "FedAvg training across the federation rooms");
  add_common(federate);
  auto* eval = app.add_subcommand("eval", "Greedy rollout of a checkpoint or a baseline policy");
  add_common(eval);
  eval->add_option("--checkpoint", opts.checkpoint, "Model checkpoint (policy dqn)");
  auto* adapt = app.add_subcommand("adapt", "Fine-tune a global model in new rooms next to a scratch twin");
  add_common(adapt);
  adapt->add_option("--checkpoint", opts.checkpoint, "Global model checkpoint")->required();
  auto* report = app.add_subcommand("report", "Median-over-seeds table from metrics.csv files");
  report->add_option("--out,metrics_dir", metrics_dir, "Directory searched for metrics.csv")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return fedcell::harness::cmd_train(opts, std::cout, std::cerr);
  if (federate->parsed()) return fedcell::harness::cmd_federate(opts, std::cout, std::cerr);
  if (eval->parsed()) return fedcell::harness::cmd_eval(opts, std::cout, std::cerr);
  if (adapt->parsed()) return fedcell::harness::cmd_adapt(opts, std::cout, std::cerr);
  if (report->parsed()) return fedcell::harness::cmd_report(metrics_dir, std::cout, std::cerr);
  return EXIT_FAILURE;
}
