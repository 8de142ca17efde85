#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pbl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Soft-prompt tuning and bias evaluation for small language models"};
  app.require_subcommand(1);

  std::string config;
  std::string output_dir;
  std::uint64_t seed = 0;

  const char* commands[][2] = {{"pretrain", "Train the language model (skipped when the config is unchanged)"},
                               {"tune", "Run the prompt-tuning sweep and keep the top prompts"},
                               {"evaluate", "Classify the task test split and the template corpus with each prompt"},
                               {"report", "Compute fairness gaps, net counts and charts"},
                               {"run", "pretrain, tune, evaluate and report in sequence"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--output-dir", output_dir, "Override output_dir from the config");
    sub->add_option("--seed", seed, "Override the root seed");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto* sub : subs) {
    if (!sub->parsed()) continue;
    std::optional<std::filesystem::path> out;
    if (sub->count("--output-dir") > 0) out = output_dir;
    std::optional<std::uint64_t> root_seed;
    if (sub->count("--seed") > 0) root_seed = seed;
    return pbl::run_command(sub->get_name(), config, out, root_seed, std::cout, std::cerr);
  }
  return 2;
}
