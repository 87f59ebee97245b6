#include <CLI11.hpp>
#include <iostream>

#include "modelab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"modelab: conditional discriminator pool and adversarial triplet experiments"};
  app.require_subcommand(1);

  modelab::RunOptions options;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", options.config_path, "configuration file (key = value lines)")
        ->required();
    cmd->add_option("--out", options.out_dir, "output directory")->required();
    cmd->add_option("--seed", seed_flag, "override the config seed");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a dataset CSV with its manifest");
  add_common(gen);

  auto* train = app.add_subcommand("train", "train one stage and write checkpoints");
  add_common(train);
  std::string stage;
  train->add_option("--stage", stage, "extractor or gan")->required();

  auto* eval = app.add_subcommand("eval", "evaluate checkpoints and write metrics and plots");
  add_common(eval);
  std::string checkpoints;
  eval->add_option("--checkpoints", checkpoints, "directory holding the .mlab checkpoints")
      ->required();

  auto* ablate = app.add_subcommand("ablate", "run the 2x2 pool/ranking grid over seeds");
  add_common(ablate);
  int n_seeds = 5;
  ablate->add_option("--seeds", n_seeds, "number of seeds per cell (default 5)");

  auto* digits = app.add_subcommand("digits", "optional raw-digit-corpus comparison");
  add_common(digits);
  std::string idx_dir;
  digits->add_option("--idx-dir", idx_dir, "directory with the IDX image/label files")
      ->required();
  int digit_seeds = 3;
  digits->add_option("--seeds", digit_seeds, "number of seeds (default 3)");

  CLI11_PARSE(app, argc, argv);
  if (app.count_all() && app.get_subcommands().front()->count("--seed")) {
    options.seed = seed_flag;
  }

  try {
    if (gen->parsed()) modelab::run_gen_data(options);
    else if (train->parsed()) modelab::run_train(options, stage);
    else if (eval->parsed()) modelab::run_eval(options, checkpoints);
    else if (ablate->parsed()) modelab::run_ablate(options, n_seeds, modelab::thread_cap());
    else if (digits->parsed()) modelab::run_digits(options, idx_dir, digit_seeds);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << '\n';
    return modelab::exit_code_for(error);
  }
  return 0;
}
