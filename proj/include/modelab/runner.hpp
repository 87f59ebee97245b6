#ifndef MODELAB_RUNNER_HPP
#define MODELAB_RUNNER_HPP

#include <optional>
#include <string>

namespace modelab {

struct RunOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
};

void run_gen_data(const RunOptions& options);
void run_train(const RunOptions& options, const std::string& stage);
void run_eval(const RunOptions& options, const std::string& checkpoints_dir);
void run_ablate(const RunOptions& options, int n_seeds, int threads);
void run_digits(const RunOptions& options, const std::string& idx_dir, int n_seeds);

/// MODELAB_THREADS when set, otherwise a small multiple of the hardware.
int thread_cap();

/// Documented exit code per error class; 1 for anything unclassified.
int exit_code_for(const std::exception& error);

}  // namespace modelab

#endif
