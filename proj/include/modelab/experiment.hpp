#ifndef MODELAB_EXPERIMENT_HPP
#define MODELAB_EXPERIMENT_HPP

#include <optional>
#include <string>
#include <vector>

#include "modelab/idx.hpp"
#include "modelab/metrics.hpp"
#include "modelab/training.hpp"

namespace modelab {

OracleClassifier make_category_oracle(const ExperimentConfig& config);
OraclePosterior make_posterior_oracle(const ExperimentConfig& config);

/// The train/test split every stage of a run shares.
SplitResult experiment_split(const ExperimentConfig& config, const Dataset& dataset);

struct PipelineResult {
  FeatureExtractor extractor;
  GanModels gan;
  TrainingTrace extractor_trace;
  TrainingTrace gan_trace;
};

/// Both training stages back to back on the train split.
PipelineResult run_pipeline(const ExperimentConfig& config, const Dataset& train_data);

struct Evaluation {
  MetricsReport report;
  mat synth;                 // one synthesized sample per test sample
  std::vector<int> targets;  // its target category
  real identity_accuracy = std::numeric_limits<real>::quiet_NaN();
};

/** Full metric bundle. Synthesis targets are drawn uniformly over the
 * categories other than each sample's own. The verification threshold is
 * calibrated on natural pairs from the calibration split, never on the
 * synthesized pairs it judges.
 */
Evaluation evaluate(const ExperimentConfig& config, const FeatureExtractor& extractor,
                    const GanModels& gan, const Dataset& calibration, const Dataset& test);

/// Intra-class variance of the extractor's angular components over the
/// identities of the given samples.
real angular_intra_class_variance(const FeatureExtractor& extractor, const Dataset& samples);

/// Nearest-centroid-by-cosine identity classification on angular components.
real identity_classification_accuracy(const FeatureExtractor& extractor, const Dataset& train,
                                      const Dataset& test);

// ---------------------------------------------------------------------------
// Ablation grid: {CDP, w/o CDP} x {Adversarial Triplet, Triplet}.
// ---------------------------------------------------------------------------

struct CellSeedResult {
  MetricsReport report;
  real intra_class_variance = std::numeric_limits<real>::quiet_NaN();
  real identity_accuracy = std::numeric_limits<real>::quiet_NaN();
};

/// One pipeline, one seed, including evaluation on the held-out split.
CellSeedResult run_cell_seed(const ExperimentConfig& config);

struct AblationCell {
  bool use_cdp = true;
  AtLossKind at_loss = AtLossKind::adversarial_triplet;
  std::vector<CellSeedResult> per_seed;

  std::string name() const;
};

struct Verdict {
  std::string name;
  bool pass = false;
  bool low_confidence = false;
  std::string detail;
};

real median(std::vector<real> values);

/// The four orderings the grid is expected to reproduce: mode-collapse KL,
/// per-category synthesis accuracy, intra-class variance, verification.
std::vector<Verdict> ablation_verdicts(const std::vector<AblationCell>& cells, int n_categories);

// ---------------------------------------------------------------------------
// Optional raw-digit-corpus run.
// ---------------------------------------------------------------------------

struct DigitsRunConfig {
  int train_per_class = 200;
  int test_total = 1000;
  std::vector<Index> hidden{128, 64};
  int embedding_dim = 16;
  int epochs = 8;
  BatchSpec batch{10, 4};
  real lr = 1e-3;
  TripletMargin margin{0.3};
  AdamParams adam;
};

/// Trains an embedding on the digit images with the chosen ranking loss and
/// scores nearest-centroid classification accuracy on the test subset.
real digits_accuracy(const IdxData& train, const IdxData& test, AtLossKind at_loss,
                     const DigitsRunConfig& run, std::uint64_t seed);

}  // namespace modelab

#endif
