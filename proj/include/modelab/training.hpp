#ifndef MODELAB_TRAINING_HPP
#define MODELAB_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modelab/data.hpp"
#include "modelab/losses.hpp"
#include "modelab/models.hpp"

namespace modelab {

struct AdamParams {
  real beta1 = 0.5;  // adversarial-training convention
  real beta2 = 0.999;
  real epsilon = 1e-8;
};

/** Adaptive-moment optimizer over a fixed parameter set.
 *
 * step() consumes whatever gradients the latest backward pass left on the
 * parameters. Each model owns its optimizer, so stepping one model never
 * disturbs another's moment state.
 */
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamParams hp = {});

  void step(real lr);
  long step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<vec> m_;
  std::vector<vec> v_;
  AdamParams hp_;
  long t_ = 0;
};

/// Constant through decay_after, then linear to zero at total_epochs.
struct LrSchedule {
  real initial = 2e-4;
  bool linear_decay = true;
  int decay_after = 25;
  int total_epochs = 50;
};

real lr_at(const LrSchedule& schedule, real epoch);

enum class DatasetKind { radial_identity, gaussian_mixture };
enum class AtLossKind { triplet, adversarial_triplet };

/** Full hyperparameter record; a run is a pure function of this struct. */
struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::radial_identity;
  RadialIdentitySpec radial;
  GaussianMixtureSpec mixture = GaussianMixtureSpec::square();
  std::uint64_t seed = 1;

  int embedding_dim = 2;
  std::vector<Index> extractor_hidden{64, 64};
  std::vector<Index> generator_hidden{64, 64, 64};
  std::vector<Index> discriminator_hidden{32, 32};
  InitScheme init_scheme = InitScheme::uniform_fan_in;

  int extractor_epochs = 50;
  int gan_epochs = 800;
  LrSchedule extractor_lr{2e-3, false, 0, 50};
  LrSchedule gan_lr{2e-4, true, 400, 800};
  BatchSpec batch{4, 8};
  TripletMargin margin{0.3};
  LossWeights weights;
  AdamParams adam;

  bool use_cdp = true;
  AtLossKind at_loss = AtLossKind::adversarial_triplet;
  GeneratorObjective g_objective = GeneratorObjective::nonsaturating;
  bool at_hinge_second_term = false;
  bool at_sum_negatives = false;

  real train_fraction = 0.8;
  bool identity_disjoint = false;
  real divergence_threshold = 1e6;

  void validate() const;  // ConfigError
  int n_categories() const;
  int sample_dim() const;
  Dataset generate_dataset() const;
  /// Regression target for the radial feature, per category.
  std::vector<real> radial_targets() const;
  RankingOptions ranking_options() const;
};

struct TraceRow {
  int epoch = 0;
  real l_adv_image = 0.0;
  real l_adv_feature = 0.0;
  real l_at = 0.0;
  real lr = 0.0;
  real seconds = 0.0;
};

/// Per-epoch loss record. The seconds column is wall time: measurement
/// metadata, not part of the reproducible payload.
struct TrainingTrace {
  std::vector<TraceRow> rows;

  void write_csv(const std::string& path) const;
  static TrainingTrace read_csv(const std::string& path);
  /// Equality of everything except wall time.
  bool same_numerics(const TrainingTrace& other) const;
};

struct ExtractorTrainResult {
  FeatureExtractor extractor;
  TrainingTrace trace;
};

/// Stage one: multi-task pre-training. Radial components regress toward the
/// per-category targets while the configured ranking loss shapes the angular
/// components over identity classes. The result is frozen for stage two.
ExtractorTrainResult train_extractor(const ExperimentConfig& config, const Dataset& train_data);

/// Fresh extractor at its seeded initialization (the zero-epoch state).
FeatureExtractor make_extractor(const ExperimentConfig& config);

struct GanModels {
  ConditionalGenerator generator;
  DiscriminatorPool pool;
  Mlp image_discriminator;
};

GanModels make_gan_models(const ExperimentConfig& config);

using GanStepObserver =
    std::function<void(int step_index, int selected_member, const GanModels& models)>;

struct GanTrainResult {
  GanModels models;
  TrainingTrace trace;
};

/** Stage two: alternating updates per step, one each in order — image
 * discriminator, the label-selected pool member, generator. The extractor is
 * read-only throughout. A single target category is drawn per step, so
 * exactly one pool member participates (w/o CDP configs keep one member for
 * every label).
 */
GanTrainResult train_gan(const ExperimentConfig& config, const Dataset& train_data,
                         const FeatureExtractor& extractor, const GanStepObserver& observer = {});

/// argmin over categories of |r(x) - radial target|.
int extractor_category(const FeatureExtractor& extractor, const std::vector<real>& targets,
                       const vec& sample);

}  // namespace modelab

#endif
