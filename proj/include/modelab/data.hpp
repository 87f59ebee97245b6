#ifndef MODELAB_DATA_HPP
#define MODELAB_DATA_HPP

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "modelab/rng.hpp"
#include "modelab/types.hpp"

namespace modelab {

/// Feature vector tagged with a category (mode) index and an identity index.
struct LabeledSample {
  vec features;
  int category = 0;
  int identity = 0;
};

using Dataset = std::vector<LabeledSample>;

/** Synthetic testbed where identity is a direction and category is a radius
 * band. With bands separated well beyond the radial noise, nearest-band and
 * max-cosine classification recover the generating labels analytically.
 */
struct RadialIdentitySpec {
  int n_categories = 4;
  int n_identities = 8;
  std::vector<real> band_radii{1.0, 2.0, 3.0, 4.0};
  real radial_noise = 0.1;
  real angular_noise = 0.05;
  int n_per_cell = 50;
  int dim = 2;

  void validate() const;  // InvalidSpec
};

/// Identity directions, equally spaced on the circle when dim == 2.
std::vector<vec> identity_directions(const RadialIdentitySpec& spec);

Dataset gen_radial_identity(const RadialIdentitySpec& spec, std::uint64_t seed);

struct GaussianMixtureSpec {
  int n_modes = 4;
  std::vector<vec> means;
  real sigma = 0.2;
  int n_per_mode = 400;

  /// Modes at the corners of an axis-aligned square of the given side.
  static GaussianMixtureSpec square(real side = 4.0, real sigma = 0.2, int n_per_mode = 400);
  void validate() const;
};

Dataset gen_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed);

/// T classes per batch, S samples per class; B = T*S.
struct BatchSpec {
  int classes_per_batch = 4;
  int samples_per_class = 8;

  int batch_size() const { return classes_per_batch * samples_per_class; }
  void validate() const;
};

enum class ClassBy { category, identity };

struct Batch {
  mat features;  // {B, d}
  std::vector<int> category;
  std::vector<int> identity;
  std::vector<Index> source_rows;
};

/** Online P-K batch stream: every batch holds exactly T distinct classes
 * with S samples each, drawn without replacement within the batch. Classes
 * with fewer than S samples never qualify. Least-used classes go first, so
 * every class appears within the first ceil(K/T) batches of an epoch.
 */
class PkBatchSampler {
 public:
  PkBatchSampler(const Dataset& dataset, BatchSpec spec, ClassBy key, std::uint64_t seed);

  Batch next();
  int batches_per_epoch() const { return batches_per_epoch_; }
  int class_count() const { return static_cast<int>(classes_.size()); }

 private:
  struct ClassState {
    int label;
    std::vector<Index> rows;
    std::vector<Index> queue;
    int used = 0;
  };

  const Dataset* dataset_;
  BatchSpec spec_;
  std::vector<ClassState> classes_;
  int batches_per_epoch_;
  Rng rng_;
};

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Stratified by (identity, category) cell; identity_disjoint instead splits
/// whole identities so no identity appears on both sides.
SplitResult split_train_test(const Dataset& dataset, real train_fraction, std::uint64_t seed,
                             bool identity_disjoint = false);

void write_dataset_csv(const std::string& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::string& path);

mat features_matrix(const Dataset& dataset);
std::vector<int> category_labels(const Dataset& dataset);
std::vector<int> identity_labels(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Analytic oracles. They replace learned validation networks: classification
// is exact up to the generating noise, so metric differences between models
// are attributable to the models alone.
// ---------------------------------------------------------------------------

struct RadialOracle {
  std::vector<real> band_radii;
  std::vector<vec> identity_dirs;
  real radial_noise = 0.1;

  static RadialOracle from_spec(const RadialIdentitySpec& spec);

  /// Nearest band by vector norm; ties break toward the lower band.
  int category(const vec& x) const;
  /// Largest cosine against the identity directions.
  int identity(const vec& x) const;
  /// Softmax of the per-band radial log-likelihoods.
  vec posterior(const vec& x) const;
};

struct MixtureOracle {
  std::vector<vec> means;
  real sigma = 0.2;

  static MixtureOracle from_spec(const GaussianMixtureSpec& spec);

  int category(const vec& x) const;  // Bayes rule with equal priors
  vec posterior(const vec& x) const;
};

}  // namespace modelab

#endif
