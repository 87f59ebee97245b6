#ifndef MODELAB_MODELS_HPP
#define MODELAB_MODELS_HPP

#include <vector>

#include "modelab/mlp.hpp"
#include "modelab/tensor.hpp"

namespace modelab {

/// One-hot encoded target category. Valid iff exactly one entry equals 1
/// and every other entry equals 0.
struct OneHotLabel {
  vec values;

  static OneHotLabel at(int hot, int width);
  /// Index of the hot entry; InvalidLabel if the encoding is not one-hot.
  int index() const;
};

/** Spherical split of an embedding: radial magnitude r carries the
 * category-specific feature, the unit direction theta carries identity.
 * Both stay differentiable, so losses can drive either component.
 */
struct DecomposedEmbedding {
  Tensor r;      // rank 0, non-negative
  Tensor theta;  // unit vector, same dimension as the embedding
};

/// NearZeroEmbedding when the norm is at or below 1e-9.
DecomposedEmbedding decompose(const Tensor& embedding);

/// Row-wise decomposition of a {B,d} batch; r is {B,1}, theta is {B,d}.
/// A tiny epsilon under the root keeps gradients finite near the origin.
struct BatchDecomposition {
  Tensor r;
  Tensor theta;
};

BatchDecomposition decompose_rows(const Tensor& embeddings);

struct FeatureExtractor {
  Mlp net;

  Tensor embed(const Tensor& samples) const { return net.forward(samples); }
  Index embedding_dim() const { return net.layer_dims.back(); }
};

/// Deterministic translator: concat(sample, one-hot target) -> sample.
struct ConditionalGenerator {
  Mlp net;
  int n_categories = 0;
  int sample_dim = 0;

  Tensor generate(const Tensor& x, const OneHotLabel& label) const;
  /// Batch with one shared target category.
  Tensor generate_rows(const Tensor& x_rows, int target_category) const;
};

/// Ordered set of feature-level discriminators, one per category, all with
/// identical layer extents. Exactly one member takes part in a step.
struct DiscriminatorPool {
  std::vector<Mlp> members;

  int size() const { return static_cast<int>(members.size()); }
};

DiscriminatorPool make_pool(int n_members, const std::vector<Index>& layer_dims,
                            std::uint64_t seed, InitScheme scheme);

/// Index of the member the label picks.
int select(const DiscriminatorPool& pool, const OneHotLabel& label);

}  // namespace modelab

#endif
