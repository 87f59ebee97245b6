#ifndef MODELAB_LOSSES_HPP
#define MODELAB_LOSSES_HPP

#include <vector>

#include "modelab/tensor.hpp"

namespace modelab {

/// Distance margin for ranking losses.
struct TripletMargin {
  explicit TripletMargin(real margin) : m(margin) {
    if (!(m >= 0.0)) throw ConfigError("triplet margin must be non-negative");
  }
  real m;
};

struct LossWeights {
  real lambda_adv_feature = 1.0;
  real lambda_at = 0.001;
};

/// Variant switches for the ranking losses. `adversarial` adds the zero-sum
/// term; the other two flags pick alternative readings kept for ablation.
struct RankingOptions {
  bool adversarial = true;
  bool hinge_second_term = false;
  bool sum_negatives = false;
};

/// Euclidean distance between two embeddings of equal dimension.
Tensor dist(const Tensor& u, const Tensor& v);

/// [m + Dist(a,p) - Dist(a,n)]_+
Tensor triplet_loss(const Tensor& a, const Tensor& p, const Tensor& n, TripletMargin margin);

/// Triplet loss plus the ranking term (Dist(n,p) - Dist(a,n)). The second
/// term is not hinged: pulling p toward the anchor keeps paying off after
/// the margin constraint is met, which is the whole point.
Tensor adversarial_triplet_loss(const Tensor& a, const Tensor& p, const Tensor& n,
                                TripletMargin margin, const RankingOptions& opts = {});

struct HardTriplet {
  Index anchor;
  Index positive;
  Index negative;
};

/// Per-anchor hardest positive (largest same-class distance) and hardest
/// negative (smallest cross-class distance). Selection only; no gradients.
std::vector<HardTriplet> mine_batch_hard(const mat& embeddings, const std::vector<int>& labels);

/// Mean over all B anchors of the (adversarial) triplet loss on the mined
/// hard pairs. Labels index the mining classes. DegenerateBatch unless at
/// least two classes are present, each with at least two samples.
Tensor batch_hard_adversarial_triplet(const Tensor& embeddings, const std::vector<int>& labels,
                                      TripletMargin margin, const RankingOptions& opts = {});

/// Fixed-positive variant: the positive is a synthesized embedding and takes
/// part in no max operation; only the hardest negative is mined.
Tensor aofs_adversarial_triplet(const Tensor& anchor, const Tensor& positive,
                                const std::vector<Tensor>& negatives, TripletMargin margin,
                                const RankingOptions& opts = {});

enum class GeneratorObjective { saturating, nonsaturating };

/// Two sides of the minimax game. The discriminator ascends `discriminator`;
/// the generator descends `generator`.
struct AdversarialObjectives {
  Tensor discriminator;
  Tensor generator;
};

/// log D(real) + log(1 - D(fake)), averaged over entries. Scores must be in
/// (0,1); log arguments are clamped to [1e-7, 1-1e-7].
AdversarialObjectives image_adversarial_loss(const Tensor& d_real, const Tensor& d_fake,
                                             GeneratorObjective mode);

/// Same functional form; the scores come from the label-selected member of
/// the feature-level discriminator pool applied to radial features.
AdversarialObjectives feature_adversarial_loss(const Tensor& fd_real, const Tensor& fd_fake,
                                               GeneratorObjective mode);

/// l_adv_image + lambda_adv_feature * l_adv_feature + lambda_at * l_at
Tensor overall_loss(const Tensor& l_adv_image, const Tensor& l_adv_feature, const Tensor& l_at,
                    const LossWeights& weights);

}  // namespace modelab

#endif
