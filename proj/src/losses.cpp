#include "modelab/losses.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace modelab {

namespace {

constexpr real kScoreClamp = 1e-7;

Tensor clamped_log(const Tensor& score) {
  return log(min_const(max_const(score, kScoreClamp), 1.0 - kScoreClamp));
}

Tensor one_minus(const Tensor& t) { return add_const(scale(t, -1.0), 1.0); }

void require_scores_in_unit_interval(const Tensor& t, const char* name) {
  for (Index i = 0; i < t.size(); ++i) {
    const real v = t.value()[i];
    if (!(v > 0.0 && v < 1.0)) {
      throw DomainError(std::string(name) + " score " + std::to_string(v) +
                        " outside (0,1); scores must be post-sigmoid");
    }
  }
}

AdversarialObjectives adversarial_objectives(const Tensor& real_scores,
                                             const Tensor& fake_scores,
                                             GeneratorObjective mode) {
  require_scores_in_unit_interval(real_scores, "real");
  require_scores_in_unit_interval(fake_scores, "fake");
  AdversarialObjectives out;
  out.discriminator = add(mean(clamped_log(real_scores)), mean(clamped_log(one_minus(fake_scores))));
  if (mode == GeneratorObjective::saturating) {
    out.generator = mean(clamped_log(one_minus(fake_scores)));
  } else {
    out.generator = scale(mean(clamped_log(fake_scores)), -1.0);
  }
  return out;
}

Tensor ranking_second_term(const Tensor& d_np, const Tensor& d_an, const RankingOptions& opts) {
  Tensor term = sub(d_np, d_an);
  if (opts.hinge_second_term) term = max_const(term, 0.0);
  return term;
}

}  // namespace

Tensor dist(const Tensor& u, const Tensor& v) {
  if (u.shape() != v.shape() || u.rank() != 1) {
    throw ShapeMismatch("dist expects two embeddings of equal dimension, got " +
                        shape_str(u.shape()) + " and " + shape_str(v.shape()));
  }
  return euclidean_norm(sub(u, v));
}

Tensor triplet_loss(const Tensor& a, const Tensor& p, const Tensor& n, TripletMargin margin) {
  return max_const(add_const(sub(dist(a, p), dist(a, n)), margin.m), 0.0);
}

Tensor adversarial_triplet_loss(const Tensor& a, const Tensor& p, const Tensor& n,
                                TripletMargin margin, const RankingOptions& opts) {
  Tensor d_an = dist(a, n);
  Tensor hinge = max_const(add_const(sub(dist(a, p), d_an), margin.m), 0.0);
  if (!opts.adversarial) return hinge;
  return add(hinge, ranking_second_term(dist(n, p), d_an, opts));
}

std::vector<HardTriplet> mine_batch_hard(const mat& embeddings, const std::vector<int>& labels) {
  const Index b = embeddings.rows();
  if (static_cast<Index>(labels.size()) != b) {
    throw ShapeMismatch("labels count " + std::to_string(labels.size()) +
                        " does not match batch size " + std::to_string(b));
  }

  std::unordered_map<int, int> class_counts;
  for (int label : labels) ++class_counts[label];
  if (class_counts.size() < 2) {
    throw DegenerateBatch("batch-hard mining needs at least two classes");
  }
  for (const auto& [label, count] : class_counts) {
    if (count < 2) {
      throw DegenerateBatch("class " + std::to_string(label) + " has a single sample");
    }
  }

  mat sq = mat::Zero(b, b);
  for (Index i = 0; i < b; ++i) {
    for (Index j = i + 1; j < b; ++j) {
      sq(i, j) = sq(j, i) = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
    }
  }

  std::vector<HardTriplet> triplets(b);
  for (Index i = 0; i < b; ++i) {
    Index hp = -1, hn = -1;
    for (Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (hp < 0 || sq(i, j) > sq(i, hp)) hp = j;
      } else {
        if (hn < 0 || sq(i, j) < sq(i, hn)) hn = j;
      }
    }
    triplets[i] = HardTriplet{i, hp, hn};
  }
  return triplets;
}

Tensor batch_hard_adversarial_triplet(const Tensor& embeddings, const std::vector<int>& labels,
                                      TripletMargin margin, const RankingOptions& opts) {
  if (embeddings.rank() != 2) {
    throw ShapeMismatch("batch embeddings must be {B,d}, got " + shape_str(embeddings.shape()));
  }
  const auto triplets = mine_batch_hard(embeddings.to_matrix(), labels);

  Tensor total;
  for (const HardTriplet& t : triplets) {
    Tensor a = row(embeddings, t.anchor);
    Tensor p = row(embeddings, t.positive);
    Tensor n = row(embeddings, t.negative);
    Tensor term = adversarial_triplet_loss(a, p, n, margin, opts);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<real>(triplets.size()));
}

Tensor aofs_adversarial_triplet(const Tensor& anchor, const Tensor& positive,
                                const std::vector<Tensor>& negatives, TripletMargin margin,
                                const RankingOptions& opts) {
  if (negatives.empty()) {
    throw EmptyNegatives("the negative set for the fixed-positive ranking loss is empty");
  }
  std::size_t hard = 0;
  real best = std::numeric_limits<real>::infinity();
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    if (negatives[k].shape() != anchor.shape()) {
      throw ShapeMismatch("negative " + std::to_string(k) + " has shape " +
                          shape_str(negatives[k].shape()) + ", anchor has " +
                          shape_str(anchor.shape()));
    }
    const real d = (negatives[k].value() - anchor.value()).norm();
    if (d < best) {
      best = d;
      hard = k;
    }
  }

  Tensor d_an = dist(anchor, negatives[hard]);
  Tensor loss = max_const(add_const(sub(dist(anchor, positive), d_an), margin.m), 0.0);
  if (!opts.adversarial) return loss;
  if (opts.sum_negatives) {
    for (const Tensor& n : negatives) {
      loss = add(loss, ranking_second_term(dist(n, positive), d_an, opts));
    }
  } else {
    loss = add(loss, ranking_second_term(dist(negatives[hard], positive), d_an, opts));
  }
  return loss;
}

AdversarialObjectives image_adversarial_loss(const Tensor& d_real, const Tensor& d_fake,
                                             GeneratorObjective mode) {
  return adversarial_objectives(d_real, d_fake, mode);
}

AdversarialObjectives feature_adversarial_loss(const Tensor& fd_real, const Tensor& fd_fake,
                                               GeneratorObjective mode) {
  return adversarial_objectives(fd_real, fd_fake, mode);
}

Tensor overall_loss(const Tensor& l_adv_image, const Tensor& l_adv_feature, const Tensor& l_at,
                    const LossWeights& weights) {
  for (const Tensor* t : {&l_adv_image, &l_adv_feature, &l_at}) {
    if (!std::isfinite(t->item())) {
      throw NonFiniteInput("overall loss received a non-finite term");
    }
  }
  return add(add(l_adv_image, scale(l_adv_feature, weights.lambda_adv_feature)),
             scale(l_at, weights.lambda_at));
}

}  // namespace modelab
