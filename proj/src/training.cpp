#include "modelab/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "modelab/errors.hpp"
#include "modelab/format.hpp"

namespace modelab {

namespace {

// Sub-seed tags; every stream a run consumes is derived from the one seed.
enum SeedTag : std::uint64_t {
  kTagData = 1,
  kTagExtractorInit,
  kTagExtractorBatches,
  kTagGeneratorInit,
  kTagImageDiscInit,
  kTagPoolInit,
  kTagGanBatches,
  kTagGanSteps,
};

real seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<real>(std::chrono::steady_clock::now() - start).count();
}

void guard_finite(real value, real threshold, const char* what) {
  if (!std::isfinite(value) || std::abs(value) > threshold) {
    throw DivergenceDetected(std::string(what) + " reached " + std::to_string(value));
  }
}

}  // namespace

Adam::Adam(std::vector<Tensor> params, AdamParams hp) : params_(std::move(params)), hp_(hp) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.push_back(vec::Zero(p.size()));
    v_.push_back(vec::Zero(p.size()));
  }
}

void Adam::step(real lr) {
  ++t_;
  const real bias1 = 1.0 - std::pow(hp_.beta1, static_cast<real>(t_));
  const real bias2 = 1.0 - std::pow(hp_.beta2, static_cast<real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const vec& g = params_[i].grad();
    m_[i] = hp_.beta1 * m_[i] + (1.0 - hp_.beta1) * g;
    v_[i] = hp_.beta2 * v_[i] + (1.0 - hp_.beta2) * g.cwiseProduct(g);
    const vec m_hat = m_[i] / bias1;
    const vec v_hat = v_[i] / bias2;
    params_[i].value() -=
        lr * (m_hat.array() / (v_hat.array().sqrt() + hp_.epsilon)).matrix();
  }
}

real lr_at(const LrSchedule& schedule, real epoch) {
  if (!schedule.linear_decay || epoch <= schedule.decay_after) return schedule.initial;
  const real span = static_cast<real>(schedule.total_epochs - schedule.decay_after);
  if (span <= 0.0) return schedule.initial;
  const real remaining = static_cast<real>(schedule.total_epochs) - epoch;
  return schedule.initial * std::max(remaining, 0.0) / span;
}

void ExperimentConfig::validate() const {
  if (dataset == DatasetKind::radial_identity) radial.validate();
  else mixture.validate();
  batch.validate();
  if (embedding_dim < 2) throw ConfigError("embedding dimension must be at least 2");
  if (extractor_epochs < 0 || gan_epochs < 0) throw ConfigError("epoch counts cannot be negative");
  if (!(extractor_lr.initial > 0.0) || !(gan_lr.initial > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence threshold must be positive");
  if (!std::isfinite(weights.lambda_adv_feature) || !std::isfinite(weights.lambda_at)) {
    throw ConfigError("loss weights must be finite");
  }
  for (Index d : extractor_hidden) {
    if (d <= 0) throw ConfigError("extractor hidden extents must be positive");
  }
  for (Index d : generator_hidden) {
    if (d <= 0) throw ConfigError("generator hidden extents must be positive");
  }
  for (Index d : discriminator_hidden) {
    if (d <= 0) throw ConfigError("discriminator hidden extents must be positive");
  }
}

int ExperimentConfig::n_categories() const {
  return dataset == DatasetKind::radial_identity ? radial.n_categories : mixture.n_modes;
}

int ExperimentConfig::sample_dim() const {
  return dataset == DatasetKind::radial_identity ? radial.dim
                                                 : static_cast<int>(mixture.means[0].size());
}

Dataset ExperimentConfig::generate_dataset() const {
  const std::uint64_t data_seed = seed_for(seed, kTagData);
  return dataset == DatasetKind::radial_identity ? gen_radial_identity(radial, data_seed)
                                                 : gen_gaussian_mixture(mixture, data_seed);
}

std::vector<real> ExperimentConfig::radial_targets() const {
  if (dataset == DatasetKind::radial_identity) return radial.band_radii;
  // Mixture categories have no radii; unit-spaced positive targets keep the
  // radial feature away from the decomposition's near-zero guard.
  std::vector<real> targets;
  for (int c = 0; c < mixture.n_modes; ++c) targets.push_back(static_cast<real>(c + 1));
  return targets;
}

RankingOptions ExperimentConfig::ranking_options() const {
  RankingOptions opts;
  opts.adversarial = at_loss == AtLossKind::adversarial_triplet;
  opts.hinge_second_term = at_hinge_second_term;
  opts.sum_negatives = at_sum_negatives;
  return opts;
}

void TrainingTrace::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "epoch,l_adv_image,l_adv_feature,l_at,lr,seconds\n";
  for (const TraceRow& row : rows) {
    os << row.epoch << ',' << fmt_real(row.l_adv_image) << ',' << fmt_real(row.l_adv_feature)
       << ',' << fmt_real(row.l_at) << ',' << fmt_real(row.lr) << ',' << fmt_real(row.seconds)
       << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

TrainingTrace TrainingTrace::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,l_adv_image,l_adv_feature,l_at,lr,seconds") {
    throw IoError(path + " is not a training trace");
  }
  TrainingTrace trace;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    TraceRow r;
    std::getline(row, field, ',');
    r.epoch = static_cast<int>(parse_int(field));
    std::getline(row, field, ',');
    r.l_adv_image = parse_real(field);
    std::getline(row, field, ',');
    r.l_adv_feature = parse_real(field);
    std::getline(row, field, ',');
    r.l_at = parse_real(field);
    std::getline(row, field, ',');
    r.lr = parse_real(field);
    if (!std::getline(row, field, ',')) throw IoError(path + ": short trace row");
    r.seconds = parse_real(field);
    trace.rows.push_back(r);
  }
  return trace;
}

bool TrainingTrace::same_numerics(const TrainingTrace& other) const {
  if (rows.size() != other.rows.size()) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TraceRow& a = rows[i];
    const TraceRow& b = other.rows[i];
    if (a.epoch != b.epoch || a.l_adv_image != b.l_adv_image ||
        a.l_adv_feature != b.l_adv_feature || a.l_at != b.l_at || a.lr != b.lr) {
      return false;
    }
  }
  return true;
}

FeatureExtractor make_extractor(const ExperimentConfig& config) {
  std::vector<Index> dims{config.sample_dim()};
  dims.insert(dims.end(), config.extractor_hidden.begin(), config.extractor_hidden.end());
  dims.push_back(config.embedding_dim);
  FeatureExtractor extractor;
  extractor.net = make_mlp(dims, Activation::leaky_relu, Activation::identity);
  init_params(extractor.net, seed_for(config.seed, kTagExtractorInit), config.init_scheme);
  return extractor;
}

ExtractorTrainResult train_extractor(const ExperimentConfig& config, const Dataset& train_data) {
  config.validate();
  if (train_data.empty()) throw ConfigError("training data is empty");

  ExtractorTrainResult result;
  result.extractor = make_extractor(config);
  Mlp& net = result.extractor.net;
  Adam adam(net.params(), config.adam);

  const bool mine_identities = config.dataset == DatasetKind::radial_identity;
  PkBatchSampler sampler(train_data, config.batch,
                         mine_identities ? ClassBy::identity : ClassBy::category,
                         seed_for(config.seed, kTagExtractorBatches));
  const std::vector<real> targets = config.radial_targets();
  const RankingOptions opts = config.ranking_options();

  for (int epoch = 0; epoch < config.extractor_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const real lr = lr_at(config.extractor_lr, static_cast<real>(epoch));
    real sum_regression = 0.0;
    real sum_ranking = 0.0;
    const int steps = sampler.batches_per_epoch();
    for (int step = 0; step < steps; ++step) {
      Batch batch = sampler.next();
      vec target_radii(batch.features.rows());
      for (Index i = 0; i < target_radii.size(); ++i) {
        target_radii[i] = targets[batch.category[i]];
      }

      Tape tape;
      TapeScope scope(tape);
      Tensor embeddings = net.forward(Tensor::from_mat(batch.features));
      BatchDecomposition dec = decompose_rows(embeddings);
      Tensor regression =
          mean(square(sub(dec.r, make_tensor({target_radii.size(), 1}, target_radii))));
      Tensor loss = regression;
      real ranking_value = 0.0;
      if (mine_identities) {
        Tensor ranking =
            batch_hard_adversarial_triplet(dec.theta, batch.identity, config.margin, opts);
        ranking_value = ranking.item();
        loss = add(regression, ranking);
      }
      guard_finite(regression.item(), config.divergence_threshold, "radial regression loss");
      guard_finite(ranking_value, config.divergence_threshold, "ranking loss");
      backward(loss);
      adam.step(lr);
      sum_regression += regression.item();
      sum_ranking += ranking_value;
    }
    result.trace.rows.push_back(TraceRow{epoch, 0.0, sum_regression / steps, sum_ranking / steps,
                                         lr, seconds_since(start)});
  }
  return result;
}

GanModels make_gan_models(const ExperimentConfig& config) {
  GanModels models;
  const int k = config.n_categories();
  const int d = config.sample_dim();

  std::vector<Index> g_dims{static_cast<Index>(d + k)};
  g_dims.insert(g_dims.end(), config.generator_hidden.begin(), config.generator_hidden.end());
  g_dims.push_back(d);
  models.generator.net = make_mlp(g_dims, Activation::leaky_relu, Activation::identity);
  models.generator.n_categories = k;
  models.generator.sample_dim = d;
  init_params(models.generator.net, seed_for(config.seed, kTagGeneratorInit),
              config.init_scheme);

  std::vector<Index> d_dims{static_cast<Index>(d)};
  d_dims.insert(d_dims.end(), config.discriminator_hidden.begin(),
                config.discriminator_hidden.end());
  d_dims.push_back(1);
  models.image_discriminator = make_mlp(d_dims, Activation::leaky_relu, Activation::sigmoid);
  init_params(models.image_discriminator, seed_for(config.seed, kTagImageDiscInit),
              config.init_scheme);

  std::vector<Index> fd_dims{1};
  fd_dims.insert(fd_dims.end(), config.discriminator_hidden.begin(),
                 config.discriminator_hidden.end());
  fd_dims.push_back(1);
  models.pool = make_pool(config.use_cdp ? k : 1, fd_dims, seed_for(config.seed, kTagPoolInit),
                          config.init_scheme);
  return models;
}

GanTrainResult train_gan(const ExperimentConfig& config, const Dataset& train_data,
                         const FeatureExtractor& extractor, const GanStepObserver& observer) {
  config.validate();
  if (train_data.empty()) throw ConfigError("training data is empty");
  if (extractor.net.weights.empty()) throw ConfigError("extractor has no parameters");

  GanTrainResult result;
  result.models = make_gan_models(config);
  ConditionalGenerator& generator = result.models.generator;
  DiscriminatorPool& pool = result.models.pool;
  Mlp& image_d = result.models.image_discriminator;

  Adam adam_g(generator.net.params(), config.adam);
  Adam adam_d(image_d.params(), config.adam);
  std::vector<Adam> adam_pool;
  adam_pool.reserve(pool.members.size());
  for (Mlp& member : pool.members) adam_pool.emplace_back(member.params(), config.adam);

  PkBatchSampler sampler(train_data, config.batch, ClassBy::category,
                         seed_for(config.seed, kTagGanBatches));
  Rng step_rng(seed_for(config.seed, kTagGanSteps));
  const int k = config.n_categories();
  const RankingOptions opts = config.ranking_options();
  int step_index = 0;

  for (int epoch = 0; epoch < config.gan_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const real lr = lr_at(config.gan_lr, static_cast<real>(epoch));
    real sum_d = 0.0, sum_fd = 0.0, sum_at = 0.0;
    const int steps = sampler.batches_per_epoch();
    for (int step = 0; step < steps; ++step, ++step_index) {
      Batch batch = sampler.next();

      // One target category per step; only its discriminator trains.
      int target = step_rng.below_int(k);
      auto in_batch = [&](int category) {
        for (int c : batch.category) {
          if (c == category) return true;
        }
        return false;
      };
      while (!in_batch(target)) target = step_rng.below_int(k);

      std::vector<Index> anchor_rows, exemplar_rows;
      for (Index i = 0; i < batch.features.rows(); ++i) {
        (batch.category[i] == target ? exemplar_rows : anchor_rows).push_back(i);
      }

      mat x_anchor(anchor_rows.size(), batch.features.cols());
      for (std::size_t i = 0; i < anchor_rows.size(); ++i) {
        x_anchor.row(i) = batch.features.row(anchor_rows[i]);
      }
      mat y_exemplar(exemplar_rows.size(), batch.features.cols());
      for (std::size_t i = 0; i < exemplar_rows.size(); ++i) {
        y_exemplar.row(i) = batch.features.row(exemplar_rows[i]);
      }

      // Constants for this step, all computed off-tape: synthesized samples
      // for the discriminator updates and the frozen extractor's view of the
      // natural batch.
      const mat fake = generator.generate_rows(Tensor::from_mat(x_anchor), target).to_matrix();
      const mat natural_theta =
          decompose_rows(extractor.embed(Tensor::from_mat(batch.features))).theta.to_matrix();
      const vec f_age_real =
          decompose_rows(extractor.embed(Tensor::from_mat(y_exemplar))).r.value();
      const vec f_age_fake = decompose_rows(extractor.embed(Tensor::from_mat(fake))).r.value();

      const int member_index = config.use_cdp ? target : 0;
      Mlp& member = pool.members[member_index];

      // 1. image-level discriminator
      real d_objective_value;
      {
        Tape tape;
        TapeScope scope(tape);
        auto obj = image_adversarial_loss(image_d.forward(Tensor::from_mat(y_exemplar)),
                                          image_d.forward(Tensor::from_mat(fake)),
                                          config.g_objective);
        d_objective_value = obj.discriminator.item();
        guard_finite(d_objective_value, config.divergence_threshold, "image adversarial loss");
        backward(scale(obj.discriminator, -1.0));
        adam_d.step(lr);
      }

      // 2. selected feature-level discriminator
      real fd_objective_value;
      {
        Tape tape;
        TapeScope scope(tape);
        auto obj = feature_adversarial_loss(
            member.forward(make_tensor({f_age_real.size(), 1}, f_age_real)),
            member.forward(make_tensor({f_age_fake.size(), 1}, f_age_fake)), config.g_objective);
        fd_objective_value = obj.discriminator.item();
        guard_finite(fd_objective_value, config.divergence_threshold, "feature adversarial loss");
        backward(scale(obj.discriminator, -1.0));
        adam_pool[member_index].step(lr);
      }

      // 3. generator, against the just-updated discriminators
      real at_value = 0.0;
      {
        Tape tape;
        TapeScope scope(tape);
        Tensor synth = generator.generate_rows(Tensor::from_mat(x_anchor), target);
        Tensor d_scores = image_d.forward(synth);
        auto img_obj = image_adversarial_loss(
            image_d.forward(Tensor::from_mat(y_exemplar)).detach(), d_scores, config.g_objective);

        BatchDecomposition synth_dec = decompose_rows(extractor.embed(synth));
        auto feat_obj = feature_adversarial_loss(
            member.forward(make_tensor({f_age_real.size(), 1}, f_age_real)).detach(),
            member.forward(synth_dec.r), config.g_objective);

        std::vector<Tensor> theta_const;
        theta_const.reserve(batch.features.rows());
        for (Index j = 0; j < batch.features.rows(); ++j) {
          theta_const.push_back(Tensor::from_vec(natural_theta.row(j).transpose()));
        }
        Tensor ranking;
        Index ranked_anchors = 0;
        for (std::size_t i = 0; i < anchor_rows.size(); ++i) {
          const Index source_row = anchor_rows[i];
          std::vector<Tensor> negatives;
          for (Index j = 0; j < batch.features.rows(); ++j) {
            if (batch.identity[j] != batch.identity[source_row]) {
              negatives.push_back(theta_const[j]);
            }
          }
          if (negatives.empty()) continue;  // single-identity data has no ranking term
          Tensor term = aofs_adversarial_triplet(theta_const[source_row],
                                                 row(synth_dec.theta, i), negatives,
                                                 config.margin, opts);
          ranking = ranking.defined() ? add(ranking, term) : term;
          ++ranked_anchors;
        }
        // Summed over anchors, not averaged: the identity term is a double
        // sum over the batch while the adversarial terms are per-sample
        // expectations, so its weight grows with the anchor count.
        Tensor l_at = ranked_anchors > 0 ? ranking : Tensor::scalar(0.0);
        at_value = l_at.item();
        guard_finite(at_value, config.divergence_threshold, "identity ranking loss");

        Tensor g_loss = overall_loss(img_obj.generator, feat_obj.generator, l_at, config.weights);
        guard_finite(g_loss.item(), config.divergence_threshold, "generator loss");
        backward(g_loss);
        adam_g.step(lr);
      }

      sum_d += d_objective_value;
      sum_fd += fd_objective_value;
      sum_at += at_value;
      if (observer) observer(step_index, member_index, result.models);
    }
    result.trace.rows.push_back(TraceRow{epoch, sum_d / steps, sum_fd / steps, sum_at / steps, lr,
                                         seconds_since(start)});
  }
  return result;
}

int extractor_category(const FeatureExtractor& extractor, const std::vector<real>& targets,
                       const vec& sample) {
  const Tensor embedding = extractor.embed(Tensor::from_vec(sample));
  const real r = embedding.value().norm();
  int best = 0;
  real best_gap = std::abs(r - targets[0]);
  for (std::size_t c = 1; c < targets.size(); ++c) {
    const real gap = std::abs(r - targets[c]);
    if (gap < best_gap) {
      best_gap = gap;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace modelab
