#include "modelab/experiment.hpp"

#include <algorithm>
#include <cmath>

namespace modelab {

namespace {

constexpr std::uint64_t kTagEval = 101;
constexpr std::uint64_t kTagDigits = 102;

mat theta_of(const FeatureExtractor& extractor, const mat& samples) {
  return decompose_rows(extractor.embed(Tensor::from_mat(samples))).theta.to_matrix();
}

}  // namespace

OracleClassifier make_category_oracle(const ExperimentConfig& config) {
  if (config.dataset == DatasetKind::radial_identity) {
    const RadialOracle oracle = RadialOracle::from_spec(config.radial);
    return [oracle](const vec& x) { return oracle.category(x); };
  }
  const MixtureOracle oracle = MixtureOracle::from_spec(config.mixture);
  return [oracle](const vec& x) { return oracle.category(x); };
}

OraclePosterior make_posterior_oracle(const ExperimentConfig& config) {
  if (config.dataset == DatasetKind::radial_identity) {
    const RadialOracle oracle = RadialOracle::from_spec(config.radial);
    return [oracle](const vec& x) { return oracle.posterior(x); };
  }
  const MixtureOracle oracle = MixtureOracle::from_spec(config.mixture);
  return [oracle](const vec& x) { return oracle.posterior(x); };
}

SplitResult experiment_split(const ExperimentConfig& config, const Dataset& dataset) {
  return split_train_test(dataset, config.train_fraction, seed_for(config.seed, 103),
                          config.identity_disjoint);
}

PipelineResult run_pipeline(const ExperimentConfig& config, const Dataset& train_data) {
  PipelineResult result;
  auto stage_one = train_extractor(config, train_data);
  result.extractor = std::move(stage_one.extractor);
  result.extractor_trace = std::move(stage_one.trace);
  auto stage_two = train_gan(config, train_data, result.extractor);
  result.gan = std::move(stage_two.models);
  result.gan_trace = std::move(stage_two.trace);
  return result;
}

real angular_intra_class_variance(const FeatureExtractor& extractor, const Dataset& samples) {
  const mat theta = theta_of(extractor, features_matrix(samples));
  return intra_class_variance(theta, identity_labels(samples));
}

real identity_classification_accuracy(const FeatureExtractor& extractor, const Dataset& train,
                                      const Dataset& test) {
  return nearest_centroid_cosine_accuracy(
      theta_of(extractor, features_matrix(train)), identity_labels(train),
      theta_of(extractor, features_matrix(test)), identity_labels(test));
}

Evaluation evaluate(const ExperimentConfig& config, const FeatureExtractor& extractor,
                    const GanModels& gan, const Dataset& calibration, const Dataset& test) {
  if (test.empty()) throw EmptyInput("evaluation needs a test split");
  Rng rng(seed_for(config.seed, kTagEval));
  const int k = config.n_categories();

  Evaluation out;
  out.targets.reserve(test.size());
  out.synth.resize(test.size(), config.sample_dim());
  for (std::size_t i = 0; i < test.size(); ++i) {
    int target = rng.below_int(k);
    while (target == test[i].category) target = rng.below_int(k);
    out.targets.push_back(target);
  }
  // Batched synthesis, grouped by target label.
  for (int target = 0; target < k; ++target) {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (out.targets[i] == target) rows.push_back(static_cast<Index>(i));
    }
    if (rows.empty()) continue;
    mat inputs(rows.size(), config.sample_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      inputs.row(i) = test[rows[i]].features.transpose();
    }
    const mat synth = gan.generator.generate_rows(Tensor::from_mat(inputs), target).to_matrix();
    for (std::size_t i = 0; i < rows.size(); ++i) out.synth.row(rows[i]) = synth.row(i);
  }

  const OracleClassifier oracle = make_category_oracle(config);
  const OraclePosterior posterior = make_posterior_oracle(config);

  out.report.kl_mode_collapse = kl_mode_collapse(out.synth, out.targets, oracle, k);
  out.report.category_accuracy = category_accuracy(out.synth, out.targets, oracle, k);
  out.report.frechet_distance = frechet_distance(features_matrix(test), out.synth);
  out.report.classifier_score = classifier_score(out.synth, posterior, k);
  out.report.mode_coverage = mode_coverage(out.synth, oracle, k, 1);

  const bool has_identities =
      config.dataset == DatasetKind::radial_identity && config.radial.n_identities > 1;
  if (has_identities) {
    out.report.intra_class_variance = angular_intra_class_variance(extractor, test);
    out.identity_accuracy = identity_classification_accuracy(extractor, calibration, test);

    // Threshold from natural calibration pairs.
    const mat calib_theta = theta_of(extractor, features_matrix(calibration));
    std::vector<Index> partners_same, partners_diff, anchors;
    for (Index i = 0; i < calib_theta.rows(); ++i) {
      std::vector<Index> same, diff;
      for (Index j = 0; j < calib_theta.rows(); ++j) {
        if (j == i) continue;
        (calibration[j].identity == calibration[i].identity ? same : diff).push_back(j);
      }
      if (same.empty() || diff.empty()) continue;
      anchors.push_back(i);
      partners_same.push_back(same[rng.below(same.size())]);
      partners_diff.push_back(diff[rng.below(diff.size())]);
    }
    if (!anchors.empty()) {
      mat q(2 * anchors.size(), calib_theta.cols()), g(2 * anchors.size(), calib_theta.cols());
      std::vector<char> flags;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        q.row(2 * i) = calib_theta.row(anchors[i]);
        g.row(2 * i) = calib_theta.row(partners_same[i]);
        flags.push_back(1);
        q.row(2 * i + 1) = calib_theta.row(anchors[i]);
        g.row(2 * i + 1) = calib_theta.row(partners_diff[i]);
        flags.push_back(0);
      }
      const real threshold = calibrate_verification_threshold(q, g, flags);

      // Query: natural test sample. Gallery: its synthesis (same identity)
      // or a different-identity sample's synthesis (impostor).
      const mat test_theta = theta_of(extractor, features_matrix(test));
      const mat synth_theta = theta_of(extractor, out.synth);
      std::vector<Index> impostor(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) {
        Index other = rng.below(test.size());
        int guard = 0;
        while (test[other].identity == test[i].identity && guard++ < 1000) {
          other = rng.below(test.size());
        }
        impostor[i] = other;
      }
      mat vq(2 * test.size(), test_theta.cols()), vg(2 * test.size(), test_theta.cols());
      std::vector<char> vflags;
      for (std::size_t i = 0; i < test.size(); ++i) {
        vq.row(2 * i) = test_theta.row(i);
        vg.row(2 * i) = synth_theta.row(i);
        vflags.push_back(1);
        vq.row(2 * i + 1) = test_theta.row(i);
        vg.row(2 * i + 1) = synth_theta.row(impostor[i]);
        vflags.push_back(0);
      }
      try {
        out.report.verification_accuracy = verification_accuracy(vq, vg, vflags, threshold);
      } catch (const ZeroEmbedding&) {
        // A degenerate generator can emit samples the extractor maps to the
        // origin; the rest of the report is still meaningful.
      }
    }
  }
  return out;
}

CellSeedResult run_cell_seed(const ExperimentConfig& config) {
  const Dataset dataset = config.generate_dataset();
  const SplitResult split = experiment_split(config, dataset);
  const PipelineResult pipeline = run_pipeline(config, split.train);
  const Evaluation eval = evaluate(config, pipeline.extractor, pipeline.gan, split.train,
                                   split.test);
  CellSeedResult result;
  result.report = eval.report;
  result.identity_accuracy = eval.identity_accuracy;
  if (config.dataset == DatasetKind::radial_identity && config.radial.n_identities > 1) {
    result.intra_class_variance = angular_intra_class_variance(pipeline.extractor, split.test);
  }
  return result;
}

std::string AblationCell::name() const {
  std::string out = use_cdp ? "cdp" : "nocdp";
  out += at_loss == AtLossKind::adversarial_triplet ? "-at" : "-triplet";
  return out;
}

real median(std::vector<real> values) {
  if (values.empty()) throw EmptyInput("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

const AblationCell* find_cell(const std::vector<AblationCell>& cells, bool cdp, AtLossKind at) {
  for (const AblationCell& cell : cells) {
    if (cell.use_cdp == cdp && cell.at_loss == at) return &cell;
  }
  return nullptr;
}

std::vector<real> collect(const AblationCell& cell, real CellSeedResult::*field) {
  std::vector<real> out;
  for (const CellSeedResult& seed : cell.per_seed) out.push_back(seed.*field);
  return out;
}

std::vector<real> collect_kl(const AblationCell& cell) {
  std::vector<real> out;
  for (const CellSeedResult& seed : cell.per_seed) out.push_back(seed.report.kl_mode_collapse);
  return out;
}

}  // namespace

std::vector<Verdict> ablation_verdicts(const std::vector<AblationCell>& cells, int n_categories) {
  const AblationCell* cdp_at = find_cell(cells, true, AtLossKind::adversarial_triplet);
  const AblationCell* nocdp_at = find_cell(cells, false, AtLossKind::adversarial_triplet);
  const AblationCell* cdp_triplet = find_cell(cells, true, AtLossKind::triplet);
  if (!cdp_at || !nocdp_at || !cdp_triplet) {
    throw ConfigError("ablation verdicts need the cdp-at, nocdp-at and cdp-triplet cells");
  }
  const bool low_confidence = cdp_at->per_seed.size() < 3;

  std::vector<Verdict> verdicts;
  {
    const real with = median(collect_kl(*cdp_at));
    const real without = median(collect_kl(*nocdp_at));
    Verdict v{"mode_collapse_kl", with < without, low_confidence,
              "median KL cdp=" + std::to_string(with) + " nocdp=" + std::to_string(without)};
    verdicts.push_back(v);
  }
  {
    // Per-category medians: the pool model must clear 0.90 everywhere and
    // beat the single-discriminator baseline on most categories.
    std::vector<real> with(n_categories), without(n_categories);
    for (int c = 0; c < n_categories; ++c) {
      std::vector<real> a, b;
      for (const auto& seed : cdp_at->per_seed) a.push_back(seed.report.category_accuracy[c]);
      for (const auto& seed : nocdp_at->per_seed) b.push_back(seed.report.category_accuracy[c]);
      with[c] = median(a);
      without[c] = median(b);
    }
    bool floor_ok = true;
    int strictly_better = 0;
    std::string detail = "per-category median accuracy cdp/nocdp:";
    for (int c = 0; c < n_categories; ++c) {
      floor_ok = floor_ok && with[c] >= 0.90;
      strictly_better += without[c] < with[c];
      detail += " " + std::to_string(with[c]) + "/" + std::to_string(without[c]);
    }
    verdicts.push_back(Verdict{"synthesis_accuracy", floor_ok && strictly_better >= 3,
                               low_confidence, detail});
  }
  {
    const real with = median(collect(*cdp_at, &CellSeedResult::intra_class_variance));
    const real without = median(collect(*cdp_triplet, &CellSeedResult::intra_class_variance));
    verdicts.push_back(Verdict{"intra_class_variance", with < without, low_confidence,
                               "median variance at=" + std::to_string(with) +
                                   " triplet=" + std::to_string(without)});
  }
  {
    std::vector<real> at_acc, triplet_acc;
    for (const auto& seed : cdp_at->per_seed) at_acc.push_back(seed.report.verification_accuracy);
    for (const auto& seed : cdp_triplet->per_seed) {
      triplet_acc.push_back(seed.report.verification_accuracy);
    }
    const real with = median(at_acc);
    const real without = median(triplet_acc);
    verdicts.push_back(Verdict{"verification", with >= without, low_confidence,
                               "median verification at=" + std::to_string(with) +
                                   " triplet=" + std::to_string(without)});
  }
  return verdicts;
}

real digits_accuracy(const IdxData& train, const IdxData& test, AtLossKind at_loss,
                     const DigitsRunConfig& run, std::uint64_t seed) {
  Rng rng(seed_for(seed, kTagDigits));

  // Deterministic class-balanced subsample of the train corpus.
  std::vector<std::vector<Index>> by_digit(10);
  for (std::size_t i = 0; i < train.images.size(); ++i) {
    by_digit[train.labels[i]].push_back(static_cast<Index>(i));
  }
  Dataset train_set;
  for (int digit = 0; digit < 10; ++digit) {
    auto& rows = by_digit[digit];
    rng.shuffle(rows);
    const int take = std::min<int>(run.train_per_class, static_cast<int>(rows.size()));
    for (int i = 0; i < take; ++i) {
      train_set.push_back(LabeledSample{train.images[rows[i]], digit, digit});
    }
  }
  const int n_test = std::min<int>(run.test_total, static_cast<int>(test.images.size()));

  const Index input_dim = static_cast<Index>(train.images[0].size());
  std::vector<Index> dims{input_dim};
  dims.insert(dims.end(), run.hidden.begin(), run.hidden.end());
  dims.push_back(run.embedding_dim);
  Mlp net = make_mlp(dims, Activation::leaky_relu, Activation::identity);
  init_params(net, seed_for(seed, kTagDigits + 1), InitScheme::uniform_fan_in);
  Adam adam(net.params(), run.adam);

  RankingOptions opts;
  opts.adversarial = at_loss == AtLossKind::adversarial_triplet;
  PkBatchSampler sampler(train_set, run.batch, ClassBy::category,
                         seed_for(seed, kTagDigits + 2));
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    for (int step = 0; step < sampler.batches_per_epoch(); ++step) {
      Batch batch = sampler.next();
      Tape tape;
      TapeScope scope(tape);
      Tensor embeddings = net.forward(Tensor::from_mat(batch.features));
      Tensor loss = batch_hard_adversarial_triplet(embeddings, batch.category, run.margin, opts);
      backward(loss);
      adam.step(run.lr);
    }
  }

  mat train_emb = net.forward(Tensor::from_mat(features_matrix(train_set))).to_matrix();
  mat test_features(n_test, input_dim);
  std::vector<int> test_labels(n_test);
  for (int i = 0; i < n_test; ++i) {
    test_features.row(i) = test.images[i].transpose();
    test_labels[i] = test.labels[i];
  }
  mat test_emb = net.forward(Tensor::from_mat(test_features)).to_matrix();
  return nearest_centroid_cosine_accuracy(train_emb, category_labels(train_set), test_emb,
                                          test_labels);
}

}  // namespace modelab
