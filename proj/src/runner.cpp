#include "modelab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "modelab/config.hpp"
#include "modelab/experiment.hpp"
#include "modelab/format.hpp"
#include "modelab/manifest.hpp"
#include "modelab/svg.hpp"

namespace modelab {

namespace fs = std::filesystem;

namespace {

struct LoadedConfig {
  KvConfig kv;
  ExperimentConfig config;
  std::string snapshot;  // canonical text, defaults included
};

LoadedConfig load(const RunOptions& options) {
  LoadedConfig loaded;
  loaded.kv = KvConfig::parse_file(options.config_path);
  if (options.seed) loaded.kv.set("seed", std::to_string(*options.seed));
  loaded.config = experiment_config_from(loaded.kv);
  loaded.snapshot = experiment_config_text(loaded.config);
  return loaded;
}

Dataset load_dataset(const LoadedConfig& loaded) {
  if (loaded.kv.has("data.csv")) {
    return read_dataset_csv(loaded.kv.require_string("data.csv"));
  }
  return loaded.config.generate_dataset();
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path);
}

std::string cell_summary_header(int k) {
  return MetricsReport::csv_header(k) + ",identity_accuracy";
}

std::string cell_summary_row(const CellSeedResult& result) {
  return result.report.csv_row() + "," + fmt_real(result.identity_accuracy);
}

CellSeedResult read_cell_summary(const std::string& path, int k) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string header, row;
  if (!std::getline(is, header) || header != cell_summary_header(k) || !std::getline(is, row)) {
    throw IoError(path + " is not a cell summary for " + std::to_string(k) + " categories");
  }
  std::vector<std::string> fields;
  std::stringstream ss(row);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != static_cast<std::size_t>(k) + 7) {
    throw IoError(path + " has the wrong column count");
  }
  CellSeedResult result;
  std::size_t at = 0;
  result.report.kl_mode_collapse = parse_real(fields[at++]);
  result.report.category_accuracy.resize(k);
  for (int c = 0; c < k; ++c) result.report.category_accuracy[c] = parse_real(fields[at++]);
  result.report.intra_class_variance = parse_real(fields[at++]);
  result.intra_class_variance = result.report.intra_class_variance;
  result.report.verification_accuracy = parse_real(fields[at++]);
  result.report.frechet_distance = parse_real(fields[at++]);
  result.report.classifier_score = parse_real(fields[at++]);
  result.report.mode_coverage = static_cast<int>(parse_int(fields[at++]));
  result.identity_accuracy = parse_real(fields[at++]);
  return result;
}

void run_tasks(std::vector<std::function<void()>>& tasks, int threads) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_sample_plots(const std::string& dir, const ExperimentConfig& config,
                        const Dataset& test, const Evaluation& eval,
                        const FeatureExtractor& extractor) {
  const OracleClassifier oracle = make_category_oracle(config);
  const int k = config.n_categories();

  ScatterPlot samples("real (o) vs synthesized (x) by oracle category");
  for (int c = 0; c < k; ++c) {
    std::vector<Index> real_rows, synth_rows;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (oracle(test[i].features) == c) real_rows.push_back(static_cast<Index>(i));
      if (oracle(eval.synth.row(static_cast<Index>(i)).transpose()) == c) {
        synth_rows.push_back(static_cast<Index>(i));
      }
    }
    mat real_pts(real_rows.size(), 2), synth_pts(synth_rows.size(), 2);
    for (std::size_t i = 0; i < real_rows.size(); ++i) {
      real_pts.row(i) = test[real_rows[i]].features.head(2).transpose();
    }
    for (std::size_t i = 0; i < synth_rows.size(); ++i) {
      synth_pts.row(i) = eval.synth.row(synth_rows[i]).head(2);
    }
    samples.add_series("real category " + std::to_string(c), real_pts, c);
    samples.add_series("synth category " + std::to_string(c), synth_pts, c,
                       ScatterPlot::Marker::cross);
  }
  samples.write(dir + "/samples.svg");

  // Angular components by identity, the intra-class variance picture.
  const mat theta =
      decompose_rows(extractor.embed(Tensor::from_mat(features_matrix(test)))).theta.to_matrix();
  ScatterPlot embeddings("identity-specific components by identity");
  std::map<int, std::vector<Index>> by_identity;
  for (std::size_t i = 0; i < test.size(); ++i) {
    by_identity[test[i].identity].push_back(static_cast<Index>(i));
  }
  for (const auto& [identity, rows] : by_identity) {
    mat pts(rows.size(), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) pts.row(i) = theta.row(rows[i]).head(2);
    embeddings.add_series("identity " + std::to_string(identity), pts, identity);
  }
  embeddings.write(dir + "/embeddings.svg");
}

}  // namespace

int thread_cap() {
  if (const char* env = std::getenv("MODELAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 2 : static_cast<int>(std::min(hw, 8u));
}

void run_gen_data(const RunOptions& options) {
  const LoadedConfig loaded = load(options);
  ensure_dir(options.out_dir);
  const Dataset dataset = loaded.config.generate_dataset();
  write_dataset_csv(options.out_dir + "/dataset.csv", dataset);
  write_run_manifest(options.out_dir, "gen-data", loaded.snapshot, {loaded.config.seed},
                     {{"dataset", "dataset.csv"}});
}

void run_train(const RunOptions& options, const std::string& stage) {
  const LoadedConfig loaded = load(options);
  ensure_dir(options.out_dir);
  const Dataset dataset = load_dataset(loaded);
  const SplitResult split = experiment_split(loaded.config, dataset);

  if (stage == "extractor") {
    const ExtractorTrainResult result = train_extractor(loaded.config, split.train);
    save_checkpoint(options.out_dir + "/extractor.mlab", result.extractor.net);
    result.trace.write_csv(options.out_dir + "/extractor_trace.csv");
    write_run_manifest(options.out_dir, "train --stage extractor", loaded.snapshot,
                       {loaded.config.seed},
                       {{"checkpoint", "extractor.mlab"}, {"trace", "extractor_trace.csv"}});
    return;
  }
  if (stage != "gan") throw ConfigError("stage must be extractor or gan, got '" + stage + "'");

  if (!loaded.kv.has("gan.extractor_checkpoint")) {
    throw MissingCheckpoint("config key gan.extractor_checkpoint is required for the gan stage");
  }
  FeatureExtractor extractor = make_extractor(loaded.config);
  load_checkpoint(loaded.kv.require_string("gan.extractor_checkpoint"), extractor.net);

  const GanTrainResult result = train_gan(loaded.config, split.train, extractor);
  std::map<std::string, std::string> outputs;
  save_checkpoint(options.out_dir + "/extractor.mlab", extractor.net);
  outputs["extractor"] = "extractor.mlab";
  save_checkpoint(options.out_dir + "/generator.mlab", result.models.generator.net);
  outputs["generator"] = "generator.mlab";
  save_checkpoint(options.out_dir + "/image_discriminator.mlab",
                  result.models.image_discriminator);
  outputs["image_discriminator"] = "image_discriminator.mlab";
  for (int i = 0; i < result.models.pool.size(); ++i) {
    const std::string name = "pool_" + std::to_string(i) + ".mlab";
    save_checkpoint(options.out_dir + "/" + name, result.models.pool.members[i]);
    outputs["pool_" + std::to_string(i)] = name;
  }
  result.trace.write_csv(options.out_dir + "/gan_trace.csv");
  outputs["trace"] = "gan_trace.csv";
  write_run_manifest(options.out_dir, "train --stage gan", loaded.snapshot, {loaded.config.seed},
                     outputs);
}

void run_eval(const RunOptions& options, const std::string& checkpoints_dir) {
  const LoadedConfig loaded = load(options);
  ensure_dir(options.out_dir);
  const ExperimentConfig& config = loaded.config;

  FeatureExtractor extractor = make_extractor(config);
  load_checkpoint(checkpoints_dir + "/extractor.mlab", extractor.net);

  GanModels gan = make_gan_models(config);
  load_checkpoint(checkpoints_dir + "/generator.mlab", gan.generator.net);
  load_checkpoint(checkpoints_dir + "/image_discriminator.mlab", gan.image_discriminator);
  for (int i = 0; i < gan.pool.size(); ++i) {
    load_checkpoint(checkpoints_dir + "/pool_" + std::to_string(i) + ".mlab",
                    gan.pool.members[i]);
  }
  const Dataset dataset = load_dataset(loaded);
  const SplitResult split = experiment_split(config, dataset);
  const Evaluation eval = evaluate(config, extractor, gan, split.train, split.test);

  const int k = config.n_categories();
  write_text(options.out_dir + "/metrics.csv",
             cell_summary_header(k) + "\n" +
                 eval.report.csv_row() + "," + fmt_real(eval.identity_accuracy) + "\n");
  write_text(options.out_dir + "/report.txt",
             eval.report.text_block() + "identity accuracy    " +
                 fmt_real(eval.identity_accuracy) + "\n");
  write_sample_plots(options.out_dir, config, split.test, eval, extractor);
  write_run_manifest(options.out_dir, "eval", loaded.snapshot, {config.seed},
                     {{"metrics", "metrics.csv"},
                      {"report", "report.txt"},
                      {"samples_plot", "samples.svg"},
                      {"embeddings_plot", "embeddings.svg"}});
}

void run_ablate(const RunOptions& options, int n_seeds, int threads) {
  if (n_seeds < 1) throw ConfigError("ablation needs at least one seed");
  const LoadedConfig loaded = load(options);
  ensure_dir(options.out_dir);
  const int k = loaded.config.n_categories();

  std::vector<AblationCell> cells;
  for (const bool use_cdp : {true, false}) {
    for (const AtLossKind at : {AtLossKind::adversarial_triplet, AtLossKind::triplet}) {
      AblationCell cell;
      cell.use_cdp = use_cdp;
      cell.at_loss = at;
      cell.per_seed.resize(n_seeds);
      cells.push_back(std::move(cell));
    }
  }

  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < n_seeds; ++s) seeds.push_back(loaded.config.seed + s);

  std::vector<std::function<void()>> tasks;
  for (AblationCell& cell : cells) {
    for (int s = 0; s < n_seeds; ++s) {
      tasks.push_back([&cell, s, &loaded, &options, &seeds, k]() {
        ExperimentConfig config = loaded.config;
        config.use_cdp = cell.use_cdp;
        config.at_loss = cell.at_loss;
        config.seed = seeds[s];
        const std::string snapshot = experiment_config_text(config);
        const std::string dir =
            options.out_dir + "/cell_" + cell.name() + "/seed_" + std::to_string(seeds[s]);
        const std::string summary_path = dir + "/summary.csv";
        if (RunManifest::exists(dir)) {
          // Resume: reuse the cell result if it came from this exact config.
          const RunManifest manifest = RunManifest::read(dir);
          if (manifest.config_hash == git_blob_hash(snapshot) && fs::exists(summary_path)) {
            cell.per_seed[s] = read_cell_summary(summary_path, k);
            return;
          }
        }
        const CellSeedResult result = run_cell_seed(config);
        ensure_dir(dir);
        write_text(summary_path,
                   cell_summary_header(k) + "\n" + cell_summary_row(result) + "\n");
        write_run_manifest(dir, "ablate-cell " + cell.name(), snapshot, {config.seed},
                           {{"summary", "summary.csv"}});
        cell.per_seed[s] = result;
      });
    }
  }
  run_tasks(tasks, threads);

  const std::vector<Verdict> verdicts = ablation_verdicts(cells, k);

  std::ostringstream csv;
  csv << "cell," << cell_summary_header(k) << '\n';
  std::ostringstream txt;
  txt << "ablation grid, " << n_seeds << " seed(s), per-cell medians\n\n";
  for (const AblationCell& cell : cells) {
    CellSeedResult med;
    std::vector<real> kl, icv, ver, frd, score, idacc;
    std::vector<real> cov;
    med.report.category_accuracy.resize(k);
    for (int c = 0; c < k; ++c) {
      std::vector<real> acc;
      for (const auto& seed : cell.per_seed) acc.push_back(seed.report.category_accuracy[c]);
      med.report.category_accuracy[c] = median(acc);
    }
    for (const auto& seed : cell.per_seed) {
      kl.push_back(seed.report.kl_mode_collapse);
      icv.push_back(seed.report.intra_class_variance);
      ver.push_back(seed.report.verification_accuracy);
      frd.push_back(seed.report.frechet_distance);
      score.push_back(seed.report.classifier_score);
      cov.push_back(seed.report.mode_coverage);
      idacc.push_back(seed.identity_accuracy);
    }
    med.report.kl_mode_collapse = median(kl);
    med.report.intra_class_variance = median(icv);
    med.report.verification_accuracy = median(ver);
    med.report.frechet_distance = median(frd);
    med.report.classifier_score = median(score);
    med.report.mode_coverage = static_cast<int>(median(cov));
    med.identity_accuracy = median(idacc);
    csv << cell.name() << ',' << cell_summary_row(med) << '\n';
    txt << cell.name() << '\n' << med.report.text_block() << '\n';
  }
  txt << "verdicts";
  for (const Verdict& v : verdicts) {
    if (v.low_confidence) {
      txt << " (low confidence: fewer than 3 seeds)";
      break;
    }
  }
  txt << '\n';
  for (const Verdict& v : verdicts) {
    txt << (v.pass ? "PASS " : "FAIL ") << v.name << "  " << v.detail << '\n';
  }

  write_text(options.out_dir + "/ablation.csv", csv.str());
  write_text(options.out_dir + "/ablation.txt", txt.str());
  write_run_manifest(options.out_dir, "ablate --seeds " + std::to_string(n_seeds),
                     loaded.snapshot, seeds,
                     {{"table_csv", "ablation.csv"}, {"table_txt", "ablation.txt"}});
}

void run_digits(const RunOptions& options, const std::string& idx_dir, int n_seeds) {
  if (n_seeds < 1) throw ConfigError("the digit run needs at least one seed");
  const LoadedConfig loaded = load(options);
  ensure_dir(options.out_dir);

  const IdxData train = read_idx(idx_dir + "/train-images-idx3-ubyte",
                                 idx_dir + "/train-labels-idx1-ubyte");
  const IdxData test =
      read_idx(idx_dir + "/t10k-images-idx3-ubyte", idx_dir + "/t10k-labels-idx1-ubyte");

  DigitsRunConfig run;
  run.train_per_class = static_cast<int>(loaded.kv.get_int("digits.train_per_class", 200));
  run.test_total = static_cast<int>(loaded.kv.get_int("digits.test_total", 1000));
  run.epochs = static_cast<int>(loaded.kv.get_int("digits.epochs", 8));
  run.embedding_dim = static_cast<int>(loaded.kv.get_int("digits.embedding_dim", 16));
  run.hidden = loaded.kv.get_dims("digits.hidden", {128, 64});

  std::vector<real> triplet_acc, at_acc;
  std::ostringstream csv;
  csv << "loss,seed,accuracy\n";
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = loaded.config.seed + s;
    const real plain = digits_accuracy(train, test, AtLossKind::triplet, run, seed);
    const real adversarial =
        digits_accuracy(train, test, AtLossKind::adversarial_triplet, run, seed);
    triplet_acc.push_back(plain);
    at_acc.push_back(adversarial);
    csv << "triplet," << seed << ',' << fmt_real(plain) << '\n';
    csv << "adversarial_triplet," << seed << ',' << fmt_real(adversarial) << '\n';
  }
  const real med_triplet = median(triplet_acc);
  const real med_at = median(at_acc);
  std::ostringstream txt;
  txt << "digit corpus, " << n_seeds << " seed(s)\n";
  txt << "median accuracy triplet              " << fmt_real(med_triplet) << '\n';
  txt << "median accuracy adversarial triplet  " << fmt_real(med_at) << '\n';
  txt << (med_at >= med_triplet ? "PASS" : "FAIL") << " adversarial triplet >= triplet\n";
  write_text(options.out_dir + "/digits.csv", csv.str());
  write_text(options.out_dir + "/digits.txt", txt.str());
  write_run_manifest(options.out_dir, "digits --seeds " + std::to_string(n_seeds),
                     loaded.snapshot, {loaded.config.seed},
                     {{"table_csv", "digits.csv"}, {"table_txt", "digits.txt"}});
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigParseError*>(&error)) return 2;
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const InvalidSpec*>(&error) ||
      dynamic_cast<const InvalidLabel*>(&error)) {
    return 3;
  }
  if (dynamic_cast<const IoError*>(&error)) return 4;
  if (dynamic_cast<const MissingCheckpoint*>(&error) ||
      dynamic_cast<const CheckpointFormatError*>(&error)) {
    return 5;
  }
  if (dynamic_cast<const InsufficientData*>(&error) || dynamic_cast<const BadMagic*>(&error) ||
      dynamic_cast<const TruncatedFile*>(&error) || dynamic_cast<const CountMismatch*>(&error) ||
      dynamic_cast<const DegenerateBatch*>(&error) || dynamic_cast<const EmptyInput*>(&error)) {
    return 6;
  }
  if (dynamic_cast<const DivergenceDetected*>(&error)) return 7;
  return 1;
}

}  // namespace modelab
