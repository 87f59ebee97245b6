#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "modelab/config.hpp"
#include "modelab/experiment.hpp"
#include "modelab/manifest.hpp"
#include "modelab/runner.hpp"
#include "modelab/format.hpp"
#include "modelab/rng.hpp"
#include "modelab/svg.hpp"

using namespace modelab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Minimal XML well-formedness check: every opened tag closes in order.
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t at = 0;
  while ((at = text.find('<', at)) != std::string::npos) {
    const std::size_t end = text.find('>', at);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(at + 1, end - at - 1);
    at = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    const bool closing = tag[0] == '/';
    const bool self_closing = tag.back() == '/';
    if (closing) tag = tag.substr(1);
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path.string() : (path / sub).string();
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

const char* kTinyConfig =
    "dataset = radial\n"
    "seed = 3\n"
    "radial.n_per_cell = 10\n"
    "extractor.epochs = 3\n"
    "gan.epochs = 3\n"
    "gan.lr_decay_after = 1\n"
    "models.extractor_hidden = 16,16\n"
    "models.generator_hidden = 16,16\n"
    "models.discriminator_hidden = 8,8\n";

}  // namespace

TEST_CASE("key-value config parsing") {
  const KvConfig kv = KvConfig::parse_text(
      "# comment line\n"
      "dataset = radial   # trailing comment\n"
      "gan.use_cdp = false\n"
      "loss.margin = 0.25\n"
      "radial.band_radii = 1, 2, 3.5, 4\n"
      "\n",
      "test");
  CHECK(kv.get_string("dataset", "?") == "radial");
  CHECK(kv.get_bool("gan.use_cdp", true) == false);
  CHECK(kv.get_real("loss.margin", 0) == 0.25);
  CHECK(kv.get_reals("radial.band_radii", {}) == std::vector<real>{1.0, 2.0, 3.5, 4.0});
  CHECK(kv.get_int("missing", 7) == 7);

  SUBCASE("errors carry line numbers") {
    try {
      KvConfig::parse_text("a = 1\nnot a pair\n", "bad.txt");
      FAIL("expected ConfigParseError");
    } catch (const ConfigParseError& e) {
      CHECK(std::string(e.what()).find("bad.txt:2") != std::string::npos);
    }
    try {
      KvConfig::parse_text("x = 1\nx = 2\n", "dup.txt");
      FAIL("expected ConfigParseError");
    } catch (const ConfigParseError& e) {
      CHECK(std::string(e.what()).find("dup.txt:2") != std::string::npos);
    }
    try {
      const KvConfig bad = KvConfig::parse_text("loss.margin = wide\n", "type.txt");
      bad.get_real("loss.margin", 0);
      FAIL("expected ConfigParseError");
    } catch (const ConfigParseError& e) {
      CHECK(std::string(e.what()).find("type.txt:1") != std::string::npos);
    }
  }
}

TEST_CASE("experiment config round trip through text") {
  const KvConfig kv = KvConfig::parse_text(
      "dataset = mixture\nseed = 42\ngan.use_cdp = false\nloss.at = triplet\n"
      "gan.epochs = 12\n",
      "test");
  const ExperimentConfig config = experiment_config_from(kv);
  CHECK(config.dataset == DatasetKind::gaussian_mixture);
  CHECK(config.seed == 42);
  CHECK(config.use_cdp == false);
  CHECK(config.at_loss == AtLossKind::triplet);
  CHECK(config.gan_epochs == 12);
  CHECK(config.gan_lr.decay_after == 6);  // defaults to half when unset

  const std::string text = experiment_config_text(config);
  const ExperimentConfig again = experiment_config_from(KvConfig::parse_text(text, "snapshot"));
  CHECK(experiment_config_text(again) == text);

  CHECK_THROWS_AS(experiment_config_from(KvConfig::parse_text("dataset = faces\n", "t")),
                  ConfigError);
}

TEST_CASE("git-style content hash") {
  // Known vectors: sha1("abc") and the git blob hash of "hello\n".
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("manifest round trip") {
  TempDir dir("modelab_test_manifest");
  const RunManifest written = write_run_manifest(dir.str(), "gen-data", "seed = 1\n", {1, 2, 3},
                                                 {{"dataset", "dataset.csv"}});
  CHECK(RunManifest::exists(dir.str()));
  const RunManifest loaded = RunManifest::read(dir.str());
  CHECK(loaded.command == "gen-data");
  CHECK(loaded.config_hash == written.config_hash);
  CHECK(loaded.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(loaded.outputs.at("dataset") == "dataset.csv");
  CHECK(loaded.config_hash == git_blob_hash(slurp(dir.str("config.txt"))));
}

TEST_CASE("scatter plot renders well-formed svg with the fixed viewBox") {
  ScatterPlot plot("demo");
  mat pts(3, 2);
  pts << 0, 0, 1, 1, -1, 0.5;
  plot.add_series("a", pts, 0);
  plot.add_series("b <odd&name>", pts, 1, ScatterPlot::Marker::cross);
  const std::string svg = plot.render();
  CHECK(svg.find("viewBox=\"0 0 800 800\"") != std::string::npos);
  CHECK(svg.find("&lt;odd&amp;name&gt;") != std::string::npos);
  CHECK(well_formed_xml(svg));
  CHECK(plot.render() == svg);  // stable output
}

TEST_CASE("gen-data writes the expected row count deterministically") {
  TempDir dir("modelab_test_gendata");
  write_file(dir.str("config.txt"), "dataset = radial\nseed = 9\n");
  RunOptions options{dir.str("config.txt"), dir.str("out"), std::nullopt};
  run_gen_data(options);

  const std::string csv = slurp(dir.str("out/dataset.csv"));
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == 1 + 4 * 8 * 50);  // header + K*I*n_per_cell

  RunOptions again{dir.str("config.txt"), dir.str("out2"), std::nullopt};
  run_gen_data(again);
  CHECK(slurp(dir.str("out2/dataset.csv")) == csv);

  SUBCASE("seed override changes the bytes") {
    RunOptions seeded{dir.str("config.txt"), dir.str("out3"), 77};
    run_gen_data(seeded);
    CHECK(slurp(dir.str("out3/dataset.csv")) != csv);
  }
}

TEST_CASE("gan stage requires an extractor checkpoint") {
  TempDir dir("modelab_test_missing");
  write_file(dir.str("config.txt"), kTinyConfig);
  RunOptions options{dir.str("config.txt"), dir.str("out"), std::nullopt};
  CHECK_THROWS_AS(run_train(options, "gan"), MissingCheckpoint);
  CHECK_THROWS_AS(run_train(options, "warmup"), ConfigError);
}

TEST_CASE("train and eval flows produce the documented artifacts") {
  TempDir dir("modelab_test_flow");
  write_file(dir.str("config.txt"), kTinyConfig);
  RunOptions options{dir.str("config.txt"), dir.str("ext"), std::nullopt};
  run_train(options, "extractor");
  CHECK(fs::exists(dir.str("ext/extractor.mlab")));
  CHECK(fs::exists(dir.str("ext/extractor_trace.csv")));
  CHECK(RunManifest::exists(dir.str("ext")));

  write_file(dir.str("config.txt"), std::string(kTinyConfig) +
                                        "gan.extractor_checkpoint = " + dir.str("ext") +
                                        "/extractor.mlab\n");
  options.out_dir = dir.str("gan");
  run_train(options, "gan");
  for (const char* name : {"generator.mlab", "image_discriminator.mlab", "pool_0.mlab",
                           "pool_3.mlab", "gan_trace.csv", "extractor.mlab"}) {
    CHECK(fs::exists(dir.str("gan") + "/" + name));
  }

  options.out_dir = dir.str("eval");
  run_eval(options, dir.str("gan"));
  const std::string metrics = slurp(dir.str("eval/metrics.csv"));
  CHECK(metrics.rfind("kl_mode_collapse,category_accuracy_0", 0) == 0);
  CHECK(metrics.find("identity_accuracy") != std::string::npos);
  CHECK(well_formed_xml(slurp(dir.str("eval/samples.svg"))));
  CHECK(well_formed_xml(slurp(dir.str("eval/embeddings.svg"))));

  SUBCASE("repeat run is byte-identical on the metrics csv") {
    options.out_dir = dir.str("eval2");
    run_eval(options, dir.str("gan"));
    CHECK(slurp(dir.str("eval2/metrics.csv")) == metrics);
  }
  SUBCASE("corrupt checkpoint is rejected") {
    write_file(dir.str("gan/generator.mlab"), "not a checkpoint");
    options.out_dir = dir.str("eval3");
    CHECK_THROWS_AS(run_eval(options, dir.str("gan")), CheckpointFormatError);
  }
}

TEST_CASE("eval on an origin-stuck generator fixture") {
  // Zeroing the generator's final layer pins every output to the origin,
  // which the nearest-band oracle files under the lowest band: the accuracy
  // row must read 1,0,0,0.
  TempDir dir("modelab_test_fixture");
  write_file(dir.str("config.txt"), kTinyConfig);
  const KvConfig kv = KvConfig::parse_file(dir.str("config.txt"));
  const ExperimentConfig config = experiment_config_from(kv);

  fs::create_directories(dir.str("ckpt"));
  FeatureExtractor extractor = make_extractor(config);
  save_checkpoint(dir.str("ckpt/extractor.mlab"), extractor.net);
  GanModels gan = make_gan_models(config);
  gan.generator.net.weights.back().value().setZero();
  gan.generator.net.biases.back().value().setZero();
  save_checkpoint(dir.str("ckpt/generator.mlab"), gan.generator.net);
  save_checkpoint(dir.str("ckpt/image_discriminator.mlab"), gan.image_discriminator);
  for (int i = 0; i < gan.pool.size(); ++i) {
    save_checkpoint(dir.str("ckpt/pool_" + std::to_string(i) + ".mlab"), gan.pool.members[i]);
  }

  RunOptions options{dir.str("config.txt"), dir.str("eval"), std::nullopt};
  run_eval(options, dir.str("ckpt"));
  const std::string metrics = slurp(dir.str("eval/metrics.csv"));
  std::stringstream rows(metrics);
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  std::vector<std::string> fields;
  std::stringstream ss(row);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  CHECK(fields[1] == "1");  // category 0 absorbs everything
  CHECK(fields[2] == "0");
  CHECK(fields[3] == "0");
  CHECK(fields[4] == "0");
}

TEST_CASE("ablate with one seed emits a low-confidence table and resumes") {
  TempDir dir("modelab_test_ablate");
  write_file(dir.str("config.txt"), kTinyConfig);
  RunOptions options{dir.str("config.txt"), dir.str("out"), std::nullopt};
  run_ablate(options, 1, 2);

  const std::string table = slurp(dir.str("out/ablation.txt"));
  CHECK(table.find("low confidence") != std::string::npos);
  for (const char* cell : {"cdp-at", "cdp-triplet", "nocdp-at", "nocdp-triplet"}) {
    CHECK(table.find(cell) != std::string::npos);
    CHECK(fs::exists(dir.str("out") + "/cell_" + cell + "/seed_3/summary.csv"));
  }
  const std::string csv = slurp(dir.str("out/ablation.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + four cells

  // Resume path: per-cell summaries are reused, so a re-run is near-instant
  // and produces the same table.
  const auto before = std::chrono::steady_clock::now();
  run_ablate(options, 1, 2);
  const real resumed_seconds =
      std::chrono::duration<real>(std::chrono::steady_clock::now() - before).count();
  CHECK(resumed_seconds < 1.0);
  CHECK(slurp(dir.str("out/ablation.csv")) == csv);
}

namespace {

// Synthetic 8x8 "digit" corpus in IDX format: one blocky template per class
// plus pixel noise, written byte-by-byte.
void write_synthetic_idx(const std::string& dir, int per_class_train, int per_class_test) {
  auto write_be = [](std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  Rng rng(12);
  auto emit = [&](const std::string& img_path, const std::string& lbl_path, int per_class) {
    std::ofstream imgs(img_path, std::ios::binary), lbls(lbl_path, std::ios::binary);
    write_be(imgs, 0x00000803);
    write_be(imgs, 10 * per_class);
    write_be(imgs, 8);
    write_be(imgs, 8);
    write_be(lbls, 0x00000801);
    write_be(lbls, 10 * per_class);
    for (int digit = 0; digit < 10; ++digit) {
      for (int s = 0; s < per_class; ++s) {
        for (int p = 0; p < 64; ++p) {
          const bool on = (p / 8 + digit) % 4 == 0 || p % 8 == digit % 8;
          const int noise = static_cast<int>(rng.below(60));
          const unsigned char pixel =
              static_cast<unsigned char>(on ? 195 + noise : noise);
          imgs.write(reinterpret_cast<const char*>(&pixel), 1);
        }
        const char label = static_cast<char>(digit);
        lbls.write(&label, 1);
      }
    }
  };
  emit(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte", per_class_train);
  emit(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", per_class_test);
}

}  // namespace

TEST_CASE("digits command on a synthetic idx corpus") {
  TempDir dir("modelab_test_digits");
  write_synthetic_idx(dir.str(), 12, 4);
  write_file(dir.str("config.txt"),
             "seed = 2\ndigits.train_per_class = 12\ndigits.test_total = 40\n"
             "digits.epochs = 6\ndigits.hidden = 32,16\ndigits.embedding_dim = 8\n");
  RunOptions options{dir.str("config.txt"), dir.str("out"), std::nullopt};
  run_digits(options, dir.str(), 2);

  const std::string csv = slurp(dir.str("out/digits.csv"));
  CHECK(csv.rfind("loss,seed,accuracy", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 2 seeds x 2 losses
  const std::string txt = slurp(dir.str("out/digits.txt"));
  CHECK(txt.find("median accuracy") != std::string::npos);

  // The synthetic classes are linearly separable; any trained embedding
  // should classify far above the 0.1 chance level.
  std::stringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    const real acc = parse_real(line.substr(line.rfind(',') + 1));
    CHECK(acc > 0.5);
  }
}

TEST_CASE("exit codes are stable per error class") {
  CHECK(exit_code_for(ConfigParseError("x")) == 2);
  CHECK(exit_code_for(ConfigError("x")) == 3);
  CHECK(exit_code_for(InvalidSpec("x")) == 3);
  CHECK(exit_code_for(IoError("x")) == 4);
  CHECK(exit_code_for(MissingCheckpoint("x")) == 5);
  CHECK(exit_code_for(CheckpointFormatError("x")) == 5);
  CHECK(exit_code_for(BadMagic("x")) == 6);
  CHECK(exit_code_for(DivergenceDetected("x")) == 7);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}
