#include "modelab/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "modelab/format.hpp"

namespace modelab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text, const std::string& origin) {
  KvConfig kv;
  kv.origin_ = origin;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigParseError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (kv.values_.count(key)) {
      throw ConfigParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                             "' (first set on line " + std::to_string(kv.lines_[key]) + ")");
    }
    kv.values_[key] = value;
    kv.lines_[key] = line_no;
  }
  return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_text(buffer.str(), path);
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

void KvConfig::fail(const std::string& key, const std::string& why) const {
  const auto line = lines_.find(key);
  const std::string at =
      line == lines_.end() ? origin_ : origin_ + ":" + std::to_string(line->second);
  throw ConfigParseError(at + ": key '" + key + "' " + why);
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KvConfig::require_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigParseError(origin_ + ": required key '" + key + "' is missing");
  }
  return it->second;
}

real KvConfig::get_real(const std::string& key, real fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_real(it->second);
  } catch (const Error&) {
    fail(key, "is not a real number: '" + it->second + "'");
  }
}

long KvConfig::get_int(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_int(it->second);
  } catch (const Error&) {
    fail(key, "is not an integer: '" + it->second + "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(key, "must be true or false, got '" + it->second + "'");
}

std::vector<real> KvConfig::get_reals(const std::string& key,
                                      const std::vector<real>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<real> out;
  for (const std::string& item : split_list(it->second)) {
    try {
      out.push_back(parse_real(item));
    } catch (const Error&) {
      fail(key, "has a non-numeric list item '" + item + "'");
    }
  }
  return out;
}

std::vector<Index> KvConfig::get_dims(const std::string& key,
                                      const std::vector<Index>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<Index> out;
  for (const std::string& item : split_list(it->second)) {
    try {
      out.push_back(static_cast<Index>(parse_int(item)));
    } catch (const Error&) {
      fail(key, "has a non-integer list item '" + item + "'");
    }
  }
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string KvConfig::canonical_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
  return os.str();
}

ExperimentConfig experiment_config_from(const KvConfig& kv) {
  ExperimentConfig config;

  const std::string dataset = kv.get_string("dataset", "radial");
  if (dataset == "radial") config.dataset = DatasetKind::radial_identity;
  else if (dataset == "mixture") config.dataset = DatasetKind::gaussian_mixture;
  else throw ConfigError("dataset must be radial or mixture, got '" + dataset + "'");

  config.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));

  config.radial.n_categories = static_cast<int>(kv.get_int("radial.categories", 4));
  config.radial.n_identities = static_cast<int>(kv.get_int("radial.identities", 8));
  config.radial.band_radii = kv.get_reals("radial.band_radii", {1.0, 2.0, 3.0, 4.0});
  config.radial.radial_noise = kv.get_real("radial.radial_noise", 0.1);
  config.radial.angular_noise = kv.get_real("radial.angular_noise", 0.05);
  config.radial.n_per_cell = static_cast<int>(kv.get_int("radial.n_per_cell", 50));
  config.radial.dim = static_cast<int>(kv.get_int("radial.dim", 2));

  config.mixture = GaussianMixtureSpec::square(kv.get_real("mixture.side", 4.0),
                                               kv.get_real("mixture.sigma", 0.2),
                                               static_cast<int>(kv.get_int("mixture.n_per_mode", 400)));

  config.embedding_dim = static_cast<int>(kv.get_int("models.embedding_dim", 2));
  config.extractor_hidden = kv.get_dims("models.extractor_hidden", {64, 64});
  config.generator_hidden = kv.get_dims("models.generator_hidden", {64, 64, 64});
  config.discriminator_hidden = kv.get_dims("models.discriminator_hidden", {32, 32});
  const std::string init = kv.get_string("models.init", "uniform");
  if (init == "normal") config.init_scheme = InitScheme::normal_002;
  else if (init == "uniform") config.init_scheme = InitScheme::uniform_fan_in;
  else throw ConfigError("models.init must be normal or uniform, got '" + init + "'");

  config.extractor_epochs = static_cast<int>(kv.get_int("extractor.epochs", 50));
  config.extractor_lr.initial = kv.get_real("extractor.lr", 2e-3);
  config.extractor_lr.linear_decay = kv.get_string("extractor.lr_schedule", "constant") != "constant";
  config.extractor_lr.decay_after = static_cast<int>(kv.get_int("extractor.lr_decay_after", 25));
  config.extractor_lr.total_epochs = config.extractor_epochs;

  config.gan_epochs = static_cast<int>(kv.get_int("gan.epochs", 800));
  config.gan_lr.initial = kv.get_real("gan.lr", 2e-4);
  config.gan_lr.linear_decay = kv.get_string("gan.lr_schedule", "linear-decay-after") != "constant";
  // Decay kicks in halfway by default, preserving the 25-of-50 shape.
  config.gan_lr.decay_after =
      static_cast<int>(kv.get_int("gan.lr_decay_after", config.gan_epochs / 2));
  config.gan_lr.total_epochs = config.gan_epochs;

  config.batch.classes_per_batch = static_cast<int>(kv.get_int("batch.classes", 4));
  config.batch.samples_per_class = static_cast<int>(kv.get_int("batch.samples", 8));

  config.margin = TripletMargin(kv.get_real("loss.margin", 0.3));
  config.weights.lambda_adv_feature = kv.get_real("loss.lambda_adv_feature", 1.0);
  config.weights.lambda_at = kv.get_real("loss.lambda_at", 0.001);

  config.use_cdp = kv.get_bool("gan.use_cdp", true);
  const std::string at = kv.get_string("loss.at", "adversarial_triplet");
  if (at == "adversarial_triplet") config.at_loss = AtLossKind::adversarial_triplet;
  else if (at == "triplet") config.at_loss = AtLossKind::triplet;
  else throw ConfigError("loss.at must be adversarial_triplet or triplet, got '" + at + "'");
  const std::string g_obj = kv.get_string("gan.g_objective", "nonsaturating");
  if (g_obj == "nonsaturating") config.g_objective = GeneratorObjective::nonsaturating;
  else if (g_obj == "saturating") config.g_objective = GeneratorObjective::saturating;
  else throw ConfigError("gan.g_objective must be nonsaturating or saturating");
  config.at_hinge_second_term = kv.get_bool("loss.at_hinge_second_term", false);
  config.at_sum_negatives = kv.get_bool("loss.at_sum_negatives", false);

  config.adam.beta1 = kv.get_real("adam.beta1", 0.5);
  config.adam.beta2 = kv.get_real("adam.beta2", 0.999);
  config.adam.epsilon = kv.get_real("adam.epsilon", 1e-8);

  config.train_fraction = kv.get_real("split.train_fraction", 0.8);
  config.identity_disjoint = kv.get_bool("split.identity_disjoint", false);
  config.divergence_threshold = kv.get_real("train.divergence_threshold", 1e6);

  config.validate();
  return config;
}

std::string experiment_config_text(const ExperimentConfig& config) {
  KvConfig kv;
  kv.set("dataset", config.dataset == DatasetKind::radial_identity ? "radial" : "mixture");
  kv.set("seed", std::to_string(config.seed));

  kv.set("radial.categories", std::to_string(config.radial.n_categories));
  kv.set("radial.identities", std::to_string(config.radial.n_identities));
  {
    std::string radii;
    for (std::size_t i = 0; i < config.radial.band_radii.size(); ++i) {
      radii += (i ? "," : "") + fmt_real(config.radial.band_radii[i]);
    }
    kv.set("radial.band_radii", radii);
  }
  kv.set("radial.radial_noise", fmt_real(config.radial.radial_noise));
  kv.set("radial.angular_noise", fmt_real(config.radial.angular_noise));
  kv.set("radial.n_per_cell", std::to_string(config.radial.n_per_cell));
  kv.set("radial.dim", std::to_string(config.radial.dim));

  kv.set("mixture.side", fmt_real(config.mixture.means.empty()
                                      ? 4.0
                                      : 2.0 * std::abs(config.mixture.means[0][0])));
  kv.set("mixture.sigma", fmt_real(config.mixture.sigma));
  kv.set("mixture.n_per_mode", std::to_string(config.mixture.n_per_mode));

  auto dims_text = [](const std::vector<Index>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      out += (i ? "," : "") + std::to_string(dims[i]);
    }
    return out;
  };
  kv.set("models.embedding_dim", std::to_string(config.embedding_dim));
  kv.set("models.extractor_hidden", dims_text(config.extractor_hidden));
  kv.set("models.generator_hidden", dims_text(config.generator_hidden));
  kv.set("models.discriminator_hidden", dims_text(config.discriminator_hidden));
  kv.set("models.init", config.init_scheme == InitScheme::normal_002 ? "normal" : "uniform");

  kv.set("extractor.epochs", std::to_string(config.extractor_epochs));
  kv.set("extractor.lr", fmt_real(config.extractor_lr.initial));
  kv.set("extractor.lr_schedule",
         config.extractor_lr.linear_decay ? "linear-decay-after" : "constant");
  kv.set("extractor.lr_decay_after", std::to_string(config.extractor_lr.decay_after));

  kv.set("gan.epochs", std::to_string(config.gan_epochs));
  kv.set("gan.lr", fmt_real(config.gan_lr.initial));
  kv.set("gan.lr_schedule", config.gan_lr.linear_decay ? "linear-decay-after" : "constant");
  kv.set("gan.lr_decay_after", std::to_string(config.gan_lr.decay_after));
  kv.set("gan.use_cdp", config.use_cdp ? "true" : "false");
  kv.set("gan.g_objective", config.g_objective == GeneratorObjective::nonsaturating
                                ? "nonsaturating"
                                : "saturating");

  kv.set("batch.classes", std::to_string(config.batch.classes_per_batch));
  kv.set("batch.samples", std::to_string(config.batch.samples_per_class));

  kv.set("loss.margin", fmt_real(config.margin.m));
  kv.set("loss.lambda_adv_feature", fmt_real(config.weights.lambda_adv_feature));
  kv.set("loss.lambda_at", fmt_real(config.weights.lambda_at));
  kv.set("loss.at",
         config.at_loss == AtLossKind::adversarial_triplet ? "adversarial_triplet" : "triplet");
  kv.set("loss.at_hinge_second_term", config.at_hinge_second_term ? "true" : "false");
  kv.set("loss.at_sum_negatives", config.at_sum_negatives ? "true" : "false");

  kv.set("adam.beta1", fmt_real(config.adam.beta1));
  kv.set("adam.beta2", fmt_real(config.adam.beta2));
  kv.set("adam.epsilon", fmt_real(config.adam.epsilon));

  kv.set("split.train_fraction", fmt_real(config.train_fraction));
  kv.set("split.identity_disjoint", config.identity_disjoint ? "true" : "false");
  kv.set("train.divergence_threshold", fmt_real(config.divergence_threshold));

  return kv.canonical_text();
}

}  // namespace modelab
