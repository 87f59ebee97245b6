#include "modelab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "modelab/errors.hpp"
#include "modelab/format.hpp"

namespace modelab {

void RadialIdentitySpec::validate() const {
  if (n_categories < 1 || n_identities < 1 || n_per_cell < 1 || dim < 2) {
    throw InvalidSpec("radial-identity spec needs n_categories, n_identities, n_per_cell >= 1 "
                      "and dim >= 2");
  }
  if (static_cast<int>(band_radii.size()) != n_categories) {
    throw InvalidSpec("band_radii must list one radius per category");
  }
  if (!(radial_noise >= 0.0) || !(angular_noise >= 0.0)) {
    throw InvalidSpec("noise levels must be non-negative");
  }
  real prev = 0.0;
  for (real r : band_radii) {
    if (!(r > 0.0)) throw InvalidSpec("band radii must be positive");
    if (!(r > prev)) throw InvalidSpec("band radii must be strictly increasing");
    if (prev > 0.0 && !(r - prev > 6.0 * radial_noise)) {
      throw InvalidSpec("adjacent bands closer than 6 radial-noise sigmas are not separable");
    }
    prev = r;
  }
}

std::vector<vec> identity_directions(const RadialIdentitySpec& spec) {
  std::vector<vec> dirs;
  dirs.reserve(spec.n_identities);
  if (spec.dim == 2) {
    for (int i = 0; i < spec.n_identities; ++i) {
      const real angle = 2.0 * M_PI * static_cast<real>(i) / spec.n_identities;
      vec u(2);
      u << std::cos(angle), std::sin(angle);
      dirs.push_back(u);
    }
    return dirs;
  }
  // Higher dimensions: fixed pseudo-random unit directions, a pure function
  // of the spec.
  Rng rng(0xD1DEC0DEull + static_cast<std::uint64_t>(spec.dim));
  for (int i = 0; i < spec.n_identities; ++i) {
    vec u = rng.normal_vec(spec.dim);
    dirs.push_back(u / u.norm());
  }
  return dirs;
}

Dataset gen_radial_identity(const RadialIdentitySpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto dirs = identity_directions(spec);
  Rng rng(seed);
  Dataset out;
  out.reserve(static_cast<std::size_t>(spec.n_categories) * spec.n_identities * spec.n_per_cell);
  for (int c = 0; c < spec.n_categories; ++c) {
    for (int i = 0; i < spec.n_identities; ++i) {
      for (int s = 0; s < spec.n_per_cell; ++s) {
        const real radius = rng.normal(spec.band_radii[c], spec.radial_noise);
        vec x = radius * dirs[i];
        if (spec.angular_noise > 0.0) x += rng.normal_vec(spec.dim, 0.0, spec.angular_noise);
        out.push_back(LabeledSample{std::move(x), c, i});
      }
    }
  }
  return out;
}

GaussianMixtureSpec GaussianMixtureSpec::square(real side, real sigma, int n_per_mode) {
  GaussianMixtureSpec spec;
  spec.n_modes = 4;
  spec.sigma = sigma;
  spec.n_per_mode = n_per_mode;
  const real h = side / 2.0;
  for (const auto [x, y] : {std::pair{-h, -h}, {h, -h}, {-h, h}, {h, h}}) {
    vec m(2);
    m << x, y;
    spec.means.push_back(m);
  }
  return spec;
}

void GaussianMixtureSpec::validate() const {
  if (n_modes < 1 || n_per_mode < 1) throw InvalidSpec("mixture needs modes and samples");
  if (static_cast<int>(means.size()) != n_modes) {
    throw InvalidSpec("mixture must list one mean per mode");
  }
  if (!(sigma >= 0.0)) throw InvalidSpec("sigma must be non-negative");
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i].size() != means[0].size()) throw InvalidSpec("mixture means differ in dimension");
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      if ((means[i] - means[j]).norm() == 0.0) throw InvalidSpec("mixture means must be distinct");
    }
  }
}

Dataset gen_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Dataset out;
  out.reserve(static_cast<std::size_t>(spec.n_modes) * spec.n_per_mode);
  for (int c = 0; c < spec.n_modes; ++c) {
    for (int s = 0; s < spec.n_per_mode; ++s) {
      vec x = spec.means[c];
      if (spec.sigma > 0.0) x += rng.normal_vec(x.size(), 0.0, spec.sigma);
      out.push_back(LabeledSample{std::move(x), c, 0});
    }
  }
  return out;
}

void BatchSpec::validate() const {
  if (classes_per_batch < 2 || samples_per_class < 2) {
    throw InvalidSpec("batches need at least 2 classes and 2 samples per class");
  }
}

PkBatchSampler::PkBatchSampler(const Dataset& dataset, BatchSpec spec, ClassBy key,
                               std::uint64_t seed)
    : dataset_(&dataset), spec_(spec), rng_(seed) {
  spec.validate();
  std::map<int, std::vector<Index>> by_class;
  for (Index row = 0; row < static_cast<Index>(dataset.size()); ++row) {
    const auto& sample = dataset[row];
    by_class[key == ClassBy::category ? sample.category : sample.identity].push_back(row);
  }
  for (auto& [label, rows] : by_class) {
    if (static_cast<int>(rows.size()) >= spec_.samples_per_class) {
      classes_.push_back(ClassState{label, std::move(rows), {}, 0});
    }
  }
  if (static_cast<int>(classes_.size()) < spec_.classes_per_batch) {
    throw InsufficientData("only " + std::to_string(classes_.size()) + " classes have >= " +
                           std::to_string(spec_.samples_per_class) + " samples; batches need " +
                           std::to_string(spec_.classes_per_batch));
  }
  Index usable = 0;
  for (const auto& c : classes_) usable += static_cast<Index>(c.rows.size());
  const int by_samples =
      static_cast<int>((usable + spec_.batch_size() - 1) / spec_.batch_size());
  const int by_classes = (class_count() + spec_.classes_per_batch - 1) / spec_.classes_per_batch;
  batches_per_epoch_ = std::max(by_samples, by_classes);
}

Batch PkBatchSampler::next() {
  // Least-used classes first; random order among equals.
  std::vector<int> order(classes_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng_.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [this](int a, int b) { return classes_[a].used < classes_[b].used; });

  Batch batch;
  const int dim = static_cast<int>((*dataset_)[0].features.size());
  batch.features.resize(spec_.batch_size(), dim);
  Index at = 0;
  for (int pick = 0; pick < spec_.classes_per_batch; ++pick) {
    ClassState& cls = classes_[order[pick]];
    ++cls.used;
    std::unordered_set<Index> taken;
    for (int s = 0; s < spec_.samples_per_class; ++s) {
      if (cls.queue.empty()) {
        cls.queue = cls.rows;
        rng_.shuffle(cls.queue);
      }
      Index row = cls.queue.back();
      cls.queue.pop_back();
      // A refill may resurface a row already drawn for this batch.
      while (taken.count(row)) {
        if (cls.queue.empty()) {
          cls.queue = cls.rows;
          rng_.shuffle(cls.queue);
        }
        row = cls.queue.back();
        cls.queue.pop_back();
      }
      taken.insert(row);
      const auto& sample = (*dataset_)[row];
      batch.features.row(at) = sample.features.transpose();
      batch.category.push_back(sample.category);
      batch.identity.push_back(sample.identity);
      batch.source_rows.push_back(row);
      ++at;
    }
  }
  return batch;
}

SplitResult split_train_test(const Dataset& dataset, real train_fraction, std::uint64_t seed,
                             bool identity_disjoint) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidSpec("train fraction must lie in (0,1)");
  }
  Rng rng(seed);
  SplitResult split;

  if (identity_disjoint) {
    std::map<int, char> seen;
    for (const auto& s : dataset) seen[s.identity] = 1;
    std::vector<int> ids;
    for (const auto& [id, _] : seen) ids.push_back(id);
    rng.shuffle(ids);
    const std::size_t n_train = static_cast<std::size_t>(train_fraction * ids.size());
    std::unordered_set<int> train_ids(ids.begin(), ids.begin() + n_train);
    for (const auto& s : dataset) {
      (train_ids.count(s.identity) ? split.train : split.test).push_back(s);
    }
    return split;
  }

  std::map<std::pair<int, int>, std::vector<Index>> cells;
  for (Index row = 0; row < static_cast<Index>(dataset.size()); ++row) {
    cells[{dataset[row].identity, dataset[row].category}].push_back(row);
  }
  for (auto& [cell, rows] : cells) {
    rng.shuffle(rows);
    const std::size_t n_train = static_cast<std::size_t>(train_fraction * rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_train ? split.train : split.test).push_back(dataset[rows[i]]);
    }
  }
  return split;
}

void write_dataset_csv(const std::string& path, const Dataset& dataset) {
  if (dataset.empty()) throw InvalidSpec("refusing to write an empty dataset");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const Index dim = dataset[0].features.size();
  for (Index d = 0; d < dim; ++d) os << 'x' << d << ',';
  os << "category,identity\n";
  for (const auto& sample : dataset) {
    for (Index d = 0; d < dim; ++d) os << fmt_real(sample.features[d]) << ',';
    os << sample.category << ',' << sample.identity << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(path + " is empty");
  Index dim = 0;
  {
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) {
      if (!field.empty() && field[0] == 'x') ++dim;
    }
  }
  if (dim == 0) throw IoError(path + " has no feature columns");
  Dataset out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    LabeledSample sample;
    sample.features.resize(dim);
    for (Index d = 0; d < dim; ++d) {
      if (!std::getline(row, field, ',')) throw IoError(path + ": short row");
      sample.features[d] = parse_real(field);
    }
    if (!std::getline(row, field, ',')) throw IoError(path + ": missing category");
    sample.category = static_cast<int>(parse_int(field));
    if (!std::getline(row, field, ',')) throw IoError(path + ": missing identity");
    sample.identity = static_cast<int>(parse_int(field));
    out.push_back(std::move(sample));
  }
  return out;
}

mat features_matrix(const Dataset& dataset) {
  if (dataset.empty()) throw EmptyInput("dataset has no samples");
  mat out(dataset.size(), dataset[0].features.size());
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = dataset[i].features.transpose();
  return out;
}

std::vector<int> category_labels(const Dataset& dataset) {
  std::vector<int> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(s.category);
  return out;
}

std::vector<int> identity_labels(const Dataset& dataset) {
  std::vector<int> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(s.identity);
  return out;
}

RadialOracle RadialOracle::from_spec(const RadialIdentitySpec& spec) {
  return RadialOracle{spec.band_radii, identity_directions(spec), spec.radial_noise};
}

int RadialOracle::category(const vec& x) const {
  const real r = x.norm();
  int best = 0;
  real best_gap = std::abs(r - band_radii[0]);
  for (std::size_t c = 1; c < band_radii.size(); ++c) {
    const real gap = std::abs(r - band_radii[c]);
    if (gap < best_gap) {  // strict: ties stay with the lower band
      best_gap = gap;
      best = static_cast<int>(c);
    }
  }
  return best;
}

int RadialOracle::identity(const vec& x) const {
  const real norm = x.norm();
  if (norm == 0.0) return 0;
  int best = 0;
  real best_cos = -2.0;
  for (std::size_t i = 0; i < identity_dirs.size(); ++i) {
    const real c = x.dot(identity_dirs[i]) / norm;
    if (c > best_cos) {
      best_cos = c;
      best = static_cast<int>(i);
    }
  }
  return best;
}

vec RadialOracle::posterior(const vec& x) const {
  const std::size_t k = band_radii.size();
  if (!(radial_noise > 0.0)) {
    vec p = vec::Zero(k);
    p[category(x)] = 1.0;
    return p;
  }
  const real r = x.norm();
  vec logits(k);
  for (std::size_t c = 0; c < k; ++c) {
    const real gap = r - band_radii[c];
    logits[c] = -gap * gap / (2.0 * radial_noise * radial_noise);
  }
  const vec shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

MixtureOracle MixtureOracle::from_spec(const GaussianMixtureSpec& spec) {
  return MixtureOracle{spec.means, spec.sigma};
}

int MixtureOracle::category(const vec& x) const {
  int best = 0;
  real best_sq = (x - means[0]).squaredNorm();
  for (std::size_t c = 1; c < means.size(); ++c) {
    const real sq = (x - means[c]).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = static_cast<int>(c);
    }
  }
  return best;
}

vec MixtureOracle::posterior(const vec& x) const {
  const std::size_t k = means.size();
  if (!(sigma > 0.0)) {
    vec p = vec::Zero(k);
    p[category(x)] = 1.0;
    return p;
  }
  vec logits(k);
  for (std::size_t c = 0; c < k; ++c) {
    logits[c] = -(x - means[c]).squaredNorm() / (2.0 * sigma * sigma);
  }
  const vec shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

}  // namespace modelab
