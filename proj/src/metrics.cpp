#include "modelab/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "modelab/errors.hpp"
#include "modelab/format.hpp"

namespace modelab {

namespace {

std::vector<real> class_distribution(const std::vector<int>& labels, int n_categories) {
  std::vector<real> p(n_categories, 0.0);
  for (int label : labels) {
    if (label < 0 || label >= n_categories) {
      throw EmptyCategory("label " + std::to_string(label) + " out of range");
    }
    p[label] += 1.0;
  }
  for (real& v : p) v /= static_cast<real>(labels.size());
  return p;
}

std::vector<int> classify_rows(const mat& samples, const OracleClassifier& oracle) {
  std::vector<int> classes;
  classes.reserve(samples.rows());
  for (Index i = 0; i < samples.rows(); ++i) {
    classes.push_back(oracle(samples.row(i).transpose()));
  }
  return classes;
}

real cosine(const vec& a, const vec& b) {
  const real na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw ZeroEmbedding("verification embeddings must be nonzero");
  }
  return a.dot(b) / (na * nb);
}

std::vector<real> pair_cosines(const mat& queries, const mat& galleries,
                               const std::vector<char>& same_identity) {
  if (queries.rows() != galleries.rows() ||
      queries.rows() != static_cast<Index>(same_identity.size())) {
    throw ShapeMismatch("verification needs equal counts of queries, galleries and flags");
  }
  if (queries.rows() == 0) throw EmptyInput("no verification pairs");
  std::vector<real> cosines;
  cosines.reserve(queries.rows());
  for (Index i = 0; i < queries.rows(); ++i) {
    cosines.push_back(cosine(queries.row(i).transpose(), galleries.row(i).transpose()));
  }
  return cosines;
}

real accuracy_at(const std::vector<real>& cosines, const std::vector<char>& flags,
                 real threshold) {
  Index hits = 0;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    const bool predicted_same = cosines[i] >= threshold;
    hits += predicted_same == static_cast<bool>(flags[i]);
  }
  return static_cast<real>(hits) / static_cast<real>(cosines.size());
}

using dmat = Eigen::MatrixXd;  // column-major workspace for the eigen solves

dmat covariance(const mat& samples) {
  const Index n = samples.rows();
  const Eigen::RowVectorXd mu = samples.colwise().mean();
  dmat centered = dmat(samples).rowwise() - mu;
  return centered.transpose() * centered / static_cast<real>(n - 1);
}

dmat psd_sqrt(const dmat& s) {
  Eigen::SelfAdjointEigenSolver<dmat> solver(s);
  Eigen::VectorXd lambda = solver.eigenvalues();
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -1e-9) {
      throw SingularCovariance("covariance eigenvalue " + std::to_string(lambda[i]) +
                               " below tolerance");
    }
    lambda[i] = lambda[i] > 0.0 ? std::sqrt(lambda[i]) : 0.0;
  }
  return solver.eigenvectors() * lambda.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

real kl_mode_collapse(const mat& synth, const std::vector<int>& target_labels,
                      const OracleClassifier& oracle, int n_categories) {
  if (synth.rows() == 0) throw EmptyInput("no synthesized samples");
  if (synth.rows() != static_cast<Index>(target_labels.size())) {
    throw ShapeMismatch("synthesized samples and target labels differ in count");
  }
  const auto p = class_distribution(classify_rows(synth, oracle), n_categories);
  const auto q = class_distribution(target_labels, n_categories);
  real kl = 0.0;
  for (int c = 0; c < n_categories; ++c) {
    if (p[c] == 0.0) continue;
    if (q[c] == 0.0) {
      throw ZeroExpectedMass("category " + std::to_string(c) +
                             " has synthesized mass but zero expected mass");
    }
    kl += p[c] * std::log(p[c] / q[c]);
  }
  return kl;
}

std::vector<real> category_accuracy(const mat& synth, const std::vector<int>& target_labels,
                                    const OracleClassifier& oracle, int n_categories) {
  if (synth.rows() == 0) throw EmptyInput("no synthesized samples");
  if (synth.rows() != static_cast<Index>(target_labels.size())) {
    throw ShapeMismatch("synthesized samples and target labels differ in count");
  }
  const auto classes = classify_rows(synth, oracle);
  std::vector<Index> total(n_categories, 0), correct(n_categories, 0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int target = target_labels[i];
    if (target < 0 || target >= n_categories) {
      throw EmptyCategory("target label " + std::to_string(target) + " out of range");
    }
    ++total[target];
    correct[target] += classes[i] == target;
  }
  std::vector<real> acc(n_categories);
  for (int c = 0; c < n_categories; ++c) {
    if (total[c] == 0) {
      throw EmptyCategory("no synthesized samples target category " + std::to_string(c));
    }
    acc[c] = static_cast<real>(correct[c]) / static_cast<real>(total[c]);
  }
  return acc;
}

real intra_class_variance(const mat& embeddings, const std::vector<int>& labels) {
  if (embeddings.rows() == 0) throw EmptyInput("no embeddings");
  if (embeddings.rows() != static_cast<Index>(labels.size())) {
    throw ShapeMismatch("embeddings and labels differ in count");
  }
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < embeddings.rows(); ++i) by_class[labels[i]].push_back(i);

  real total = 0.0;
  for (const auto& [label, rows] : by_class) {
    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(embeddings.cols());
    for (Index i : rows) centroid += embeddings.row(i);
    centroid /= static_cast<real>(rows.size());
    real sq = 0.0;
    for (Index i : rows) sq += (embeddings.row(i) - centroid).squaredNorm();
    total += sq / static_cast<real>(rows.size());
  }
  return total / static_cast<real>(by_class.size());
}

real verification_accuracy(const mat& queries, const mat& galleries,
                           const std::vector<char>& same_identity, real threshold) {
  return accuracy_at(pair_cosines(queries, galleries, same_identity), same_identity, threshold);
}

real calibrate_verification_threshold(const mat& queries, const mat& galleries,
                                      const std::vector<char>& same_identity) {
  const auto cosines = pair_cosines(queries, galleries, same_identity);
  std::vector<real> sorted = cosines;
  std::sort(sorted.begin(), sorted.end());
  std::vector<real> candidates{-1.0, 1.0 + 1e-12};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i] < sorted[i + 1]) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  real best_threshold = candidates.front();
  real best_accuracy = -1.0;
  for (real t : candidates) {
    const real acc = accuracy_at(cosines, same_identity, t);
    if (acc > best_accuracy) {
      best_accuracy = acc;
      best_threshold = t;
    }
  }
  return best_threshold;
}

real frechet_distance(const mat& a, const mat& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("sample sets differ in dimension");
  const Index d = a.cols();
  if (a.rows() < d + 1 || b.rows() < d + 1) {
    throw TooFewSamples("fitting a covariance needs more than d samples per set");
  }
  const Eigen::VectorXd mu_a = a.colwise().mean().transpose();
  const Eigen::VectorXd mu_b = b.colwise().mean().transpose();
  const dmat s_a = covariance(a);
  const dmat s_b = covariance(b);

  const dmat root_a = psd_sqrt(s_a);
  // Tr sqrt(S_a S_b) equals Tr sqrt(root_a S_b root_a), and the latter is a
  // symmetric PSD problem.
  Eigen::SelfAdjointEigenSolver<dmat> solver(root_a * s_b * root_a);
  real trace_sqrt = 0.0;
  for (Index i = 0; i < d; ++i) {
    const real lambda = solver.eigenvalues()[i];
    if (lambda < -1e-9) {
      throw SingularCovariance("cross-covariance eigenvalue " + std::to_string(lambda) +
                               " below tolerance");
    }
    trace_sqrt += lambda > 0.0 ? std::sqrt(lambda) : 0.0;
  }
  return (mu_a - mu_b).squaredNorm() + s_a.trace() + s_b.trace() - 2.0 * trace_sqrt;
}

real classifier_score(const mat& synth, const OraclePosterior& posterior, int n_categories) {
  if (synth.rows() == 0) throw EmptyInput("no synthesized samples");
  std::vector<vec> posteriors;
  posteriors.reserve(synth.rows());
  vec marginal = vec::Zero(n_categories);
  for (Index i = 0; i < synth.rows(); ++i) {
    vec p = posterior(synth.row(i).transpose());
    if (p.size() != n_categories) throw ShapeMismatch("posterior width mismatch");
    marginal += p;
    posteriors.push_back(std::move(p));
  }
  marginal /= static_cast<real>(synth.rows());

  real mean_kl = 0.0;
  for (const vec& p : posteriors) {
    for (int c = 0; c < n_categories; ++c) {
      if (p[c] > 0.0 && marginal[c] > 0.0) mean_kl += p[c] * std::log(p[c] / marginal[c]);
    }
  }
  mean_kl /= static_cast<real>(synth.rows());
  return std::exp(mean_kl);
}

int mode_coverage(const mat& synth, const OracleClassifier& oracle, int n_categories,
                  int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::vector<int> counts(n_categories, 0);
  for (int c : classify_rows(synth, oracle)) {
    if (c >= 0 && c < n_categories) ++counts[c];
  }
  int covered = 0;
  for (int c : counts) covered += c >= min_count;
  return covered;
}

real nearest_centroid_cosine_accuracy(const mat& train_embeddings,
                                      const std::vector<int>& train_labels,
                                      const mat& test_embeddings,
                                      const std::vector<int>& test_labels) {
  if (train_embeddings.rows() == 0 || test_embeddings.rows() == 0) {
    throw EmptyInput("nearest-centroid classifier needs train and test embeddings");
  }
  std::map<int, std::pair<vec, Index>> sums;
  for (Index i = 0; i < train_embeddings.rows(); ++i) {
    auto it = sums.find(train_labels[i]);
    if (it == sums.end()) {
      sums.emplace(train_labels[i],
                   std::make_pair(vec(train_embeddings.row(i).transpose()), Index{1}));
    } else {
      it->second.first += train_embeddings.row(i).transpose();
      ++it->second.second;
    }
  }
  std::vector<std::pair<int, vec>> centroids;
  for (const auto& [label, acc] : sums) {
    centroids.emplace_back(label, acc.first / static_cast<real>(acc.second));
  }

  Index hits = 0;
  for (Index i = 0; i < test_embeddings.rows(); ++i) {
    const vec x = test_embeddings.row(i).transpose();
    int best = centroids.front().first;
    real best_cos = -2.0;
    for (const auto& [label, centroid] : centroids) {
      const real c = cosine(x, centroid);
      if (c > best_cos) {
        best_cos = c;
        best = label;
      }
    }
    hits += best == test_labels[i];
  }
  return static_cast<real>(hits) / static_cast<real>(test_embeddings.rows());
}

std::string MetricsReport::csv_header(int n_categories) {
  std::ostringstream os;
  os << "kl_mode_collapse";
  for (int c = 0; c < n_categories; ++c) os << ",category_accuracy_" << c;
  os << ",intra_class_variance,verification_accuracy,frechet_distance,classifier_score,"
        "mode_coverage";
  return os.str();
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os << fmt_real(kl_mode_collapse);
  for (real acc : category_accuracy) os << ',' << fmt_real(acc);
  os << ',' << fmt_real(intra_class_variance) << ',' << fmt_real(verification_accuracy) << ','
     << fmt_real(frechet_distance) << ',' << fmt_real(classifier_score) << ',' << mode_coverage;
  return os.str();
}

std::string MetricsReport::text_block() const {
  std::ostringstream os;
  os << "kl mode collapse     " << fmt_real(kl_mode_collapse) << '\n';
  os << "category accuracy   ";
  for (real acc : category_accuracy) os << ' ' << fmt_real(acc);
  os << '\n';
  os << "intra-class variance " << fmt_real(intra_class_variance) << '\n';
  os << "verification         " << fmt_real(verification_accuracy) << '\n';
  os << "frechet distance     " << fmt_real(frechet_distance) << '\n';
  os << "classifier score     " << fmt_real(classifier_score) << '\n';
  os << "mode coverage        " << mode_coverage << '\n';
  return os.str();
}

}  // namespace modelab
