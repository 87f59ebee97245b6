#ifndef MODELAB_METRICS_HPP
#define MODELAB_METRICS_HPP

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "modelab/types.hpp"

namespace modelab {

using OracleClassifier = std::function<int(const vec&)>;
using OraclePosterior = std::function<vec(const vec&)>;

/// KL(p || q) where p is the oracle-classified category distribution of the
/// synthesized samples and q is the empirical target-label distribution.
/// 0*log 0 = 0; ZeroExpectedMass when some q_i = 0 while p_i > 0.
real kl_mode_collapse(const mat& synth, const std::vector<int>& target_labels,
                      const OracleClassifier& oracle, int n_categories);

/// Per target category: fraction of synthesized samples the oracle places in
/// that category. EmptyCategory when a category received no samples.
std::vector<real> category_accuracy(const mat& synth, const std::vector<int>& target_labels,
                                    const OracleClassifier& oracle, int n_categories);

/// Mean over present classes of the mean squared distance to the class centroid.
real intra_class_variance(const mat& embeddings, const std::vector<int>& labels);

/// Cosine-similarity verification: predict same-identity when
/// cos(query, gallery) >= threshold; returns accuracy against the flags.
real verification_accuracy(const mat& queries, const mat& galleries,
                           const std::vector<char>& same_identity, real threshold);

/// Threshold maximizing accuracy on a calibration set of pairs; scanned over
/// midpoints between consecutive observed cosines.
real calibrate_verification_threshold(const mat& queries, const mat& galleries,
                                      const std::vector<char>& same_identity);

/// |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}) with the symmetric PSD square
/// root; covariance eigenvalues in [-1e-9, 0) clamp to 0, below that is
/// SingularCovariance. TooFewSamples unless each set has > d samples.
real frechet_distance(const mat& a, const mat& b);

/// exp(mean_x KL(posterior(x) || marginal posterior)); lies in [1, K].
real classifier_score(const mat& synth, const OraclePosterior& posterior, int n_categories);

/// Number of categories that received at least min_count samples.
int mode_coverage(const mat& synth, const OracleClassifier& oracle, int n_categories,
                  int min_count);

/// Classify by highest cosine against per-class train centroids.
real nearest_centroid_cosine_accuracy(const mat& train_embeddings,
                                      const std::vector<int>& train_labels,
                                      const mat& test_embeddings,
                                      const std::vector<int>& test_labels);

struct MetricsReport {
  real kl_mode_collapse = 0.0;
  std::vector<real> category_accuracy;
  real intra_class_variance = std::numeric_limits<real>::quiet_NaN();
  real verification_accuracy = std::numeric_limits<real>::quiet_NaN();
  real frechet_distance = 0.0;
  real classifier_score = 1.0;
  int mode_coverage = 0;

  static std::string csv_header(int n_categories);
  std::string csv_row() const;
  std::string text_block() const;
};

}  // namespace modelab

#endif
