#ifndef MODELAB_TESTS_LOSS_ORACLES_HPP
#define MODELAB_TESTS_LOSS_ORACLES_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "modelab/types.hpp"

// Plain-double reference implementations, written against the loss
// definitions directly and kept independent of the tensor path.
namespace modelab::testing {

inline real oracle_dist(const vec& u, const vec& v) {
  real sq = 0.0;
  for (Index i = 0; i < u.size(); ++i) sq += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(sq + 1e-12);
}

inline real oracle_hinge(real x) { return x > 0.0 ? x : 0.0; }

inline real oracle_triplet(const vec& a, const vec& p, const vec& n, real m) {
  return oracle_hinge(m + oracle_dist(a, p) - oracle_dist(a, n));
}

inline real oracle_adversarial_triplet(const vec& a, const vec& p, const vec& n, real m) {
  return oracle_triplet(a, p, n, m) + (oracle_dist(n, p) - oracle_dist(a, n));
}

// Exhaustive scan over all pairs per anchor.
inline real oracle_batch_hard(const mat& e, const std::vector<int>& labels, real m,
                              bool adversarial) {
  const Index b = e.rows();
  real total = 0.0;
  for (Index i = 0; i < b; ++i) {
    real worst_pos = -1.0;
    real best_neg = std::numeric_limits<real>::infinity();
    Index hp = -1, hn = -1;
    for (Index j = 0; j < b; ++j) {
      if (j == i) continue;
      const real d = oracle_dist(e.row(i).transpose(), e.row(j).transpose());
      if (labels[j] == labels[i] && d > worst_pos) {
        worst_pos = d;
        hp = j;
      }
      if (labels[j] != labels[i] && d < best_neg) {
        best_neg = d;
        hn = j;
      }
    }
    real term = oracle_hinge(m + worst_pos - best_neg);
    if (adversarial) {
      term += oracle_dist(e.row(hn).transpose(), e.row(hp).transpose()) - best_neg;
    }
    total += term;
  }
  return total / static_cast<real>(b);
}

inline real oracle_aofs(const vec& a, const vec& p, const std::vector<vec>& negs, real m) {
  real best = std::numeric_limits<real>::infinity();
  std::size_t hard = 0;
  for (std::size_t k = 0; k < negs.size(); ++k) {
    const real d = oracle_dist(a, negs[k]);
    if (d < best) {
      best = d;
      hard = k;
    }
  }
  return oracle_hinge(m + oracle_dist(a, p) - best) + (oracle_dist(negs[hard], p) - best);
}

}  // namespace modelab::testing

#endif
