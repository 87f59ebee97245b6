#ifndef MODELAB_FINITE_DIFF_HPP
#define MODELAB_FINITE_DIFF_HPP

#include <functional>
#include <vector>

#include "modelab/tensor.hpp"

namespace modelab {

/** Central-difference gradient oracle.
 *
 * loss_fn must be a pure function of the current parameter values (it is
 * re-evaluated with each coordinate perturbed in place and the original
 * value restored afterwards). Deliberately independent of the tape: this
 * is the reference every reverse-mode gradient is checked against.
 */
inline std::vector<vec> finite_diff(const std::function<real()>& loss_fn,
                                    const std::vector<Tensor>& params, real step) {
  std::vector<vec> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    vec g(p.size());
    vec& v = const_cast<Tensor&>(p).value();
    for (Index i = 0; i < p.size(); ++i) {
      const real saved = v[i];
      v[i] = saved + step;
      const real up = loss_fn();
      v[i] = saved - step;
      const real down = loss_fn();
      v[i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace modelab

#endif
