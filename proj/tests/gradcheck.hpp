#ifndef MODELAB_TESTS_GRADCHECK_HPP
#define MODELAB_TESTS_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "modelab/finite_diff.hpp"
#include "modelab/tensor.hpp"

namespace modelab::testing {

struct GradCheck {
  bool ok = true;
  std::string detail;
};

// Compares reverse-mode gradients of build() against central differences.
// build() must construct the loss from the given parameter tensors and be a
// pure function of their current values.
inline GradCheck check_gradients(const std::function<Tensor()>& build,
                                 const std::vector<Tensor>& params, real step = 1e-6,
                                 real tol_rel = 1e-5, real tol_abs = 1e-7) {
  std::vector<vec> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = build();
    backward(loss);
    for (const Tensor& p : params) analytic.push_back(p.grad());
  }
  const auto numeric = finite_diff([&]() { return build().item(); }, params, step);

  GradCheck result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (Index i = 0; i < analytic[pi].size(); ++i) {
      const real a = analytic[pi][i];
      const real n = numeric[pi][i];
      const real tol = std::max(tol_abs, tol_rel * std::max(std::abs(a), std::abs(n)));
      if (std::abs(a - n) > tol) {
        result.ok = false;
        result.detail = "param " + std::to_string(pi) + " coord " + std::to_string(i) +
                        ": analytic " + std::to_string(a) + " vs numeric " + std::to_string(n);
        return result;
      }
    }
  }
  return result;
}

}  // namespace modelab::testing

#endif
