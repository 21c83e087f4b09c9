#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vitalsynth/ops.hpp"

namespace vitalsynth {

struct OpCheck {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central finite differences against reverse-mode gradients. `fn` maps leaf
// inputs to a scalar; the oracle only evaluates fn forward, so it stays
// independent of the differentiation path it checks. Returns the max
// relative error over all input elements.
double finite_difference_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double step = 1e-5);

// Runs every differentiable operation against the oracle, `instances`
// random instances each (first-order tolerance 1e-4; second-order cases,
// including the gradient penalty, 1e-3). With inject_error set, an extra
// case checks an operation wired with a deliberately wrong derivative and
// must come back failing — a self-test that the oracle can detect a lie.
std::vector<OpCheck> run_gradient_suite(uint64_t seed, size_t instances = 20,
                                        bool inject_error = false);

bool all_passed(const std::vector<OpCheck>& checks);

}  // namespace vitalsynth
