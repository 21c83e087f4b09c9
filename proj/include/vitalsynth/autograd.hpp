#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vitalsynth/tensor.hpp"

namespace vitalsynth {

// One recorded operation: the tensors it consumed and a closure mapping the
// gradient at its output to gradients at each input. Closures are written in
// terms of the public tensor operations, so replaying them with recording
// enabled yields gradients that are themselves differentiable — this is what
// the gradient penalty needs.
struct Node {
  const char* op = "";
  std::vector<Tensor> inputs;
  // Null for leaves. Must return one gradient per input, shape-matched.
  std::function<std::vector<Tensor>(const Tensor&)> backward;
  uint64_t seq = 0;
};

bool grad_enabled();

// Disables graph recording within its scope (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Topologically ordered view of the graph below a root: parents precede
// consumers, root last. Replaying the list in reverse visits every reachable
// operation exactly once.
class GradientTape {
 public:
  static GradientTape build(const Tensor& root);
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

// Reverse-mode gradient of a scalar output with respect to `inputs`. With
// higher_order set, the returned tensors stay on the graph and can be
// differentiated again. Inputs that did not participate in producing the
// output yield zero tensors of matching shape.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool higher_order = false);

namespace detail {
// Attaches a node to `out` when recording is enabled and any input is tracked.
void record(Tensor& out, const char* op, std::vector<Tensor> inputs,
            std::function<std::vector<Tensor>(const Tensor&)> backward);
}  // namespace detail

}  // namespace vitalsynth
