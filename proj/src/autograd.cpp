#include "vitalsynth/autograd.hpp"

#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "vitalsynth/errors.hpp"
#include "vitalsynth/ops.hpp"

namespace vitalsynth {

namespace {
thread_local bool g_grad_enabled = true;
thread_local uint64_t g_seq = 0;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void detail::record(Tensor& out, const char* op, std::vector<Tensor> inputs,
                    std::function<std::vector<Tensor>(const Tensor&)> backward) {
  if (!g_grad_enabled) return;
  bool any_tracked = false;
  for (const Tensor& in : inputs) {
    if (in.tracked()) {
      any_tracked = true;
      break;
    }
  }
  if (!any_tracked) return;
  auto node = std::make_shared<Node>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->seq = ++g_seq;
  out.attach(std::move(node));
}

GradientTape GradientTape::build(const Tensor& root) {
  GradientTape tape;
  if (!root.tracked()) return tape;
  // Iterative postorder DFS: inputs are emitted before the node consuming
  // them, so nodes_ is a topological order with the root last.
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, size_t>> stack;
  visited.insert(root.node().get());
  stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    if (next_input < node->inputs.size()) {
      const Tensor& in = node->inputs[next_input++];
      if (in.tracked() && !visited.count(in.node().get())) {
        visited.insert(in.node().get());
        stack.emplace_back(in.node(), 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool higher_order) {
  if (!output.defined() || output.numel() != 1) {
    throw ContractError("grad requires a scalar output, got shape " +
                        (output.defined() ? shape_str(output.shape())
                                          : std::string("<undefined>")));
  }
  if (!output.tracked()) {
    throw ContractError("grad requires a graph-tracked output");
  }

  GradientTape tape = GradientTape::build(output);

  std::optional<NoGradGuard> guard;
  if (!higher_order) guard.emplace();

  std::unordered_map<const Node*, Tensor> grads;
  grads[output.node().get()] = Tensor::full(output.shape(), 1.0);

  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const Node* node = it->get();
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    std::vector<Tensor> input_grads = node->backward(found->second);
    if (input_grads.size() != node->inputs.size()) {
      throw ContractError(std::string("backward of ") + node->op +
                          " returned a wrong gradient count");
    }
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      const Tensor& in = node->inputs[i];
      if (!in.tracked()) continue;
      Tensor& slot = grads[in.node().get()];
      // Repeated uses of a tensor sum their gradients.
      slot = slot.defined() ? add(slot, input_grads[i]) : input_grads[i];
    }
  }

  std::vector<Tensor> result;
  result.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    if (in.tracked()) {
      auto found = grads.find(in.node().get());
      if (found != grads.end()) {
        result.push_back(found->second);
        continue;
      }
    }
    // Detached input or one that did not participate: zero gradient.
    result.push_back(Tensor::zeros(in.shape()));
  }
  return result;
}

}  // namespace vitalsynth
