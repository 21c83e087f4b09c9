#include "vitalsynth/nn.hpp"

#include <algorithm>
#include <cmath>

#include "vitalsynth/errors.hpp"

namespace vitalsynth {

void ParameterSet::insert(const std::string& name, Tensor value) {
  if (entries_.count(name)) {
    throw ContractError("parameter '" + name + "' already present");
  }
  entries_.emplace(name, std::move(value));
}

bool ParameterSet::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw LookupError("parameter '" + name + "' not found");
  }
  return it->second;
}

void ParameterSet::set(const std::string& name, Tensor value) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw LookupError("parameter '" + name + "' not found");
  }
  it->second = std::move(value);
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

size_t ParameterSet::total_elements() const {
  size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

namespace {

size_t fan_in_of(const ParamSpec& spec) {
  switch (spec.role) {
    case ParamRole::conv_weight:
      // [out_ch, in_ch, k]
      return spec.shape.at(1) * spec.shape.at(2);
    case ParamRole::linear_weight:
      // [out, in]
      return spec.shape.at(1);
    case ParamRole::lstm_weight:
      // [4H, F]
      return spec.shape.at(1);
    default:
      return 0;
  }
}

}  // namespace

ParameterSet init_parameters(const std::vector<ParamSpec>& specs, uint64_t seed) {
  Rng rng(seed);
  ParameterSet params;
  params.rng_seed = seed;
  for (const ParamSpec& spec : specs) {
    const size_t n = shape_numel(spec.shape);
    std::vector<double> v(n, 0.0);
    switch (spec.role) {
      case ParamRole::bias:
        break;
      case ParamRole::embedding:
        for (double& x : v) x = rng.normal();
        break;
      default: {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in_of(spec)));
        for (double& x : v) x = rng.uniform(-bound, bound);
        break;
      }
    }
    params.insert(spec.name, Tensor::leaf(spec.shape, std::move(v)));
  }
  return params;
}

Tensor linear_forward(const ParameterSet& params, const Tensor& input,
                      const std::string& name) {
  const Tensor& w = params.at(name + ".weight");
  const Tensor& b = params.at(name + ".bias");
  if (input.rank() != 2) {
    throw ShapeError("linear '" + name + "': rank-2 input required, got " +
                     shape_str(input.shape()));
  }
  if (w.rank() != 2 || input.dim(1) != w.dim(1)) {
    throw ShapeError("linear '" + name + "': input " + shape_str(input.shape()) +
                     " does not match weight " + shape_str(w.shape()));
  }
  return add(matmul(input, transpose(w)), b);
}

Tensor embedding_lookup(const ParameterSet& params, const std::string& name,
                        const std::vector<int>& labels) {
  const Tensor& table = params.at(name);
  if (table.rank() != 2) {
    throw ShapeError("embedding '" + name + "': table must be rank 2, got " +
                     shape_str(table.shape()));
  }
  return matmul(one_hot(labels, table.dim(0)), table);
}

Tensor embedding_lookup(const ParameterSet& params, const std::string& name,
                        const Tensor& labels) {
  if (labels.rank() != 1) {
    throw ShapeError("embedding '" + name + "': labels must be rank 1, got " +
                     shape_str(labels.shape()));
  }
  std::vector<int> ints;
  ints.reserve(labels.numel());
  for (double v : labels.values()) {
    if (v != 0.0 && v != 1.0) {
      throw DomainError("embedding '" + name + "': label " + std::to_string(v) +
                        " not in {0,1}");
    }
    ints.push_back(static_cast<int>(v));
  }
  return embedding_lookup(params, name, ints);
}

std::vector<ParamSpec> lstm_param_specs(const std::string& name, size_t features,
                                        size_t hidden_size, size_t layers) {
  std::vector<ParamSpec> specs;
  for (size_t l = 0; l < layers; ++l) {
    const size_t in = l == 0 ? features : hidden_size;
    const std::string base = name + ".l" + std::to_string(l) + ".";
    specs.push_back({base + "w_ih", {4 * hidden_size, in}, ParamRole::lstm_weight});
    specs.push_back({base + "w_hh", {4 * hidden_size, hidden_size}, ParamRole::lstm_weight});
    specs.push_back({base + "b_ih", {4 * hidden_size}, ParamRole::bias});
    specs.push_back({base + "b_hh", {4 * hidden_size}, ParamRole::bias});
  }
  return specs;
}

Tensor lstm_forward(const ParameterSet& params, const Tensor& input,
                    const std::string& name, const LstmOptions& opts) {
  if (input.rank() != 3) {
    throw ShapeError("lstm '" + name + "': input must be [batch, T, features], got " +
                     shape_str(input.shape()));
  }
  if (opts.hidden_size == 0 || opts.layers == 0) {
    throw ContractError("lstm '" + name + "': hidden_size and layers must be positive");
  }
  const size_t batch = input.dim(0), steps = input.dim(1);
  if (steps == 0) throw ContractError("lstm '" + name + "': empty sequence");
  const size_t hidden = opts.hidden_size;

  Tensor layer_input = input;
  Tensor h;
  for (size_t l = 0; l < opts.layers; ++l) {
    const std::string base = name + ".l" + std::to_string(l) + ".";
    const Tensor& w_ih = params.at(base + "w_ih");
    const Tensor& w_hh = params.at(base + "w_hh");
    const Tensor& b_ih = params.at(base + "b_ih");
    const Tensor& b_hh = params.at(base + "b_hh");
    if (w_ih.rank() != 2 || w_ih.dim(0) != 4 * hidden ||
        w_ih.dim(1) != layer_input.dim(2)) {
      throw ShapeError("lstm '" + name + "': input " + shape_str(layer_input.shape()) +
                       " does not match " + base + "w_ih " + shape_str(w_ih.shape()));
    }
    Tensor w_ih_t = transpose(w_ih);
    Tensor w_hh_t = transpose(w_hh);

    h = Tensor::zeros({batch, hidden});
    Tensor c = Tensor::zeros({batch, hidden});
    std::vector<Tensor> outputs;
    const bool keep_sequence = l + 1 < opts.layers;
    if (keep_sequence) outputs.reserve(steps);

    for (size_t t = 0; t < steps; ++t) {
      Tensor x_t = reshape(slice(layer_input, 1, t, t + 1),
                           {batch, layer_input.dim(2)});
      Tensor z = add(add(matmul(x_t, w_ih_t), b_ih), add(matmul(h, w_hh_t), b_hh));
      Tensor gate_i = sigmoid(slice(z, 1, 0, hidden));
      Tensor gate_f = sigmoid(slice(z, 1, hidden, 2 * hidden));
      Tensor cand = tanh(slice(z, 1, 2 * hidden, 3 * hidden));
      Tensor gate_o = sigmoid(slice(z, 1, 3 * hidden, 4 * hidden));
      c = add(mul(gate_f, c), mul(gate_i, cand));
      h = mul(gate_o, tanh(c));
      if (keep_sequence) outputs.push_back(reshape(h, {batch, 1, hidden}));
    }

    if (keep_sequence) {
      layer_input = concat(outputs, 1);
      if (opts.dropout_rate > 0.0 && opts.training && opts.dropout_rng) {
        layer_input = dropout(layer_input, opts.dropout_rate, true, *opts.dropout_rng);
      }
    }
  }
  return h;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be [batch, classes], got " +
                     shape_str(logits.shape()));
  }
  const size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  }
  // Per-row max as a detached constant; the softmax gradient is unchanged.
  std::vector<double> row_max_full(batch * classes);
  std::vector<double> row_max(batch);
  for (size_t i = 0; i < batch; ++i) {
    double m = logits.at(i * classes);
    for (size_t j = 1; j < classes; ++j) m = std::max(m, logits.at(i * classes + j));
    row_max[i] = m;
    for (size_t j = 0; j < classes; ++j) row_max_full[i * classes + j] = m;
  }
  Tensor shifted = sub(logits, Tensor::from({batch, classes}, std::move(row_max_full)));
  Tensor lse = add(log(row_sum(exp(shifted))), Tensor::from({batch}, std::move(row_max)));
  Tensor picked = row_sum(mul(logits, one_hot(labels, classes)));
  return mean(sub(lse, picked));
}

void Rmsprop::step(ParameterSet& params, const std::vector<Tensor>& grads) {
  const auto names = params.names();
  if (grads.size() != names.size()) {
    throw ShapeError("rmsprop: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(names.size()) + " parameters");
  }
  NoGradGuard guard;
  for (size_t i = 0; i < names.size(); ++i) {
    const Tensor& theta = params.at(names[i]);
    const Tensor& g = grads[i];
    if (g.shape() != theta.shape()) {
      throw ShapeError("rmsprop: gradient " + shape_str(g.shape()) +
                       " does not match parameter '" + names[i] + "' " +
                       shape_str(theta.shape()));
    }
    auto& v = square_avg_.try_emplace(names[i], theta.numel(), 0.0).first->second;
    std::vector<double> next(theta.numel());
    for (size_t e = 0; e < next.size(); ++e) {
      const double ge = g.at(e);
      v[e] = cfg_.alpha * v[e] + (1.0 - cfg_.alpha) * ge * ge;
      next[e] = theta.at(e) - cfg_.learning_rate * ge / (std::sqrt(v[e]) + cfg_.epsilon);
    }
    params.set(names[i], Tensor::leaf(theta.shape(), std::move(next)));
  }
  ++step_count_;
}

const std::vector<double>* Rmsprop::square_avg(const std::string& name) const {
  auto it = square_avg_.find(name);
  return it == square_avg_.end() ? nullptr : &it->second;
}

}  // namespace vitalsynth
