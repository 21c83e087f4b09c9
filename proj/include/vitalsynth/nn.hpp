#pragma once

#include <map>
#include <string>
#include <vector>

#include "vitalsynth/ops.hpp"

namespace vitalsynth {

// Drives the initialization law in init_parameters. Weight roles draw from
// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) with fan_in derived from the
// shape; embeddings draw from the standard normal; biases start at zero.
enum class ParamRole { conv_weight, linear_weight, lstm_weight, embedding, bias };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
};

// Named trainable tensors. Backed by std::map so iteration order is
// deterministic (lexicographic by name).
class ParameterSet {
 public:
  void insert(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;  // missing -> LookupError
  void set(const std::string& name, Tensor value);  // name must exist
  size_t size() const { return entries_.size(); }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  std::vector<Tensor> tensors() const;  // name order
  size_t total_elements() const;

  uint64_t rng_seed = 0;

 private:
  std::map<std::string, Tensor> entries_;
};

// Pure function of (specs, seed); all returned tensors are tracked leaves.
ParameterSet init_parameters(const std::vector<ParamSpec>& specs, uint64_t seed);

// output = input · W^T + b with W = "<name>.weight" [out,in], b = "<name>.bias".
Tensor linear_forward(const ParameterSet& params, const Tensor& input,
                      const std::string& name);

// Row lookup in the table named `name` ([classes, dim]); implemented as a
// one-hot product so gradients flow only to the looked-up rows.
Tensor embedding_lookup(const ParameterSet& params, const std::string& name,
                        const std::vector<int>& labels);
// Label tensor variant; values must be exactly 0 or 1.
Tensor embedding_lookup(const ParameterSet& params, const std::string& name,
                        const Tensor& labels);

struct LstmOptions {
  size_t hidden_size = 0;
  size_t layers = 1;
  double dropout_rate = 0.0;  // applied between stacked layers
  bool training = false;
  Rng* dropout_rng = nullptr;
};

// Unidirectional LSTM over input [batch, T, features]; returns the final
// hidden state of the top layer [batch, hidden]. Zero initial state; packed
// gate order along the weight rows is [input, forget, candidate, output].
// Layer l uses parameters "<name>.l<l>.{w_ih,w_hh,b_ih,b_hh}".
Tensor lstm_forward(const ParameterSet& params, const Tensor& input,
                    const std::string& name, const LstmOptions& opts);

std::vector<ParamSpec> lstm_param_specs(const std::string& name, size_t features,
                                        size_t hidden_size, size_t layers);

// Mean softmax cross-entropy of logits [batch, classes] against int labels.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct RmspropConfig {
  double learning_rate = 5e-5;
  double alpha = 0.99;
  double epsilon = 1e-8;
};

// v <- alpha*v + (1-alpha)*g^2 ; theta <- theta - lr*g/(sqrt(v) + eps).
// One instance per network; running square averages are kept per parameter.
class Rmsprop {
 public:
  explicit Rmsprop(RmspropConfig cfg = {}) : cfg_(cfg) {}

  // grads must align with params.tensors() order.
  void step(ParameterSet& params, const std::vector<Tensor>& grads);

  size_t steps() const { return step_count_; }
  const RmspropConfig& config() const { return cfg_; }
  const std::vector<double>* square_avg(const std::string& name) const;

 private:
  RmspropConfig cfg_;
  size_t step_count_ = 0;
  std::map<std::string, std::vector<double>> square_avg_;
};

}  // namespace vitalsynth
