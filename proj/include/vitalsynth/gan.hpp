#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vitalsynth/data.hpp"
#include "vitalsynth/nn.hpp"

namespace vitalsynth {

// Network sizes: s signal channels, c label-embedding width, m seed length,
// h hidden width.
struct ArchitectureConfig {
  size_t signals = 0;      // s
  size_t label_embed = 8;  // c
  size_t seed_len = 32;    // m
  size_t hidden = 64;      // h

  void validate() const;
};

struct TrainConfig {
  double lambda_gp = 10.0;
  size_t n_critic = 5;
  double learning_rate = 5e-5;
  size_t batch_size = 64;  // even
  size_t generator_steps = 1000;
  uint64_t seed = 1;
  double dropout_rate = 0.5;

  void validate() const;
};

// Generator input noise: standard normal of length m.
struct SeedDistribution {
  size_t length = 0;
  Tensor sample(size_t batch, Rng& rng) const;
};

// Per-example layer shapes, for conformance checks ({time, width} pairs;
// the seed row is {m}).
struct LayerTrace {
  std::string layer;
  Shape shape;
};

std::vector<ParamSpec> generator_param_specs(const ArchitectureConfig& arch);
std::vector<ParamSpec> critic_param_specs(const ArchitectureConfig& arch);
size_t generator_param_count(const ArchitectureConfig& arch);
size_t critic_param_count(const ArchitectureConfig& arch);
ParameterSet init_generator(const ArchitectureConfig& arch, uint64_t seed);
ParameterSet init_critic(const ArchitectureConfig& arch, uint64_t seed);

// Maps seed z [batch, m] and labels to series [batch, 20, s]:
// z as m x 1, label embedding appended per position -> m x (1+c); flattened
// into Linear -> 5h (LReLU, dropout), reshaped 5 x h; two upsample/conv/conv
// blocks to 10 x h then 20 x h; final conv (no activation) to 20 x s.
Tensor generator_forward(const ParameterSet& params, const Tensor& z,
                         const std::vector<int>& labels, const ArchitectureConfig& arch,
                         bool training, double dropout_rate, Rng* dropout_rng,
                         std::vector<LayerTrace>* trace = nullptr);

// Scores series [batch, 20, s] against labels: label embedding appended per
// time step -> 20 x (s+c); conv/conv, pool to 10, conv/conv, pool to 5;
// flattened into Linear -> one unbounded score per example.
Tensor critic_forward(const ParameterSet& params, const Tensor& x,
                      const std::vector<int>& labels, const ArchitectureConfig& arch,
                      std::vector<LayerTrace>* trace = nullptr);

// Mean over the batch of (||grad_x critic(x_hat)||_2 - 1)^2 at per-example
// random interpolates x_hat between real and fake. The returned scalar stays
// on the graph so it back-propagates into the critic parameters.
Tensor gradient_penalty_core(const std::function<Tensor(const Tensor&)>& critic_fn,
                             const Tensor& x_real, const Tensor& x_fake, Rng& rng);
Tensor gradient_penalty(const ParameterSet& critic, const Tensor& x_real,
                        const Tensor& x_fake, const std::vector<int>& labels,
                        const ArchitectureConfig& arch, Rng& rng);

// mean(scores_fake) - mean(scores_real) + lambda_gp * penalty.
Tensor critic_loss(const Tensor& scores_real, const Tensor& scores_fake,
                   const Tensor& penalty, double lambda_gp);
// -mean(scores_fake).
Tensor generator_loss(const Tensor& scores_fake);

struct StepRecord {
  size_t step = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double penalty = 0.0;
};

struct GanModel {
  ArchitectureConfig arch;
  ParameterSet generator;
  ParameterSet critic;
};

struct TrainResult {
  GanModel model;
  std::vector<StepRecord> log;
};

// Alternates n_critic critic updates (fresh balanced real batch and fresh
// seeds each) per generator update; fake labels are drawn uniformly.
// Deterministic given cfg.seed. Aborts with NumericalError on a non-finite
// loss, naming the step.
TrainResult train_gan(const LabeledDataset& train_ds, const ArchitectureConfig& arch,
                      const TrainConfig& cfg,
                      const std::function<void(const StepRecord&)>& on_step = {});

// Generates floor(n_total/2) series per class in inference mode,
// denormalizes with `stats`, and optionally clamps to the channel bounds.
LabeledDataset synthesize_balanced(const GanModel& model, size_t n_total,
                                   const NormStats& stats,
                                   const std::vector<ChannelSpec>& channels,
                                   bool clamp, Rng& rng);

}  // namespace vitalsynth
