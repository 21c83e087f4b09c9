#include "vitalsynth/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vitalsynth/errors.hpp"

namespace vitalsynth {

void ArchitectureConfig::validate() const {
  if (signals == 0 || signals > 5) {
    throw ContractError("architecture: signals must lie in 1..5");
  }
  if (label_embed == 0 || seed_len == 0 || hidden == 0) {
    throw ContractError("architecture: label_embed, seed_len and hidden must be positive");
  }
}

void TrainConfig::validate() const {
  if (lambda_gp < 0.0) throw ContractError("train: lambda_gp must be >= 0");
  if (n_critic == 0) throw ContractError("train: n_critic must be >= 1");
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ContractError("train: batch_size must be even and positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("train: dropout_rate must lie in [0,1)");
  }
}

Tensor SeedDistribution::sample(size_t batch, Rng& rng) const {
  std::vector<double> v(batch * length);
  for (double& x : v) x = rng.normal();
  return Tensor::from({batch, length}, std::move(v));
}

std::vector<ParamSpec> generator_param_specs(const ArchitectureConfig& arch) {
  arch.validate();
  const size_t c = arch.label_embed, m = arch.seed_len, h = arch.hidden;
  const size_t s = arch.signals;
  return {
      {"gen.embed", {2, c}, ParamRole::embedding},
      {"gen.fc.weight", {5 * h, m * (1 + c)}, ParamRole::linear_weight},
      {"gen.fc.bias", {5 * h}, ParamRole::bias},
      {"gen.conv1.weight", {h, h, 3}, ParamRole::conv_weight},
      {"gen.conv1.bias", {h}, ParamRole::bias},
      {"gen.conv2.weight", {h, h, 3}, ParamRole::conv_weight},
      {"gen.conv2.bias", {h}, ParamRole::bias},
      {"gen.conv3.weight", {h, h, 3}, ParamRole::conv_weight},
      {"gen.conv3.bias", {h}, ParamRole::bias},
      {"gen.conv4.weight", {h, h, 3}, ParamRole::conv_weight},
      {"gen.conv4.bias", {h}, ParamRole::bias},
      {"gen.out.weight", {s, h, 3}, ParamRole::conv_weight},
      {"gen.out.bias", {s}, ParamRole::bias},
  };
}

std::vector<ParamSpec> critic_param_specs(const ArchitectureConfig& arch) {
  arch.validate();
  const size_t c = arch.label_embed, h = arch.hidden, s = arch.signals;
  return {
      {"critic.embed", {2, c}, ParamRole::embedding},
      {"critic.conv1.weight", {h, s + c, 3}, ParamRole::conv_weight},
      {"critic.conv1.bias", {h}, ParamRole::bias},
      {"critic.conv2.weight", {h, h, 3}, ParamRole::conv_weight},
      {"critic.conv2.bias", {h}, ParamRole::bias},
      {"critic.conv3.weight", {h, h, 3}, ParamRole::conv_weight},
      {"critic.conv3.bias", {h}, ParamRole::bias},
      {"critic.conv4.weight", {h, h, 3}, ParamRole::conv_weight},
      {"critic.conv4.bias", {h}, ParamRole::bias},
      {"critic.fc.weight", {1, 5 * h}, ParamRole::linear_weight},
      {"critic.fc.bias", {1}, ParamRole::bias},
  };
}

namespace {

size_t spec_element_count(const std::vector<ParamSpec>& specs) {
  size_t n = 0;
  for (const ParamSpec& s : specs) n += shape_numel(s.shape);
  return n;
}

constexpr double kLeakySlope = 0.2;

// Repeats a [batch, embed] tensor along a new time axis of length `steps`
// and appends it to x [batch, steps, ch] as extra channels.
Tensor append_embedding(const Tensor& x, const Tensor& embed) {
  const size_t batch = x.dim(0), steps = x.dim(1);
  Tensor row = reshape(embed, {batch, 1, embed.dim(1)});
  std::vector<Tensor> copies(steps, row);
  return concat({x, concat(copies, 1)}, 2);
}

void push_trace(std::vector<LayerTrace>* trace, const char* layer, Shape shape) {
  if (trace) trace->push_back({layer, std::move(shape)});
}

}  // namespace

size_t generator_param_count(const ArchitectureConfig& arch) {
  return spec_element_count(generator_param_specs(arch));
}

size_t critic_param_count(const ArchitectureConfig& arch) {
  return spec_element_count(critic_param_specs(arch));
}

ParameterSet init_generator(const ArchitectureConfig& arch, uint64_t seed) {
  return init_parameters(generator_param_specs(arch), seed);
}

ParameterSet init_critic(const ArchitectureConfig& arch, uint64_t seed) {
  return init_parameters(critic_param_specs(arch), seed);
}

Tensor generator_forward(const ParameterSet& params, const Tensor& z,
                         const std::vector<int>& labels, const ArchitectureConfig& arch,
                         bool training, double dropout_rate, Rng* dropout_rng,
                         std::vector<LayerTrace>* trace) {
  arch.validate();
  const size_t c = arch.label_embed, m = arch.seed_len, h = arch.hidden;
  if (z.rank() != 2 || z.dim(1) != m) {
    throw ShapeError("generator: seed " + shape_str(z.shape()) + " must be [batch," +
                     std::to_string(m) + "]");
  }
  const size_t batch = z.dim(0);
  if (labels.size() != batch) {
    throw ShapeError("generator: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  }
  if (training && dropout_rate > 0.0 && dropout_rng == nullptr) {
    throw ContractError("generator: dropout in training mode needs an rng");
  }
  auto drop = [&](const Tensor& t) {
    return training && dropout_rate > 0.0 ? dropout(t, dropout_rate, true, *dropout_rng)
                                          : t;
  };
  push_trace(trace, "seed", {m});

  Tensor embed = embedding_lookup(params, "gen.embed", labels);
  Tensor x = append_embedding(reshape(z, {batch, m, 1}), embed);
  push_trace(trace, "app_emb", {m, 1 + c});

  x = reshape(x, {batch, m * (1 + c)});
  x = drop(leaky_relu(linear_forward(params, x, "gen.fc"), kLeakySlope));
  x = reshape(x, {batch, 5, h});
  push_trace(trace, "linear", {5, h});

  x = upsample_linear1d(x);
  push_trace(trace, "upsample", {10, h});
  x = leaky_relu(conv1d(x, params.at("gen.conv1.weight"), params.at("gen.conv1.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {10, h});
  x = drop(leaky_relu(conv1d(x, params.at("gen.conv2.weight"), params.at("gen.conv2.bias")),
                      kLeakySlope));
  push_trace(trace, "conv", {10, h});

  x = upsample_linear1d(x);
  push_trace(trace, "upsample", {20, h});
  x = leaky_relu(conv1d(x, params.at("gen.conv3.weight"), params.at("gen.conv3.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {20, h});
  x = drop(leaky_relu(conv1d(x, params.at("gen.conv4.weight"), params.at("gen.conv4.bias")),
                      kLeakySlope));
  push_trace(trace, "conv", {20, h});

  x = conv1d(x, params.at("gen.out.weight"), params.at("gen.out.bias"));
  push_trace(trace, "conv", {20, arch.signals});
  return x;
}

Tensor critic_forward(const ParameterSet& params, const Tensor& x,
                      const std::vector<int>& labels, const ArchitectureConfig& arch,
                      std::vector<LayerTrace>* trace) {
  arch.validate();
  const size_t c = arch.label_embed, h = arch.hidden, s = arch.signals;
  if (x.rank() != 3 || x.dim(1) != kTimeSteps || x.dim(2) != s) {
    throw ShapeError("critic: input " + shape_str(x.shape()) + " must be [batch," +
                     std::to_string(kTimeSteps) + "," + std::to_string(s) + "]");
  }
  const size_t batch = x.dim(0);
  if (labels.size() != batch) {
    throw ShapeError("critic: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  push_trace(trace, "input", {20, s});

  Tensor embed = embedding_lookup(params, "critic.embed", labels);
  Tensor y = append_embedding(x, embed);
  push_trace(trace, "app_emb", {20, s + c});

  y = leaky_relu(conv1d(y, params.at("critic.conv1.weight"), params.at("critic.conv1.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {20, h});
  y = leaky_relu(conv1d(y, params.at("critic.conv2.weight"), params.at("critic.conv2.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {20, h});
  y = avg_pool1d(y);
  push_trace(trace, "avg_pool", {10, h});
  y = leaky_relu(conv1d(y, params.at("critic.conv3.weight"), params.at("critic.conv3.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {10, h});
  y = leaky_relu(conv1d(y, params.at("critic.conv4.weight"), params.at("critic.conv4.bias")),
                 kLeakySlope);
  push_trace(trace, "conv", {10, h});
  y = avg_pool1d(y);
  push_trace(trace, "avg_pool", {5, h});

  y = linear_forward(params, reshape(y, {batch, 5 * h}), "critic.fc");
  push_trace(trace, "linear", {1});
  return reshape(y, {batch});
}

Tensor gradient_penalty_core(const std::function<Tensor(const Tensor&)>& critic_fn,
                             const Tensor& x_real, const Tensor& x_fake, Rng& rng) {
  if (x_real.shape() != x_fake.shape()) {
    throw ShapeError("gradient penalty: real " + shape_str(x_real.shape()) +
                     " and fake " + shape_str(x_fake.shape()) + " differ");
  }
  if (x_real.rank() == 0) {
    throw ContractError("gradient penalty: batched input required");
  }
  const size_t batch = x_real.dim(0);
  const size_t per_example = x_real.numel() / batch;

  // Per-example interpolation factor; constant with respect to the graph.
  std::vector<double> mixed(x_real.numel());
  for (size_t i = 0; i < batch; ++i) {
    const double eps = rng.uniform();
    for (size_t j = 0; j < per_example; ++j) {
      const size_t k = i * per_example + j;
      mixed[k] = eps * x_real.at(k) + (1.0 - eps) * x_fake.at(k);
    }
  }
  Tensor x_hat = Tensor::leaf(x_real.shape(), std::move(mixed));

  Tensor scores = critic_fn(x_hat);
  if (scores.rank() != 1 || scores.dim(0) != batch) {
    throw ShapeError("gradient penalty: critic must map [batch,...] to [batch], got " +
                     shape_str(scores.shape()));
  }
  // The critic scores each example independently, so summing them makes
  // grad() deliver each example's own input gradient.
  Tensor input_grad = grad(sum(scores), {x_hat}, /*higher_order=*/true)[0];
  Tensor sq_norm = sum_trailing(reshape(mul(input_grad, input_grad), {batch, per_example}));
  // Small guard keeps sqrt differentiable at zero gradient norm.
  Tensor norm = sqrt(add(sq_norm, Tensor::scalar(1e-12)));
  Tensor excess = sub(norm, Tensor::scalar(1.0));
  return mean(mul(excess, excess));
}

Tensor gradient_penalty(const ParameterSet& critic, const Tensor& x_real,
                        const Tensor& x_fake, const std::vector<int>& labels,
                        const ArchitectureConfig& arch, Rng& rng) {
  return gradient_penalty_core(
      [&](const Tensor& x) { return critic_forward(critic, x, labels, arch); }, x_real,
      x_fake, rng);
}

Tensor critic_loss(const Tensor& scores_real, const Tensor& scores_fake,
                   const Tensor& penalty, double lambda_gp) {
  return add(sub(mean(scores_fake), mean(scores_real)),
             mul(Tensor::scalar(lambda_gp), penalty));
}

Tensor generator_loss(const Tensor& scores_fake) { return neg(mean(scores_fake)); }

namespace {

void ensure_finite(double v, const char* what, size_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(what) + " is not finite at generator step " +
                         std::to_string(step));
  }
}

std::vector<int> random_labels(size_t n, Rng& rng) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.uniform_index(2));
  return labels;
}

}  // namespace

TrainResult train_gan(const LabeledDataset& train_ds, const ArchitectureConfig& arch,
                      const TrainConfig& cfg,
                      const std::function<void(const StepRecord&)>& on_step) {
  arch.validate();
  cfg.validate();
  if (!train_ds.norm_stats) {
    throw ContractError("train_gan requires a normalized dataset");
  }
  if (train_ds.n_channels() != arch.signals) {
    throw ShapeError("train_gan: dataset has " + std::to_string(train_ds.n_channels()) +
                     " channels, architecture expects " + std::to_string(arch.signals));
  }

  Rng master(cfg.seed);
  const uint64_t init_gen_seed = master.fork_seed();
  const uint64_t init_critic_seed = master.fork_seed();
  const uint64_t sampler_seed = master.fork_seed();
  Rng noise_rng(master.fork_seed());
  Rng label_rng(master.fork_seed());
  Rng eps_rng(master.fork_seed());
  Rng dropout_rng(master.fork_seed());

  TrainResult result;
  result.model.arch = arch;
  result.model.generator = init_generator(arch, init_gen_seed);
  result.model.critic = init_critic(arch, init_critic_seed);
  ParameterSet& gen = result.model.generator;
  ParameterSet& critic = result.model.critic;

  Rmsprop gen_opt({cfg.learning_rate});
  Rmsprop critic_opt({cfg.learning_rate});
  BalancedSampler sampler(train_ds, cfg.batch_size, sampler_seed);
  SeedDistribution seed_dist{arch.seed_len};

  result.log.reserve(cfg.generator_steps);
  for (size_t step = 1; step <= cfg.generator_steps; ++step) {
    double last_critic_loss = 0.0, last_penalty = 0.0;

    for (size_t iter = 0; iter < cfg.n_critic; ++iter) {
      const std::vector<size_t> batch = sampler.next();
      Tensor x_real = dataset_tensor(train_ds, batch);
      const std::vector<int> y_real = dataset_labels(train_ds, batch);

      Tensor x_fake;
      std::vector<int> y_fake = random_labels(cfg.batch_size, label_rng);
      {
        // The critic update does not differentiate through the generator.
        NoGradGuard guard;
        Tensor z = seed_dist.sample(cfg.batch_size, noise_rng);
        x_fake = generator_forward(gen, z, y_fake, arch, /*training=*/true,
                                   cfg.dropout_rate, &dropout_rng);
      }

      Tensor scores_real = critic_forward(critic, x_real, y_real, arch);
      Tensor scores_fake = critic_forward(critic, x_fake, y_fake, arch);
      Tensor penalty = gradient_penalty(critic, x_real, x_fake, y_real, arch, eps_rng);
      Tensor loss = critic_loss(scores_real, scores_fake, penalty, cfg.lambda_gp);

      last_critic_loss = loss.value();
      last_penalty = penalty.value();
      ensure_finite(last_critic_loss, "critic loss", step);

      critic_opt.step(critic, grad(loss, critic.tensors()));
    }

    Tensor z = seed_dist.sample(cfg.batch_size, noise_rng);
    std::vector<int> y_fake = random_labels(cfg.batch_size, label_rng);
    Tensor x_fake = generator_forward(gen, z, y_fake, arch, /*training=*/true,
                                      cfg.dropout_rate, &dropout_rng);
    Tensor g_loss = generator_loss(critic_forward(critic, x_fake, y_fake, arch));
    const double g_loss_value = g_loss.value();
    ensure_finite(g_loss_value, "generator loss", step);

    gen_opt.step(gen, grad(g_loss, gen.tensors()));

    StepRecord record{step, last_critic_loss, g_loss_value, last_penalty};
    result.log.push_back(record);
    if (on_step) on_step(record);
  }
  return result;
}

LabeledDataset synthesize_balanced(const GanModel& model, size_t n_total,
                                   const NormStats& stats,
                                   const std::vector<ChannelSpec>& channels,
                                   bool clamp, Rng& rng) {
  model.arch.validate();
  if (n_total < 2) throw ContractError("synthesize: n_total must be >= 2");
  if (channels.size() != model.arch.signals) {
    throw ShapeError("synthesize: " + std::to_string(channels.size()) +
                     " channels for architecture with " +
                     std::to_string(model.arch.signals) + " signals");
  }
  if (stats.mean.size() != channels.size() || stats.max_abs.size() != channels.size()) {
    throw ContractError("synthesize: normalization statistics required per channel");
  }

  const size_t per_class = n_total / 2;
  const size_t n_channels = channels.size();
  SeedDistribution seed_dist{model.arch.seed_len};

  LabeledDataset out;
  out.channels = channels;
  out.series.reserve(2 * per_class);

  NoGradGuard guard;
  size_t serial = 0;
  for (int cls = 0; cls < 2; ++cls) {
    size_t remaining = per_class;
    while (remaining > 0) {
      const size_t batch = std::min<size_t>(remaining, 128);
      Tensor z = seed_dist.sample(batch, rng);
      std::vector<int> labels(batch, cls);
      Tensor x = generator_forward(model.generator, z, labels, model.arch,
                                   /*training=*/false, 0.0, nullptr);
      for (size_t i = 0; i < batch; ++i) {
        PatientSeries s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synthetic-%06zu", serial++);
        s.patient_id = buf;
        s.label = cls;
        s.values.resize(kTimeSteps * n_channels);
        for (size_t t = 0; t < kTimeSteps; ++t) {
          for (size_t c = 0; c < n_channels; ++c) {
            double v = x.at((i * kTimeSteps + t) * n_channels + c) * stats.max_abs[c] +
                       stats.mean[c];
            if (clamp) v = std::clamp(v, channels[c].lower, channels[c].upper);
            s.values[t * n_channels + c] = v;
          }
        }
        out.series.push_back(std::move(s));
      }
      remaining -= batch;
    }
  }
  return out;
}

}  // namespace vitalsynth
