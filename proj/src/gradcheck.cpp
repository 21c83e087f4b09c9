#include "vitalsynth/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vitalsynth/errors.hpp"
#include "vitalsynth/gan.hpp"
#include "vitalsynth/nn.hpp"

namespace vitalsynth {

double finite_difference_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double step) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(Tensor::leaf(t.shape(), t.values()));
  Tensor out = fn(leaves);
  const std::vector<Tensor> analytic = grad(out, leaves);

  // No grad guard here: probe inputs are untracked so plain ops skip
  // recording, while second-order objectives (which build an inner graph
  // inside fn) still work.
  double max_err = 0.0;
  std::vector<Tensor> probe = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t e = 0; e < inputs[i].numel(); ++e) {
      std::vector<double> plus = inputs[i].values();
      std::vector<double> minus = plus;
      plus[e] += step;
      minus[e] -= step;
      probe[i] = Tensor::from(inputs[i].shape(), std::move(plus));
      const double f_plus = fn(probe).value();
      probe[i] = Tensor::from(inputs[i].shape(), std::move(minus));
      const double f_minus = fn(probe).value();
      probe[i] = inputs[i];
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[i].at(e);
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
      max_err = std::max(max_err, std::abs(a - numeric) / scale);
    }
  }
  return max_err;
}

namespace {

constexpr double kFirstOrderTol = 1e-4;
constexpr double kSecondOrderTol = 1e-3;

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero, for kinked or singular points.
Tensor rand_tensor_away_from(Rng& rng, Shape shape, double margin) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) {
    const double mag = rng.uniform(margin, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from(std::move(shape), std::move(v));
}

// Projects an op output to a scalar through a fixed random functional so
// every output element influences the objective with a distinct weight.
Tensor project(const Tensor& out, Rng& rng) {
  Tensor weights = rand_tensor(rng, out.shape());
  return sum(mul(out, weights));
}

// mul with a deliberately corrupted backward; exercised only by the
// inject_error self-test.
Tensor mul_wrong_backward(const Tensor& a, const Tensor& b) {
  Tensor out = mul(a.detach(), b.detach());
  detail::record(out, "mul_corrupted", {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{mul(sum_to(mul(g, b), a.shape()), Tensor::scalar(1.05)),
                               sum_to(mul(g, a), b.shape())};
  });
  return out;
}

struct Case {
  std::string name;
  double tolerance;
  // Returns the max relative error for one random instance.
  std::function<double(Rng&)> run;
};

std::vector<Case> first_order_cases() {
  std::vector<Case> cases;
  auto push = [&](std::string name, std::function<double(Rng&)> run) {
    cases.push_back({std::move(name), kFirstOrderTol, std::move(run)});
  };

  push("add", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);  // fixed functional per instance
      return project(add(in[0], in[1]), w);
    }, {a, b});
  });
  push("sub", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {2, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(sub(in[0], in[1]), w);
    }, {a, b});
  });
  push("mul", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(mul(in[0], in[1]), w);
    }, {a, b});
  });
  push("div", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    Tensor b = rand_tensor_away_from(rng, {3}, 0.4);
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(div(in[0], in[1]), w);
    }, {a, b});
  });
  push("neg", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {4});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(neg(in[0]), w);
    }, {a});
  });
  push("matmul", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {4, 2});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(matmul(in[0], in[1]), w);
    }, {a, b});
  });
  push("transpose", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {3, 4});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(transpose(in[0]), w);
    }, {a});
  });
  push("concat", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 2}), b = rand_tensor(rng, {3, 2});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(concat({in[0], in[1]}, 0), w);
    }, {a, b});
  });
  push("slice", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {3, 5});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(slice(in[0], 1, 1, 4), w);
    }, {a});
  });
  push("reshape", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 6});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(reshape(in[0], {3, 4}), w);
    }, {a});
  });
  push("sum", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    const double scale = rng.uniform(0.5, 2.0);
    return finite_difference_check([scale](const std::vector<Tensor>& in) {
      return mul(sum(in[0]), Tensor::scalar(scale));
    }, {a});
  });
  push("mean", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    const double scale = rng.uniform(0.5, 2.0);
    return finite_difference_check([scale](const std::vector<Tensor>& in) {
      return mul(mean(in[0]), Tensor::scalar(scale));
    }, {a});
  });
  push("sqrt", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3}, 0.5, 2.0);
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(sqrt(in[0]), w);
    }, {a});
  });
  push("exp", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(exp(in[0]), w);
    }, {a});
  });
  push("log", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3}, 0.5, 2.0);
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(log(in[0]), w);
    }, {a});
  });
  push("tanh", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(tanh(in[0]), w);
    }, {a});
  });
  push("sigmoid", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(sigmoid(in[0]), w);
    }, {a});
  });
  push("leaky_relu", [](Rng& rng) {
    // Inputs bounded away from the kink so finite differences stay valid.
    Tensor a = rand_tensor_away_from(rng, {2, 4}, 0.05);
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(leaky_relu(in[0], 0.2), w);
    }, {a});
  });
  push("dropout", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {3, 4});
    const uint64_t mask_seed = rng.fork_seed();
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr, mask_seed](const std::vector<Tensor>& in) {
      Rng w(wr);
      Rng mask_rng(mask_seed);  // same mask for every evaluation
      return project(dropout(in[0], 0.4, true, mask_rng), w);
    }, {a});
  });
  push("replicate_pad1d", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 4, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(replicate_pad1d(in[0], 1), w);
    }, {a});
  });
  push("avg_pool1d", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 6, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(avg_pool1d(in[0]), w);
    }, {a});
  });
  push("upsample_linear1d", [](Rng& rng) {
    Tensor a = rand_tensor(rng, {2, 5, 3});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(upsample_linear1d(in[0]), w);
    }, {a});
  });
  push("conv1d", [](Rng& rng) {
    Tensor x = rand_tensor(rng, {2, 5, 3});
    Tensor k = rand_tensor(rng, {4, 3, 3});
    Tensor b = rand_tensor(rng, {4});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      return project(conv1d(in[0], in[1], in[2]), w);
    }, {x, k, b});
  });
  push("linear", [](Rng& rng) {
    Tensor x = rand_tensor(rng, {2, 3});
    Tensor w_t = rand_tensor(rng, {4, 3});
    Tensor b = rand_tensor(rng, {4});
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr](const std::vector<Tensor>& in) {
      Rng w(wr);
      ParameterSet ps;
      ps.insert("fc.weight", in[1]);
      ps.insert("fc.bias", in[2]);
      return project(linear_forward(ps, in[0], "fc"), w);
    }, {x, w_t, b});
  });
  push("embedding", [](Rng& rng) {
    Tensor table = rand_tensor(rng, {2, 3});
    std::vector<int> labels = {0, 1, 1, 0};
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr, labels](const std::vector<Tensor>& in) {
      Rng w(wr);
      ParameterSet ps;
      ps.insert("embed", in[0]);
      return project(embedding_lookup(ps, "embed", labels), w);
    }, {table});
  });
  push("lstm", [](Rng& rng) {
    const size_t features = 2, hidden = 3, steps = 20;
    Tensor x = rand_tensor(rng, {1, steps, features});
    Tensor w_ih = rand_tensor(rng, {4 * hidden, features}, -0.5, 0.5);
    Tensor w_hh = rand_tensor(rng, {4 * hidden, hidden}, -0.5, 0.5);
    Tensor b_ih = rand_tensor(rng, {4 * hidden}, -0.2, 0.2);
    Tensor b_hh = rand_tensor(rng, {4 * hidden}, -0.2, 0.2);
    Rng wr(rng.fork_seed());
    return finite_difference_check([&wr, hidden](const std::vector<Tensor>& in) {
      Rng w(wr);
      ParameterSet ps;
      ps.insert("lstm.l0.w_ih", in[1]);
      ps.insert("lstm.l0.w_hh", in[2]);
      ps.insert("lstm.l0.b_ih", in[3]);
      ps.insert("lstm.l0.b_hh", in[4]);
      LstmOptions opts;
      opts.hidden_size = hidden;
      return project(lstm_forward(ps, in[0], "lstm", opts), w);
    }, {x, w_ih, w_hh, b_ih, b_hh});
  });
  push("softmax_cross_entropy", [](Rng& rng) {
    Tensor logits = rand_tensor(rng, {4, 2}, -2.0, 2.0);
    std::vector<int> labels = {0, 1, 0, 1};
    return finite_difference_check([labels](const std::vector<Tensor>& in) {
      return softmax_cross_entropy(in[0], labels);
    }, {logits});
  });
  push("critic_loss", [](Rng& rng) {
    Tensor real = rand_tensor(rng, {4});
    Tensor fake = rand_tensor(rng, {4});
    Tensor penalty = rand_tensor(rng, {}, 0.1, 1.0);
    return finite_difference_check([](const std::vector<Tensor>& in) {
      return critic_loss(in[0], in[1], in[2], 10.0);
    }, {real, fake, penalty});
  });
  push("generator_loss", [](Rng& rng) {
    Tensor fake = rand_tensor(rng, {5});
    return finite_difference_check([](const std::vector<Tensor>& in) {
      return generator_loss(in[0]);
    }, {fake});
  });
  return cases;
}

// g(theta) = || grad_x f(x; theta) ||_2 for a two-layer network; checks that
// differentiating through a gradient matches finite differences.
double second_order_norm_case(Rng& rng) {
  Tensor x = rand_tensor(rng, {1, 2});
  Tensor w1 = rand_tensor(rng, {3, 2}, -0.8, 0.8);
  Tensor b1 = rand_tensor(rng, {3}, -0.3, 0.3);
  Tensor w2 = rand_tensor(rng, {1, 3}, -0.8, 0.8);
  Tensor b2 = rand_tensor(rng, {1}, -0.3, 0.3);
  auto fn = [x](const std::vector<Tensor>& in) {
    Tensor x_leaf = Tensor::leaf(x.shape(), x.values());
    Tensor hidden = tanh(add(matmul(x_leaf, transpose(in[0])), in[1]));
    Tensor out = sum(add(matmul(hidden, transpose(in[2])), in[3]));
    Tensor gx = grad(out, {x_leaf}, /*higher_order=*/true)[0];
    return sqrt(add(sum(mul(gx, gx)), Tensor::scalar(1e-12)));
  };
  return finite_difference_check(fn, {w1, b1, w2, b2});
}

// d(gradient penalty)/d(theta) for a small nonlinear critic (19 parameters).
double second_order_penalty_case(Rng& rng) {
  const size_t batch = 2, steps = 4, channels = 1;
  Tensor x_real = rand_tensor(rng, {batch, steps, channels});
  Tensor x_fake = rand_tensor(rng, {batch, steps, channels});
  Tensor w1 = rand_tensor(rng, {3, 4}, -0.8, 0.8);
  Tensor b1 = rand_tensor(rng, {3}, -0.3, 0.3);
  Tensor w2 = rand_tensor(rng, {1, 3}, -0.8, 0.8);
  Tensor b2 = rand_tensor(rng, {1}, -0.3, 0.3);
  const uint64_t eps_seed = rng.fork_seed();
  auto fn = [x_real, x_fake, batch, steps, channels,
             eps_seed](const std::vector<Tensor>& in) {
    auto critic = [&](const Tensor& x) {
      Tensor flat = reshape(x, {batch, steps * channels});
      Tensor hidden = tanh(add(matmul(flat, transpose(in[0])), in[1]));
      return reshape(add(matmul(hidden, transpose(in[2])), in[3]), {batch});
    };
    Rng eps_rng(eps_seed);  // same interpolation points for every evaluation
    return gradient_penalty_core(critic, x_real, x_fake, eps_rng);
  };
  return finite_difference_check(fn, {w1, b1, w2, b2});
}

double corrupted_case(Rng& rng) {
  Tensor a = rand_tensor(rng, {2, 3});
  Tensor b = rand_tensor(rng, {2, 3});
  Rng wr(rng.fork_seed());
  return finite_difference_check([&wr](const std::vector<Tensor>& in) {
    Rng w(wr);
    return project(mul_wrong_backward(in[0], in[1]), w);
  }, {a, b});
}

}  // namespace

std::vector<OpCheck> run_gradient_suite(uint64_t seed, size_t instances,
                                        bool inject_error) {
  Rng rng(seed);
  std::vector<OpCheck> results;

  for (const Case& c : first_order_cases()) {
    OpCheck check{c.name, 0.0, c.tolerance, false};
    for (size_t i = 0; i < instances; ++i) {
      check.max_rel_err = std::max(check.max_rel_err, c.run(rng));
    }
    check.pass = check.max_rel_err < check.tolerance;
    results.push_back(check);
  }

  {
    OpCheck check{"second_order_gradient_norm", 0.0, kSecondOrderTol, false};
    for (size_t i = 0; i < instances; ++i) {
      check.max_rel_err = std::max(check.max_rel_err, second_order_norm_case(rng));
    }
    check.pass = check.max_rel_err < check.tolerance;
    results.push_back(check);
  }
  {
    OpCheck check{"second_order_gradient_penalty", 0.0, kSecondOrderTol, false};
    for (size_t i = 0; i < instances; ++i) {
      check.max_rel_err = std::max(check.max_rel_err, second_order_penalty_case(rng));
    }
    check.pass = check.max_rel_err < check.tolerance;
    results.push_back(check);
  }

  if (inject_error) {
    OpCheck check{"corrupted_derivative_fixture", 0.0, kFirstOrderTol, false};
    check.max_rel_err = corrupted_case(rng);
    check.pass = check.max_rel_err < check.tolerance;
    results.push_back(check);
  }
  return results;
}

bool all_passed(const std::vector<OpCheck>& checks) {
  for (const OpCheck& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

}  // namespace vitalsynth
