#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vitalsynth/errors.hpp"
#include "vitalsynth/gradcheck.hpp"
#include "vitalsynth/nn.hpp"

using namespace vitalsynth;

TEST_CASE("parameter set: unique names, deterministic order, lookup errors") {
  ParameterSet ps;
  ps.insert("b", Tensor::scalar(2.0));
  ps.insert("a", Tensor::scalar(1.0));
  CHECK_THROWS_AS(ps.insert("a", Tensor::scalar(0.0)), ContractError);
  CHECK(ps.names() == std::vector<std::string>{"a", "b"});
  CHECK(ps.at("a").value() == 1.0);
  CHECK_THROWS_AS(ps.at("missing"), LookupError);
  CHECK_THROWS_AS(ps.set("missing", Tensor::scalar(0.0)), LookupError);
}

TEST_CASE("linear_forward") {
  ParameterSet ps;
  ps.insert("fc.weight", Tensor::from({2, 2}, {1, 0, 0, 1}));
  ps.insert("fc.bias", Tensor::zeros({2}));
  Tensor x = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor out = linear_forward(ps, x, "fc");
  CHECK(out.values() == x.values());

  ParameterSet zero;
  zero.insert("fc.weight", Tensor::zeros({2, 3}));
  zero.insert("fc.bias", Tensor::from({2}, {1, 2}));
  Tensor rows = linear_forward(zero, Tensor::zeros({4, 3}), "fc");
  for (size_t i = 0; i < 4; ++i) {
    CHECK(rows.at(2 * i) == 1.0);
    CHECK(rows.at(2 * i + 1) == 2.0);
  }

  CHECK_THROWS_AS(linear_forward(ps, x, "nope"), LookupError);
  CHECK_THROWS_AS(linear_forward(ps, Tensor::zeros({2, 5}), "fc"), ShapeError);
}

TEST_CASE("embedding_lookup") {
  ParameterSet ps;
  ps.insert("embed", Tensor::from({2, 2}, {1, 0, 0, 1}));
  Tensor out = embedding_lookup(ps, "embed", std::vector<int>{0, 1});
  CHECK(out.values() == std::vector<double>{1, 0, 0, 1});

  Tensor repeated = embedding_lookup(ps, "embed", std::vector<int>{1, 1, 1});
  for (size_t i = 0; i < 3; ++i) {
    CHECK(repeated.at(2 * i) == 0.0);
    CHECK(repeated.at(2 * i + 1) == 1.0);
  }

  CHECK_THROWS_AS(embedding_lookup(ps, "embed", std::vector<int>{2}), DomainError);
  CHECK_THROWS_AS(embedding_lookup(ps, "embed", Tensor::from({1}, {0.5})), DomainError);
  CHECK(embedding_lookup(ps, "embed", Tensor::from({2}, {1.0, 0.0})).at(1) == 1.0);

  // Gradient reaches only the looked-up rows.
  ParameterSet tracked;
  tracked.insert("embed", Tensor::leaf({2, 2}, {0.3, -0.2, 0.7, 0.1}));
  Tensor picked = embedding_lookup(tracked, "embed", std::vector<int>{0, 0});
  Tensor g = grad(sum(picked), {tracked.at("embed")})[0];
  CHECK(g.at(0) == 2.0);
  CHECK(g.at(1) == 2.0);
  CHECK(g.at(2) == 0.0);
  CHECK(g.at(3) == 0.0);
}

TEST_CASE("lstm_forward zero weights and base case") {
  const size_t hidden = 3;
  ParameterSet ps;
  for (const ParamSpec& spec : lstm_param_specs("lstm", 2, hidden, 1)) {
    ps.insert(spec.name, Tensor::zeros(spec.shape));
  }
  LstmOptions opts;
  opts.hidden_size = hidden;

  // All-zero weights: gates sit at 0.5, the candidate at 0, so the cell and
  // hidden state stay exactly zero.
  Tensor out = lstm_forward(ps, Tensor::from({1, 4, 2}, std::vector<double>(8, 1.0)),
                            "lstm", opts);
  CHECK(out.shape() == Shape{1, hidden});
  for (double v : out.values()) CHECK(v == 0.0);

  // T = 1 equals a single cell step computed by hand.
  ParameterSet cell;
  Rng rng(5);
  for (const ParamSpec& spec : lstm_param_specs("lstm", 2, 1, 1)) {
    std::vector<double> v(shape_numel(spec.shape));
    for (double& x : v) x = rng.uniform(-0.5, 0.5);
    cell.insert(spec.name, Tensor::from(spec.shape, v));
  }
  LstmOptions one;
  one.hidden_size = 1;
  Tensor x = Tensor::from({1, 1, 2}, {0.4, -0.6});
  Tensor h1 = lstm_forward(cell, x, "lstm", one);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const auto& wi = cell.at("lstm.l0.w_ih").values();  // row blocks: i, f, g, o
  const auto& wh = cell.at("lstm.l0.w_hh").values();
  (void)wh;  // initial hidden state is zero
  const auto& bi = cell.at("lstm.l0.b_ih").values();
  const auto& bh = cell.at("lstm.l0.b_hh").values();
  const double zi = wi[0] * 0.4 + wi[1] * -0.6 + bi[0] + bh[0];
  const double zg = wi[4] * 0.4 + wi[5] * -0.6 + bi[2] + bh[2];
  const double zo = wi[6] * 0.4 + wi[7] * -0.6 + bi[3] + bh[3];
  const double c = sig(zi) * std::tanh(zg);  // previous cell is zero
  const double expected = sig(zo) * std::tanh(c);
  CHECK(std::abs(h1.value() - expected) < 1e-12);

  CHECK_THROWS_AS(lstm_forward(ps, Tensor::zeros({1, 4, 5}), "lstm", opts), ShapeError);
}

TEST_CASE("lstm gradients through 20 steps match finite differences") {
  const size_t features = 2, hidden = 3;
  Rng rng(31);
  auto rand_shape = [&](Shape s, double b) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.uniform(-b, b);
    return Tensor::from(std::move(s), std::move(v));
  };
  Tensor x = rand_shape({1, 20, features}, 1.0);
  Tensor w_ih = rand_shape({4 * hidden, features}, 0.5);
  Tensor w_hh = rand_shape({4 * hidden, hidden}, 0.5);
  Tensor b_ih = rand_shape({4 * hidden}, 0.2);
  Tensor b_hh = rand_shape({4 * hidden}, 0.2);
  auto fn = [hidden](const std::vector<Tensor>& in) {
    ParameterSet ps;
    ps.insert("lstm.l0.w_ih", in[1]);
    ps.insert("lstm.l0.w_hh", in[2]);
    ps.insert("lstm.l0.b_ih", in[3]);
    ps.insert("lstm.l0.b_hh", in[4]);
    LstmOptions opts;
    opts.hidden_size = hidden;
    return sum(lstm_forward(ps, in[0], "lstm", opts));
  };
  CHECK(finite_difference_check(fn, {x, w_ih, w_hh, b_ih, b_hh}) < 1e-4);
}

TEST_CASE("two-layer lstm runs and differentiates") {
  const size_t features = 2, hidden = 3;
  ParameterSet ps = init_parameters(lstm_param_specs("lstm", features, hidden, 2), 11);
  LstmOptions opts;
  opts.hidden_size = hidden;
  opts.layers = 2;
  Tensor x = Tensor::full({2, 5, features}, 0.3);
  Tensor out = lstm_forward(ps, x, "lstm", opts);
  CHECK(out.shape() == Shape{2, hidden});
  auto grads = grad(sum(out), ps.tensors());
  CHECK(grads.size() == ps.size());
}

TEST_CASE("init_parameters law and determinism") {
  const std::vector<ParamSpec> specs = {
      {"w", {8, 4}, ParamRole::linear_weight},  // fan_in 4 -> bound 0.5
      {"b", {8}, ParamRole::bias},
      {"e", {2, 100}, ParamRole::embedding},
  };
  ParameterSet a = init_parameters(specs, 7);
  ParameterSet b = init_parameters(specs, 7);
  for (const std::string& name : a.names()) {
    CHECK(a.at(name).values() == b.at(name).values());
  }
  ParameterSet c = init_parameters(specs, 8);
  CHECK(a.at("w").values() != c.at("w").values());

  for (double v : a.at("w").values()) CHECK(std::abs(v) <= 0.5);
  for (double v : a.at("b").values()) CHECK(v == 0.0);

  // Embedding draws ~ N(0,1): the mean of 1e4 samples sits near 0.
  std::vector<ParamSpec> big = {{"e", {100, 100}, ParamRole::embedding}};
  ParameterSet e = init_parameters(big, 21);
  double mean = 0.0;
  for (double v : e.at("e").values()) mean += v;
  mean /= 1e4;
  CHECK(std::abs(mean) < 0.02);

  // Uniform weights also center on 0.
  std::vector<ParamSpec> wide = {{"w", {100, 100}, ParamRole::linear_weight}};
  ParameterSet w = init_parameters(wide, 13);
  double wmean = 0.0;
  for (double v : w.at("w").values()) wmean += v;
  wmean /= 1e4;
  CHECK(std::abs(wmean) < 0.02);
}

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged") {
  ParameterSet ps;
  ps.insert("w", Tensor::leaf({2}, {1.0, -2.0}));
  Rmsprop opt({5e-5});
  opt.step(ps, {Tensor::zeros({2})});
  CHECK(ps.at("w").values() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("rmsprop: first step with unit gradient") {
  // v = 0.01, step = lr / (sqrt(0.01) + 1e-8) ~= lr / 0.1 = 5e-4.
  ParameterSet ps;
  ps.insert("w", Tensor::leaf({1}, {1.0}));
  Rmsprop opt({5e-5});
  opt.step(ps, {Tensor::from({1}, {1.0})});
  const auto* v = opt.square_avg("w");
  REQUIRE(v != nullptr);
  CHECK(std::abs((*v)[0] - 0.01) < 1e-15);
  CHECK(std::abs(ps.at("w").at(0) - (1.0 - 5e-4)) < 1e-10);
  CHECK(opt.steps() == 1);
}

TEST_CASE("rmsprop: descends f(theta) = theta^2 and stays finite") {
  ParameterSet ps;
  ps.insert("theta", Tensor::leaf({}, {1.0}));
  Rmsprop opt({1e-2});
  double prev = 1.0;
  for (int i = 0; i < 500; ++i) {
    Tensor theta = ps.at("theta");
    Tensor f = mul(theta, theta);
    opt.step(ps, grad(f, {theta}));
    const double value = ps.at("theta").value();
    CHECK(std::isfinite(value));
    const double fv = value * value;
    CHECK(fv <= prev + 1e-12);
    prev = fv;
  }
  CHECK(prev < 1e-4);

  CHECK_THROWS_AS(opt.step(ps, {Tensor::zeros({5})}), ShapeError);
}

TEST_CASE("softmax cross entropy agrees with a direct computation") {
  Tensor logits = Tensor::from({2, 2}, {2.0, -1.0, 0.5, 0.5});
  const std::vector<int> labels = {0, 1};
  const double l0 = -2.0 + std::log(std::exp(2.0) + std::exp(-1.0));
  const double l1 = -0.5 + std::log(std::exp(0.5) + std::exp(0.5));
  CHECK(std::abs(softmax_cross_entropy(logits, labels).value() - (l0 + l1) / 2.0) <
        1e-12);
}
