#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vitalsynth/errors.hpp"
#include "vitalsynth/eval.hpp"
#include "vitalsynth/gradcheck.hpp"

#include "json.hpp"

using namespace vitalsynth;

namespace {

// Linearly separable toy classes: class 0 constant -0.5, class 1 +0.5, on
// two channels (values already roughly normalized).
LabeledDataset separable_dataset(size_t per_class, double value = 0.5) {
  LabeledDataset ds;
  ds.channels = channels_by_names({"temperature", "heart_rate"});
  for (size_t i = 0; i < 2 * per_class; ++i) {
    PatientSeries s;
    s.patient_id = "p" + std::to_string(i);
    s.label = i < per_class ? 0 : 1;
    s.values.assign(kTimeSteps * 2, s.label == 1 ? value : -value);
    ds.series.push_back(std::move(s));
  }
  ds.norm_stats = NormStats{{0.0, 0.0}, {1.0, 1.0}};
  return ds;
}

ClassifierConfig small_config() {
  ClassifierConfig cfg;
  cfg.hidden_size = 8;
  cfg.lstm_layers = 1;
  cfg.dropout_rate = 0.0;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 8;
  cfg.epochs = 10;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("classifier logits shape and zero-weight tie resolution") {
  ClassifierModel model;
  model.config = small_config();
  model.features = 2;
  ParameterSet ps;
  for (const ParamSpec& spec :
       lstm_param_specs("clf.lstm", 2, model.config.hidden_size, 1)) {
    ps.insert(spec.name, Tensor::zeros(spec.shape));
  }
  ps.insert("clf.fc.weight", Tensor::zeros({2, model.config.hidden_size}));
  ps.insert("clf.fc.bias", Tensor::zeros({2}));
  model.params = ps;

  Tensor logits = classifier_forward(model, Tensor::zeros({8, kTimeSteps, 2}),
                                     /*training=*/false, nullptr);
  CHECK(logits.shape() == Shape{8, 2});
  for (double v : logits.values()) CHECK(v == 0.0);

  // Equal logits predict class 0.
  LabeledDataset ds = separable_dataset(3);
  const std::vector<int> preds = classifier_predict(model, ds);
  for (int p : preds) CHECK(p == 0);
}

TEST_CASE("classifier gradients pass the finite-difference check") {
  const size_t features = 2, hidden = 3;
  Rng rng(41);
  auto rand_shape = [&](Shape s, double b) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.uniform(-b, b);
    return Tensor::from(std::move(s), std::move(v));
  };
  Tensor x = rand_shape({2, kTimeSteps, features}, 1.0);
  Tensor w_ih = rand_shape({4 * hidden, features}, 0.5);
  Tensor w_hh = rand_shape({4 * hidden, hidden}, 0.5);
  Tensor b_ih = rand_shape({4 * hidden}, 0.2);
  Tensor b_hh = rand_shape({4 * hidden}, 0.2);
  Tensor fc_w = rand_shape({2, hidden}, 0.5);
  Tensor fc_b = rand_shape({2}, 0.2);
  const std::vector<int> labels = {0, 1};
  auto fn = [&](const std::vector<Tensor>& in) {
    ClassifierModel model;
    model.config.hidden_size = hidden;
    model.config.lstm_layers = 1;
    model.features = features;
    model.params.insert("clf.lstm.l0.w_ih", in[1]);
    model.params.insert("clf.lstm.l0.w_hh", in[2]);
    model.params.insert("clf.lstm.l0.b_ih", in[3]);
    model.params.insert("clf.lstm.l0.b_hh", in[4]);
    model.params.insert("clf.fc.weight", in[5]);
    model.params.insert("clf.fc.bias", in[6]);
    Tensor logits = classifier_forward(model, in[0], false, nullptr);
    return softmax_cross_entropy(logits, labels);
  };
  CHECK(finite_difference_check(fn, {x, w_ih, w_hh, b_ih, b_hh, fc_w, fc_b}) < 1e-4);
}

TEST_CASE("train_classifier: determinism, lr = 0 freeze, separable convergence") {
  LabeledDataset ds = separable_dataset(16);
  ClassifierConfig cfg = small_config();

  ClassifierModel a = train_classifier(ds, cfg);
  ClassifierModel b = train_classifier(ds, cfg);
  for (const std::string& name : a.params.names()) {
    CHECK(a.params.at(name).values() == b.params.at(name).values());
  }

  ClassifierConfig frozen = cfg;
  frozen.learning_rate = 0.0;
  frozen.epochs = 1;
  ClassifierModel f = train_classifier(ds, frozen);
  Rng master(cfg.seed);
  const uint64_t init_seed = master.fork_seed();
  std::vector<ParamSpec> specs = lstm_param_specs("clf.lstm", 2, cfg.hidden_size, 1);
  specs.push_back({"clf.fc.weight", {2, cfg.hidden_size}, ParamRole::linear_weight});
  specs.push_back({"clf.fc.bias", {2}, ParamRole::bias});
  ParameterSet init = init_parameters(specs, init_seed);
  for (const std::string& name : f.params.names()) {
    CHECK(f.params.at(name).values() == init.at(name).values());
  }

  // Training accuracy reaches 1.0 on the separable toy within the budget.
  ClassifierConfig full = cfg;
  full.epochs = 20;
  ClassifierModel trained = train_classifier(ds, full);
  auto [acc0, acc1] = per_class_accuracy(classifier_predict(trained, ds), ds.labels());
  CHECK(acc0 == 1.0);
  CHECK(acc1 == 1.0);
}

TEST_CASE("per_class_accuracy and balanced_accuracy") {
  auto [acc0, acc1] = per_class_accuracy({1, 1, 0, 0}, {1, 0, 0, 1});
  CHECK(acc0 == 0.5);
  CHECK(acc1 == 0.5);
  CHECK(balanced_accuracy(acc0, acc1) == 0.5);

  auto [p0, p1] = per_class_accuracy({0, 1, 0, 1}, {0, 1, 0, 1});
  CHECK(p0 == 1.0);
  CHECK(p1 == 1.0);
  CHECK(balanced_accuracy(p0, p1) == 1.0);

  // Published-style pair: (0.732 + 0.478) / 2 = 0.605.
  CHECK(balanced_accuracy(0.732, 0.478) == doctest::Approx(0.605).epsilon(1e-12));

  CHECK_THROWS_AS(per_class_accuracy({0, 0}, {0, 0}), StratificationError);
  CHECK_THROWS_AS(per_class_accuracy({0}, {0, 1}), ShapeError);

  // Brute-force enumeration oracle on random vectors.
  Rng rng(71);
  for (int round = 0; round < 30; ++round) {
    const size_t n = 2 + rng.uniform_index(999);
    std::vector<int> preds(n), labels(n);
    for (size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.uniform_index(2));
      labels[i] = static_cast<int>(rng.uniform_index(2));
    }
    labels[0] = 0;
    labels[1] = 1;  // both classes guaranteed
    size_t c0 = 0, n0 = 0, c1 = 0, n1 = 0;
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] == 0) {
        ++n0;
        c0 += preds[i] == 0;
      } else {
        ++n1;
        c1 += preds[i] == 1;
      }
    }
    auto [a0, a1] = per_class_accuracy(preds, labels);
    CHECK(a0 == static_cast<double>(c0) / static_cast<double>(n0));
    CHECK(a1 == static_cast<double>(c1) / static_cast<double>(n1));
    CHECK(balanced_accuracy(a0, a1) == (a0 + a1) / 2.0);
  }
}

TEST_CASE("privacy gate emits only per-class accuracies") {
  MetricsReport r = privacy_gate(ConfusionMatrix{3, 1, 1, 3}, "real", {"T", "RR"});
  CHECK(r.acc_class0 == 0.75);
  CHECK(r.acc_class1 == 0.75);
  CHECK(r.balanced_accuracy == 0.75);
  CHECK(std::abs(r.balanced_accuracy - (r.acc_class0 + r.acc_class1) / 2.0) <= 1e-12);

  // Exactly the five permitted fields, none of them integer counts.
  nlohmann::json j = r.to_json();
  CHECK(j.size() == 5);
  CHECK(j.contains("role"));
  CHECK(j.contains("channels"));
  CHECK(j.contains("acc_class0"));
  CHECK(j.contains("acc_class1"));
  CHECK(j.contains("balanced_accuracy"));
  for (const auto& [key, value] : j.items()) {
    if (value.is_number()) {
      CHECK(value.get<double>() >= 0.0);
      CHECK(value.get<double>() <= 1.0);
    } else {
      CHECK((value.is_string() || value.is_array()));
    }
    CHECK_FALSE(value.is_number_integer());
  }

  // Different matrices with equal per-class accuracies are indistinguishable.
  MetricsReport r2 = privacy_gate(ConfusionMatrix{6, 2, 2, 6}, "real", {"T", "RR"});
  CHECK(r.to_string() == r2.to_string());

  CHECK_THROWS_AS(privacy_gate(ConfusionMatrix{0, 0, 1, 3}, "real", {"T"}),
                  StratificationError);
}

TEST_CASE("random_search: determinism, argmax contract, skip handling") {
  LabeledDataset train = separable_dataset(12);
  LabeledDataset test = separable_dataset(6);

  HPOSpace space;
  space.hidden_size = {4, 8};
  space.lstm_layers = {1};
  space.dropout = {0.0};
  space.lr_lo = 1e-3;
  space.lr_hi = 1e-2;
  space.batch_size = {8};
  space.epochs = {3};
  space.trials = 3;
  space.seed = 9;

  SearchResult a = random_search(train, test, space);
  SearchResult b = random_search(train, test, space);
  REQUIRE(a.log.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(a.log[i].config.hidden_size == b.log[i].config.hidden_size);
    CHECK(a.log[i].config.learning_rate == b.log[i].config.learning_rate);
    REQUIRE(a.log[i].score.has_value());
    CHECK(*a.log[i].score == *b.log[i].score);
  }
  // The returned score equals the max over the log, earliest on ties.
  double best = -1.0;
  size_t best_idx = 0;
  for (const TrialRecord& r : a.log) {
    if (r.score && *r.score > best) {
      best = *r.score;
      best_idx = r.index;
    }
  }
  CHECK(a.best_score == best);
  CHECK(a.best.seed == a.log[best_idx].config.seed);

  // Single-trial search returns that trial.
  HPOSpace single = space;
  single.trials = 1;
  SearchResult s = random_search(train, test, single);
  CHECK(s.best.seed == s.log[0].config.seed);

  // An odd batch size cannot feed the balanced sampler: those trials are
  // skipped with a reason; if every trial fails the search throws.
  HPOSpace broken = space;
  broken.batch_size = {7};
  broken.trials = 2;
  CHECK_THROWS_AS(random_search(train, test, broken), Error);

  // Mixed spaces skip the failing trials and still return a winner.
  HPOSpace mixed = space;
  mixed.batch_size = {7, 8};
  mixed.trials = 6;
  mixed.epochs = {2};
  SearchResult m = random_search(train, test, mixed);
  size_t skipped = 0, scored = 0;
  for (const TrialRecord& r : m.log) {
    if (r.score) {
      ++scored;
      CHECK(r.skip_reason.empty());
    } else {
      ++skipped;
      CHECK_FALSE(r.skip_reason.empty());
    }
  }
  CHECK(scored >= 1);
  CHECK(skipped >= 1);
  CHECK(m.best.batch_size == 8);

  // The winner is invariant under permutation of the trial log.
  std::vector<TrialRecord> shuffled = m.log;
  std::rotate(shuffled.begin(), shuffled.begin() + 3, shuffled.end());
  std::swap(shuffled[0], shuffled[2]);
  const TrialRecord* from_original = best_trial(m.log);
  const TrialRecord* from_shuffled = best_trial(shuffled);
  REQUIRE(from_original != nullptr);
  REQUIRE(from_shuffled != nullptr);
  CHECK(from_original->index == from_shuffled->index);
  CHECK(best_trial(std::vector<TrialRecord>{}) == nullptr);

  // Ties resolve to the lower trial index regardless of ordering.
  std::vector<TrialRecord> tied(3);
  for (size_t i = 0; i < 3; ++i) {
    tied[i].index = i;
    tied[i].score = 0.75;
  }
  std::swap(tied[0], tied[2]);
  CHECK(best_trial(tied)->index == 0);

  // Parallel execution produces the identical log.
  HPOSpace par = space;
  par.parallel = true;
  SearchResult p = random_search(train, test, par);
  for (size_t i = 0; i < 3; ++i) {
    REQUIRE(p.log[i].score.has_value());
    CHECK(*p.log[i].score == *a.log[i].score);
    CHECK(p.log[i].config.learning_rate == a.log[i].config.learning_rate);
  }
}

TEST_CASE("tstr_protocol: identity proxy stays within 0.02 balanced accuracy") {
  // Raw-unit separable data (values offset into channel ranges).
  LabeledDataset real;
  real.channels = channels_by_names({"temperature", "heart_rate"});
  Rng noise(3);
  for (size_t i = 0; i < 160; ++i) {
    PatientSeries s;
    s.patient_id = "r" + std::to_string(i);
    s.label = i < 80 ? 0 : 1;
    s.values.resize(kTimeSteps * 2);
    for (size_t t = 0; t < kTimeSteps; ++t) {
      const double delta = (s.label == 1 ? 1.0 : -1.0) + 0.1 * noise.normal();
      s.values[t * 2] = 37.0 + delta;
      s.values[t * 2 + 1] = 80.0 + 10.0 * delta;
    }
    real.series.push_back(std::move(s));
  }

  HPOSpace space;
  space.hidden_size = {8};
  space.lstm_layers = {1};
  space.dropout = {0.0};
  space.lr_lo = 2e-3;
  space.lr_hi = 8e-3;
  space.batch_size = {8};
  space.epochs = {5};
  space.trials = 2;
  space.seed = 13;

  TstrResult result = tstr_protocol(real, real, space);
  CHECK(result.real_report.role == "real");
  CHECK(result.proxy_report.role == "proxy");
  CHECK(result.real_report.channels == std::vector<std::string>{"T", "HR"});
  CHECK(result.proxy_report.channels == std::vector<std::string>{"T", "HR"});
  CHECK(std::abs(result.real_report.balanced_accuracy -
                 result.proxy_report.balanced_accuracy) <= 0.02);

  // Channel mismatch is rejected.
  LabeledDataset other = select_channels(real, {"temperature"});
  CHECK_THROWS_AS(tstr_protocol(real, other, space), ChannelMismatchError);
}
