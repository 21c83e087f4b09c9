#include "vitalsynth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "vitalsynth/errors.hpp"

namespace vitalsynth {

void ClassifierConfig::validate() const {
  if (hidden_size == 0) throw ContractError("classifier: hidden_size must be >= 1");
  if (lstm_layers == 0) throw ContractError("classifier: lstm_layers must be >= 1");
  if (epochs == 0) throw ContractError("classifier: epochs must be >= 1");
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ContractError("classifier: batch_size must be even and positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("classifier: dropout_rate must lie in [0,1)");
  }
}

void HPOSpace::validate() const {
  if (trials == 0) throw ContractError("hpo: trial count must be >= 1");
  if (hidden_size.empty() || lstm_layers.empty() || dropout.empty() ||
      batch_size.empty() || epochs.empty()) {
    throw ContractError("hpo: every choice set must be non-empty");
  }
  if (!(lr_lo > 0.0 && lr_hi >= lr_lo)) {
    throw ContractError("hpo: learning-rate range must satisfy 0 < lo <= hi");
  }
}

ClassifierConfig HPOSpace::sample(size_t trial_index) const {
  validate();
  Rng rng(Rng::splitmix(seed ^ (0x9e3779b97f4a7c15ULL * (trial_index + 1))));
  ClassifierConfig cfg;
  cfg.hidden_size = hidden_size[rng.uniform_index(hidden_size.size())];
  cfg.lstm_layers = lstm_layers[rng.uniform_index(lstm_layers.size())];
  cfg.dropout_rate = dropout[rng.uniform_index(dropout.size())];
  cfg.learning_rate = std::exp(rng.uniform(std::log(lr_lo), std::log(lr_hi)));
  cfg.batch_size = batch_size[rng.uniform_index(batch_size.size())];
  cfg.epochs = epochs[rng.uniform_index(epochs.size())];
  cfg.seed = rng.fork_seed();
  return cfg;
}

nlohmann::json MetricsReport::to_json() const {
  return nlohmann::json{{"role", role},
                        {"channels", channels},
                        {"acc_class0", acc_class0},
                        {"acc_class1", acc_class1},
                        {"balanced_accuracy", balanced_accuracy}};
}

std::string MetricsReport::to_string() const { return to_json().dump(); }

namespace {

std::vector<ParamSpec> classifier_param_specs(size_t features, const ClassifierConfig& cfg) {
  std::vector<ParamSpec> specs =
      lstm_param_specs("clf.lstm", features, cfg.hidden_size, cfg.lstm_layers);
  specs.push_back({"clf.fc.weight", {2, cfg.hidden_size}, ParamRole::linear_weight});
  specs.push_back({"clf.fc.bias", {2}, ParamRole::bias});
  return specs;
}

}  // namespace

Tensor classifier_forward(const ClassifierModel& model, const Tensor& x, bool training,
                          Rng* dropout_rng) {
  LstmOptions opts;
  opts.hidden_size = model.config.hidden_size;
  opts.layers = model.config.lstm_layers;
  opts.dropout_rate = model.config.dropout_rate;
  opts.training = training;
  opts.dropout_rng = dropout_rng;
  Tensor h = lstm_forward(model.params, x, "clf.lstm", opts);
  if (training && model.config.dropout_rate > 0.0 && dropout_rng) {
    h = dropout(h, model.config.dropout_rate, true, *dropout_rng);
  }
  return linear_forward(model.params, h, "clf.fc");
}

ClassifierModel train_classifier(const LabeledDataset& train_ds,
                                 const ClassifierConfig& cfg) {
  cfg.validate();
  if (train_ds.size() == 0) throw ContractError("train_classifier: empty dataset");

  Rng master(cfg.seed);
  const uint64_t init_seed = master.fork_seed();
  const uint64_t sampler_seed = master.fork_seed();
  Rng dropout_rng(master.fork_seed());

  ClassifierModel model;
  model.config = cfg;
  model.features = train_ds.n_channels();
  model.params = init_parameters(classifier_param_specs(model.features, cfg), init_seed);

  Rmsprop opt({cfg.learning_rate});
  BalancedSampler sampler(train_ds, cfg.batch_size, sampler_seed);
  const size_t steps_per_epoch =
      (train_ds.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t step = 0; step < steps_per_epoch; ++step) {
      const std::vector<size_t> batch = sampler.next();
      Tensor x = dataset_tensor(train_ds, batch);
      Tensor logits = classifier_forward(model, x, /*training=*/true, &dropout_rng);
      Tensor loss = softmax_cross_entropy(logits, dataset_labels(train_ds, batch));
      if (!std::isfinite(loss.value())) {
        throw NumericalError("classifier loss is not finite at epoch " +
                             std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1));
      }
      opt.step(model.params, grad(loss, model.params.tensors()));
    }
  }
  return model;
}

std::vector<int> classifier_predict(const ClassifierModel& model, const LabeledDataset& ds) {
  NoGradGuard guard;
  std::vector<int> preds;
  preds.reserve(ds.size());
  const size_t chunk = 256;
  for (size_t start = 0; start < ds.size(); start += chunk) {
    const size_t stop = std::min(ds.size(), start + chunk);
    std::vector<size_t> idx(stop - start);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Tensor logits = classifier_forward(model, dataset_tensor(ds, idx),
                                       /*training=*/false, nullptr);
    for (size_t i = 0; i < idx.size(); ++i) {
      // Exact tie resolves to class 0.
      preds.push_back(logits.at(i * 2 + 1) > logits.at(i * 2) ? 1 : 0);
    }
  }
  return preds;
}

std::pair<double, double> per_class_accuracy(const std::vector<int>& preds,
                                             const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw ShapeError("per_class_accuracy: " + std::to_string(preds.size()) +
                     " predictions for " + std::to_string(labels.size()) + " labels");
  }
  size_t count[2] = {0, 0}, correct[2] = {0, 0};
  for (size_t i = 0; i < preds.size(); ++i) {
    const size_t y = static_cast<size_t>(labels[i]);
    ++count[y];
    if (preds[i] == labels[i]) ++correct[y];
  }
  if (count[0] == 0 || count[1] == 0) {
    throw StratificationError("per_class_accuracy: a class is absent from the labels");
  }
  return {static_cast<double>(correct[0]) / static_cast<double>(count[0]),
          static_cast<double>(correct[1]) / static_cast<double>(count[1])};
}

double balanced_accuracy(double acc0, double acc1) { return (acc0 + acc1) / 2.0; }

ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                 const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw ShapeError("confusion_matrix: prediction/label size mismatch");
  }
  ConfusionMatrix cm;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0) {
      preds[i] == 0 ? ++cm.tn : ++cm.fp;
    } else {
      preds[i] == 1 ? ++cm.tp : ++cm.fn;
    }
  }
  return cm;
}

MetricsReport privacy_gate(const ConfusionMatrix& cm, const std::string& role,
                           const std::vector<std::string>& channels) {
  if (cm.tn + cm.fp == 0 || cm.tp + cm.fn == 0) {
    throw StratificationError("privacy_gate: a class is absent from the evaluation set");
  }
  MetricsReport report;
  report.role = role;
  report.channels = channels;
  report.acc_class0 =
      static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
  report.acc_class1 =
      static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  report.balanced_accuracy = balanced_accuracy(report.acc_class0, report.acc_class1);
  return report;
}

namespace {

TrialRecord run_trial(const LabeledDataset& train, const LabeledDataset& test,
                      const HPOSpace& space, size_t index) {
  TrialRecord record;
  record.index = index;
  record.config = space.sample(index);
  try {
    ClassifierModel model = train_classifier(train, record.config);
    auto [acc0, acc1] = per_class_accuracy(classifier_predict(model, test), test.labels());
    record.score = balanced_accuracy(acc0, acc1);
  } catch (const Error& e) {
    record.skip_reason = e.what();
  }
  return record;
}

}  // namespace

const TrialRecord* best_trial(const std::vector<TrialRecord>& log) {
  // Argmax on (score, lower trial index): independent of log ordering.
  const TrialRecord* best = nullptr;
  for (const TrialRecord& r : log) {
    if (!r.score) continue;
    if (best == nullptr || *r.score > *best->score ||
        (*r.score == *best->score && r.index < best->index)) {
      best = &r;
    }
  }
  return best;
}

SearchResult random_search(const LabeledDataset& train, const LabeledDataset& test,
                           const HPOSpace& space) {
  space.validate();

  std::vector<TrialRecord> log(space.trials);
  if (space.parallel) {
    std::vector<std::future<TrialRecord>> futures;
    futures.reserve(space.trials);
    for (size_t i = 0; i < space.trials; ++i) {
      futures.push_back(std::async(std::launch::async, run_trial, std::cref(train),
                                   std::cref(test), std::cref(space), i));
    }
    for (size_t i = 0; i < space.trials; ++i) log[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < space.trials; ++i) log[i] = run_trial(train, test, space, i);
  }

  SearchResult result;
  result.log = std::move(log);
  const TrialRecord* best = best_trial(result.log);
  if (best == nullptr) {
    std::string reasons;
    for (const TrialRecord& r : result.log) {
      reasons += "\n  trial " + std::to_string(r.index) + ": " + r.skip_reason;
    }
    throw Error("random_search: every trial failed" + reasons);
  }
  result.best = best->config;
  result.best_score = *best->score;
  return result;
}

TstrResult tstr_protocol(const LabeledDataset& real_ds, const LabeledDataset& proxy_ds,
                         const HPOSpace& space, double test_fraction) {
  space.validate();
  if (real_ds.channels.size() != proxy_ds.channels.size()) {
    throw ChannelMismatchError("tstr: real and proxy channel sets differ");
  }
  for (size_t i = 0; i < real_ds.channels.size(); ++i) {
    if (real_ds.channels[i].name != proxy_ds.channels[i].name) {
      throw ChannelMismatchError("tstr: channel '" + real_ds.channels[i].name +
                                 "' vs '" + proxy_ds.channels[i].name + "'");
    }
  }

  Rng split_rng(Rng::splitmix(space.seed ^ 0x7f4a7c15ULL));
  auto [real_train, real_test] = split_train_test(real_ds, test_fraction, split_rng);

  LabeledDataset real_train_n = normalize(real_train);
  const NormStats real_stats = *real_train_n.norm_stats;
  LabeledDataset real_test_n = normalize(real_test, real_stats);

  TstrResult result;
  result.search = random_search(real_train_n, real_test_n, space);
  const std::vector<std::string> codes = channel_short_codes(real_ds.channels);

  {
    ClassifierModel model = train_classifier(real_train_n, result.search.best);
    ConfusionMatrix cm =
        confusion_matrix(classifier_predict(model, real_test_n), real_test_n.labels());
    result.real_report = privacy_gate(cm, "real", codes);
  }
  {
    // Train-on-synthetic / test-on-real: the proxy brings its own scaling,
    // which is all a downstream user of the released data would have.
    LabeledDataset proxy_n = normalize(proxy_ds);
    LabeledDataset real_test_pn = normalize(real_test, *proxy_n.norm_stats);
    ClassifierModel model = train_classifier(proxy_n, result.search.best);
    ConfusionMatrix cm =
        confusion_matrix(classifier_predict(model, real_test_pn), real_test_pn.labels());
    result.proxy_report = privacy_gate(cm, "proxy", codes);
  }
  return result;
}

}  // namespace vitalsynth
