#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vitalsynth/data.hpp"
#include "vitalsynth/nn.hpp"

#include "json.hpp"

namespace vitalsynth {

struct ClassifierConfig {
  size_t hidden_size = 32;
  size_t lstm_layers = 1;
  double dropout_rate = 0.0;
  double learning_rate = 1e-3;
  size_t batch_size = 32;  // even
  size_t epochs = 20;
  uint64_t seed = 0;

  void validate() const;
};

// Randomized-search sampling laws. Discrete fields draw uniformly from the
// choice sets; the learning rate draws log-uniformly from [lr_lo, lr_hi].
struct HPOSpace {
  std::vector<size_t> hidden_size = {16, 32, 64, 128};
  std::vector<size_t> lstm_layers = {1, 2};
  std::vector<double> dropout = {0.0, 0.2, 0.5};
  double lr_lo = 1e-4;
  double lr_hi = 1e-2;
  std::vector<size_t> batch_size = {32, 64};
  std::vector<size_t> epochs = {20, 50, 100};
  size_t trials = 20;
  uint64_t seed = 0;
  bool parallel = false;

  void validate() const;
  ClassifierConfig sample(size_t trial_index) const;
};

// Never serialized; the privacy gate is the only consumer.
struct ConfusionMatrix {
  size_t tn = 0, fp = 0, fn = 0, tp = 0;
  size_t total() const { return tn + fp + fn + tp; }
};

// The only evaluation output that leaves the process: per-class accuracies
// and their mean. Carries no counts, so the class ratio of the underlying
// data cannot be recovered from it.
struct MetricsReport {
  std::string role;  // "real" or "proxy"
  std::vector<std::string> channels;
  double acc_class0 = 0.0;  // specificity
  double acc_class1 = 0.0;  // sensitivity
  double balanced_accuracy = 0.0;

  nlohmann::json to_json() const;
  std::string to_string() const;
};

struct ClassifierModel {
  ClassifierConfig config;
  ParameterSet params;
  size_t features = 0;
};

// LSTM final hidden state -> fully connected -> 2 logits.
Tensor classifier_forward(const ClassifierModel& model, const Tensor& x, bool training,
                          Rng* dropout_rng);

// Softmax cross-entropy over balanced mini-batches with RMSprop, for
// cfg.epochs passes of ceil(n / batch_size) batches each. Deterministic
// given cfg.seed; a non-finite loss aborts with NumericalError.
ClassifierModel train_classifier(const LabeledDataset& train_ds, const ClassifierConfig& cfg);

// Argmax predictions; an exact logit tie resolves to class 0.
std::vector<int> classifier_predict(const ClassifierModel& model, const LabeledDataset& ds);

// acc_y = fraction of class-y examples predicted y. Both classes must occur.
std::pair<double, double> per_class_accuracy(const std::vector<int>& preds,
                                             const std::vector<int>& labels);
double balanced_accuracy(double acc0, double acc1);

ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                 const std::vector<int>& labels);

// Projects a confusion matrix down to the three permitted metrics.
MetricsReport privacy_gate(const ConfusionMatrix& cm, const std::string& role,
                           const std::vector<std::string>& channels);

struct TrialRecord {
  size_t index = 0;
  ClassifierConfig config;
  std::optional<double> score;  // balanced accuracy; empty if skipped
  std::string skip_reason;
};

struct SearchResult {
  ClassifierConfig best;
  double best_score = 0.0;
  std::vector<TrialRecord> log;
};

// Argmax over scored trials; equal scores resolve to the lower trial index,
// so the winner does not depend on the log's ordering. Null if none scored.
const TrialRecord* best_trial(const std::vector<TrialRecord>& log);

// Trains one classifier per sampled config on `train` (normalized) and
// scores balanced accuracy on `test`; returns the argmax with ties resolved
// to the earliest trial. Failing trials are logged and skipped; if all fail,
// throws. Trials are independently seeded from (space.seed, index), so
// parallel and serial execution give identical logs.
SearchResult random_search(const LabeledDataset& train, const LabeledDataset& test,
                           const HPOSpace& space);

struct TstrResult {
  MetricsReport real_report;
  MetricsReport proxy_report;
  SearchResult search;
};

// Full protocol: stratified 70/30 split of the real data, randomized search
// on the real split, then the found config trained once on real and once on
// the proxy, both evaluated on the same held-out real test split. Each
// training set is normalized with its own statistics, and the test split is
// normalized with the statistics of whichever set the classifier saw.
TstrResult tstr_protocol(const LabeledDataset& real_ds, const LabeledDataset& proxy_ds,
                         const HPOSpace& space, double test_fraction = 0.30);

}  // namespace vitalsynth
