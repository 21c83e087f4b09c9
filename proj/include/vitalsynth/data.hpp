#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vitalsynth/rng.hpp"
#include "vitalsynth/tensor.hpp"

namespace vitalsynth {

// Every series is exactly this many sequential samples long.
inline constexpr size_t kTimeSteps = 20;

struct ChannelSpec {
  std::string name;
  std::string unit;
  double lower = 0.0;
  double upper = 0.0;
};

// The five supported vital-sign channels with their admissible ranges, in
// canonical column order.
const std::vector<ChannelSpec>& vital_sign_channels();
const ChannelSpec& channel_by_name(const std::string& name);  // DomainError
std::vector<ChannelSpec> channels_by_names(const std::vector<std::string>& names);
// Short display codes: T, RR, HR, SBP, DBP; a systolic/diastolic pair
// collapses to the single code ABP.
std::vector<std::string> channel_short_codes(const std::vector<ChannelSpec>& channels);

struct PatientSeries {
  std::string patient_id;
  // kTimeSteps x channels, time-major row-major.
  std::vector<double> values;
  int label = 0;  // 1 = transitioned to intensive care, 0 = discharged

  double at(size_t t, size_t channel, size_t n_channels) const {
    return values[t * n_channels + channel];
  }
};

// Per-channel centering mean and post-centering max absolute value.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> max_abs;
};

struct LabeledDataset {
  std::vector<PatientSeries> series;
  std::vector<ChannelSpec> channels;
  // Present iff the values are normalized.
  std::optional<NormStats> norm_stats;

  size_t size() const { return series.size(); }
  size_t n_channels() const { return channels.size(); }
  std::vector<int> labels() const;
  std::array<size_t, 2> class_counts() const;
};

// CSV schema: header patient_id,t_index,<channel columns...>,label with the
// channel columns a non-empty subset of the canonical five in canonical
// order; one row per (patient, t_index) with t_index in 0..19 and a label
// constant per patient. UTF-8, comma separator, '.' decimal point.
LabeledDataset parse_csv(std::istream& in);
void write_csv(const LabeledDataset& ds, std::ostream& out);
LabeledDataset read_csv_file(const std::string& path);
void write_csv_file(const LabeledDataset& ds, const std::string& path);

// Keeps the named channels (canonical order) and drops the rest.
LabeledDataset select_channels(const LabeledDataset& ds,
                               const std::vector<std::string>& names);

// Retains exactly the patients whose every value lies inside the channel
// bounds, inclusive. Requires an unnormalized dataset.
LabeledDataset filter_ranges(const LabeledDataset& ds);

// x' = (x - mean_c) / max_abs_c per channel; statistics fitted on `ds`
// itself, or supplied externally (e.g. training-split statistics applied to
// a test split). A constant channel is a DegenerateChannelError.
LabeledDataset normalize(const LabeledDataset& ds);
LabeledDataset normalize(const LabeledDataset& ds, const NormStats& stats);
LabeledDataset denormalize(const LabeledDataset& ds);

// Stratified by label, deterministic given the rng state; per-class test
// counts are round(count * test_fraction).
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           double test_fraction,
                                                           Rng& rng);

// Draws index batches with replacement: batch_size/2 indices per class,
// class 0 first. Requires both classes present and an even batch size.
class BalancedSampler {
 public:
  BalancedSampler(const LabeledDataset& ds, size_t batch_size, uint64_t seed);
  std::vector<size_t> next();
  // Labels aligned with next()'s positions.
  std::vector<int> batch_labels() const;

 private:
  std::vector<size_t> by_class_[2];
  size_t batch_size_;
  Rng rng_;
};

// Gathers the selected series into a [n, kTimeSteps, channels] constant.
Tensor dataset_tensor(const LabeledDataset& ds, const std::vector<size_t>& idx);
std::vector<int> dataset_labels(const LabeledDataset& ds, const std::vector<size_t>& idx);

}  // namespace vitalsynth
