#include "vitalsynth/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "vitalsynth/errors.hpp"

namespace vitalsynth {

const std::vector<ChannelSpec>& vital_sign_channels() {
  static const std::vector<ChannelSpec> channels = {
      {"temperature", "C", 30.0, 45.0},
      {"respiratory_rate", "breaths/min", 5.0, 75.0},
      {"heart_rate", "beats/min", 10.0, 250.0},
      {"systolic_abp", "mmHg", 20.0, 300.0},
      {"diastolic_abp", "mmHg", 10.0, 200.0},
  };
  return channels;
}

const ChannelSpec& channel_by_name(const std::string& name) {
  for (const ChannelSpec& c : vital_sign_channels()) {
    if (c.name == name) return c;
  }
  throw DomainError("unknown channel '" + name + "'");
}

std::vector<ChannelSpec> channels_by_names(const std::vector<std::string>& names) {
  if (names.empty()) throw DomainError("empty channel selection");
  std::vector<ChannelSpec> out;
  out.reserve(names.size());
  int last = -1;
  for (const std::string& n : names) {
    const auto& all = vital_sign_channels();
    int pos = -1;
    for (size_t i = 0; i < all.size(); ++i) {
      if (all[i].name == n) pos = static_cast<int>(i);
    }
    if (pos < 0) throw DomainError("unknown channel '" + n + "'");
    if (pos <= last) {
      throw DomainError("channels must be listed in canonical order without repeats");
    }
    last = pos;
    out.push_back(all[static_cast<size_t>(pos)]);
  }
  return out;
}

std::vector<std::string> channel_short_codes(const std::vector<ChannelSpec>& channels) {
  bool has_sbp = false, has_dbp = false;
  for (const ChannelSpec& c : channels) {
    has_sbp |= c.name == "systolic_abp";
    has_dbp |= c.name == "diastolic_abp";
  }
  const bool collapse_abp = has_sbp && has_dbp;
  std::vector<std::string> codes;
  for (const ChannelSpec& c : channels) {
    if (c.name == "temperature") codes.push_back("T");
    else if (c.name == "respiratory_rate") codes.push_back("RR");
    else if (c.name == "heart_rate") codes.push_back("HR");
    else if (c.name == "systolic_abp") codes.push_back(collapse_abp ? "ABP" : "SBP");
    else if (c.name == "diastolic_abp") {
      if (!collapse_abp) codes.push_back("DBP");
    }
  }
  return codes;
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(series.size());
  for (const PatientSeries& s : series) out.push_back(s.label);
  return out;
}

std::array<size_t, 2> LabeledDataset::class_counts() const {
  std::array<size_t, 2> counts{0, 0};
  for (const PatientSeries& s : series) ++counts[static_cast<size_t>(s.label)];
  return counts;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_number(const std::string& field, size_t line_no) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": non-numeric field '" +
                     field + "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct PendingPatient {
  size_t order = 0;
  std::vector<double> values;  // kTimeSteps * channels
  std::vector<bool> seen;      // kTimeSteps
  int label = 0;
};

}  // namespace

LabeledDataset parse_csv(std::istream& in) {
  std::string line;
  size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty input: header row required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  ++line_no;

  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 4 || header.front() != "patient_id" || header[1] != "t_index" ||
      header.back() != "label") {
    throw ParseError("line 1: header must be patient_id,t_index,<channels...>,label");
  }
  std::vector<std::string> channel_names(header.begin() + 2, header.end() - 1);
  std::vector<ChannelSpec> channels;
  try {
    channels = channels_by_names(channel_names);
  } catch (const DomainError& e) {
    throw ParseError(std::string("line 1: ") + e.what());
  }
  const size_t n_channels = channels.size();

  std::map<std::string, PendingPatient> pending;
  std::vector<std::string> order;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string& pid = fields[0];
    if (pid.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty patient_id");
    }
    const double t_raw = parse_number(fields[1], line_no);
    if (t_raw != std::floor(t_raw) || t_raw < 0 ||
        t_raw >= static_cast<double>(kTimeSteps)) {
      throw ParseError("line " + std::to_string(line_no) + ": t_index " + fields[1] +
                       " outside 0.." + std::to_string(kTimeSteps - 1));
    }
    const size_t t = static_cast<size_t>(t_raw);
    const double label_raw = parse_number(fields.back(), line_no);
    if (label_raw != 0.0 && label_raw != 1.0) {
      throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    const int label = static_cast<int>(label_raw);

    auto [it, inserted] = pending.try_emplace(pid);
    PendingPatient& p = it->second;
    if (inserted) {
      p.order = order.size();
      order.push_back(pid);
      p.values.assign(kTimeSteps * n_channels, 0.0);
      p.seen.assign(kTimeSteps, false);
      p.label = label;
    } else if (p.label != label) {
      throw LabelConflictError("patient '" + pid + "': conflicting labels (line " +
                               std::to_string(line_no) + ")");
    }
    if (p.seen[t]) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate t_index " +
                       std::to_string(t) + " for patient '" + pid + "'");
    }
    p.seen[t] = true;
    for (size_t c = 0; c < n_channels; ++c) {
      p.values[t * n_channels + c] = parse_number(fields[2 + c], line_no);
    }
  }

  LabeledDataset ds;
  ds.channels = std::move(channels);
  ds.series.reserve(order.size());
  for (const std::string& pid : order) {
    PendingPatient& p = pending.at(pid);
    for (size_t t = 0; t < kTimeSteps; ++t) {
      if (!p.seen[t]) {
        throw IncompleteSeriesError("patient '" + pid + "': missing t_index " +
                                    std::to_string(t));
      }
    }
    ds.series.push_back({pid, std::move(p.values), p.label});
  }
  return ds;
}

void write_csv(const LabeledDataset& ds, std::ostream& out) {
  out << "patient_id,t_index";
  for (const ChannelSpec& c : ds.channels) out << ',' << c.name;
  out << ",label\n";
  const size_t n_channels = ds.n_channels();
  for (const PatientSeries& s : ds.series) {
    for (size_t t = 0; t < kTimeSteps; ++t) {
      out << s.patient_id << ',' << t;
      for (size_t c = 0; c < n_channels; ++c) {
        out << ',' << format_number(s.values[t * n_channels + c]);
      }
      out << ',' << s.label << '\n';
    }
  }
}

LabeledDataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_csv(in);
}

void write_csv_file(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  write_csv(ds, out);
}

LabeledDataset select_channels(const LabeledDataset& ds,
                               const std::vector<std::string>& names) {
  std::vector<ChannelSpec> selected = channels_by_names(names);
  std::vector<size_t> cols;
  for (const ChannelSpec& want : selected) {
    bool found = false;
    for (size_t i = 0; i < ds.channels.size(); ++i) {
      if (ds.channels[i].name == want.name) {
        cols.push_back(i);
        found = true;
      }
    }
    if (!found) {
      throw ChannelMismatchError("channel '" + want.name + "' absent from dataset");
    }
  }
  LabeledDataset out;
  out.channels = std::move(selected);
  if (ds.norm_stats) {
    NormStats stats;
    for (size_t c : cols) {
      stats.mean.push_back(ds.norm_stats->mean[c]);
      stats.max_abs.push_back(ds.norm_stats->max_abs[c]);
    }
    out.norm_stats = std::move(stats);
  }
  out.series.reserve(ds.series.size());
  const size_t n_old = ds.n_channels();
  for (const PatientSeries& s : ds.series) {
    std::vector<double> v(kTimeSteps * cols.size());
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < cols.size(); ++c) {
        v[t * cols.size() + c] = s.values[t * n_old + cols[c]];
      }
    }
    out.series.push_back({s.patient_id, std::move(v), s.label});
  }
  return out;
}

LabeledDataset filter_ranges(const LabeledDataset& ds) {
  if (ds.norm_stats) {
    throw ContractError("filter_ranges requires an unnormalized dataset");
  }
  LabeledDataset out;
  out.channels = ds.channels;
  const size_t n_channels = ds.n_channels();
  for (const PatientSeries& s : ds.series) {
    bool keep = true;
    for (size_t t = 0; t < kTimeSteps && keep; ++t) {
      for (size_t c = 0; c < n_channels; ++c) {
        const double v = s.values[t * n_channels + c];
        if (v < ds.channels[c].lower || v > ds.channels[c].upper) {
          keep = false;
          break;
        }
      }
    }
    if (keep) out.series.push_back(s);
  }
  return out;
}

LabeledDataset normalize(const LabeledDataset& ds) {
  if (ds.norm_stats) throw ContractError("dataset already normalized");
  const size_t n_channels = ds.n_channels();
  NormStats stats;
  stats.mean.assign(n_channels, 0.0);
  stats.max_abs.assign(n_channels, 0.0);
  size_t count = 0;
  for (const PatientSeries& s : ds.series) {
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < n_channels; ++c) {
        stats.mean[c] += s.values[t * n_channels + c];
      }
    }
    count += kTimeSteps;
  }
  if (count == 0) throw ContractError("cannot fit normalization on an empty dataset");
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const PatientSeries& s : ds.series) {
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < n_channels; ++c) {
        stats.max_abs[c] = std::max(stats.max_abs[c],
                                    std::abs(s.values[t * n_channels + c] - stats.mean[c]));
      }
    }
  }
  for (size_t c = 0; c < n_channels; ++c) {
    if (stats.max_abs[c] == 0.0) {
      throw DegenerateChannelError("channel '" + ds.channels[c].name +
                                   "' is constant; cannot normalize");
    }
  }
  return normalize(ds, stats);
}

LabeledDataset normalize(const LabeledDataset& ds, const NormStats& stats) {
  if (ds.norm_stats) throw ContractError("dataset already normalized");
  const size_t n_channels = ds.n_channels();
  if (stats.mean.size() != n_channels || stats.max_abs.size() != n_channels) {
    throw ShapeError("normalization statistics cover " +
                     std::to_string(stats.mean.size()) + " channels, dataset has " +
                     std::to_string(n_channels));
  }
  for (size_t c = 0; c < n_channels; ++c) {
    if (!(stats.max_abs[c] > 0.0)) {
      throw DegenerateChannelError("channel '" + ds.channels[c].name +
                                   "' has non-positive max_abs");
    }
  }
  LabeledDataset out;
  out.channels = ds.channels;
  out.norm_stats = stats;
  out.series.reserve(ds.series.size());
  for (const PatientSeries& s : ds.series) {
    std::vector<double> v(s.values.size());
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < n_channels; ++c) {
        v[t * n_channels + c] =
            (s.values[t * n_channels + c] - stats.mean[c]) / stats.max_abs[c];
      }
    }
    out.series.push_back({s.patient_id, std::move(v), s.label});
  }
  return out;
}

LabeledDataset denormalize(const LabeledDataset& ds) {
  if (!ds.norm_stats) throw ContractError("dataset is not normalized");
  const NormStats& stats = *ds.norm_stats;
  const size_t n_channels = ds.n_channels();
  LabeledDataset out;
  out.channels = ds.channels;
  out.series.reserve(ds.series.size());
  for (const PatientSeries& s : ds.series) {
    std::vector<double> v(s.values.size());
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < n_channels; ++c) {
        v[t * n_channels + c] =
            s.values[t * n_channels + c] * stats.max_abs[c] + stats.mean[c];
      }
    }
    out.series.push_back({s.patient_id, std::move(v), s.label});
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           double test_fraction,
                                                           Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("test_fraction must lie in (0,1)");
  }
  std::vector<size_t> by_class[2];
  for (size_t i = 0; i < ds.series.size(); ++i) {
    by_class[static_cast<size_t>(ds.series[i].label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw StratificationError("stratified split requires both classes present");
  }

  std::vector<size_t> test_idx;
  std::vector<bool> in_test(ds.series.size(), false);
  for (auto& cls : by_class) {
    // Fisher-Yates with the caller's rng, then take the leading slice.
    for (size_t i = cls.size(); i > 1; --i) {
      const size_t j = rng.uniform_index(i);
      std::swap(cls[i - 1], cls[j]);
    }
    const size_t k = static_cast<size_t>(
        std::llround(test_fraction * static_cast<double>(cls.size())));
    for (size_t i = 0; i < k; ++i) in_test[cls[i]] = true;
  }

  LabeledDataset train, test;
  train.channels = test.channels = ds.channels;
  train.norm_stats = test.norm_stats = ds.norm_stats;
  for (size_t i = 0; i < ds.series.size(); ++i) {
    (in_test[i] ? test : train).series.push_back(ds.series[i]);
  }
  return {std::move(train), std::move(test)};
}

BalancedSampler::BalancedSampler(const LabeledDataset& ds, size_t batch_size,
                                 uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0 || batch_size % 2 != 0) {
    throw ContractError("balanced sampling requires an even batch size, got " +
                        std::to_string(batch_size));
  }
  for (size_t i = 0; i < ds.series.size(); ++i) {
    by_class_[static_cast<size_t>(ds.series[i].label)].push_back(i);
  }
  if (by_class_[0].empty() || by_class_[1].empty()) {
    throw StratificationError("balanced sampling requires both classes present");
  }
}

std::vector<size_t> BalancedSampler::next() {
  std::vector<size_t> batch;
  batch.reserve(batch_size_);
  const size_t half = batch_size_ / 2;
  for (size_t cls = 0; cls < 2; ++cls) {
    for (size_t i = 0; i < half; ++i) {
      batch.push_back(by_class_[cls][rng_.uniform_index(by_class_[cls].size())]);
    }
  }
  return batch;
}

std::vector<int> BalancedSampler::batch_labels() const {
  std::vector<int> labels(batch_size_, 0);
  for (size_t i = batch_size_ / 2; i < batch_size_; ++i) labels[i] = 1;
  return labels;
}

Tensor dataset_tensor(const LabeledDataset& ds, const std::vector<size_t>& idx) {
  const size_t n_channels = ds.n_channels();
  std::vector<double> v;
  v.reserve(idx.size() * kTimeSteps * n_channels);
  for (size_t i : idx) {
    const PatientSeries& s = ds.series.at(i);
    v.insert(v.end(), s.values.begin(), s.values.end());
  }
  return Tensor::from({idx.size(), kTimeSteps, n_channels}, std::move(v));
}

std::vector<int> dataset_labels(const LabeledDataset& ds, const std::vector<size_t>& idx) {
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (size_t i : idx) labels.push_back(ds.series.at(i).label);
  return labels;
}

}  // namespace vitalsynth
