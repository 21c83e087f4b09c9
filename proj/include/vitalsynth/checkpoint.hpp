#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitalsynth/data.hpp"
#include "vitalsynth/gan.hpp"
#include "vitalsynth/tensor.hpp"

namespace vitalsynth {

// On-disk layout (little-endian):
//   bytes 0..3   magic "VSCP"
//   bytes 4..7   uint32 manifest length N
//   bytes 8..8+N manifest: UTF-8 JSON with sorted keys holding
//                format_version, arch, train, channels, norm_stats and the
//                tensor directory (name, shape, offset, bytes per entry,
//                offsets relative to the payload start, contiguous and in
//                directory order)
//   remainder    payload: concatenated float32 arrays
// Saving is byte-deterministic; loading validates the directory before
// returning.
inline constexpr int kCheckpointVersion = 1;

struct CheckpointBundle {
  int format_version = kCheckpointVersion;
  std::optional<ArchitectureConfig> arch;
  std::optional<TrainConfig> train;
  std::optional<NormStats> norm_stats;
  std::vector<std::string> channel_names;
  // Directory order is the map order (lexicographic by name). Tensors are
  // stored float32 on disk and widened back to float64 on load.
  std::map<std::string, Tensor> tensors;
};

CheckpointBundle bundle_from_model(const GanModel& model, const TrainConfig& train,
                                   const NormStats& stats,
                                   const std::vector<std::string>& channel_names);
GanModel model_from_bundle(const CheckpointBundle& bundle);

size_t save_checkpoint(const CheckpointBundle& bundle, std::ostream& out);
CheckpointBundle load_checkpoint(std::istream& in);
size_t save_checkpoint_file(const CheckpointBundle& bundle, const std::string& path);
CheckpointBundle load_checkpoint_file(const std::string& path);

}  // namespace vitalsynth
