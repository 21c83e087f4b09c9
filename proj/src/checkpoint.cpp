#include "vitalsynth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "vitalsynth/errors.hpp"

#include "json.hpp"

namespace vitalsynth {

namespace {

using nlohmann::json;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

json arch_to_json(const ArchitectureConfig& a) {
  return json{{"signals", a.signals},
              {"label_embed", a.label_embed},
              {"seed_len", a.seed_len},
              {"hidden", a.hidden}};
}

ArchitectureConfig arch_from_json(const json& j) {
  ArchitectureConfig a;
  a.signals = j.at("signals").get<size_t>();
  a.label_embed = j.at("label_embed").get<size_t>();
  a.seed_len = j.at("seed_len").get<size_t>();
  a.hidden = j.at("hidden").get<size_t>();
  return a;
}

json train_to_json(const TrainConfig& t) {
  return json{{"lambda_gp", t.lambda_gp},
              {"n_critic", t.n_critic},
              {"learning_rate", t.learning_rate},
              {"batch_size", t.batch_size},
              {"generator_steps", t.generator_steps},
              {"seed", t.seed},
              {"dropout_rate", t.dropout_rate}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.lambda_gp = j.at("lambda_gp").get<double>();
  t.n_critic = j.at("n_critic").get<size_t>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.batch_size = j.at("batch_size").get<size_t>();
  t.generator_steps = j.at("generator_steps").get<size_t>();
  t.seed = j.at("seed").get<uint64_t>();
  t.dropout_rate = j.at("dropout_rate").get<double>();
  return t;
}

constexpr char kMagic[4] = {'V', 'S', 'C', 'P'};

}  // namespace

CheckpointBundle bundle_from_model(const GanModel& model, const TrainConfig& train,
                                   const NormStats& stats,
                                   const std::vector<std::string>& channel_names) {
  CheckpointBundle bundle;
  bundle.arch = model.arch;
  bundle.train = train;
  bundle.norm_stats = stats;
  bundle.channel_names = channel_names;
  for (const auto& [name, t] : model.generator.entries()) bundle.tensors.emplace(name, t.detach());
  for (const auto& [name, t] : model.critic.entries()) bundle.tensors.emplace(name, t.detach());
  return bundle;
}

GanModel model_from_bundle(const CheckpointBundle& bundle) {
  if (!bundle.arch) throw FormatError("checkpoint carries no architecture config");
  GanModel model;
  model.arch = *bundle.arch;
  for (const auto& [name, t] : bundle.tensors) {
    if (name.rfind("gen.", 0) == 0) {
      model.generator.insert(name, t.as_leaf());
    } else if (name.rfind("critic.", 0) == 0) {
      model.critic.insert(name, t.as_leaf());
    }
  }
  // Presence and shape checks come for free from a forward pass; here only
  // completeness is verified.
  for (const ParamSpec& spec : generator_param_specs(model.arch)) {
    if (!model.generator.contains(spec.name)) {
      throw FormatError("checkpoint is missing tensor '" + spec.name + "'");
    }
  }
  for (const ParamSpec& spec : critic_param_specs(model.arch)) {
    if (!model.critic.contains(spec.name)) {
      throw FormatError("checkpoint is missing tensor '" + spec.name + "'");
    }
  }
  return model;
}

size_t save_checkpoint(const CheckpointBundle& bundle, std::ostream& out) {
  json directory = json::array();
  size_t offset = 0;
  for (const auto& [name, t] : bundle.tensors) {
    const size_t bytes = t.numel() * 4;
    directory.push_back(json{{"name", name},
                             {"shape", t.shape()},
                             {"offset", offset},
                             {"bytes", bytes}});
    offset += bytes;
  }

  json manifest{{"format_version", bundle.format_version}, {"tensors", directory}};
  manifest["arch"] = bundle.arch ? arch_to_json(*bundle.arch) : json(nullptr);
  manifest["train"] = bundle.train ? train_to_json(*bundle.train) : json(nullptr);
  manifest["channels"] = bundle.channel_names;
  if (bundle.norm_stats) {
    manifest["norm_stats"] = json{{"mean", bundle.norm_stats->mean},
                                  {"max_abs", bundle.norm_stats->max_abs}};
  } else {
    manifest["norm_stats"] = json(nullptr);
  }

  const std::string header = manifest.dump();
  std::string blob;
  blob.reserve(8 + header.size() + offset);
  blob.append(kMagic, 4);
  put_u32(blob, static_cast<uint32_t>(header.size()));
  blob += header;
  for (const auto& [name, t] : bundle.tensors) {
    for (double v : t.values()) put_f32(blob, static_cast<float>(v));
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw FormatError("checkpoint write failed");
  return blob.size();
}

CheckpointBundle load_checkpoint(std::istream& in) {
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 4 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  if (blob.size() < 8) throw TruncationError("checkpoint header truncated");
  const uint32_t header_len = get_u32(bytes + 4);
  if (blob.size() < 8 + static_cast<size_t>(header_len)) {
    throw TruncationError("checkpoint manifest truncated");
  }
  json manifest;
  try {
    manifest = json::parse(blob.substr(8, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  CheckpointBundle bundle;
  try {
    bundle.format_version = manifest.at("format_version").get<int>();
    if (bundle.format_version != kCheckpointVersion) {
      throw VersionError("checkpoint format version " +
                         std::to_string(bundle.format_version) + ", expected " +
                         std::to_string(kCheckpointVersion));
    }
    if (!manifest.at("arch").is_null()) bundle.arch = arch_from_json(manifest.at("arch"));
    if (!manifest.at("train").is_null()) bundle.train = train_from_json(manifest.at("train"));
    bundle.channel_names = manifest.at("channels").get<std::vector<std::string>>();
    if (!manifest.at("norm_stats").is_null()) {
      NormStats stats;
      stats.mean = manifest.at("norm_stats").at("mean").get<std::vector<double>>();
      stats.max_abs = manifest.at("norm_stats").at("max_abs").get<std::vector<double>>();
      bundle.norm_stats = std::move(stats);
    }

    const size_t payload_start = 8 + header_len;
    const size_t payload_size = blob.size() - payload_start;
    size_t expected_offset = 0;
    for (const json& entry : manifest.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const size_t offset = entry.at("offset").get<size_t>();
      const size_t nbytes = entry.at("bytes").get<size_t>();
      if (nbytes != shape_numel(shape) * 4) {
        throw OffsetError("tensor '" + name + "': byte span " + std::to_string(nbytes) +
                          " does not match shape " + shape_str(shape));
      }
      if (offset != expected_offset) {
        throw OffsetError("tensor '" + name + "': offset " + std::to_string(offset) +
                          " overlaps or leaves a gap (expected " +
                          std::to_string(expected_offset) + ")");
      }
      expected_offset = offset + nbytes;
      if (expected_offset > payload_size) {
        throw TruncationError("checkpoint payload truncated at tensor '" + name + "'");
      }
      std::vector<double> values(shape_numel(shape));
      for (size_t i = 0; i < values.size(); ++i) {
        const uint32_t bits = get_u32(bytes + payload_start + offset + i * 4);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        values[i] = static_cast<double>(f);
      }
      if (bundle.tensors.count(name)) {
        throw FormatError("duplicate tensor '" + name + "' in checkpoint");
      }
      bundle.tensors.emplace(name, Tensor::from(shape, std::move(values)));
    }
    if (expected_offset != payload_size) {
      throw TruncationError("checkpoint payload has " + std::to_string(payload_size) +
                            " bytes, directory covers " + std::to_string(expected_offset));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest malformed: ") + e.what());
  }
  return bundle;
}

size_t save_checkpoint_file(const CheckpointBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  return save_checkpoint(bundle, out);
}

CheckpointBundle load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace vitalsynth
