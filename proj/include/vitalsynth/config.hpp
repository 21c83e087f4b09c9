#pragma once

#include <string>
#include <vector>

#include "vitalsynth/eval.hpp"
#include "vitalsynth/gan.hpp"

namespace vitalsynth {

// Everything a run needs, loaded from one JSON file. Unknown keys anywhere
// are rejected; each subcommand validates its own required entries.
struct RunConfig {
  std::vector<std::string> channels;
  ArchitectureConfig arch;  // signals derived from `channels`
  TrainConfig train;
  double test_fraction = 0.30;
  HPOSpace hpo;
  struct Paths {
    std::string input_csv;
    std::string checkpoint;
    std::string loss_log;  // optional
    std::string output_csv;
    std::string report;
  } paths;
};

RunConfig parse_run_config(const std::string& path);
// Exposed for tests: parse from a JSON string.
RunConfig parse_run_config_text(const std::string& text);

}  // namespace vitalsynth
