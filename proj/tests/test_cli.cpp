#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vitalsynth/checkpoint.hpp"
#include "vitalsynth/data.hpp"
#include "toy_data.hpp"

#include "json.hpp"

using namespace vitalsynth;
namespace fs = std::filesystem;

namespace {

const std::string kCli = VITALSYNTH_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("vitalsynth-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string train_config_json(const TempDir& dir, uint64_t seed, size_t steps) {
  nlohmann::json j{
      {"channels", {"temperature", "respiratory_rate"}},
      {"arch", {{"label_embed", 2}, {"seed_len", 4}, {"hidden", 4}}},
      {"train",
       {{"lambda_gp", 10.0},
        {"n_critic", 1},
        {"learning_rate", 1e-4},
        {"batch_size", 8},
        {"generator_steps", steps},
        {"seed", seed},
        {"dropout_rate", 0.5}}},
      {"paths",
       {{"input_csv", dir.file("toy.csv")},
        {"checkpoint", dir.file("model.ckpt")},
        {"loss_log", dir.file("loss.log")}}},
  };
  return j.dump(2);
}

}  // namespace

TEST_CASE("filter: identity on in-range data, removal, empty input") {
  TempDir dir;
  LabeledDataset toy = testdata::make_sine_dataset(6, 0.5, 1);
  write_csv_file(toy, dir.file("in.csv"));

  CHECK(run("filter " + dir.file("in.csv") + " " + dir.file("out.csv")) == 0);
  CHECK(slurp(dir.file("out.csv")) == slurp(dir.file("in.csv")));

  // One patient pushed out of range disappears.
  LabeledDataset poisoned = toy;
  poisoned.series[2].values[0] = 45.5;
  write_csv_file(poisoned, dir.file("bad.csv"));
  CHECK(run("filter " + dir.file("bad.csv") + " " + dir.file("out2.csv")) == 0);
  LabeledDataset kept = read_csv_file(dir.file("out2.csv"));
  CHECK(kept.size() == 5);
  for (const PatientSeries& s : kept.series) {
    CHECK(s.patient_id != poisoned.series[2].patient_id);
  }

  // Header-only input: empty output, exit 0.
  write_file(dir.file("empty.csv"),
             "patient_id,t_index,temperature,respiratory_rate,label\n");
  CHECK(run("filter " + dir.file("empty.csv") + " " + dir.file("out3.csv")) == 0);
  CHECK(read_csv_file(dir.file("out3.csv")).size() == 0);

  // Missing input is a data error.
  CHECK(run("filter " + dir.file("nope.csv") + " " + dir.file("out4.csv")) == 2);
}

TEST_CASE("config validation: unknown keys and missing required paths exit 1") {
  TempDir dir;
  write_file(dir.file("bad.json"), R"({"channels": ["temperature"], "tyop": 1})");
  CHECK(run("train --config " + dir.file("bad.json")) == 1);

  write_file(dir.file("nested.json"),
             R"({"channels": ["temperature"], "train": {"n_critics": 5}})");
  CHECK(run("train --config " + dir.file("nested.json")) == 1);

  write_file(dir.file("nopaths.json"), R"({"channels": ["temperature"]})");
  CHECK(run("train --config " + dir.file("nopaths.json")) == 1);

  CHECK(run("train --config " + dir.file("absent.json")) == 1);

  // Usage errors (unknown subcommand / missing flags) exit 1 as well.
  CHECK(run("explode") == 1);
  CHECK(run("synthesize --n 10") == 1);
}

TEST_CASE("train -> synthesize -> evaluate round trip") {
  TempDir dir;
  LabeledDataset toy = testdata::make_sine_dataset(100, 0.3, 2);
  write_csv_file(toy, dir.file("toy.csv"));
  write_file(dir.file("cfg.json"), train_config_json(dir, 7, 5));

  REQUIRE(run("train --config " + dir.file("cfg.json")) == 0);
  CheckpointBundle bundle = load_checkpoint_file(dir.file("model.ckpt"));
  CHECK(bundle.arch->signals == 2);
  CHECK(bundle.channel_names ==
        std::vector<std::string>{"temperature", "respiratory_rate"});
  REQUIRE(bundle.norm_stats.has_value());

  // Loss log: one record per generator step, four fields each.
  std::ifstream log(dir.file("loss.log"));
  std::string line;
  size_t lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    std::istringstream fields(line);
    double step, c, g, p;
    REQUIRE((fields >> step >> c >> g >> p));
  }
  CHECK(lines == 5);

  // Synthesis: balanced labels, parses back, clamped values in range.
  REQUIRE(run("synthesize --checkpoint " + dir.file("model.ckpt") +
              " --n 100 --output " + dir.file("synth.csv") + " --clamp --seed 3") == 0);
  LabeledDataset synth = read_csv_file(dir.file("synth.csv"));
  CHECK(synth.size() == 100);
  CHECK(synth.class_counts()[0] == 50);
  CHECK(synth.class_counts()[1] == 50);
  for (const PatientSeries& s : synth.series) {
    for (size_t t = 0; t < kTimeSteps; ++t) {
      for (size_t c = 0; c < 2; ++c) {
        const double v = s.at(t, c, 2);
        CHECK(v >= synth.channels[c].lower);
        CHECK(v <= synth.channels[c].upper);
      }
    }
  }

  // Synthesis is deterministic given the seed.
  REQUIRE(run("synthesize --checkpoint " + dir.file("model.ckpt") +
              " --n 20 --output " + dir.file("s1.csv") + " --seed 9") == 0);
  REQUIRE(run("synthesize --checkpoint " + dir.file("model.ckpt") +
              " --n 20 --output " + dir.file("s2.csv") + " --seed 9") == 0);
  CHECK(slurp(dir.file("s1.csv")) == slurp(dir.file("s2.csv")));

  // Evaluation emits two privacy-gated reports with exactly five fields.
  nlohmann::json eval_cfg{
      {"channels", {"temperature", "respiratory_rate"}},
      {"hpo",
       {{"hidden_size", {8}},
        {"lstm_layers", {1}},
        {"dropout", {0.0}},
        {"learning_rate_range", {2e-3, 8e-3}},
        {"batch_size", {8}},
        {"epochs", {2}},
        {"trials", 1},
        {"seed", 5}}},
  };
  write_file(dir.file("eval.json"), eval_cfg.dump());
  REQUIRE(run("evaluate --real " + dir.file("toy.csv") + " --proxy " +
              dir.file("synth.csv") + " --config " + dir.file("eval.json") +
              " --report " + dir.file("report.json")) == 0);
  nlohmann::json reports = nlohmann::json::parse(slurp(dir.file("report.json")));
  REQUIRE(reports.is_array());
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].at("role") == "real");
  CHECK(reports[1].at("role") == "proxy");
  for (const auto& r : reports) {
    CHECK(r.size() == 5);
    CHECK(r.contains("channels"));
    CHECK(r.contains("acc_class0"));
    CHECK(r.contains("acc_class1"));
    CHECK(r.contains("balanced_accuracy"));
    for (const auto& [key, value] : r.items()) {
      CHECK_FALSE(value.is_number_integer());
    }
  }

  // A proxy lacking a configured channel exits with a data error.
  LabeledDataset one = select_channels(toy, {"temperature"});
  write_csv_file(one, dir.file("one.csv"));
  CHECK(run("evaluate --real " + dir.file("toy.csv") + " --proxy " +
            dir.file("one.csv") + " --config " + dir.file("eval.json") +
            " --report " + dir.file("r2.json")) == 2);
}

TEST_CASE("check-grad: clean build passes, corrupted fixture fails") {
  CHECK(run("check-grad --instances 2") == 0);
  CHECK(run("check-grad --instances 2 --inject-error") == 3);
}
