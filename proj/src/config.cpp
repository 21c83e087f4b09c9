#include "vitalsynth/config.hpp"

#include <fstream>
#include <sstream>

#include "vitalsynth/errors.hpp"

#include "json.hpp"

namespace vitalsynth {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": object expected");
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(root, "config");
  reject_unknown(root, {"channels", "arch", "train", "test_fraction", "hpo", "paths"},
                 "config");

  RunConfig cfg;
  read_field(root, "channels", cfg.channels, "config");
  read_field(root, "test_fraction", cfg.test_fraction, "config");

  if (root.contains("arch")) {
    const json& a = root.at("arch");
    require_object(a, "arch");
    reject_unknown(a, {"label_embed", "seed_len", "hidden"}, "arch");
    read_field(a, "label_embed", cfg.arch.label_embed, "arch");
    read_field(a, "seed_len", cfg.arch.seed_len, "arch");
    read_field(a, "hidden", cfg.arch.hidden, "arch");
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    require_object(t, "train");
    reject_unknown(t,
                   {"lambda_gp", "n_critic", "learning_rate", "batch_size",
                    "generator_steps", "seed", "dropout_rate"},
                   "train");
    read_field(t, "lambda_gp", cfg.train.lambda_gp, "train");
    read_field(t, "n_critic", cfg.train.n_critic, "train");
    read_field(t, "learning_rate", cfg.train.learning_rate, "train");
    read_field(t, "batch_size", cfg.train.batch_size, "train");
    read_field(t, "generator_steps", cfg.train.generator_steps, "train");
    read_field(t, "seed", cfg.train.seed, "train");
    read_field(t, "dropout_rate", cfg.train.dropout_rate, "train");
  }

  if (root.contains("hpo")) {
    const json& h = root.at("hpo");
    require_object(h, "hpo");
    reject_unknown(h,
                   {"hidden_size", "lstm_layers", "dropout", "learning_rate_range",
                    "batch_size", "epochs", "trials", "seed", "parallel"},
                   "hpo");
    read_field(h, "hidden_size", cfg.hpo.hidden_size, "hpo");
    read_field(h, "lstm_layers", cfg.hpo.lstm_layers, "hpo");
    read_field(h, "dropout", cfg.hpo.dropout, "hpo");
    if (h.contains("learning_rate_range")) {
      std::vector<double> range;
      read_field(h, "learning_rate_range", range, "hpo");
      if (range.size() != 2) {
        throw ConfigError("hpo: learning_rate_range must be [lo, hi]");
      }
      cfg.hpo.lr_lo = range[0];
      cfg.hpo.lr_hi = range[1];
    }
    read_field(h, "batch_size", cfg.hpo.batch_size, "hpo");
    read_field(h, "epochs", cfg.hpo.epochs, "hpo");
    read_field(h, "trials", cfg.hpo.trials, "hpo");
    read_field(h, "seed", cfg.hpo.seed, "hpo");
    read_field(h, "parallel", cfg.hpo.parallel, "hpo");
  }

  if (root.contains("paths")) {
    const json& p = root.at("paths");
    require_object(p, "paths");
    reject_unknown(p, {"input_csv", "checkpoint", "loss_log", "output_csv", "report"},
                   "paths");
    read_field(p, "input_csv", cfg.paths.input_csv, "paths");
    read_field(p, "checkpoint", cfg.paths.checkpoint, "paths");
    read_field(p, "loss_log", cfg.paths.loss_log, "paths");
    read_field(p, "output_csv", cfg.paths.output_csv, "paths");
    read_field(p, "report", cfg.paths.report, "paths");
  }

  cfg.arch.signals = cfg.channels.size();
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError("config: test_fraction must lie in (0,1)");
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

}  // namespace vitalsynth
