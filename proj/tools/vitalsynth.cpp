// Command-line entry point for the vital-signs synthesis toolkit.
//
// Subcommands:
//   filter      range-filter a CSV of vital-sign series
//   train       train the conditional critic/generator pair and write a checkpoint
//   synthesize  sample a class-balanced synthetic dataset from a checkpoint
//   evaluate    train-on-synthetic / test-on-real comparison with privacy-gated reports
//   check-grad  run the finite-difference suite over every differentiable op
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
// Progress goes to stderr; stdout carries only machine-readable results.

#include <charconv>
#include <fstream>
#include <iostream>
#include <string>

#include "vitalsynth/checkpoint.hpp"
#include "vitalsynth/config.hpp"
#include "vitalsynth/data.hpp"
#include "vitalsynth/errors.hpp"
#include "vitalsynth/eval.hpp"
#include "vitalsynth/gan.hpp"
#include "vitalsynth/gradcheck.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using namespace vitalsynth;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

int cmd_filter(const std::string& input, const std::string& output) {
  LabeledDataset ds = read_csv_file(input);
  LabeledDataset kept = filter_ranges(ds);
  write_csv_file(kept, output);
  std::cerr << "retained " << kept.size() << " patients, removed "
            << ds.size() - kept.size() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  RunConfig cfg = parse_run_config(config_path);
  if (cfg.channels.empty()) throw ConfigError("train: 'channels' is required");
  if (cfg.paths.input_csv.empty()) throw ConfigError("train: 'paths.input_csv' is required");
  if (cfg.paths.checkpoint.empty()) throw ConfigError("train: 'paths.checkpoint' is required");

  LabeledDataset raw = select_channels(read_csv_file(cfg.paths.input_csv), cfg.channels);
  LabeledDataset kept = filter_ranges(raw);
  std::cerr << "filter: retained " << kept.size() << " of " << raw.size()
            << " patients\n";

  Rng split_rng(Rng::splitmix(cfg.train.seed ^ 0x5e3779b97f4a7c15ULL));
  auto [train_split, test_split] = split_train_test(kept, cfg.test_fraction, split_rng);
  std::cerr << "split: " << train_split.size() << " train / " << test_split.size()
            << " held out\n";

  LabeledDataset train_n = normalize(train_split);
  const NormStats stats = *train_n.norm_stats;
  std::cerr << "generator parameters: " << generator_param_count(cfg.arch)
            << ", critic parameters: " << critic_param_count(cfg.arch) << "\n";

  std::ofstream loss_log;
  if (!cfg.paths.loss_log.empty()) {
    loss_log.open(cfg.paths.loss_log);
    if (!loss_log) throw ConfigError("cannot open loss log '" + cfg.paths.loss_log + "'");
  }
  auto on_step = [&](const StepRecord& r) {
    if (loss_log.is_open()) {
      loss_log << r.step << ' ' << format_double(r.critic_loss) << ' '
               << format_double(r.generator_loss) << ' ' << format_double(r.penalty)
               << '\n';
    }
    if (r.step % 100 == 0 || r.step == 1) {
      std::cerr << "step " << r.step << " critic " << r.critic_loss << " generator "
                << r.generator_loss << " penalty " << r.penalty << "\n";
    }
  };

  TrainResult result = train_gan(train_n, cfg.arch, cfg.train, on_step);
  CheckpointBundle bundle =
      bundle_from_model(result.model, cfg.train, stats, cfg.channels);
  const size_t bytes = save_checkpoint_file(bundle, cfg.paths.checkpoint);

  nlohmann::json summary{{"checkpoint", cfg.paths.checkpoint},
                         {"bytes", bytes},
                         {"generator_steps", cfg.train.generator_steps}};
  if (!result.log.empty()) {
    summary["final_critic_loss"] = result.log.back().critic_loss;
    summary["final_generator_loss"] = result.log.back().generator_loss;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_synthesize(const std::string& checkpoint_path, size_t n,
                   const std::string& output, bool clamp, uint64_t seed) {
  CheckpointBundle bundle = load_checkpoint_file(checkpoint_path);
  if (!bundle.norm_stats) {
    throw FormatError("checkpoint carries no normalization statistics");
  }
  GanModel model = model_from_bundle(bundle);
  Rng rng(Rng::splitmix(seed ^ 0xa5a5a5a5a5a5a5a5ULL));
  LabeledDataset synth =
      synthesize_balanced(model, n, *bundle.norm_stats,
                          channels_by_names(bundle.channel_names), clamp, rng);
  write_csv_file(synth, output);
  std::cerr << "wrote " << synth.size() << " synthetic patients\n";
  std::cout << nlohmann::json{{"output", output},
                              {"total", synth.size()},
                              {"per_class", synth.size() / 2}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& real_path, const std::string& proxy_path,
                 const std::string& config_path, const std::string& report_path) {
  RunConfig cfg = parse_run_config(config_path);
  LabeledDataset real = read_csv_file(real_path);
  LabeledDataset proxy = read_csv_file(proxy_path);
  if (!cfg.channels.empty()) {
    real = select_channels(real, cfg.channels);
    proxy = select_channels(proxy, cfg.channels);
  }
  std::cerr << "evaluating " << real.size() << " real / " << proxy.size()
            << " proxy patients, " << cfg.hpo.trials << " trials\n";
  TstrResult result = tstr_protocol(real, proxy, cfg.hpo, cfg.test_fraction);

  nlohmann::json reports = nlohmann::json::array(
      {result.real_report.to_json(), result.proxy_report.to_json()});
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw ConfigError("cannot open report '" + report_path + "'");
    out << reports.dump(2) << "\n";
  }
  std::cout << reports.dump() << "\n";
  return 0;
}

int cmd_check_grad(bool inject_error, uint64_t seed, size_t instances) {
  const std::vector<OpCheck> checks = run_gradient_suite(seed, instances, inject_error);
  for (const OpCheck& c : checks) {
    std::cout << "op=" << c.op << " max_rel_err=" << format_double(c.max_rel_err)
              << " tolerance=" << format_double(c.tolerance) << ' '
              << (c.pass ? "pass" : "FAIL") << "\n";
  }
  if (!all_passed(checks)) {
    std::cerr << "gradient check failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic vital-sign series: conditional critic/generator training, "
               "balanced synthesis, and train-on-synthetic evaluation"};
  app.require_subcommand(1);

  auto* filter = app.add_subcommand("filter", "Drop patients with out-of-range samples");
  std::string filter_in, filter_out;
  filter->add_option("input", filter_in, "input CSV")->required();
  filter->add_option("output", filter_out, "output CSV")->required();

  auto* train = app.add_subcommand("train", "Train the generator/critic pair");
  std::string train_config;
  train->add_option("--config", train_config, "JSON run config")->required();

  auto* synth = app.add_subcommand("synthesize", "Sample a balanced synthetic dataset");
  std::string synth_ckpt, synth_out;
  size_t synth_n = 0;
  bool synth_clamp = false;
  uint64_t synth_seed = 1;
  synth->add_option("--checkpoint", synth_ckpt, "trained checkpoint")->required();
  synth->add_option("--n", synth_n, "total series to generate")->required();
  synth->add_option("--output", synth_out, "output CSV")->required();
  synth->add_flag("--clamp", synth_clamp, "clamp values to the channel bounds");
  synth->add_option("--seed", synth_seed, "sampling seed");

  auto* eval = app.add_subcommand("evaluate", "Train-on-synthetic / test-on-real reports");
  std::string eval_real, eval_proxy, eval_config, eval_report;
  eval->add_option("--real", eval_real, "real CSV")->required();
  eval->add_option("--proxy", eval_proxy, "proxy CSV")->required();
  eval->add_option("--config", eval_config, "JSON run config")->required();
  eval->add_option("--report", eval_report, "report output path");

  auto* check = app.add_subcommand("check-grad", "Finite-difference gradient suite");
  bool inject_error = false;
  uint64_t check_seed = 20240817;
  size_t check_instances = 20;
  check->add_flag("--inject-error", inject_error,
                  "include a deliberately corrupted derivative (self-test)");
  check->add_option("--seed", check_seed, "suite seed");
  check->add_option("--instances", check_instances, "random instances per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*filter) return cmd_filter(filter_in, filter_out);
    if (*train) return cmd_train(train_config);
    if (*synth) return cmd_synthesize(synth_ckpt, synth_n, synth_out, synth_clamp, synth_seed);
    if (*eval) return cmd_evaluate(eval_real, eval_proxy, eval_config, eval_report);
    if (*check) return cmd_check_grad(inject_error, check_seed, check_instances);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
