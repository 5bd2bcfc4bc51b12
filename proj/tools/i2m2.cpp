#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "i2m2/config.hpp"
#include "i2m2/dataset_io.hpp"
#include "i2m2/harness.hpp"
#include "i2m2/model_io.hpp"
#include "i2m2/presets.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool print_defaults = false;

  std::string data_path;
  std::string model_path;
  std::vector<std::string> report_files;
};

i2m2::ExperimentConfig resolve_config(const CliOptions& opts) {
  i2m2::ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    std::ifstream is(opts.config_path, std::ios::binary);
    if (!is) throw i2m2::ConfigError("cannot open config file: " + opts.config_path);
    std::ostringstream buffer;
    buffer << is.rdbuf();
    cfg = i2m2::parse_config(buffer.str());
  }
  for (const std::string& assignment : opts.overrides) i2m2::apply_override(cfg, assignment);
  if (opts.seed) cfg.seeds = {*opts.seed};
  i2m2::validate_config(cfg);
  return cfg;
}

int finish_harness_run(const std::vector<i2m2::RunRecord>& records,
                       const i2m2::ExperimentConfig& cfg) {
  const i2m2::OutputPaths paths = i2m2::emit_outputs(records, cfg);
  std::cout << paths.csv << '\n' << paths.json << '\n';

  std::size_t attempted = 0;
  std::size_t failed = 0;
  for (const auto& rec : records) {
    if (rec.variant == "bayes") continue;
    ++attempted;
    if (!rec.error.empty()) {
      ++failed;
      std::cerr << "run failed (" << rec.variant << ", seed " << rec.seed << "): " << rec.error
                << '\n';
    }
  }
  if (attempted > 0 && failed == attempted) return kExitRuntimeError;
  return kExitOk;
}

int cmd_generate(const CliOptions& opts, const i2m2::ExperimentConfig& cfg) {
  if (opts.out.empty()) throw i2m2::ConfigError("generate: --out <dataset file> is required");
  const i2m2::GenerativeSpec spec = i2m2::preset(cfg.preset_name);
  i2m2::RngStream rng(opts.seed ? *opts.seed : cfg.seeds.front());
  const i2m2::Dataset ds = i2m2::sample_dataset(spec, static_cast<std::size_t>(cfg.n_train), rng);
  if (const auto dir = std::filesystem::path(opts.out).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  i2m2::save_dataset(ds, opts.out);
  std::cerr << "wrote " << ds.samples.size() << " samples to " << opts.out << '\n';
  return kExitOk;
}

int cmd_train(const CliOptions& opts, const i2m2::ExperimentConfig& cfg) {
  if (opts.data_path.empty()) throw i2m2::ConfigError("train: --data <dataset file> is required");
  if (opts.out.empty()) throw i2m2::ConfigError("train: --out <model file> is required");
  if (cfg.variants.size() != 1)
    throw i2m2::ConfigError("train: config must name exactly one variant");

  const i2m2::Dataset ds = i2m2::load_dataset(opts.data_path);
  const std::uint64_t seed = opts.seed ? *opts.seed : cfg.seeds.front();
  const i2m2::PredictorStack stack =
      i2m2::train_variant(cfg.variants.front(), ds, cfg.train, seed);
  if (const auto dir = std::filesystem::path(opts.out).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  i2m2::save_stack(stack, opts.out);
  std::cerr << "wrote " << cfg.variants.front() << " model to " << opts.out << '\n';
  return kExitOk;
}

int cmd_eval(const CliOptions& opts) {
  if (opts.data_path.empty() || opts.model_path.empty())
    throw i2m2::ConfigError("eval: --data and --model are required");
  const i2m2::Dataset ds = i2m2::load_dataset(opts.data_path);
  const i2m2::PredictorStack stack = i2m2::load_stack(opts.model_path);
  const i2m2::EvalReport report = i2m2::evaluate_stack(stack, ds);

  nlohmann::json j;
  j["metrics"] = report.values;
  j["per_class"] = report.per_class;
  j["sample_count"] = report.sample_count;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_report(const CliOptions& opts) {
  if (opts.report_files.empty())
    throw i2m2::ConfigError("report: name at least one .json record file");
  std::vector<i2m2::RunRecord> records;
  for (const std::string& path : opts.report_files) {
    const auto loaded = i2m2::load_records(path);
    records.insert(records.end(), loaded.begin(), loaded.end());
  }
  std::cout << "preset,variant,metric,mean,std,count\n";
  for (const auto& row : i2m2::aggregate(records)) {
    std::cout << row.preset << ',' << row.variant << ',' << row.metric << ','
              << i2m2::format_double(row.mean) << ',' << i2m2::format_double(row.stddev) << ','
              << row.count << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multi-modal product-of-experts laboratory"};
  app.require_subcommand(0, 1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "experiment config file");
  app.add_option("--set", opts.overrides, "override, e.g. --set generator.n_train=5000")
      ->take_all();
  app.add_option("--seed", opts.seed, "replace the seed list with a single seed");
  app.add_option("--out", opts.out, "output file (generate/train) or directory (experiments)");
  app.add_flag("--print-defaults", opts.print_defaults, "print the default config and exit");

  auto* generate = app.add_subcommand("generate", "sample a dataset from the preset");
  auto* train = app.add_subcommand("train", "train one variant on a dataset file");
  train->add_option("--data", opts.data_path, "dataset file");
  auto* eval = app.add_subcommand("eval", "evaluate a model file on a dataset file");
  eval->add_option("--data", opts.data_path, "dataset file");
  eval->add_option("--model", opts.model_path, "model file");
  auto* compare = app.add_subcommand("compare", "variant comparison across seeds");
  auto* sweep = app.add_subcommand("sweep-noise", "noise robustness sweep");
  auto* ood = app.add_subcommand("ood", "paired IID/OOD evaluation");
  auto* entropy = app.add_subcommand("entropy", "label vs predictive entropy report");
  auto* report = app.add_subcommand("report", "aggregate emitted .json record files");
  report->add_option("files", opts.report_files, "record files");

  // common options (--config, --set, --seed, --out) may follow the subcommand
  for (auto* sub : {generate, train, eval, compare, sweep, ood, entropy, report})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (opts.print_defaults) {
      std::cout << i2m2::dump_config(i2m2::ExperimentConfig{});
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << "no subcommand given; see --help\n";
      return kExitConfigError;
    }

    if (report->parsed()) return cmd_report(opts);
    if (eval->parsed()) return cmd_eval(opts);

    i2m2::ExperimentConfig cfg = resolve_config(opts);
    if (generate->parsed()) return cmd_generate(opts, cfg);
    if (train->parsed()) return cmd_train(opts, cfg);

    if (!opts.out.empty()) cfg.out_dir = opts.out;
    if (compare->parsed()) return finish_harness_run(i2m2::run_comparison(cfg), cfg);
    if (sweep->parsed()) return finish_harness_run(i2m2::run_noise_sweep(cfg), cfg);
    if (ood->parsed()) return finish_harness_run(i2m2::run_ood_eval(cfg), cfg);
    if (entropy->parsed()) return finish_harness_run(i2m2::run_entropy_report(cfg), cfg);

    std::cerr << "unhandled subcommand\n";
    return kExitConfigError;
  } catch (const i2m2::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}
