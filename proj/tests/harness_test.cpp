#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "i2m2/harness.hpp"

using namespace i2m2;

namespace {

RunRecord make_record(const std::string& variant, std::uint64_t seed, double value) {
  RunRecord rec;
  rec.config_digest = "cafebabe00000000";
  rec.preset = "discrete-d1";
  rec.variant = variant;
  rec.seed = seed;
  rec.metrics["accuracy"] = value;
  return rec;
}

std::string render_csv(std::span<const RunRecord> records) {
  std::ostringstream os;
  emit_csv(records, os);
  return os.str();
}

ExperimentConfig small_d1_config() {
  ExperimentConfig cfg;
  cfg.preset_name = "discrete-d1";
  cfg.n_train = 1500;
  cfg.n_test = 1000;
  cfg.seeds = {1, 2};
  cfg.variants = {"inter", "i2m2"};
  cfg.train.epochs_stage1 = 6;
  cfg.train.epochs_stage2 = 4;
  return cfg;
}

double mean_metric(const std::vector<RunRecord>& records, const std::string& variant,
                   const std::string& metric) {
  double sum = 0.0;
  int n = 0;
  for (const auto& rec : records) {
    if (rec.variant != variant || !rec.error.empty()) continue;
    sum += rec.metrics.at(metric);
    ++n;
  }
  return sum / n;
}

}  // namespace

TEST(Aggregate, SingleAndIdenticalRecordsHaveZeroStd) {
  const std::vector<RunRecord> single = {make_record("i2m2", 1, 0.8)};
  auto rows = aggregate(single);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].count, 1u);
  EXPECT_DOUBLE_EQ(rows[0].stddev, 0.0);

  const std::vector<RunRecord> twins = {make_record("i2m2", 1, 0.8), make_record("i2m2", 2, 0.8)};
  rows = aggregate(twins);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].count, 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 0.8);
  EXPECT_DOUBLE_EQ(rows[0].stddev, 0.0);
}

TEST(Aggregate, SampleStandardDeviation) {
  const std::vector<RunRecord> pair = {make_record("i2m2", 1, 1.0), make_record("i2m2", 2, 3.0)};
  const auto rows = aggregate(pair);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 2.0);
  EXPECT_NEAR(rows[0].stddev, 1.4142, 1e-4);
}

TEST(Aggregate, SkipsErroredRecords) {
  std::vector<RunRecord> records = {make_record("i2m2", 1, 1.0)};
  records.push_back(make_record("i2m2", 2, 99.0));
  records.back().error = "boom";
  records.back().metrics.clear();
  const auto rows = aggregate(records);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].count, 1u);
}

TEST(EmitCsv, EmptyRecordsYieldHeaderOnly) {
  EXPECT_EQ(render_csv({}), "preset,variant,seed,metric,value,wall_seconds,config_digest\n");
}

TEST(EmitCsv, SortsRowsRegardlessOfInputOrder) {
  std::vector<RunRecord> shuffled = {make_record("i2m2", 2, 0.5), make_record("inter", 1, 0.25),
                                     make_record("i2m2", 1, 0.75)};
  std::vector<RunRecord> sorted = {make_record("i2m2", 1, 0.75), make_record("i2m2", 2, 0.5),
                                   make_record("inter", 1, 0.25)};
  EXPECT_EQ(render_csv(shuffled), render_csv(sorted));
  const std::string expected =
      "preset,variant,seed,metric,value,wall_seconds,config_digest\n"
      "discrete-d1,i2m2,1,accuracy,0.75,0,cafebabe00000000\n"
      "discrete-d1,i2m2,2,accuracy,0.5,0,cafebabe00000000\n"
      "discrete-d1,inter,1,accuracy,0.25,0,cafebabe00000000\n";
  EXPECT_EQ(render_csv(shuffled), expected);
}

TEST(EmitJson, RoundTripsRecords) {
  std::vector<RunRecord> records = {make_record("i2m2", 1, 0.75), make_record("inter", 2, 0.5)};
  records[1].error = "failed to converge";
  records[1].metrics.clear();

  const auto path = std::filesystem::temp_directory_path() / "i2m2_harness_roundtrip.json";
  emit_json(records, path.string());
  const auto loaded = load_records(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0], records[0]);
  EXPECT_EQ(loaded[1], records[1]);
}

TEST(RunComparison, ProducesBayesAndVariantRows) {
  const auto records = run_comparison(small_d1_config());
  // per seed: 1 bayes row + 2 variant rows
  EXPECT_EQ(records.size(), 6u);
  int bayes_rows = 0;
  for (const auto& rec : records) {
    EXPECT_TRUE(rec.error.empty()) << rec.error;
    EXPECT_EQ(rec.wall_seconds, 0.0);  // timings disabled by default
    for (const auto& [name, value] : rec.metrics) EXPECT_TRUE(std::isfinite(value)) << name;
    if (rec.variant == "bayes") ++bayes_rows;
  }
  EXPECT_EQ(bayes_rows, 2);
}

TEST(TrainVariant, I2m2PathMatchesTwoStageTrainBitwise) {
  // the cache-assembled harness path and the direct trainer must agree
  const ExperimentConfig cfg = small_d1_config();
  const GenerativeSpec spec = preset(cfg.preset_name);
  RngStream data_rng = RngStream(7).fork("train-data");
  const Dataset train = sample_dataset(spec, 1500, data_rng);

  TrainConfig tc = cfg.train;
  tc.seed = 7;
  const PredictorStack via_harness = train_variant("i2m2", train, tc, 7);
  const PredictorStack direct =
      two_stage_train(train, tc, RngStream(7).fork("experts"), TwoStageMode::full);
  EXPECT_EQ(via_harness, direct);
}

TEST(RunComparison, RecordsReproduceInIsolation) {
  // A run's metrics depend only on (preset, variant, seed), not on which
  // other runs share the grid.
  ExperimentConfig full = small_d1_config();
  ExperimentConfig solo = small_d1_config();
  solo.variants = {"i2m2"};
  solo.seeds = {2};

  const auto all_records = run_comparison(full);
  const auto solo_records = run_comparison(solo);
  const RunRecord* from_grid = nullptr;
  const RunRecord* isolated = nullptr;
  for (const auto& rec : all_records)
    if (rec.variant == "i2m2" && rec.seed == 2) from_grid = &rec;
  for (const auto& rec : solo_records)
    if (rec.variant == "i2m2" && rec.seed == 2) isolated = &rec;
  ASSERT_NE(from_grid, nullptr);
  ASSERT_NE(isolated, nullptr);
  EXPECT_EQ(from_grid->metrics, isolated->metrics);
}

TEST(RunComparison, RerunIsByteIdentical) {
  const ExperimentConfig cfg = small_d1_config();
  const auto a = run_comparison(cfg);
  const auto b = run_comparison(cfg);
  EXPECT_EQ(a, b);
  std::ostringstream csv_a, csv_b, json_a, json_b;
  emit_csv(a, csv_a);
  emit_csv(b, csv_b);
  emit_json(a, json_a);
  emit_json(b, json_b);
  EXPECT_EQ(csv_a.str(), csv_b.str());
  EXPECT_EQ(json_a.str(), json_b.str());
}

TEST(RunNoiseSweep, SigmaZeroMatchesComparisonBitExactly) {
  ExperimentConfig cfg;
  cfg.preset_name = "intra-world";
  cfg.n_train = 800;
  cfg.n_test = 500;
  cfg.seeds = {3};
  cfg.variants = {"inter"};
  cfg.train.epochs_stage1 = 4;
  cfg.train.epochs_stage2 = 2;
  cfg.train.hidden_sizes = {8};
  cfg.noise_grid = {0.0, 0.5};

  const auto cmp = run_comparison(cfg);
  const auto sweep = run_noise_sweep(cfg);
  double cmp_acc = 0.0, sweep_acc0 = 0.0, sweep_acc5 = 0.0;
  for (const auto& rec : cmp)
    if (rec.variant == "inter") cmp_acc = rec.metrics.at("accuracy");
  for (const auto& rec : sweep)
    if (rec.variant == "inter") {
      sweep_acc0 = rec.metrics.at("accuracy@sigma=0");
      sweep_acc5 = rec.metrics.at("accuracy@sigma=0.5");
    }
  EXPECT_EQ(cmp_acc, sweep_acc0);  // bit-exact
  EXPECT_NE(sweep_acc0, sweep_acc5);
}

TEST(RunNoiseSweep, DegradationIsMonotoneWithinSlack) {
  ExperimentConfig cfg;
  cfg.preset_name = "intra-world";
  cfg.n_train = 2000;
  cfg.n_test = 3000;
  cfg.seeds = {1, 2, 3};
  cfg.variants = {"intra"};
  cfg.train.hidden_sizes = {8};
  cfg.noise_grid = {0.0, 0.5, 1.0, 2.0};

  const auto records = run_noise_sweep(cfg);
  double prev = 1.0;
  for (double sigma : cfg.noise_grid) {
    const double acc = mean_metric(records, "intra", "accuracy@sigma=" + format_double(sigma));
    EXPECT_LE(acc, prev + 0.01) << "sigma " << sigma;
    prev = acc;
  }
}

TEST(RunNoiseSweep, IncompatibleModeIsIsolatedPerRun) {
  ExperimentConfig cfg = small_d1_config();
  cfg.noise_mode = "rician-magnitude";  // categorical features: every run fails
  const auto records = run_noise_sweep(cfg);
  ASSERT_FALSE(records.empty());
  for (const auto& rec : records) {
    EXPECT_FALSE(rec.error.empty());
    EXPECT_TRUE(rec.metrics.empty());
  }
}

TEST(RunOodEval, DropSelectionOnIntraWorldDoesNotDegrade) {
  ExperimentConfig cfg;
  cfg.preset_name = "intra-world";
  cfg.n_train = 2000;
  cfg.n_test = 3000;
  cfg.seeds = {1, 2, 3};
  cfg.variants = {"intra"};
  cfg.train.hidden_sizes = {8};
  cfg.ood_mode = "drop-selection";

  const auto records = run_ood_eval(cfg);
  const double iid = mean_metric(records, "intra", "accuracy");
  const double ood = mean_metric(records, "intra", "ood_accuracy");
  // constant selection: the surgered spec is distributionally identical
  EXPECT_NEAR(iid, ood, 0.02 + 3.0 * std::sqrt(0.25 / 3000.0));
}

TEST(RunEntropyReport, UniformEverythingPinsEntropiesAtLogTwo) {
  ExperimentConfig cfg;
  cfg.preset_name = "uniform-everything";
  cfg.n_train = 2000;
  cfg.n_test = 2000;
  cfg.seeds = {1, 2};
  cfg.variants = {"uni-1", "inter", "i2m2"};
  cfg.train.epochs_stage1 = 8;
  cfg.train.epochs_stage2 = 4;

  const auto records = run_entropy_report(cfg);
  for (const auto& rec : records) {
    ASSERT_TRUE(rec.error.empty()) << rec.error;
    EXPECT_NEAR(rec.metrics.at("label_entropy"), std::log(2.0), 0.01);
    EXPECT_NEAR(rec.metrics.at("predictive_entropy"), std::log(2.0), 0.05) << rec.variant;
  }
}

TEST(RunEntropyReport, InterWorldSeparatesUnimodalAndJointEntropy) {
  ExperimentConfig cfg;
  cfg.preset_name = "inter-world";
  cfg.n_train = 3000;
  cfg.n_test = 3000;
  cfg.seeds = {1, 2, 3};
  cfg.variants = {"uni-1", "uni-2", "inter"};

  const auto records = run_entropy_report(cfg);
  const double label_h = mean_metric(records, "uni-1", "label_entropy");
  EXPECT_NEAR(mean_metric(records, "uni-1", "predictive_entropy"), label_h, 0.05);
  EXPECT_NEAR(mean_metric(records, "uni-2", "predictive_entropy"), label_h, 0.05);
  EXPECT_LT(mean_metric(records, "inter", "predictive_entropy"), label_h - 0.1);
}

TEST(OutputPaths, LayoutUsesPresetAndDigest) {
  ExperimentConfig cfg;
  cfg.out_dir = "runs";
  const OutputPaths paths = output_paths(cfg);
  const std::string digest = config_digest(cfg);
  EXPECT_EQ(paths.csv, "runs/both-deps/" + digest + ".csv");
  EXPECT_EQ(paths.json, "runs/both-deps/" + digest + ".json");
}

TEST(EmitOutputs, WritesByteIdenticalFilesOnRerun) {
  ExperimentConfig cfg = small_d1_config();
  cfg.out_dir = (std::filesystem::temp_directory_path() / "i2m2_emit_test").string();

  const auto records = run_comparison(cfg);
  const OutputPaths first = emit_outputs(records, cfg);
  std::ifstream csv1(first.csv, std::ios::binary);
  std::stringstream buf1;
  buf1 << csv1.rdbuf();

  const auto records2 = run_comparison(cfg);
  const OutputPaths second = emit_outputs(records2, cfg);
  std::ifstream csv2(second.csv, std::ios::binary);
  std::stringstream buf2;
  buf2 << csv2.rdbuf();

  EXPECT_EQ(first.csv, second.csv);
  EXPECT_EQ(buf1.str(), buf2.str());
  std::filesystem::remove_all(cfg.out_dir);
}
