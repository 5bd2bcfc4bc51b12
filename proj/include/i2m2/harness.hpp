#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "i2m2/config.hpp"
#include "i2m2/experts.hpp"
#include "i2m2/generative.hpp"
#include "i2m2/metrics.hpp"
#include "i2m2/presets.hpp"
#include "i2m2/text.hpp"

namespace i2m2 {

struct RunRecord {
  std::string config_digest;
  std::string preset;
  std::string variant;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  std::string error;  // empty on success

  bool operator==(const RunRecord&) const = default;
};

inline NoiseMode noise_mode_from_name(std::string_view name) {
  if (name == "additive-gaussian") return NoiseMode::additive_gaussian;
  if (name == "rician-magnitude") return NoiseMode::rician_magnitude;
  throw std::invalid_argument("unknown noise mode '" + std::string(name) + "'");
}

inline OodMode ood_mode_from_name(std::string_view name) {
  if (name == "drop-selection") return OodMode::drop_selection;
  if (name == "flip-interaction") return OodMode::flip_interaction;
  if (name == "shift-means") return OodMode::shift_means;
  throw std::invalid_argument("unknown ood mode '" + std::string(name) + "'");
}

inline EvalReport evaluate_probs(const RealMatrix& probs, std::span<const int> labels,
                                 int num_classes) {
  std::vector<int> preds(probs.rows);
  for (std::size_t r = 0; r < probs.rows; ++r) preds[r] = argmax_class(probs.row(r));
  EvalReport report;
  report.sample_count = labels.size();
  report.values["accuracy"] = accuracy(preds, labels);
  report.values["balanced_accuracy"] = balanced_accuracy(preds, labels, num_classes);
  report.values["auroc"] = auroc_macro(probs, labels);
  report.values["predictive_entropy"] = predictive_entropy(probs);

  std::vector<double> recalls(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    totals[static_cast<std::size_t>(labels[i])] += 1.0;
    if (preds[i] == labels[i]) recalls[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  for (int c = 0; c < num_classes; ++c)
    if (totals[static_cast<std::size_t>(c)] > 0.0)
      recalls[static_cast<std::size_t>(c)] /= totals[static_cast<std::size_t>(c)];
  report.per_class["recall"] = std::move(recalls);
  return report;
}

inline EvalReport evaluate_stack(const PredictorStack& stack, const Dataset& dataset) {
  const RealMatrix probs = predict_proba_batch(stack, dataset.samples);
  std::vector<int> labels;
  labels.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) labels.push_back(s.label);
  return evaluate_probs(probs, labels, dataset.num_classes);
}

namespace detail {

inline RealMatrix posterior_probs(const GenerativeSpec& spec, const Dataset& dataset) {
  RealMatrix probs(dataset.samples.size(), static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t r = 0; r < dataset.samples.size(); ++r) {
    const auto post = exact_posterior(spec, dataset.samples[r].x1, dataset.samples[r].x2);
    std::copy(post.begin(), post.end(), probs.row(r).begin());
  }
  return probs;
}

inline std::vector<int> labels_of(const Dataset& dataset) {
  std::vector<int> labels;
  labels.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) labels.push_back(s.label);
  return labels;
}

// Stage-1 experts keyed by role, shared across the variants of one seed.
// Each expert's training stream depends only on (seed, role), so reusing the
// cache is bit-identical to training the variant in isolation.
struct ExpertCache {
  std::map<ExpertRole, Expert> experts;

  const Expert& get(ExpertRole role, const Dataset& train, const TrainConfig& cfg,
                    const RngStream& base) {
    auto it = experts.find(role);
    if (it == experts.end()) {
      it = experts
               .emplace(role, train_expert(role, train, cfg, base.fork("expert-" + role_name(role))))
               .first;
    }
    return it->second;
  }
};

inline PredictorStack assemble_stage1_stack(const Dataset& train, const TrainConfig& cfg,
                                            const RngStream& base, ExpertCache& cache) {
  PredictorStack stack;
  stack.shape = shape_of(train);
  stack.prior_logits = empirical_prior_logits(train);
  stack.prior_coefficient = 0.0;
  for (ExpertRole role : {ExpertRole::modality_1, ExpertRole::modality_2, ExpertRole::joint}) {
    stack.experts.push_back(cache.get(role, train, cfg, base));
    stack.active.push_back(1);
  }
  return stack;
}

}  // namespace detail

// Trains one model variant. Restriction variants reuse the stage-1 experts;
// i2m2 adds joint fine-tuning; the ensemble variants train independent
// experts with slot-specific streams.
inline PredictorStack train_variant(const std::string& variant, const Dataset& train,
                                    TrainConfig cfg, std::uint64_t seed,
                                    detail::ExpertCache* cache = nullptr) {
  cfg.seed = seed;
  const RngStream base = RngStream(seed).fork("experts");
  detail::ExpertCache local;
  detail::ExpertCache& experts = cache ? *cache : local;

  if (variant == "uni-1" || variant == "uni-2" || variant == "intra" || variant == "inter" ||
      variant == "i2m2" || variant == "i2m2-pretrain") {
    PredictorStack stack = detail::assemble_stage1_stack(train, cfg, base, experts);
    if (variant == "i2m2") {
      fine_tune_stack(stack, train, cfg, base.fork("stage2"));
      return stack;
    }
    if (variant == "i2m2-pretrain") return stack;
    return restrict(stack, stack_variant_from_name(variant));
  }
  if (variant == "i2m2-scratch")
    return two_stage_train(train, cfg, base, TwoStageMode::from_scratch);
  if (variant == "ens-1x3")
    return build_param_matched_ensemble(
        train, cfg, {ExpertRole::modality_1, ExpertRole::modality_1, ExpertRole::modality_1},
        RngStream(seed).fork("ensemble"));
  if (variant == "ens-2x3")
    return build_param_matched_ensemble(
        train, cfg, {ExpertRole::modality_2, ExpertRole::modality_2, ExpertRole::modality_2},
        RngStream(seed).fork("ensemble"));
  if (variant == "ens-mix")
    return build_param_matched_ensemble(
        train, cfg, {ExpertRole::modality_1, ExpertRole::modality_2, ExpertRole::joint},
        RngStream(seed).fork("ensemble"));
  throw std::invalid_argument("unknown variant '" + variant + "'");
}

namespace detail {

inline Dataset draw_split(const GenerativeSpec& spec, int n, std::uint64_t seed,
                          std::string_view purpose) {
  RngStream rng = RngStream(seed).fork(purpose);
  return sample_dataset(spec, static_cast<std::size_t>(n), rng);
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

inline void finalize_timings(std::vector<RunRecord>& records, const ExperimentConfig& cfg) {
  if (cfg.timings) return;
  // Deterministic output is the default contract; measured timings are
  // opt-in via [output] timings.
  for (auto& r : records) r.wall_seconds = 0.0;
}

template <typename PerVariant>
inline std::vector<RunRecord> run_grid(const ExperimentConfig& cfg, bool include_bayes,
                                       PerVariant&& per_variant) {
  const GenerativeSpec spec = preset(cfg.preset_name);
  const std::string digest = config_digest(cfg);
  std::vector<RunRecord> records;

  for (std::uint64_t seed : cfg.seeds) {
    const Dataset train = draw_split(spec, cfg.n_train, seed, "train-data");
    const Dataset test = draw_split(spec, cfg.n_test, seed, "test-data");

    if (include_bayes) {
      RunRecord rec{digest, cfg.preset_name, "bayes", seed, {}, 0.0, {}};
      Stopwatch watch;
      const EvalReport report =
          evaluate_probs(posterior_probs(spec, test), labels_of(test), test.num_classes);
      rec.metrics = report.values;
      rec.wall_seconds = watch.elapsed();
      records.push_back(std::move(rec));
    }

    ExpertCache cache;
    for (const std::string& variant : cfg.variants) {
      RunRecord rec{digest, cfg.preset_name, variant, seed, {}, 0.0, {}};
      Stopwatch watch;
      try {
        const PredictorStack stack = train_variant(variant, train, cfg.train, seed, &cache);
        per_variant(rec, stack, spec, train, test, seed);
      } catch (const std::exception& e) {
        rec.metrics.clear();
        rec.error = e.what();
      }
      rec.wall_seconds = watch.elapsed();
      records.push_back(std::move(rec));
    }
  }
  finalize_timings(records, cfg);
  return records;
}

}  // namespace detail

// One record per (variant, seed) with test metrics, plus a "bayes" record
// per seed carrying the exact-posterior ceiling on the same test draw.
inline std::vector<RunRecord> run_comparison(const ExperimentConfig& cfg) {
  return detail::run_grid(cfg, /*include_bayes=*/true,
                          [](RunRecord& rec, const PredictorStack& stack, const GenerativeSpec&,
                             const Dataset&, const Dataset& test, std::uint64_t) {
                            rec.metrics = evaluate_stack(stack, test).values;
                          });
}

// Trains on clean data once per (variant, seed) and evaluates across the
// noise grid; metric keys carry the level, e.g. "accuracy@sigma=0.5". The
// sigma=0 row of the additive mode reproduces run_comparison bit-exactly.
inline std::vector<RunRecord> run_noise_sweep(const ExperimentConfig& cfg) {
  const NoiseMode mode = noise_mode_from_name(cfg.noise_mode);
  return detail::run_grid(
      cfg, /*include_bayes=*/false,
      [&](RunRecord& rec, const PredictorStack& stack, const GenerativeSpec&, const Dataset&,
          const Dataset& test, std::uint64_t seed) {
        for (double sigma : cfg.noise_grid) {
          RngStream noise_rng =
              RngStream(seed).fork("noise").fork(std::bit_cast<std::uint64_t>(sigma));
          const Dataset noisy = apply_noise(test, mode, sigma, noise_rng);
          const EvalReport report = evaluate_stack(stack, noisy);
          for (const auto& [name, value] : report.values)
            rec.metrics[name + "@sigma=" + format_double(sigma)] = value;
        }
      });
}

// Paired in-distribution / shifted evaluation: trains on the preset, tests
// on both the preset's own test draw and a draw from the surgically shifted
// spec. Shifted metrics carry an "ood_" prefix.
inline std::vector<RunRecord> run_ood_eval(const ExperimentConfig& cfg) {
  const OodMode mode = ood_mode_from_name(cfg.ood_mode);
  const GenerativeSpec base_spec = preset(cfg.preset_name);
  const GenerativeSpec ood_spec = make_ood_spec(base_spec, mode);
  const std::string digest = config_digest(cfg);

  std::vector<RunRecord> records = detail::run_grid(
      cfg, /*include_bayes=*/false,
      [&](RunRecord& rec, const PredictorStack& stack, const GenerativeSpec&, const Dataset&,
          const Dataset& test, std::uint64_t seed) {
        const Dataset ood_test = detail::draw_split(ood_spec, cfg.n_test, seed, "ood-test-data");
        rec.metrics = evaluate_stack(stack, test).values;
        for (const auto& [name, value] : evaluate_stack(stack, ood_test).values)
          rec.metrics["ood_" + name] = value;
      });

  // Ceiling rows: the exact posterior of each spec on its own draw.
  std::vector<RunRecord> with_bayes;
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset test = detail::draw_split(base_spec, cfg.n_test, seed, "test-data");
    const Dataset ood_test = detail::draw_split(ood_spec, cfg.n_test, seed, "ood-test-data");
    RunRecord rec{digest, cfg.preset_name, "bayes", seed, {}, 0.0, {}};
    rec.metrics = evaluate_probs(detail::posterior_probs(base_spec, test),
                                 detail::labels_of(test), test.num_classes)
                      .values;
    for (const auto& [name, value] :
         evaluate_probs(detail::posterior_probs(ood_spec, ood_test), detail::labels_of(ood_test),
                        ood_test.num_classes)
             .values)
      rec.metrics["ood_" + name] = value;
    with_bayes.push_back(std::move(rec));
  }
  with_bayes.insert(with_bayes.end(), records.begin(), records.end());
  return with_bayes;
}

// Label entropy of the test draw next to each variant's mean predictive
// entropy.
inline std::vector<RunRecord> run_entropy_report(const ExperimentConfig& cfg) {
  return detail::run_grid(cfg, /*include_bayes=*/false,
                          [](RunRecord& rec, const PredictorStack& stack, const GenerativeSpec&,
                             const Dataset&, const Dataset& test, std::uint64_t) {
                            const RealMatrix probs = predict_proba_batch(stack, test.samples);
                            rec.metrics["predictive_entropy"] = predictive_entropy(probs);
                            rec.metrics["label_entropy"] =
                                label_entropy(detail::labels_of(test), test.num_classes);
                          });
}

struct AggregateRow {
  std::string preset;
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single record
  std::size_t count = 0;

  bool operator==(const AggregateRow&) const = default;
};

inline std::vector<AggregateRow> aggregate(std::span<const RunRecord> records) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const RunRecord& rec : records) {
    if (!rec.error.empty()) continue;
    for (const auto& [metric, value] : rec.metrics)
      groups[{rec.preset, rec.variant, metric}].push_back(value);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, values] : groups) {
    AggregateRow row;
    row.preset = std::get<0>(key);
    row.variant = std::get<1>(key);
    row.metric = std::get<2>(key);
    row.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
      double sq = 0.0;
      for (double v : values) sq += (v - row.mean) * (v - row.mean);
      row.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::vector<const RunRecord*> sorted_views(std::span<const RunRecord> records) {
  std::vector<const RunRecord*> view;
  view.reserve(records.size());
  for (const auto& r : records) view.push_back(&r);
  std::sort(view.begin(), view.end(), [](const RunRecord* a, const RunRecord* b) {
    return std::tie(a->preset, a->variant, a->seed) < std::tie(b->preset, b->variant, b->seed);
  });
  return view;
}

}  // namespace detail

// CSV schema: preset,variant,seed,metric,value,wall_seconds,config_digest,
// one row per metric, sorted by (preset, variant, seed, metric). Errored
// runs contribute no rows here; their error strings live in the JSON mirror.
inline void emit_csv(std::span<const RunRecord> records, std::ostream& os) {
  os << "preset,variant,seed,metric,value,wall_seconds,config_digest\n";
  for (const RunRecord* rec : detail::sorted_views(records)) {
    for (const auto& [metric, value] : rec->metrics) {
      os << rec->preset << ',' << rec->variant << ',' << rec->seed << ',' << metric << ','
         << format_double(value) << ',' << format_double(rec->wall_seconds) << ','
         << rec->config_digest << '\n';
    }
  }
}

inline void emit_csv(std::span<const RunRecord> records, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  emit_csv(records, os);
}

inline void emit_json(std::span<const RunRecord> records, std::ostream& os) {
  nlohmann::json out = nlohmann::json::array();
  for (const RunRecord* rec : detail::sorted_views(records)) {
    nlohmann::json j;
    j["config_digest"] = rec->config_digest;
    j["preset"] = rec->preset;
    j["variant"] = rec->variant;
    j["seed"] = rec->seed;
    j["metrics"] = rec->metrics;
    j["wall_seconds"] = rec->wall_seconds;
    j["error"] = rec->error;
    out.push_back(std::move(j));
  }
  os << out.dump(2) << '\n';
}

inline void emit_json(std::span<const RunRecord> records, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  emit_json(records, os);
}

inline std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json data = nlohmann::json::parse(is);
  std::vector<RunRecord> records;
  for (const auto& j : data) {
    RunRecord rec;
    rec.config_digest = j.at("config_digest").get<std::string>();
    rec.preset = j.at("preset").get<std::string>();
    rec.variant = j.at("variant").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.metrics = j.at("metrics").get<std::map<std::string, double>>();
    rec.wall_seconds = j.at("wall_seconds").get<double>();
    rec.error = j.at("error").get<std::string>();
    records.push_back(std::move(rec));
  }
  return records;
}

// Output layout: <out>/<preset>/<config digest>.csv and .json.
struct OutputPaths {
  std::string csv;
  std::string json;
};

inline OutputPaths output_paths(const ExperimentConfig& cfg) {
  const std::filesystem::path dir = std::filesystem::path(cfg.out_dir) / cfg.preset_name;
  const std::string base = config_digest(cfg);
  return OutputPaths{(dir / (base + ".csv")).string(), (dir / (base + ".json")).string()};
}

inline OutputPaths emit_outputs(std::span<const RunRecord> records, const ExperimentConfig& cfg) {
  const OutputPaths paths = output_paths(cfg);
  std::filesystem::create_directories(std::filesystem::path(paths.csv).parent_path());
  emit_csv(records, paths.csv);
  emit_json(records, paths.json);
  return paths;
}

}  // namespace i2m2
