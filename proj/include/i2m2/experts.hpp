#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "i2m2/generative.hpp"
#include "i2m2/mlp.hpp"

namespace i2m2 {

enum class ExpertRole { modality_1, modality_2, joint };

inline std::string role_name(ExpertRole role) {
  switch (role) {
    case ExpertRole::modality_1: return "modality-1";
    case ExpertRole::modality_2: return "modality-2";
    case ExpertRole::joint: return "joint";
  }
  throw std::logic_error("role_name: unknown role");
}

inline ExpertRole role_from_name(std::string_view name) {
  if (name == "modality-1") return ExpertRole::modality_1;
  if (name == "modality-2") return ExpertRole::modality_2;
  if (name == "joint") return ExpertRole::joint;
  throw std::invalid_argument("unknown expert role '" + std::string(name) + "'");
}

// Input geometry an expert needs to featurize samples.
struct DataShape {
  FeatureKind kind = FeatureKind::categorical;
  int num_classes = 0;
  int dim1 = 0;  // support size (categorical) or feature dim (gaussian)
  int dim2 = 0;

  bool operator==(const DataShape&) const = default;
};

inline DataShape shape_of(const Dataset& ds) {
  return DataShape{ds.kind, ds.num_classes, ds.dim1, ds.dim2};
}

inline int natural_input_dim(ExpertRole role, const DataShape& shape) {
  switch (role) {
    case ExpertRole::modality_1: return shape.dim1;
    case ExpertRole::modality_2: return shape.dim2;
    case ExpertRole::joint: return shape.dim1 + shape.dim2;
  }
  throw std::logic_error("natural_input_dim: unknown role");
}

namespace detail {

inline void append_features(std::vector<double>& out, std::span<const double> x, bool onehot,
                            int support) {
  if (!onehot) {
    out.insert(out.end(), x.begin(), x.end());
    return;
  }
  const int sym = static_cast<int>(x[0]);
  if (x.size() != 1 || sym < 0 || sym >= support)
    throw std::invalid_argument("featurize: symbol outside support");
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(support), 0.0);
  out[base + static_cast<std::size_t>(sym)] = 1.0;
}

}  // namespace detail

// Role-dependent input view: modality-1 sees x, modality-2 sees x', joint
// sees the concatenation. Categorical symbols are one-hot encoded.
inline std::vector<double> featurize(const Sample& sample, ExpertRole role,
                                     const DataShape& shape) {
  const bool onehot = shape.kind == FeatureKind::categorical;
  std::vector<double> out;
  if (role == ExpertRole::modality_1 || role == ExpertRole::joint)
    detail::append_features(out, sample.x1, onehot, shape.dim1);
  if (role == ExpertRole::modality_2 || role == ExpertRole::joint)
    detail::append_features(out, sample.x2, onehot, shape.dim2);
  if (static_cast<int>(out.size()) != natural_input_dim(role, shape))
    throw std::invalid_argument("featurize: sample shape does not match dataset shape");
  return out;
}

// One factor of the product of experts. The network input may be wider than
// the natural featurization (parameter-matched ensembles); the extra inputs
// are zero-padded.
struct Expert {
  ExpertRole role = ExpertRole::joint;
  Mlp net;

  bool operator==(const Expert&) const = default;
};

struct PredictorStack {
  std::vector<Expert> experts;
  std::vector<std::uint8_t> active;   // parallel to experts
  std::vector<double> prior_logits;   // log empirical class frequencies
  double prior_coefficient = 0.0;     // lambda
  DataShape shape;

  int num_classes() const { return shape.num_classes; }

  const Expert* find(ExpertRole role) const {
    for (const auto& e : experts)
      if (e.role == role) return &e;
    return nullptr;
  }

  bool operator==(const PredictorStack&) const = default;
};

inline RealMatrix featurize_batch(std::span<const Sample> samples, const Expert& expert,
                                  const DataShape& shape) {
  const auto width = expert.net.input_dim();
  RealMatrix m(samples.size(), width);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const std::vector<double> f = featurize(samples[r], expert.role, shape);
    if (f.size() > width)
      throw std::invalid_argument("featurize_batch: network narrower than features");
    auto row = m.row(r);
    std::copy(f.begin(), f.end(), row.begin());
  }
  return m;
}

// Product of experts as an additive ensemble in log space: the sum of the
// active experts' logits plus lambda-scaled prior logits.
inline std::vector<double> combine(const PredictorStack& stack, const Sample& sample) {
  std::vector<double> logits(static_cast<std::size_t>(stack.num_classes()), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < stack.experts.size(); ++i) {
    if (!stack.active[i]) continue;
    any = true;
    const RealMatrix batch = featurize_batch({&sample, 1}, stack.experts[i], stack.shape);
    const RealMatrix out = forward(stack.experts[i].net, batch);
    for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += out.at(0, c);
  }
  if (!any) throw std::invalid_argument("combine: no active expert");
  if (stack.prior_coefficient != 0.0)
    for (std::size_t c = 0; c < logits.size(); ++c)
      logits[c] += stack.prior_coefficient * stack.prior_logits[c];
  return logits;
}

inline std::vector<double> predict_proba(const PredictorStack& stack, const Sample& sample) {
  return softmax(combine(stack, sample));
}

inline RealMatrix combine_batch(const PredictorStack& stack, std::span<const Sample> samples) {
  RealMatrix logits(samples.size(), static_cast<std::size_t>(stack.num_classes()));
  bool any = false;
  for (std::size_t i = 0; i < stack.experts.size(); ++i) {
    if (!stack.active[i]) continue;
    any = true;
    const RealMatrix batch = featurize_batch(samples, stack.experts[i], stack.shape);
    const RealMatrix out = forward(stack.experts[i].net, batch);
    for (std::size_t k = 0; k < logits.values.size(); ++k) logits.values[k] += out.values[k];
  }
  if (!any) throw std::invalid_argument("combine: no active expert");
  if (stack.prior_coefficient != 0.0)
    for (std::size_t r = 0; r < logits.rows; ++r) {
      auto row = logits.row(r);
      for (std::size_t c = 0; c < row.size(); ++c)
        row[c] += stack.prior_coefficient * stack.prior_logits[c];
    }
  return logits;
}

inline RealMatrix predict_proba_batch(const PredictorStack& stack,
                                      std::span<const Sample> samples) {
  return softmax(combine_batch(stack, samples));
}

enum class StackVariant { intra, inter, i2m2, uni_1, uni_2 };

inline StackVariant stack_variant_from_name(std::string_view name) {
  if (name == "intra") return StackVariant::intra;
  if (name == "inter") return StackVariant::inter;
  if (name == "i2m2") return StackVariant::i2m2;
  if (name == "uni-1") return StackVariant::uni_1;
  if (name == "uni-2") return StackVariant::uni_2;
  throw std::invalid_argument("unknown stack variant '" + std::string(name) + "'");
}

// Activates the experts the variant calls for; inter keeps only the joint
// expert, intra the two unimodal ones, i2m2 all three.
inline PredictorStack restrict(const PredictorStack& stack, StackVariant variant) {
  auto wants = [&](ExpertRole role) {
    switch (variant) {
      case StackVariant::intra:
        return role == ExpertRole::modality_1 || role == ExpertRole::modality_2;
      case StackVariant::inter: return role == ExpertRole::joint;
      case StackVariant::i2m2: return true;
      case StackVariant::uni_1: return role == ExpertRole::modality_1;
      case StackVariant::uni_2: return role == ExpertRole::modality_2;
    }
    return false;
  };

  PredictorStack out = stack;
  std::vector<bool> needed(3, false);
  needed[0] = wants(ExpertRole::modality_1);
  needed[1] = wants(ExpertRole::modality_2);
  needed[2] = wants(ExpertRole::joint);
  for (int r = 0; r < 3; ++r) {
    const auto role = static_cast<ExpertRole>(r);
    if (needed[static_cast<std::size_t>(r)] && stack.find(role) == nullptr)
      throw std::invalid_argument("restrict: stack lacks expert '" + role_name(role) + "'");
  }
  for (std::size_t i = 0; i < out.experts.size(); ++i)
    out.active[i] = wants(out.experts[i].role) ? 1 : 0;
  return out;
}

inline std::size_t count_parameters(const PredictorStack& stack) {
  std::size_t n = 0;
  bool any = false;
  for (std::size_t i = 0; i < stack.experts.size(); ++i) {
    if (!stack.active[i]) continue;
    any = true;
    n += count_parameters(stack.experts[i].net);
  }
  if (!any) throw std::invalid_argument("count_parameters: no active expert");
  return n;
}

struct TrainConfig {
  double lr_stage1 = 0.05;
  double lr_stage2 = 0.005;
  double weight_decay = 1e-4;
  int epochs_stage1 = 30;
  int epochs_stage2 = 20;
  int batch_size = 64;
  double validation_fraction = 0.15;
  int patience = 6;
  std::uint64_t seed = 0;
  std::vector<int> hidden_sizes = {32};

  void validate(std::size_t n_samples) const {
    if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0))
      throw std::invalid_argument("train config: learning rates must be positive");
    if (weight_decay < 0.0)
      throw std::invalid_argument("train config: weight decay must be nonnegative");
    if (epochs_stage1 < 0 || epochs_stage2 < 0)
      throw std::invalid_argument("train config: epoch counts must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
    if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0))
      throw std::invalid_argument("train config: validation fraction must lie in (0, 1)");
    if (patience < 0) throw std::invalid_argument("train config: patience must be nonnegative");
    for (int h : hidden_sizes)
      if (h < 1) throw std::invalid_argument("train config: hidden sizes must be positive");
    const auto val = static_cast<std::size_t>(
        std::floor(validation_fraction * static_cast<double>(n_samples)));
    if (val < 1 || n_samples - val < 1)
      throw std::invalid_argument("train config: validation split leaves no training data");
  }

  bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

inline RealMatrix gather_rows(const RealMatrix& m, std::span<const std::size_t> idx) {
  RealMatrix out(idx.size(), m.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = m.row(idx[r]);
    auto dst = out.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

struct JointTrainData {
  std::vector<RealMatrix> features;       // per active-expert featurized inputs
  std::vector<std::size_t> expert_index;  // stack index per feature block
  std::vector<int> labels;
};

inline JointTrainData featurize_stack(const PredictorStack& stack,
                                      std::span<const Sample> samples) {
  JointTrainData data;
  for (std::size_t i = 0; i < stack.experts.size(); ++i) {
    if (!stack.active[i]) continue;
    data.features.push_back(featurize_batch(samples, stack.experts[i], stack.shape));
    data.expert_index.push_back(i);
  }
  data.labels.reserve(samples.size());
  for (const Sample& s : samples) data.labels.push_back(s.label);
  return data;
}

inline RealMatrix stack_logits(const PredictorStack& stack, const JointTrainData& data,
                               std::span<const std::size_t> rows) {
  RealMatrix logits(rows.size(), static_cast<std::size_t>(stack.num_classes()));
  for (std::size_t b = 0; b < data.features.size(); ++b) {
    const RealMatrix out =
        forward(stack.experts[data.expert_index[b]].net, gather_rows(data.features[b], rows));
    for (std::size_t k = 0; k < logits.values.size(); ++k) logits.values[k] += out.values[k];
  }
  if (stack.prior_coefficient != 0.0)
    for (std::size_t r = 0; r < logits.rows; ++r) {
      auto row = logits.row(r);
      for (std::size_t c = 0; c < row.size(); ++c)
        row[c] += stack.prior_coefficient * stack.prior_logits[c];
    }
  return logits;
}

inline std::vector<int> gather_labels(std::span<const int> labels,
                                      std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

// Mini-batch SGD on the cross-entropy of the combined logits of the active
// experts, with early stopping on held-out validation loss. Mutates the
// active experts in place, leaving the best-validation snapshot.
inline void train_active_experts(PredictorStack& stack, const Dataset& dataset,
                                 const TrainConfig& cfg, double lr, int epochs,
                                 RngStream rng) {
  cfg.validate(dataset.samples.size());
  if (epochs == 0) return;

  RngStream split_rng = rng.fork("val-split");
  std::vector<std::size_t> order = shuffled_indices(dataset.samples.size(), split_rng);
  const auto val_count = static_cast<std::size_t>(std::floor(
      cfg.validation_fraction * static_cast<double>(dataset.samples.size())));
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<long>(val_count));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<long>(val_count), order.end());

  const JointTrainData data = featurize_stack(stack, dataset.samples);

  auto validation_loss = [&]() {
    return cross_entropy(stack_logits(stack, data, val_rows),
                         gather_labels(data.labels, val_rows));
  };

  PredictorStack best = stack;
  double best_loss = validation_loss();
  int since_improvement = 0;

  RngStream shuffle_rng = rng.fork("epoch-shuffle");
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_rows;
    for (std::size_t i = epoch_order.size(); i > 1; --i)
      std::swap(epoch_order[i - 1], epoch_order[shuffle_rng.next_u64() % i]);

    for (std::size_t start = 0; start < epoch_order.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, epoch_order.size());
      const std::span<const std::size_t> rows(epoch_order.data() + start, stop - start);
      const std::vector<int> labels = gather_labels(data.labels, rows);

      std::vector<ForwardCache> caches(data.features.size());
      RealMatrix logits(rows.size(), static_cast<std::size_t>(stack.num_classes()));
      for (std::size_t b = 0; b < data.features.size(); ++b) {
        const RealMatrix out = forward(stack.experts[data.expert_index[b]].net,
                                       gather_rows(data.features[b], rows), &caches[b]);
        for (std::size_t k = 0; k < logits.values.size(); ++k) logits.values[k] += out.values[k];
      }
      if (stack.prior_coefficient != 0.0)
        for (std::size_t r = 0; r < logits.rows; ++r) {
          auto row = logits.row(r);
          for (std::size_t c = 0; c < row.size(); ++c)
            row[c] += stack.prior_coefficient * stack.prior_logits[c];
        }

      RealMatrix dlogits;
      const double loss = cross_entropy(logits, labels, &dlogits);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite mini-batch loss");

      // The combined logits are a plain sum, so each expert receives the
      // same upstream gradient.
      for (std::size_t b = 0; b < data.features.size(); ++b) {
        auto& net = stack.experts[data.expert_index[b]].net;
        sgd_step(net, backward(net, caches[b], dlogits), lr, cfg.weight_decay);
      }
    }

    const double val_loss = validation_loss();
    if (!std::isfinite(val_loss))
      throw std::runtime_error("training diverged: non-finite validation loss");
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = stack;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  stack = std::move(best);
}

inline std::vector<double> empirical_prior_logits(const Dataset& ds) {
  std::vector<double> counts(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (const Sample& s : ds.samples) counts[static_cast<std::size_t>(s.label)] += 1.0;
  std::vector<double> logits(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    logits[c] = counts[c] > 0.0
                    ? std::log(counts[c] / static_cast<double>(ds.samples.size()))
                    : -700.0;  // empty class: effectively zero mass, kept finite
  return logits;
}

inline std::vector<int> stack_layer_sizes(ExpertRole role, const DataShape& shape,
                                          const TrainConfig& cfg) {
  std::vector<int> sizes{natural_input_dim(role, shape)};
  sizes.insert(sizes.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
  sizes.push_back(shape.num_classes);
  return sizes;
}

inline Expert make_expert(ExpertRole role, std::span<const int> layer_sizes, RngStream& rng) {
  return Expert{role, init_mlp(layer_sizes, rng)};
}

}  // namespace detail

// Stage-1 training: one expert fit on its own featurization.
inline Expert train_expert(ExpertRole role, const Dataset& dataset, const TrainConfig& cfg,
                           RngStream rng) {
  if (dataset.samples.empty()) throw std::invalid_argument("train_expert: empty dataset");
  const DataShape shape = shape_of(dataset);

  RngStream init_rng = rng.fork("init");
  PredictorStack stack;
  stack.shape = shape;
  stack.experts.push_back(
      detail::make_expert(role, detail::stack_layer_sizes(role, shape, cfg), init_rng));
  stack.active = {1};
  stack.prior_logits = detail::empirical_prior_logits(dataset);
  stack.prior_coefficient = 0.0;

  detail::train_active_experts(stack, dataset, cfg, cfg.lr_stage1, cfg.epochs_stage1,
                               rng.fork("train"));
  return std::move(stack.experts.front());
}

// Stage-2 fine-tuning: all active experts trained jointly through the
// combined cross-entropy at the stage-2 rate, early-stopped on the combined
// validation loss.
inline void fine_tune_stack(PredictorStack& stack, const Dataset& dataset,
                            const TrainConfig& cfg, RngStream rng) {
  detail::train_active_experts(stack, dataset, cfg, cfg.lr_stage2, cfg.epochs_stage2,
                               std::move(rng));
}

enum class TwoStageMode {
  full,           // stage-1 pretraining then joint fine-tuning
  pretrain_only,  // stage 2 disabled
  from_scratch,   // stage 1 disabled: joint training from random init
};

// Builds the three-expert stack. Stage 1 trains each expert independently;
// stage 2 fine-tunes all of them through the combined cross-entropy with
// lr_stage2 and its own early stopping.
inline PredictorStack two_stage_train(const Dataset& dataset, const TrainConfig& cfg,
                                      RngStream rng, TwoStageMode mode = TwoStageMode::full) {
  if (dataset.samples.empty()) throw std::invalid_argument("two_stage_train: empty dataset");
  const DataShape shape = shape_of(dataset);

  PredictorStack stack;
  stack.shape = shape;
  stack.prior_logits = detail::empirical_prior_logits(dataset);
  stack.prior_coefficient = 0.0;
  stack.active = {1, 1, 1};

  const ExpertRole roles[] = {ExpertRole::modality_1, ExpertRole::modality_2, ExpertRole::joint};
  for (ExpertRole role : roles) {
    if (mode == TwoStageMode::from_scratch) {
      RngStream init_rng = rng.fork("expert-" + role_name(role)).fork("init");
      stack.experts.push_back(
          detail::make_expert(role, detail::stack_layer_sizes(role, shape, cfg), init_rng));
    } else {
      stack.experts.push_back(
          train_expert(role, dataset, cfg, rng.fork("expert-" + role_name(role))));
    }
  }

  if (mode == TwoStageMode::pretrain_only) return stack;

  if (mode == TwoStageMode::from_scratch) {
    // From-scratch training gets the whole epoch budget at the stage-1 rate.
    detail::train_active_experts(stack, dataset, cfg, cfg.lr_stage1,
                                 cfg.epochs_stage1 + cfg.epochs_stage2, rng.fork("stage2"));
  } else {
    fine_tune_stack(stack, dataset, cfg, rng.fork("stage2"));
  }
  return stack;
}

// Independently trained experts combined by the same log-space ensemble.
// With a three-role composition each slot inherits the architecture of the
// corresponding I2M2 expert (canonical role order), padding narrower
// featurizations with zeros, so the parameter count matches the I2M2 stack
// exactly.
inline PredictorStack build_param_matched_ensemble(const Dataset& dataset, const TrainConfig& cfg,
                                                   std::vector<ExpertRole> composition,
                                                   RngStream rng) {
  if (composition.empty())
    throw std::invalid_argument("build_param_matched_ensemble: empty composition");
  if (dataset.samples.empty())
    throw std::invalid_argument("build_param_matched_ensemble: empty dataset");
  const DataShape shape = shape_of(dataset);
  std::sort(composition.begin(), composition.end());

  const ExpertRole canonical[] = {ExpertRole::modality_1, ExpertRole::modality_2,
                                  ExpertRole::joint};
  PredictorStack stack;
  stack.shape = shape;
  stack.prior_logits = detail::empirical_prior_logits(dataset);
  stack.prior_coefficient = 0.0;

  for (std::size_t slot = 0; slot < composition.size(); ++slot) {
    const ExpertRole role = composition[slot];
    std::vector<int> sizes = composition.size() == 3
                                 ? detail::stack_layer_sizes(canonical[slot], shape, cfg)
                                 : detail::stack_layer_sizes(role, shape, cfg);
    if (sizes.front() < natural_input_dim(role, shape))
      throw std::invalid_argument(
          "build_param_matched_ensemble: slot architecture narrower than role features");

    RngStream slot_rng = rng.fork("slot").fork(static_cast<std::uint64_t>(slot));
    RngStream init_rng = slot_rng.fork("init");
    PredictorStack single;
    single.shape = shape;
    single.experts.push_back(detail::make_expert(role, sizes, init_rng));
    single.active = {1};
    single.prior_logits = stack.prior_logits;
    detail::train_active_experts(single, dataset, cfg, cfg.lr_stage1, cfg.epochs_stage1,
                                 slot_rng.fork("train"));

    stack.experts.push_back(std::move(single.experts.front()));
    stack.active.push_back(1);
  }
  return stack;
}

}  // namespace i2m2
