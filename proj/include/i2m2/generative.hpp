#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "i2m2/matrix.hpp"
#include "i2m2/rng.hpp"
#include "i2m2/text.hpp"

namespace i2m2 {

inline constexpr double kProbTolerance = 1e-12;

enum class FeatureKind { categorical, gaussian };

// p(x | y) for one modality: either a per-class table over a finite symbol
// support, or per-class means with a shared isotropic standard deviation.
struct ClassConditional {
  FeatureKind kind = FeatureKind::categorical;
  std::vector<std::vector<double>> symbol_probs;  // [class][symbol]
  std::vector<std::vector<double>> means;         // [class][feature]
  double stddev = 1.0;

  int num_classes() const {
    return static_cast<int>(kind == FeatureKind::categorical ? symbol_probs.size()
                                                             : means.size());
  }

  // Support size for categorical, feature dimension for gaussian.
  int dim() const {
    if (kind == FeatureKind::categorical)
      return symbol_probs.empty() ? 0 : static_cast<int>(symbol_probs.front().size());
    return means.empty() ? 0 : static_cast<int>(means.front().size());
  }

  void validate() const {
    if (kind == FeatureKind::categorical) {
      if (symbol_probs.empty()) throw std::invalid_argument("conditional: empty table");
      for (const auto& row : symbol_probs) {
        if (row.size() != symbol_probs.front().size())
          throw std::invalid_argument("conditional: ragged table");
        double total = 0.0;
        for (double p : row) {
          if (p < 0.0) throw std::invalid_argument("conditional: negative probability");
          total += p;
        }
        if (std::fabs(total - 1.0) > kProbTolerance)
          throw std::invalid_argument("conditional: row does not sum to 1");
      }
    } else {
      if (means.empty()) throw std::invalid_argument("conditional: no class means");
      for (const auto& m : means)
        if (m.size() != means.front().size())
          throw std::invalid_argument("conditional: class means differ in dimension");
      if (!(stddev > 0.0)) throw std::invalid_argument("conditional: stddev must be positive");
    }
  }

  double log_density(std::span<const double> x, int y) const {
    if (kind == FeatureKind::categorical) {
      const int sym = static_cast<int>(x[0]);
      if (x.size() != 1 || sym < 0 || sym >= dim())
        throw std::invalid_argument("log_density: symbol outside support");
      return std::log(symbol_probs[static_cast<std::size_t>(y)][static_cast<std::size_t>(sym)]);
    }
    const auto& mean = means[static_cast<std::size_t>(y)];
    if (x.size() != mean.size())
      throw std::invalid_argument("log_density: feature dimension mismatch");
    const double var = stddev * stddev;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      sq += d * d;
    }
    return -0.5 * (static_cast<double>(x.size()) * std::log(6.283185307179586 * var) + sq / var);
  }

  bool operator==(const ClassConditional&) const = default;
};

// p(v = 1 | x, x', y): the mechanism coupling the modalities to the label.
struct SelectionModel {
  enum class Form { constant, table, bilinear_logistic };

  Form form = Form::constant;
  double constant_value = 1.0;                         // (0, 1]
  std::vector<std::vector<std::vector<double>>> table; // [y][x][x']
  double strength = 0.0;                               // beta >= 0
  std::vector<RealMatrix> interaction;                 // per-class A_y, d x d'

  void validate(int num_classes) const {
    switch (form) {
      case Form::constant:
        if (!(constant_value > 0.0) || constant_value > 1.0)
          throw std::invalid_argument("selection: constant must lie in (0, 1]");
        break;
      case Form::table: {
        if (static_cast<int>(table.size()) != num_classes)
          throw std::invalid_argument("selection: table must have one slab per class");
        for (const auto& slab : table)
          for (const auto& row : slab)
            for (double p : row)
              if (!(p > 0.0) || p > 1.0)
                throw std::invalid_argument("selection: table entries must lie in (0, 1]");
        break;
      }
      case Form::bilinear_logistic:
        if (strength < 0.0) throw std::invalid_argument("selection: strength must be nonnegative");
        if (static_cast<int>(interaction.size()) != num_classes)
          throw std::invalid_argument("selection: one interaction matrix per class required");
        for (const auto& m : interaction)
          if (m.rows != interaction.front().rows || m.cols != interaction.front().cols)
            throw std::invalid_argument("selection: interaction matrices differ in shape");
        break;
    }
  }

  bool operator==(const SelectionModel&) const = default;
};

inline double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Full parameterization of the generative process: prior, two
// class-conditionals, and the selection mechanism.
struct GenerativeSpec {
  int num_classes = 0;
  std::vector<double> prior;
  ClassConditional conditional_1;
  ClassConditional conditional_2;
  SelectionModel selection;

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("spec: need at least two classes");
    if (static_cast<int>(prior.size()) != num_classes)
      throw std::invalid_argument("spec: prior length must equal class count");
    double total = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw std::invalid_argument("spec: negative prior entry");
      total += p;
    }
    if (std::fabs(total - 1.0) > kProbTolerance)
      throw std::invalid_argument("spec: prior does not sum to 1");
    conditional_1.validate();
    conditional_2.validate();
    if (conditional_1.num_classes() != num_classes || conditional_2.num_classes() != num_classes)
      throw std::invalid_argument("spec: conditionals disagree on class count");
    selection.validate(num_classes);
  }

  bool operator==(const GenerativeSpec&) const = default;
};

// One labeled two-modality observation. Categorical symbols are stored as a
// single value holding the symbol index.
struct Sample {
  std::vector<double> x1;
  std::vector<double> x2;
  int label = 0;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  FeatureKind kind = FeatureKind::categorical;
  int num_classes = 0;
  int dim1 = 0;  // support size (categorical) or feature dimension (gaussian)
  int dim2 = 0;
  std::uint64_t seed = 0;
  std::string spec_digest;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

// Canonical text rendering of a spec, used for content digests.
inline std::string canonical_spec_text(const GenerativeSpec& spec) {
  std::ostringstream os;
  os << "classes " << spec.num_classes << "\nprior";
  for (double p : spec.prior) os << ' ' << format_double(p);
  auto dump_cond = [&](const ClassConditional& c) {
    if (c.kind == FeatureKind::categorical) {
      os << "\ncategorical";
      for (const auto& row : c.symbol_probs) {
        os << "\n ";
        for (double p : row) os << ' ' << format_double(p);
      }
    } else {
      os << "\ngaussian stddev " << format_double(c.stddev);
      for (const auto& m : c.means) {
        os << "\n ";
        for (double v : m) os << ' ' << format_double(v);
      }
    }
  };
  dump_cond(spec.conditional_1);
  dump_cond(spec.conditional_2);
  switch (spec.selection.form) {
    case SelectionModel::Form::constant:
      os << "\nselection constant " << format_double(spec.selection.constant_value);
      break;
    case SelectionModel::Form::table:
      os << "\nselection table";
      for (const auto& slab : spec.selection.table)
        for (const auto& row : slab) {
          os << "\n ";
          for (double p : row) os << ' ' << format_double(p);
        }
      break;
    case SelectionModel::Form::bilinear_logistic:
      os << "\nselection bilinear strength " << format_double(spec.selection.strength);
      for (const auto& a : spec.selection.interaction) {
        os << "\n " << a.rows << 'x' << a.cols;
        for (double v : a.values) os << ' ' << format_double(v);
      }
      break;
  }
  os << '\n';
  return os.str();
}

inline std::string spec_digest(const GenerativeSpec& spec) {
  return to_hex16(fnv1a64(canonical_spec_text(spec)));
}

inline double selection_prob(const GenerativeSpec& spec, std::span<const double> x1,
                             std::span<const double> x2, int y) {
  if (y < 0 || y >= spec.num_classes)
    throw std::invalid_argument("selection_prob: class out of range");
  const auto& sel = spec.selection;
  switch (sel.form) {
    case SelectionModel::Form::constant:
      return sel.constant_value;
    case SelectionModel::Form::table: {
      const int s1 = static_cast<int>(x1[0]);
      const int s2 = static_cast<int>(x2[0]);
      const auto& slab = sel.table[static_cast<std::size_t>(y)];
      if (s1 < 0 || s1 >= static_cast<int>(slab.size()) || s2 < 0 ||
          s2 >= static_cast<int>(slab[static_cast<std::size_t>(s1)].size()))
        throw std::invalid_argument("selection_prob: symbol outside table");
      return slab[static_cast<std::size_t>(s1)][static_cast<std::size_t>(s2)];
    }
    case SelectionModel::Form::bilinear_logistic: {
      const auto& a = sel.interaction[static_cast<std::size_t>(y)];
      if (x1.size() != a.rows || x2.size() != a.cols)
        throw std::invalid_argument("selection_prob: feature shapes do not match interaction");
      double bilinear = 0.0;
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
          bilinear += x1[i] * a.at(i, j) * x2[j];
      return logistic(sel.strength * bilinear);
    }
  }
  throw std::logic_error("selection_prob: unknown form");
}

namespace detail {

inline std::vector<double> draw_modality(const ClassConditional& cond, int y, RngStream& rng) {
  if (cond.kind == FeatureKind::categorical) {
    return {static_cast<double>(rng.categorical(cond.symbol_probs[static_cast<std::size_t>(y)]))};
  }
  const auto& mean = cond.means[static_cast<std::size_t>(y)];
  std::vector<double> x(mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + cond.stddev * rng.normal();
  return x;
}

}  // namespace detail

struct SampleStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

// Rejection sampling from the v=1-conditioned joint: ancestral draws accepted
// with probability p(v=1 | x, x', y). Aborts if the running acceptance rate
// stays below 1e-4 after 10,000 proposals.
inline Dataset sample_dataset(const GenerativeSpec& spec, std::size_t n, RngStream& rng,
                              SampleStats* stats = nullptr) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample_dataset: need n >= 1");
  if (spec.conditional_1.kind != spec.conditional_2.kind)
    throw std::invalid_argument("sample_dataset: mixed-kind modalities unsupported");

  Dataset ds;
  ds.kind = spec.conditional_1.kind;
  ds.num_classes = spec.num_classes;
  ds.dim1 = spec.conditional_1.dim();
  ds.dim2 = spec.conditional_2.dim();
  ds.seed = rng.seed();
  ds.spec_digest = spec_digest(spec);
  ds.samples.reserve(n);

  SampleStats local;
  SampleStats& st = stats ? *stats : local;
  st = {};
  while (ds.samples.size() < n) {
    ++st.proposals;
    const int y = rng.categorical(spec.prior);
    std::vector<double> x1 = detail::draw_modality(spec.conditional_1, y, rng);
    std::vector<double> x2 = detail::draw_modality(spec.conditional_2, y, rng);
    const double accept = selection_prob(spec, x1, x2, y);
    if (rng.uniform() < accept) {
      ++st.accepted;
      ds.samples.push_back(Sample{std::move(x1), std::move(x2), y});
    }
    if (st.proposals >= 10000 && st.acceptance_rate() < 1e-4)
      throw std::runtime_error(
          "sample_dataset: acceptance rate below 1e-4 after 10,000 proposals; "
          "the selection model starves the sampler");
  }
  return ds;
}

// Normalized joint over (y, x, x') for fully categorical specs; the module's
// ground-truth oracle.
struct JointTable {
  int num_classes = 0;
  int support_1 = 0;
  int support_2 = 0;
  std::vector<double> probs;  // [y][x][x'] row-major

  double& at(int y, int s1, int s2) {
    return probs[(static_cast<std::size_t>(y) * support_1 + s1) * support_2 + s2];
  }
  double at(int y, int s1, int s2) const {
    return probs[(static_cast<std::size_t>(y) * support_1 + s1) * support_2 + s2];
  }
};

inline JointTable enumerate_joint(const GenerativeSpec& spec) {
  spec.validate();
  if (spec.conditional_1.kind != FeatureKind::categorical ||
      spec.conditional_2.kind != FeatureKind::categorical)
    throw std::invalid_argument("enumerate_joint: requires categorical conditionals");

  JointTable table;
  table.num_classes = spec.num_classes;
  table.support_1 = spec.conditional_1.dim();
  table.support_2 = spec.conditional_2.dim();
  table.probs.assign(
      static_cast<std::size_t>(table.num_classes) * table.support_1 * table.support_2, 0.0);

  double total = 0.0;
  for (int y = 0; y < table.num_classes; ++y)
    for (int s1 = 0; s1 < table.support_1; ++s1)
      for (int s2 = 0; s2 < table.support_2; ++s2) {
        const double v1[] = {static_cast<double>(s1)};
        const double v2[] = {static_cast<double>(s2)};
        const double w = spec.prior[static_cast<std::size_t>(y)] *
                         spec.conditional_1.symbol_probs[y][s1] *
                         spec.conditional_2.symbol_probs[y][s2] *
                         selection_prob(spec, v1, v2, y);
        table.at(y, s1, s2) = w;
        total += w;
      }
  if (!(total > 0.0)) throw std::runtime_error("enumerate_joint: zero total mass");
  for (double& p : table.probs) p /= total;
  return table;
}

// Exact posterior over classes from the known spec:
// p(y | x, x') proportional to prior(y) p(x|y) p(x'|y) p(v=1|x,x',y).
inline std::vector<double> exact_posterior(const GenerativeSpec& spec,
                                           std::span<const double> x1,
                                           std::span<const double> x2) {
  std::vector<double> logw(static_cast<std::size_t>(spec.num_classes));
  for (int y = 0; y < spec.num_classes; ++y) {
    const double prior = spec.prior[static_cast<std::size_t>(y)];
    logw[static_cast<std::size_t>(y)] =
        (prior > 0.0 ? std::log(prior) : -std::numeric_limits<double>::infinity()) +
        spec.conditional_1.log_density(x1, y) + spec.conditional_2.log_density(x2, y) +
        std::log(selection_prob(spec, x1, x2, y));
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(m)) throw std::runtime_error("exact_posterior: zero total mass");
  double total = 0.0;
  std::vector<double> post(logw.size());
  for (std::size_t y = 0; y < logw.size(); ++y) {
    post[y] = std::exp(logw[y] - m);
    total += post[y];
  }
  for (double& p : post) p /= total;
  return post;
}

inline int argmax_class(std::span<const double> probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i)
    if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
  return best;  // ties resolve to the lowest class index
}

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo accuracy of the exact-posterior argmax on fresh draws.
inline McEstimate bayes_accuracy(const GenerativeSpec& spec, std::size_t n_mc, RngStream& rng) {
  if (n_mc < 1000) throw std::invalid_argument("bayes_accuracy: need n_mc >= 1000");
  const Dataset ds = sample_dataset(spec, n_mc, rng);
  std::size_t correct = 0;
  for (const Sample& s : ds.samples)
    if (argmax_class(exact_posterior(spec, s.x1, s.x2)) == s.label) ++correct;
  McEstimate est;
  est.value = static_cast<double>(correct) / static_cast<double>(n_mc);
  est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(n_mc));
  return est;
}

// I(x; x' | y) in nats, computed from the enumerated joint.
inline double conditional_mutual_information(const JointTable& joint) {
  double cmi = 0.0;
  for (int y = 0; y < joint.num_classes; ++y) {
    double py = 0.0;
    std::vector<double> p1(static_cast<std::size_t>(joint.support_1), 0.0);
    std::vector<double> p2(static_cast<std::size_t>(joint.support_2), 0.0);
    for (int s1 = 0; s1 < joint.support_1; ++s1)
      for (int s2 = 0; s2 < joint.support_2; ++s2) {
        const double p = joint.at(y, s1, s2);
        py += p;
        p1[static_cast<std::size_t>(s1)] += p;
        p2[static_cast<std::size_t>(s2)] += p;
      }
    if (py <= 0.0) continue;
    for (int s1 = 0; s1 < joint.support_1; ++s1)
      for (int s2 = 0; s2 < joint.support_2; ++s2) {
        const double p = joint.at(y, s1, s2);
        if (p <= 0.0) continue;
        cmi += p * std::log(p * py / (p1[static_cast<std::size_t>(s1)] *
                                      p2[static_cast<std::size_t>(s2)]));
      }
  }
  return cmi;
}

enum class OodMode { drop_selection, flip_interaction, shift_means };

// Spec surgery for distribution-shift experiments; returns a modified copy.
inline GenerativeSpec make_ood_spec(const GenerativeSpec& spec, OodMode mode,
                                    double mean_shift = 0.5) {
  GenerativeSpec out = spec;
  switch (mode) {
    case OodMode::drop_selection:
      if (spec.selection.form == SelectionModel::Form::bilinear_logistic) {
        out.selection.strength = 0.0;  // logistic(0) = 1/2 for every input
      } else {
        out.selection = SelectionModel{};
        out.selection.form = SelectionModel::Form::constant;
        out.selection.constant_value = 0.5;
      }
      break;
    case OodMode::flip_interaction:
      if (spec.selection.form != SelectionModel::Form::bilinear_logistic)
        throw std::invalid_argument("make_ood_spec: flip-interaction needs a bilinear selection");
      for (auto& a : out.selection.interaction)
        for (double& v : a.values) v = -v;
      break;
    case OodMode::shift_means:
      if (spec.conditional_1.kind != FeatureKind::gaussian)
        throw std::invalid_argument("make_ood_spec: shift-means needs gaussian conditionals");
      for (auto& m : out.conditional_1.means)
        for (double& v : m) v += mean_shift;
      for (auto& m : out.conditional_2.means)
        for (double& v : m) v += mean_shift;
      break;
  }
  return out;
}

enum class NoiseMode { additive_gaussian, rician_magnitude };

// Test-time degradation. Additive mode perturbs every feature of both
// modalities with N(0, sigma^2). Rician mode treats consecutive feature pairs
// (in index order, per modality) as (real, imaginary) channels, perturbs each
// independently, and replaces the pair by its magnitude and zero.
inline Dataset apply_noise(const Dataset& dataset, NoiseMode mode, double sigma, RngStream& rng) {
  if (dataset.kind != FeatureKind::gaussian)
    throw std::invalid_argument("apply_noise: requires gaussian features");
  if (sigma < 0.0) throw std::invalid_argument("apply_noise: sigma must be nonnegative");
  if (mode == NoiseMode::rician_magnitude && (dataset.dim1 % 2 != 0 || dataset.dim2 % 2 != 0))
    throw std::invalid_argument("apply_noise: rician mode needs even feature dimensions");

  Dataset out = dataset;
  if (mode == NoiseMode::additive_gaussian && sigma == 0.0) return out;

  auto degrade = [&](std::vector<double>& x) {
    if (mode == NoiseMode::additive_gaussian) {
      for (double& v : x) v += sigma * rng.normal();
      return;
    }
    for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
      const double re = x[i] + sigma * rng.normal();
      const double im = x[i + 1] + sigma * rng.normal();
      x[i] = std::sqrt(re * re + im * im);
      x[i + 1] = 0.0;
    }
  };
  for (Sample& s : out.samples) {
    degrade(s.x1);
    degrade(s.x2);
  }
  return out;
}

}  // namespace i2m2
