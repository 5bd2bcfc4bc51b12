#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "i2m2/generative.hpp"

namespace i2m2 {

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

inline RealMatrix signed_identity(int rows, int cols, double sign) {
  RealMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  const int n = std::min(rows, cols);
  for (int i = 0; i < n; ++i)
    m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = sign;
  return m;
}

inline ClassConditional gaussian_pair_means(double mu, int dim, double stddev) {
  ClassConditional c;
  c.kind = FeatureKind::gaussian;
  c.means = {std::vector<double>(static_cast<std::size_t>(dim), -mu),
             std::vector<double>(static_cast<std::size_t>(dim), mu)};
  c.stddev = stddev;
  return c;
}

// Class means on a circle in the first two feature dimensions.
inline ClassConditional gaussian_ring_means(int num_classes, double mu, int dim, double stddev,
                                            double phase) {
  ClassConditional c;
  c.kind = FeatureKind::gaussian;
  c.stddev = stddev;
  for (int y = 0; y < num_classes; ++y) {
    std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
    const double angle = 2.0 * kPi * y / num_classes + phase;
    m[0] = mu * std::cos(angle);
    m[1] = mu * std::sin(angle);
    c.means.push_back(std::move(m));
  }
  return c;
}

// Per-class rank-1 interactions: class y accepts pairs whose projections on
// its own mean directions agree in sign.
inline SelectionModel ring_selection(int num_classes, double beta, int dim) {
  SelectionModel s;
  s.form = SelectionModel::Form::bilinear_logistic;
  s.strength = beta;
  for (int y = 0; y < num_classes; ++y) {
    RealMatrix a(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    const double angle = 2.0 * kPi * y / num_classes;
    const double u[2] = {std::cos(angle), std::sin(angle)};
    const double v[2] = {std::cos(angle + kPi / num_classes),
                         std::sin(angle + kPi / num_classes)};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = u[i] * v[j];
    s.interaction.push_back(std::move(a));
  }
  return s;
}

inline SelectionModel bilinear_sign_selection(double beta, int d1, int d2) {
  SelectionModel s;
  s.form = SelectionModel::Form::bilinear_logistic;
  s.strength = beta;
  s.interaction = {signed_identity(d1, d2, -1.0), signed_identity(d1, d2, 1.0)};
  return s;
}

inline SelectionModel constant_selection(double value) {
  SelectionModel s;
  s.form = SelectionModel::Form::constant;
  s.constant_value = value;
  return s;
}

inline std::vector<double> uniform_prior(int num_classes) {
  std::vector<double> prior(static_cast<std::size_t>(num_classes),
                            1.0 / static_cast<double>(num_classes));
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < prior.size(); ++i) acc += prior[i];
  prior.back() = 1.0 - acc;
  return prior;
}

}  // namespace detail

// Fixed generator instances, one per dependence regime.
//
//   both-deps            gaussian, C=6, d=d'=4; class means of radius 1.2 on
//                        a circle in the first two dims (modality 2 offset by
//                        pi/C), stddev 1.0; bilinear selection beta=6.0 with
//                        per-class rank-1 interactions along the class mean
//                        directions. Both the individual modalities and the
//                        class-specific interaction carry label signal.
//   intra-world          gaussian, C=2, d=d'=16, class means -/+0.16,
//                        stddev 1.0, constant selection 1.0. All signal is
//                        unimodal, spread thinly across many dimensions.
//   inter-world          gaussian, C=2, d=d'=2, identical (zero) class means,
//                        stddev 1.0, bilinear selection beta=2.0 with
//                        A_0 = -I, A_1 = +I. All signal sits in the
//                        label-dependent interaction.
//   spurious-shift-train gaussian, C=2, d=d'=2, class means -/+0.45,
//                        stddev 1.2, bilinear selection beta=2.5: the
//                        interaction acts as a shortcut on top of a moderate
//                        unimodal signal.
//   spurious-shift-test  the same spec with the shortcut removed
//                        (drop-selection surgery).
//   discrete-d1          C=2, uniform prior, p(x=y|y)=0.8, p(x'=y|y)=0.7,
//                        selection table 0.9 if (x xor x') = y else 0.1.
//   uniform-everything   C=2, uniform prior and conditionals over binary
//                        supports, constant selection: pure chance regime.
inline GenerativeSpec preset(std::string_view name) {
  GenerativeSpec spec;
  spec.num_classes = 2;
  spec.prior = {0.5, 0.5};

  if (name == "both-deps") {
    spec.num_classes = 6;
    spec.prior = detail::uniform_prior(6);
    spec.conditional_1 = detail::gaussian_ring_means(6, 1.2, 4, 1.0, 0.0);
    spec.conditional_2 = detail::gaussian_ring_means(6, 1.2, 4, 1.0, detail::kPi / 6);
    spec.selection = detail::ring_selection(6, 6.0, 4);
  } else if (name == "intra-world") {
    spec.conditional_1 = detail::gaussian_pair_means(0.16, 16, 1.0);
    spec.conditional_2 = detail::gaussian_pair_means(0.16, 16, 1.0);
    spec.selection = detail::constant_selection(1.0);
  } else if (name == "inter-world") {
    spec.conditional_1 = detail::gaussian_pair_means(0.0, 2, 1.0);
    spec.conditional_2 = detail::gaussian_pair_means(0.0, 2, 1.0);
    spec.selection = detail::bilinear_sign_selection(2.0, 2, 2);
  } else if (name == "spurious-shift-train") {
    spec.conditional_1 = detail::gaussian_pair_means(0.45, 2, 1.2);
    spec.conditional_2 = detail::gaussian_pair_means(0.45, 2, 1.2);
    spec.selection = detail::bilinear_sign_selection(2.5, 2, 2);
  } else if (name == "spurious-shift-test") {
    return make_ood_spec(preset("spurious-shift-train"), OodMode::drop_selection);
  } else if (name == "discrete-d1") {
    spec.conditional_1.kind = FeatureKind::categorical;
    spec.conditional_1.symbol_probs = {{0.8, 0.2}, {0.2, 0.8}};
    spec.conditional_2.kind = FeatureKind::categorical;
    spec.conditional_2.symbol_probs = {{0.7, 0.3}, {0.3, 0.7}};
    spec.selection.form = SelectionModel::Form::table;
    spec.selection.table.assign(2, {{0.0, 0.0}, {0.0, 0.0}});
    for (int y = 0; y < 2; ++y)
      for (int s1 = 0; s1 < 2; ++s1)
        for (int s2 = 0; s2 < 2; ++s2)
          spec.selection.table[y][s1][s2] = ((s1 ^ s2) == y) ? 0.9 : 0.1;
  } else if (name == "uniform-everything") {
    spec.conditional_1.kind = FeatureKind::categorical;
    spec.conditional_1.symbol_probs = {{0.5, 0.5}, {0.5, 0.5}};
    spec.conditional_2.kind = FeatureKind::categorical;
    spec.conditional_2.symbol_probs = {{0.5, 0.5}, {0.5, 0.5}};
    spec.selection = detail::constant_selection(1.0);
  } else {
    throw std::invalid_argument("preset: unknown name '" + std::string(name) + "'");
  }
  spec.validate();
  return spec;
}

inline std::vector<std::string> preset_names() {
  return {"both-deps",           "intra-world",         "inter-world",
          "spurious-shift-train", "spurious-shift-test", "discrete-d1",
          "uniform-everything"};
}

}  // namespace i2m2
