#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "i2m2/matrix.hpp"

namespace i2m2 {

struct EvalReport {
  std::map<std::string, double> values;
  std::map<std::string, std::vector<double>> per_class;
  std::size_t sample_count = 0;
};

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty())
    throw std::invalid_argument("accuracy: need equal nonempty prediction/label sequences");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Mean per-class recall over the classes present in the labels.
inline double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                int num_classes) {
  if (predictions.size() != labels.size() || labels.empty())
    throw std::invalid_argument("balanced_accuracy: need equal nonempty sequences");
  std::vector<double> hits(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("balanced_accuracy: label out of range");
    totals[static_cast<std::size_t>(labels[i])] += 1.0;
    if (predictions[i] == labels[i]) hits[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (totals[static_cast<std::size_t>(c)] == 0.0) continue;
    sum += hits[static_cast<std::size_t>(c)] / totals[static_cast<std::size_t>(c)];
    ++present;
  }
  return sum / static_cast<double>(present);
}

// Mann-Whitney AUROC via average ranks; ties between a positive and a
// negative count one half.
inline double auroc_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || labels.empty())
    throw std::invalid_argument("auroc_binary: need equal nonempty sequences");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auroc_binary: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc_binary: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Unweighted one-vs-rest mean over classes present in the labels.
inline double auroc_macro(const RealMatrix& probabilities, std::span<const int> labels) {
  if (probabilities.cols < 2)
    throw std::invalid_argument("auroc_macro: need at least two classes");
  if (probabilities.rows != labels.size())
    throw std::invalid_argument("auroc_macro: one probability row per label required");

  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < static_cast<int>(probabilities.cols); ++c) {
    bool present = false;
    for (int y : labels)
      if (y == c) {
        present = true;
        break;
      }
    if (!present) continue;
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
      scores[r] = probabilities.at(r, static_cast<std::size_t>(c));
      binary[r] = labels[r] == c ? 1 : 0;
    }
    sum += auroc_binary(scores, binary);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("auroc_macro: no class present");
  return sum / static_cast<double>(counted);
}

// Mean over rows of -sum p log p, in nats; 0 log 0 reads as 0.
inline double predictive_entropy(const RealMatrix& probabilities) {
  if (probabilities.rows == 0)
    throw std::invalid_argument("predictive_entropy: empty input");
  double total = 0.0;
  for (std::size_t r = 0; r < probabilities.rows; ++r) {
    const auto row = probabilities.row(r);
    double row_sum = 0.0;
    double h = 0.0;
    for (double p : row) {
      if (p < 0.0) throw std::invalid_argument("predictive_entropy: negative probability");
      row_sum += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::fabs(row_sum - 1.0) > 1e-9)
      throw std::invalid_argument("predictive_entropy: row does not sum to 1");
    total += h;
  }
  return total / static_cast<double>(probabilities.rows);
}

inline double label_entropy(std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw std::invalid_argument("label_entropy: empty input");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("label_entropy: label out of range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  double h = 0.0;
  for (double c : counts) {
    if (c == 0.0) continue;
    const double p = c / static_cast<double>(labels.size());
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace i2m2
