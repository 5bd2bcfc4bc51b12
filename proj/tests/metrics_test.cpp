#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "i2m2/metrics.hpp"
#include "i2m2/rng.hpp"

using namespace i2m2;

namespace {

// O(n^2) pairwise oracle: fraction of (positive, negative) pairs ranked
// correctly, ties counted one half.
double auroc_pairwise(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Accuracy, CountsMatches) {
  const std::vector<int> labels = {1, 1, 1};
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{1, 1, 1}, labels), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 0, 0}, labels), 0.0);
  EXPECT_NEAR(accuracy(std::vector<int>{1, 0, 1}, labels), 2.0 / 3.0, 1e-15);
}

TEST(BalancedAccuracy, PerfectAndConstantPredictors) {
  const std::vector<int> balanced_labels = {0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(balanced_accuracy(balanced_labels, balanced_labels, 2), 1.0);

  // Constant predictor on a 90/10 split: recalls 1 and 0.
  std::vector<int> labels(10, 0);
  labels[9] = 1;
  const std::vector<int> constant(10, 0);
  EXPECT_DOUBLE_EQ(balanced_accuracy(constant, labels, 2), 0.5);
}

TEST(BalancedAccuracy, HandComputedRecallMean) {
  // Recalls: class 0 -> 1/2, class 1 -> 1/1; mean 0.75.
  const std::vector<int> labels = {0, 0, 1};
  const std::vector<int> preds = {0, 1, 1};
  EXPECT_DOUBLE_EQ(balanced_accuracy(preds, labels, 2), 0.75);
}

TEST(BalancedAccuracy, EqualsAccuracyOnUniformLabels) {
  RngStream rng(3);
  std::vector<int> labels, preds;
  for (int i = 0; i < 120; ++i) {
    labels.push_back(i % 3);
    preds.push_back(static_cast<int>(rng.next_u64() % 3));
  }
  EXPECT_NEAR(balanced_accuracy(preds, labels, 3), accuracy(preds, labels), 1e-12);
}

TEST(AurocBinary, PerfectSeparationAndAllTies) {
  const std::vector<double> separated = {0.1, 0.2, 0.8, 0.9};
  const std::vector<int> labels = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc_binary(separated, labels), 1.0);
  const std::vector<double> equal(4, 0.5);
  EXPECT_DOUBLE_EQ(auroc_binary(equal, labels), 0.5);
}

TEST(AurocBinary, HandComputedPairCount) {
  const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> labels = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc_binary(scores, labels), 0.75);
}

TEST(AurocBinary, RejectsSingleClassInput) {
  const std::vector<double> scores = {0.1, 0.2};
  const std::vector<int> labels = {1, 1};
  EXPECT_THROW(auroc_binary(scores, labels), std::invalid_argument);
}

TEST(AurocBinary, MatchesPairwiseOracleOnRandomInstances) {
  RngStream rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng.next_u64() % 191;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores force tie handling
      scores[i] = std::floor(rng.uniform() * 20.0) / 20.0;
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
      (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    EXPECT_NEAR(auroc_binary(scores, labels), auroc_pairwise(scores, labels), 1e-12);
  }
}

TEST(AurocBinary, ComplementAndMonotoneInvariance) {
  RngStream rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 20 + rng.next_u64() % 80;
    std::vector<double> scores(n);
    std::vector<double> negated(n), warped(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::floor(rng.uniform() * 10.0) / 10.0;
      negated[i] = -scores[i];
      warped[i] = std::exp(3.0 * scores[i]);  // strictly increasing transform
      labels[i] = rng.uniform() < 0.5 ? 1 : 0;
      (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    EXPECT_NEAR(auroc_binary(scores, labels) + auroc_binary(negated, labels), 1.0, 1e-12);
    EXPECT_NEAR(auroc_binary(scores, labels), auroc_binary(warped, labels), 1e-12);
  }
}

TEST(AurocMacro, PerfectAndUniformProbabilities) {
  RealMatrix perfect(6, 3);
  RealMatrix uniform(6, 3, 1.0 / 3.0);
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) {
    labels.push_back(i % 3);
    perfect.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i % 3)) = 1.0;
  }
  EXPECT_DOUBLE_EQ(auroc_macro(perfect, labels), 1.0);
  EXPECT_DOUBLE_EQ(auroc_macro(uniform, labels), 0.5);
}

TEST(AurocMacro, AgreesWithPerClassPairwiseOracle) {
  RngStream rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30 + rng.next_u64() % 60;
    const int C = 3;
    RealMatrix probs(n, C);
    std::vector<int> labels(n);
    for (std::size_t r = 0; r < n; ++r) {
      double total = 0.0;
      for (int c = 0; c < C; ++c) {
        probs.at(r, static_cast<std::size_t>(c)) = 0.05 + std::floor(rng.uniform() * 8.0);
        total += probs.at(r, static_cast<std::size_t>(c));
      }
      for (int c = 0; c < C; ++c) probs.at(r, static_cast<std::size_t>(c)) /= total;
      labels[r] = static_cast<int>(rng.next_u64() % C);
    }
    double expected = 0.0;
    for (int c = 0; c < C; ++c) {
      std::vector<double> scores(n);
      std::vector<int> binary(n);
      for (std::size_t r = 0; r < n; ++r) {
        scores[r] = probs.at(r, static_cast<std::size_t>(c));
        binary[r] = labels[r] == c ? 1 : 0;
      }
      expected += auroc_pairwise(scores, binary);
    }
    EXPECT_NEAR(auroc_macro(probs, labels), expected / C, 1e-12);
  }
}

TEST(PredictiveEntropy, UniformRowsHitLogCardinality) {
  // ln 10 = 2.302585, ln 2 = 0.693147
  RealMatrix ten(4, 10, 0.1);
  EXPECT_NEAR(predictive_entropy(ten), 2.302585, 1e-6);
  RealMatrix two(4, 2, 0.5);
  EXPECT_NEAR(predictive_entropy(two), 0.693147, 1e-6);
}

TEST(PredictiveEntropy, OneHotRowsHaveZeroEntropy) {
  RealMatrix probs(3, 4);
  probs.at(0, 1) = 1.0;
  probs.at(1, 0) = 1.0;
  probs.at(2, 3) = 1.0;
  EXPECT_DOUBLE_EQ(predictive_entropy(probs), 0.0);
}

TEST(PredictiveEntropy, BoundedByLogCardinality) {
  RngStream rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int C = 2 + static_cast<int>(rng.next_u64() % 5);
    RealMatrix probs(5, static_cast<std::size_t>(C));
    for (std::size_t r = 0; r < probs.rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < probs.cols; ++c) {
        probs.at(r, c) = 0.01 + rng.uniform();
        total += probs.at(r, c);
      }
      for (std::size_t c = 0; c < probs.cols; ++c) probs.at(r, c) /= total;
    }
    const double h = predictive_entropy(probs);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(C)) + 1e-12);
  }
}

TEST(PredictiveEntropy, RejectsUnnormalizedRows) {
  RealMatrix probs(1, 2, 0.4);
  EXPECT_THROW(predictive_entropy(probs), std::invalid_argument);
}

TEST(LabelEntropy, DegenerateUniformAndBinary) {
  const std::vector<int> single(5, 2);
  EXPECT_DOUBLE_EQ(label_entropy(single, 4), 0.0);

  std::vector<int> uniform10;
  for (int i = 0; i < 1000; ++i) uniform10.push_back(i % 10);
  EXPECT_NEAR(label_entropy(uniform10, 10), 2.302585, 1e-6);

  const std::vector<int> fifty_fifty = {0, 1, 0, 1};
  EXPECT_NEAR(label_entropy(fifty_fifty, 2), std::log(2.0), 1e-15);
}
