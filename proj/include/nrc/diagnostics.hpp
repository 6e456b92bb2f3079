#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nrc/matrix.hpp"

namespace nrc {

/// Row-wise argmax; ties go to the lower class index.
std::vector<std::uint32_t> predicted_labels(const Matrix& p);

double accuracy(const Matrix& p, std::span<const std::uint32_t> labels);

struct ClassAccuracy {
  std::vector<double> recall;  // 0 for classes absent from labels
  std::vector<std::uint8_t> present;
  double mean = 0.0;  // mean recall over present classes
};

ClassAccuracy per_class_accuracy(const Matrix& p, std::span<const std::uint32_t> labels);

/// Neighbor statistics at one neighborhood size K. The reciprocity test uses
/// M = K. "same" compares a neighbor's predicted label with the query's
/// predicted label, "true" compares it with the query's ground-truth label.
struct PurityPoint {
  std::size_t k = 0;
  std::size_t knn_count = 0;
  std::size_t rnn_count = 0;
  std::size_t nrnn_count = 0;
  double knn_same = 0.0;
  double rnn_same = 0.0;
  double nrnn_same = 0.0;
  double knn_true = 0.0;
  double rnn_true = 0.0;
  double nrnn_true = 0.0;
  double all_shared = 0.0;          // queries whose K neighbors all share the query's prediction
  double all_shared_correct = 0.0;  // ... and that prediction is the true label
};

struct NeighborPurityReport {
  bool has_truth = false;
  std::vector<PurityPoint> points;  // K = 1 .. max_k
};

/// Statistics over every row of the bank. Predictions come from the score
/// bank. Fractions with an empty denominator are reported as 0.
NeighborPurityReport neighbor_purity(const Matrix& bank_features, const Matrix& bank_scores,
                                     std::optional<std::span<const std::uint32_t>> true_labels, std::size_t max_k);

/// Fraction of bank rows whose k nearest neighbors all carry the row's
/// predicted label.
double all_shared_ratio(const Matrix& bank_features, const Matrix& bank_scores, std::size_t k);

void write_purity_csv_header(std::ostream& out);
void write_purity_csv(std::ostream& out, const std::string& stage, const NeighborPurityReport& report);

}  // namespace nrc
