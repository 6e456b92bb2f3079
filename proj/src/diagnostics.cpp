#include "nrc/diagnostics.hpp"

#include <algorithm>
#include <cstdio>

#include "nrc/error.hpp"
#include "nrc/graph.hpp"
#include "nrc/numerics.hpp"

namespace nrc {

std::vector<std::uint32_t> predicted_labels(const Matrix& p) {
  std::vector<std::uint32_t> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) out[i] = static_cast<std::uint32_t>(argmax(p.row(i)));
  return out;
}

namespace {

void check_labels(const Matrix& p, std::span<const std::uint32_t> labels, const char* who) {
  if (p.rows() == 0 || p.cols() == 0) throw InvalidInput(std::string(who) + ": empty input");
  if (labels.size() != p.rows()) throw InvalidInput(std::string(who) + ": label count mismatch");
  for (auto y : labels) {
    if (y >= p.cols()) throw InvalidInput(std::string(who) + ": label out of range");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double accuracy(const Matrix& p, std::span<const std::uint32_t> labels) {
  check_labels(p, labels, "accuracy");
  const auto pred = predicted_labels(p);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return ratio(hits, pred.size());
}

ClassAccuracy per_class_accuracy(const Matrix& p, std::span<const std::uint32_t> labels) {
  check_labels(p, labels, "per_class_accuracy");
  const auto pred = predicted_labels(p);
  std::vector<std::size_t> total(p.cols(), 0), hits(p.cols(), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++total[labels[i]];
    hits[labels[i]] += pred[i] == labels[i];
  }
  ClassAccuracy out;
  out.recall.resize(p.cols());
  out.present.resize(p.cols());
  std::size_t present = 0;
  double sum = 0.0;
  for (std::size_t c = 0; c < p.cols(); ++c) {
    out.present[c] = total[c] > 0;
    out.recall[c] = ratio(hits[c], total[c]);
    if (total[c] > 0) {
      ++present;
      sum += out.recall[c];
    }
  }
  out.mean = sum / static_cast<double>(present);
  return out;
}

NeighborPurityReport neighbor_purity(const Matrix& bank_features, const Matrix& bank_scores,
                                     std::optional<std::span<const std::uint32_t>> true_labels, std::size_t max_k) {
  const std::size_t n = bank_features.rows();
  if (bank_scores.rows() != n) throw InvalidInput("neighbor_purity: bank size mismatch");
  if (max_k == 0 || max_k >= n) throw InvalidInput("neighbor_purity: K must be in [1, bank size)");
  if (true_labels && true_labels->size() != n) throw InvalidInput("neighbor_purity: label count mismatch");

  const auto pred = predicted_labels(bank_scores);
  const CosineIndex index(bank_features);
  const NeighborLists lists = index.search_all(max_k);

  NeighborPurityReport report;
  report.has_truth = true_labels.has_value();
  for (std::size_t k = 1; k <= max_k; ++k) {
    PurityPoint pt;
    pt.k = k;
    std::size_t knn_same = 0, rnn_same = 0, nrnn_same = 0;
    std::size_t knn_true = 0, rnn_true = 0, nrnn_true = 0;
    std::size_t shared = 0, shared_correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto near = lists.of(i).first(k);
      bool all_same = true;
      for (std::size_t j : near) {
        auto back = lists.of(j).first(k);
        const bool reciprocal = std::find(back.begin(), back.end(), i) != back.end();
        const bool same = pred[j] == pred[i];
        const bool right = true_labels && pred[j] == (*true_labels)[i];
        all_same = all_same && same;
        ++pt.knn_count;
        knn_same += same;
        knn_true += right;
        if (reciprocal) {
          ++pt.rnn_count;
          rnn_same += same;
          rnn_true += right;
        } else {
          ++pt.nrnn_count;
          nrnn_same += same;
          nrnn_true += right;
        }
      }
      if (all_same) {
        ++shared;
        if (true_labels && pred[i] == (*true_labels)[i]) ++shared_correct;
      }
    }
    pt.knn_same = ratio(knn_same, pt.knn_count);
    pt.rnn_same = ratio(rnn_same, pt.rnn_count);
    pt.nrnn_same = ratio(nrnn_same, pt.nrnn_count);
    pt.knn_true = ratio(knn_true, pt.knn_count);
    pt.rnn_true = ratio(rnn_true, pt.rnn_count);
    pt.nrnn_true = ratio(nrnn_true, pt.nrnn_count);
    pt.all_shared = ratio(shared, n);
    pt.all_shared_correct = ratio(shared_correct, n);
    report.points.push_back(pt);
  }
  return report;
}

double all_shared_ratio(const Matrix& bank_features, const Matrix& bank_scores, std::size_t k) {
  const std::size_t n = bank_features.rows();
  if (bank_scores.rows() != n) throw InvalidInput("all_shared_ratio: bank size mismatch");
  const auto pred = predicted_labels(bank_scores);
  const NeighborLists lists = CosineIndex(bank_features).search_all(k);
  std::size_t shared = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto near = lists.of(i);
    shared += std::all_of(near.begin(), near.end(), [&](std::size_t j) { return pred[j] == pred[i]; });
  }
  return ratio(shared, n);
}

void write_purity_csv_header(std::ostream& out) {
  out << "stage,k,knn_count,rnn_count,nrnn_count,knn_same,rnn_same,nrnn_same,knn_true,rnn_true,nrnn_true,"
         "all_shared,all_shared_correct\n";
}

void write_purity_csv(std::ostream& out, const std::string& stage, const NeighborPurityReport& report) {
  char buf[512];
  for (const auto& pt : report.points) {
    if (report.has_truth) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    stage.c_str(), pt.k, pt.knn_count, pt.rnn_count, pt.nrnn_count, pt.knn_same, pt.rnn_same,
                    pt.nrnn_same, pt.knn_true, pt.rnn_true, pt.nrnn_true, pt.all_shared, pt.all_shared_correct);
    } else {
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,,,,%.17g,\n", stage.c_str(), pt.k,
                    pt.knn_count, pt.rnn_count, pt.nrnn_count, pt.knn_same, pt.rnn_same, pt.nrnn_same,
                    pt.all_shared);
    }
    out << buf;
  }
}

}  // namespace nrc
