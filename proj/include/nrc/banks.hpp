#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nrc/matrix.hpp"
#include "nrc/model.hpp"

namespace nrc {

enum class BankMode { full, fifo };

/// Feature bank F and score bank S, kept index-aligned: row r of features()
/// and row r of scores() always come from the same forward pass.
///
/// Full mode has one row per target sample, row index == dataset index.
/// FIFO mode holds at most capacity() entries in insertion order (row 0 is
/// the oldest); dataset_index(r) records where each entry came from.
///
/// Rows are plain copies, so nothing downstream can differentiate through
/// them.
class MemoryBanks {
 public:
  static MemoryBanks full(Matrix features, Matrix scores);
  static MemoryBanks fifo(std::size_t capacity, std::size_t feature_dim, std::size_t num_classes);

  BankMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return scores_.cols(); }

  const Matrix& features() const noexcept { return features_; }
  const Matrix& scores() const noexcept { return scores_; }
  std::span<const std::size_t> dataset_indices() const noexcept { return dataset_index_; }
  std::size_t dataset_index(std::size_t row) const { return dataset_index_.at(row); }

  /// Full mode: overwrite the rows at batch_indices; all other rows are left
  /// untouched.
  void update(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p);

  /// FIFO mode: append the batch and evict the oldest entries beyond capacity.
  void push(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p);

  /// Mode-appropriate write. Returns the bank row holding each batch entry.
  std::vector<std::size_t> write(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p);

 private:
  void check_batch(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p) const;

  BankMode mode_ = BankMode::full;
  std::size_t capacity_ = 0;
  Matrix features_;
  Matrix scores_;
  std::vector<std::size_t> dataset_index_;
};

/// One eval-mode forward pass over the whole target set, full mode.
MemoryBanks initialize_banks(const ModelParams& params, const Matrix& target);

}  // namespace nrc
