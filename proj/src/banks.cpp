#include "nrc/banks.hpp"

#include <algorithm>
#include <numeric>

#include "nrc/numerics.hpp"

namespace nrc {

MemoryBanks MemoryBanks::full(Matrix features, Matrix scores) {
  if (features.rows() != scores.rows()) throw InvalidInput("banks: feature/score row count mismatch");
  if (features.rows() == 0) throw InvalidInput("banks: empty bank");
  if (!all_finite(features.values()) || !all_finite(scores.values())) {
    throw InvalidInput("banks: non-finite rows");
  }
  MemoryBanks b;
  b.mode_ = BankMode::full;
  b.capacity_ = features.rows();
  b.dataset_index_.resize(features.rows());
  std::iota(b.dataset_index_.begin(), b.dataset_index_.end(), std::size_t{0});
  b.features_ = std::move(features);
  b.scores_ = std::move(scores);
  return b;
}

MemoryBanks MemoryBanks::fifo(std::size_t capacity, std::size_t feature_dim, std::size_t num_classes) {
  if (capacity == 0) throw InvalidInput("banks: fifo capacity must be positive");
  MemoryBanks b;
  b.mode_ = BankMode::fifo;
  b.capacity_ = capacity;
  b.features_ = Matrix(0, feature_dim);
  b.scores_ = Matrix(0, num_classes);
  return b;
}

void MemoryBanks::check_batch(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p) const {
  if (z.rows() != batch_indices.size() || p.rows() != batch_indices.size()) {
    throw InvalidInput("banks: batch row count mismatch");
  }
  if (z.cols() != features_.cols() || p.cols() != scores_.cols()) throw InvalidInput("banks: batch width mismatch");
  if (!all_finite(z.values()) || !all_finite(p.values())) throw InvalidInput("banks: non-finite batch rows");
}

void MemoryBanks::update(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p) {
  if (mode_ != BankMode::full) throw InvalidInput("banks: update requires full mode");
  check_batch(batch_indices, z, p);
  for (std::size_t i : batch_indices) {
    if (i >= size()) throw InvalidInput("banks: batch index out of range");
  }
  for (std::size_t b = 0; b < batch_indices.size(); ++b) {
    std::ranges::copy(z.row(b), features_.row(batch_indices[b]).begin());
    std::ranges::copy(p.row(b), scores_.row(batch_indices[b]).begin());
  }
}

void MemoryBanks::push(std::span<const std::size_t> batch_indices, const Matrix& z, const Matrix& p) {
  if (mode_ != BankMode::fifo) throw InvalidInput("banks: push requires fifo mode");
  check_batch(batch_indices, z, p);
  const std::size_t n = batch_indices.size();
  if (n > capacity_) throw InvalidInput("banks: batch larger than fifo capacity");

  const std::size_t keep = std::min(size(), capacity_ - n);
  const std::size_t drop = size() - keep;
  Matrix f(keep + n, features_.cols());
  Matrix s(keep + n, scores_.cols());
  std::vector<std::size_t> idx(keep + n);
  for (std::size_t r = 0; r < keep; ++r) {
    std::ranges::copy(features_.row(drop + r), f.row(r).begin());
    std::ranges::copy(scores_.row(drop + r), s.row(r).begin());
    idx[r] = dataset_index_[drop + r];
  }
  for (std::size_t b = 0; b < n; ++b) {
    std::ranges::copy(z.row(b), f.row(keep + b).begin());
    std::ranges::copy(p.row(b), s.row(keep + b).begin());
    idx[keep + b] = batch_indices[b];
  }
  features_ = std::move(f);
  scores_ = std::move(s);
  dataset_index_ = std::move(idx);
}

std::vector<std::size_t> MemoryBanks::write(std::span<const std::size_t> batch_indices, const Matrix& z,
                                            const Matrix& p) {
  if (mode_ == BankMode::full) {
    update(batch_indices, z, p);
    return {batch_indices.begin(), batch_indices.end()};
  }
  push(batch_indices, z, p);
  std::vector<std::size_t> rows(batch_indices.size());
  std::iota(rows.begin(), rows.end(), size() - batch_indices.size());
  return rows;
}

MemoryBanks initialize_banks(const ModelParams& params, const Matrix& target) {
  if (target.rows() == 0) throw InvalidInput("initialize_banks: empty target set");
  if (target.cols() != params.input_dim()) throw InvalidInput("initialize_banks: dimension mismatch");
  ForwardCache cache = forward(params, target, Mode::eval);
  return MemoryBanks::full(std::move(cache.features), std::move(cache.probs));
}

}  // namespace nrc
