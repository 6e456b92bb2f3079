#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "nrc/matrix.hpp"

namespace nrc {

inline constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();

/// Fixed-width neighbor lists, one row of `k` bank indices per query, ordered
/// by descending cosine similarity then ascending index.
struct NeighborLists {
  std::size_t k = 0;
  std::vector<std::size_t> indices;

  std::size_t queries() const noexcept { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> of(std::size_t query) const { return {indices.data() + query * k, k}; }
  /// First `prefix` entries of each row. Valid because the ordering is total.
  NeighborLists truncated(std::size_t prefix) const;
};

/// Exact brute-force cosine retrieval over a bank snapshot. Row norms are
/// cached once per snapshot.
class CosineIndex {
 public:
  explicit CosineIndex(const Matrix& bank);

  std::size_t size() const noexcept { return bank_->rows(); }
  const Matrix& bank() const noexcept { return *bank_; }

  /// K nearest bank rows for each query row. exclude[q] names one bank row
  /// to skip for query q (kNoExclusion to skip nothing); an empty span skips
  /// nothing for any query.
  NeighborLists search(const Matrix& queries, std::size_t k, std::span<const std::size_t> exclude = {}) const;

  /// Neighbors of bank rows themselves, each excluding its own row.
  NeighborLists search_rows(std::span<const std::size_t> rows, std::size_t k) const;

  /// Neighbors of every bank row, self excluded.
  NeighborLists search_all(std::size_t k) const;

 private:
  const Matrix* bank_;
  std::vector<double> norms_;
};

/// Convenience wrapper over CosineIndex::search.
NeighborLists knn_indices(const Matrix& bank, const Matrix& queries, std::size_t k,
                          std::span<const std::size_t> exclude = {});

/// Neighbor lists for an arbitrary subset of bank rows, looked up by row.
class RowNeighborTable {
 public:
  RowNeighborTable() = default;
  RowNeighborTable(const CosineIndex& index, std::span<const std::size_t> rows, std::size_t k);

  std::span<const std::size_t> of(std::size_t bank_row) const;
  std::size_t k() const noexcept { return lists_.k; }

 private:
  std::vector<std::size_t> rows_;  // sorted, unique
  NeighborLists lists_;
};

/// A[q][slot] = 1 when query row q is among the M nearest neighbors of its
/// slot-th neighbor (reciprocal), otherwise r. Returned row-major, q x K.
std::vector<double> affinity_a(const NeighborLists& knn, std::span<const std::size_t> query_rows,
                               const RowNeighborTable& knn_m, double r);

/// Reciprocity mask matching affinity_a (1 = reciprocal).
std::vector<std::uint8_t> reciprocal_mask(const NeighborLists& knn, std::span<const std::size_t> query_rows,
                                          const RowNeighborTable& knn_m);

/// Multiset union of the M-neighbor lists of each query's K neighbors, in
/// neighbor order, with every occurrence of the query's own row removed.
std::vector<std::vector<std::size_t>> expand_neighbors(const NeighborLists& knn,
                                                       std::span<const std::size_t> query_rows,
                                                       const RowNeighborTable& knn_m);

/// D(i) = { j : i in N_U(j) } for every bank row i, each set ascending.
std::vector<std::vector<std::size_t>> density_sets(const CosineIndex& index, std::size_t u);

/// Transpose of a whole-bank neighbor table.
std::vector<std::vector<std::size_t>> reverse_neighbors(const NeighborLists& bank_knn);

/// B[q][t] for each j = density[q][t]: 1 if j is also among the query's V
/// nearest neighbors, else r.
std::vector<std::vector<double>> affinity_b(const std::vector<std::vector<std::size_t>>& density,
                                            const NeighborLists& knn_v, double r);

struct GraphParams {
  std::size_t k = 3;   // nearest neighbors per query
  std::size_t m = 2;   // neighbors of neighbors (reciprocity and expansion)
  std::size_t u = 20;  // neighbors used for density estimation
  std::size_t v = 5;   // neighbors checked against the density set
  double r = 0.1;      // weight of non-reciprocal / expanded neighbors
  bool use_affinity = true;
  bool expanded = true;
  bool density = false;
};

/// Everything the batch losses need, built from one bank snapshot. Query i
/// of the batch lives at bank row query_rows[i].
struct BatchGraph {
  std::vector<std::size_t> query_rows;
  NeighborLists knn;
  std::vector<std::uint8_t> reciprocal;  // q x K
  std::vector<double> affinity;          // q x K, all 1 when affinity is disabled
  std::vector<std::vector<std::size_t>> expanded;
  std::vector<std::vector<std::size_t>> density;
  std::vector<std::vector<double>> density_affinity;
};

BatchGraph build_batch_graph(const Matrix& bank, std::span<const std::size_t> query_rows,
                             const GraphParams& params);

/// CSV with columns query_index,neighbor_index,relation,weight. Indices are
/// mapped through dataset_index_of_row (bank row -> dataset index); an empty
/// span writes bank rows.
void write_graph_csv(std::ostream& out, const BatchGraph& graph, const GraphParams& params,
                     std::span<const std::size_t> dataset_index_of_row);

}  // namespace nrc
