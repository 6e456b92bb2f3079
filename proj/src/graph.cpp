#include "nrc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nrc/numerics.hpp"
#include "nrc/parallel.hpp"

namespace nrc {

NeighborLists NeighborLists::truncated(std::size_t prefix) const {
  if (prefix > k) throw InvalidInput("NeighborLists::truncated: prefix larger than k");
  NeighborLists out;
  out.k = prefix;
  out.indices.reserve(queries() * prefix);
  for (std::size_t q = 0; q < queries(); ++q) {
    auto row = of(q);
    out.indices.insert(out.indices.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(prefix));
  }
  return out;
}

CosineIndex::CosineIndex(const Matrix& bank) : bank_(&bank), norms_(row_norms(bank)) {}

namespace {

struct Candidate {
  double sim;
  std::size_t index;
};

// Candidates arrive in ascending index order, so an equal similarity never
// displaces an existing entry.
void offer(std::vector<Candidate>& best, std::size_t k, Candidate c) {
  if (best.size() == k) {
    if (!(c.sim > best.back().sim)) return;
    best.pop_back();
  }
  auto pos = std::upper_bound(best.begin(), best.end(), c,
                              [](const Candidate& a, const Candidate& b) { return a.sim > b.sim; });
  best.insert(pos, c);
}

}  // namespace

NeighborLists CosineIndex::search(const Matrix& queries, std::size_t k, std::span<const std::size_t> exclude) const {
  const Matrix& bank = *bank_;
  const std::size_t n = bank.rows();
  if (k == 0) throw InvalidInput("knn: K must be at least 1");
  if (queries.cols() != bank.cols()) throw InvalidInput("knn: query dimension mismatch");
  if (!exclude.empty() && exclude.size() != queries.rows()) throw InvalidInput("knn: exclusion map size mismatch");
  const std::size_t reserved = exclude.empty() ? 0 : 1;
  if (k + reserved > n) throw InvalidInput("knn: K too large for bank size");

  NeighborLists out;
  out.k = k;
  out.indices.assign(queries.rows() * k, 0);
  const auto query_norms = row_norms(queries);
  parallel_for(0, queries.rows(), [&](std::size_t q) {
    const std::size_t skip = exclude.empty() ? kNoExclusion : exclude[q];
    auto qrow = queries.row(q);
    std::vector<Candidate> best;
    best.reserve(k + 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == skip) continue;
      auto brow = bank.row(j);
      double ab = 0.0;
      for (std::size_t t = 0; t < qrow.size(); ++t) ab += qrow[t] * brow[t];
      offer(best, k, {cosine_from_parts(ab, query_norms[q], norms_[j]), j});
    }
    if (best.size() < k) throw InvalidInput("knn: not enough candidates after exclusion");
    for (std::size_t t = 0; t < k; ++t) out.indices[q * k + t] = best[t].index;
  });
  return out;
}

NeighborLists CosineIndex::search_rows(std::span<const std::size_t> rows, std::size_t k) const {
  Matrix queries = gather_rows(*bank_, rows);
  return search(queries, k, rows);
}

NeighborLists CosineIndex::search_all(std::size_t k) const {
  std::vector<std::size_t> rows(size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return search(*bank_, k, rows);
}

NeighborLists knn_indices(const Matrix& bank, const Matrix& queries, std::size_t k,
                          std::span<const std::size_t> exclude) {
  return CosineIndex(bank).search(queries, k, exclude);
}

RowNeighborTable::RowNeighborTable(const CosineIndex& index, std::span<const std::size_t> rows, std::size_t k)
    : rows_(rows.begin(), rows.end()) {
  std::sort(rows_.begin(), rows_.end());
  rows_.erase(std::unique(rows_.begin(), rows_.end()), rows_.end());
  lists_ = index.search_rows(rows_, k);
}

std::span<const std::size_t> RowNeighborTable::of(std::size_t bank_row) const {
  auto it = std::lower_bound(rows_.begin(), rows_.end(), bank_row);
  if (it == rows_.end() || *it != bank_row) throw InvalidInput("RowNeighborTable: row not in table");
  return lists_.of(static_cast<std::size_t>(it - rows_.begin()));
}

namespace {

void check_queries(const NeighborLists& knn, std::span<const std::size_t> query_rows) {
  if (knn.queries() != query_rows.size()) throw InvalidInput("graph: query count mismatch");
}

}  // namespace

std::vector<std::uint8_t> reciprocal_mask(const NeighborLists& knn, std::span<const std::size_t> query_rows,
                                          const RowNeighborTable& knn_m) {
  check_queries(knn, query_rows);
  std::vector<std::uint8_t> mask(knn.indices.size(), 0);
  for (std::size_t q = 0; q < query_rows.size(); ++q) {
    auto neighbors = knn.of(q);
    for (std::size_t s = 0; s < knn.k; ++s) {
      auto back = knn_m.of(neighbors[s]);
      mask[q * knn.k + s] = std::find(back.begin(), back.end(), query_rows[q]) != back.end();
    }
  }
  return mask;
}

std::vector<double> affinity_a(const NeighborLists& knn, std::span<const std::size_t> query_rows,
                               const RowNeighborTable& knn_m, double r) {
  const auto mask = reciprocal_mask(knn, query_rows, knn_m);
  std::vector<double> a(mask.size());
  for (std::size_t t = 0; t < mask.size(); ++t) a[t] = mask[t] ? 1.0 : r;
  return a;
}

std::vector<std::vector<std::size_t>> expand_neighbors(const NeighborLists& knn,
                                                       std::span<const std::size_t> query_rows,
                                                       const RowNeighborTable& knn_m) {
  check_queries(knn, query_rows);
  std::vector<std::vector<std::size_t>> expanded(query_rows.size());
  for (std::size_t q = 0; q < query_rows.size(); ++q) {
    auto& out = expanded[q];
    out.reserve(knn.k * knn_m.k());
    for (std::size_t j : knn.of(q)) {
      for (std::size_t m : knn_m.of(j)) {
        if (m != query_rows[q]) out.push_back(m);
      }
    }
  }
  return expanded;
}

std::vector<std::vector<std::size_t>> reverse_neighbors(const NeighborLists& bank_knn) {
  std::vector<std::vector<std::size_t>> sets(bank_knn.queries());
  for (std::size_t j = 0; j < bank_knn.queries(); ++j) {
    for (std::size_t i : bank_knn.of(j)) sets.at(i).push_back(j);
  }
  return sets;
}

std::vector<std::vector<std::size_t>> density_sets(const CosineIndex& index, std::size_t u) {
  if (u == 0 || u >= index.size()) throw InvalidInput("density_sets: U must be in [1, bank size)");
  return reverse_neighbors(index.search_all(u));
}

std::vector<std::vector<double>> affinity_b(const std::vector<std::vector<std::size_t>>& density,
                                            const NeighborLists& knn_v, double r) {
  if (knn_v.queries() != density.size()) throw InvalidInput("affinity_b: query count mismatch");
  std::vector<std::vector<double>> b(density.size());
  for (std::size_t q = 0; q < density.size(); ++q) {
    auto near = knn_v.of(q);
    b[q].reserve(density[q].size());
    for (std::size_t j : density[q]) {
      const bool close = std::find(near.begin(), near.end(), j) != near.end();
      b[q].push_back(close ? 1.0 : r);
    }
  }
  return b;
}

BatchGraph build_batch_graph(const Matrix& bank, std::span<const std::size_t> query_rows,
                             const GraphParams& params) {
  for (std::size_t row : query_rows) {
    if (row >= bank.rows()) throw InvalidInput("build_batch_graph: query row out of range");
  }
  CosineIndex index(bank);
  BatchGraph g;
  g.query_rows.assign(query_rows.begin(), query_rows.end());
  const std::size_t widest = params.density ? std::max(params.k, params.v) : params.k;
  const NeighborLists wide = index.search_rows(query_rows, widest);
  g.knn = wide.truncated(params.k);

  const RowNeighborTable knn_m(index, g.knn.indices, params.m);
  g.reciprocal = reciprocal_mask(g.knn, query_rows, knn_m);
  g.affinity.resize(g.reciprocal.size());
  for (std::size_t t = 0; t < g.reciprocal.size(); ++t) {
    g.affinity[t] = (!params.use_affinity || g.reciprocal[t]) ? 1.0 : params.r;
  }
  if (params.expanded) g.expanded = expand_neighbors(g.knn, query_rows, knn_m);

  if (params.density) {
    if (params.v == 0 || params.u <= params.v) throw InvalidInput("build_batch_graph: need U > V >= 1");
    const auto all_sets = density_sets(index, params.u);
    g.density.reserve(query_rows.size());
    for (std::size_t row : query_rows) g.density.push_back(all_sets[row]);
    g.density_affinity = affinity_b(g.density, wide.truncated(params.v), params.r);
  }
  return g;
}

void write_graph_csv(std::ostream& out, const BatchGraph& graph, const GraphParams& params,
                     std::span<const std::size_t> dataset_index_of_row) {
  auto id = [&](std::size_t row) {
    return dataset_index_of_row.empty() ? row : dataset_index_of_row[row];
  };
  const double expanded_weight = params.use_affinity ? params.r : 1.0;
  out << "query_index,neighbor_index,relation,weight\n";
  for (std::size_t q = 0; q < graph.query_rows.size(); ++q) {
    const std::size_t qi = id(graph.query_rows[q]);
    auto nn = graph.knn.of(q);
    for (std::size_t s = 0; s < graph.knn.k; ++s) {
      out << qi << ',' << id(nn[s]) << ",knn," << graph.affinity[q * graph.knn.k + s] << '\n';
    }
    for (std::size_t s = 0; s < graph.knn.k; ++s) {
      if (graph.reciprocal[q * graph.knn.k + s]) out << qi << ',' << id(nn[s]) << ",rnn,1\n";
    }
    if (!graph.expanded.empty()) {
      for (std::size_t m : graph.expanded[q]) out << qi << ',' << id(m) << ",expanded," << expanded_weight << '\n';
    }
    if (!graph.density.empty()) {
      for (std::size_t t = 0; t < graph.density[q].size(); ++t) {
        out << qi << ',' << id(graph.density[q][t]) << ",density," << graph.density_affinity[q][t] << '\n';
      }
    }
  }
}

}  // namespace nrc
