#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "nrc/graph.hpp"
#include "nrc/matrix.hpp"
#include "nrc/model.hpp"

namespace nrc {

// Every batch loss reads bank scores as constants and returns its gradient
// with respect to the batch probabilities p only. Sums are batch means.

struct WeightedNeighbor {
  std::size_t index;  // bank row
  double weight;
};
using Neighborhoods = std::vector<std::vector<WeightedNeighbor>>;

/// -(1/n) sum_i sum_(j,w) w * S_j . p_i
LossAndGrad neighbor_agreement(const Matrix& p, const Neighborhoods& neighborhoods, const Matrix& scores);

/// Nearest-neighbor term weighted by affinity A (q x K, row-major).
LossAndGrad loss_n(const Matrix& p, const NeighborLists& knn, std::span<const double> affinity,
                   const Matrix& scores);

/// Expanded-neighbor term; each occurrence of a bank row counts once unless
/// `dedupe` collapses repeated rows per query.
LossAndGrad loss_e(const Matrix& p, const std::vector<std::vector<std::size_t>>& expanded, const Matrix& scores,
                   double weight, bool dedupe = false);

/// -(1/n) sum_i S_i . p_i with S_i the sample's own (just written) bank row.
LossAndGrad loss_self(const Matrix& p, const Matrix& self_scores);

/// KL(mean prediction || uniform), probability floor inside the log.
LossAndGrad loss_div(const Matrix& p);

/// Density term over D(i) weighted by B. Empty D(i) contributes nothing.
LossAndGrad loss_d(const Matrix& p, const std::vector<std::vector<std::size_t>>& density,
                   const std::vector<std::vector<double>>& density_affinity, const Matrix& scores);

/// (1 + 10 * iter / max_iter)^-1
double lambda_schedule(std::size_t iter, std::size_t max_iter);

struct LossFlags {
  bool use_n = true;
  bool use_e = true;
  bool use_self = true;
  bool use_div = true;
  bool use_d = false;
  bool dedupe_expanded = false;
  bool use_affinity = true;  // when false, expanded neighbors weigh 1 instead of r
};

struct LossBreakdown {
  double l_n = 0.0;
  double l_e = 0.0;
  double l_self = 0.0;
  double l_div = 0.0;
  double l_d = 0.0;
  double lambda_div = 0.0;
  double total = 0.0;
  Matrix grad;  // dL/dp, batch x C
};

/// L = L_N + L_D + L_E + L_self + lambda * L_div over the enabled terms.
/// Disabled terms report 0.
LossBreakdown total_loss(const Matrix& p, const Matrix& self_scores, const BatchGraph& graph,
                         const Matrix& scores, const LossFlags& flags, double r, double lambda_div);

void write_loss_log_header(std::ostream& out);
void write_loss_log_row(std::ostream& out, std::size_t iter, const LossBreakdown& loss);

}  // namespace nrc
