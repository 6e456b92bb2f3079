#include "nrc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nrc/numerics.hpp"

namespace nrc {

namespace {

void check_scores(const Matrix& p, const Matrix& scores) {
  if (scores.cols() != p.cols()) throw InvalidInput("loss: score bank width does not match predictions");
}

}  // namespace

LossAndGrad neighbor_agreement(const Matrix& p, const Neighborhoods& neighborhoods, const Matrix& scores) {
  if (neighborhoods.size() != p.rows()) throw InvalidInput("loss: neighborhood count does not match batch");
  check_scores(p, scores);
  const std::size_t n = p.rows();
  const std::size_t classes = p.cols();
  LossAndGrad out;
  out.grad = Matrix(n, classes);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = out.grad.row(i);
    auto pi = p.row(i);
    for (const auto& [index, weight] : neighborhoods[i]) {
      if (index >= scores.rows()) throw InvalidInput("loss: neighbor index outside score bank");
      auto s = scores.row(index);
      double agreement = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        agreement += s[c] * pi[c];
        g[c] -= inv_n * weight * s[c];
      }
      out.value -= inv_n * weight * agreement;
    }
  }
  return out;
}

LossAndGrad loss_n(const Matrix& p, const NeighborLists& knn, std::span<const double> affinity,
                   const Matrix& scores) {
  if (knn.queries() != p.rows() || affinity.size() != knn.indices.size()) {
    throw InvalidInput("loss_n: graph does not match batch");
  }
  Neighborhoods hoods(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto nn = knn.of(i);
    for (std::size_t s = 0; s < knn.k; ++s) hoods[i].push_back({nn[s], affinity[i * knn.k + s]});
  }
  return neighbor_agreement(p, hoods, scores);
}

LossAndGrad loss_e(const Matrix& p, const std::vector<std::vector<std::size_t>>& expanded, const Matrix& scores,
                   double weight, bool dedupe) {
  if (expanded.size() != p.rows()) throw InvalidInput("loss_e: graph does not match batch");
  Neighborhoods hoods(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::vector<std::size_t> members = expanded[i];
    if (dedupe) {
      std::sort(members.begin(), members.end());
      members.erase(std::unique(members.begin(), members.end()), members.end());
    }
    for (std::size_t m : members) hoods[i].push_back({m, weight});
  }
  return neighbor_agreement(p, hoods, scores);
}

LossAndGrad loss_self(const Matrix& p, const Matrix& self_scores) {
  if (self_scores.rows() != p.rows() || self_scores.cols() != p.cols()) {
    throw InvalidInput("loss_self: snapshot shape mismatch");
  }
  const std::size_t n = p.rows();
  LossAndGrad out;
  out.grad = Matrix(n, p.cols());
  if (n == 0) return out;
  const double batch = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= dot(self_scores.row(i), p.row(i)) / batch;
    for (std::size_t c = 0; c < p.cols(); ++c) out.grad(i, c) = -self_scores(i, c) / batch;
  }
  return out;
}

LossAndGrad loss_div(const Matrix& p) {
  const std::size_t n = p.rows();
  const std::size_t classes = p.cols();
  if (n == 0) throw InvalidInput("loss_div: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> mean(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < classes; ++c) mean[c] += p(i, c);
  for (double& m : mean) m *= inv_n;

  LossAndGrad out;
  out.grad = Matrix(n, classes);
  const double num_classes = static_cast<double>(classes);
  std::vector<double> d_mean(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double floored = std::max(mean[c], kProbFloor);
    const double log_ratio = std::log(floored * num_classes);
    out.value += mean[c] * log_ratio;
    d_mean[c] = mean[c] > kProbFloor ? log_ratio + 1.0 : log_ratio;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < classes; ++c) out.grad(i, c) = inv_n * d_mean[c];
  return out;
}

LossAndGrad loss_d(const Matrix& p, const std::vector<std::vector<std::size_t>>& density,
                   const std::vector<std::vector<double>>& density_affinity, const Matrix& scores) {
  if (density.size() != p.rows() || density_affinity.size() != p.rows()) {
    throw InvalidInput("loss_d: graph does not match batch");
  }
  Neighborhoods hoods(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (density[i].size() != density_affinity[i].size()) throw InvalidInput("loss_d: affinity size mismatch");
    for (std::size_t t = 0; t < density[i].size(); ++t) hoods[i].push_back({density[i][t], density_affinity[i][t]});
  }
  return neighbor_agreement(p, hoods, scores);
}

double lambda_schedule(std::size_t iter, std::size_t max_iter) {
  if (max_iter == 0) throw InvalidInput("lambda_schedule: max_iter must be positive");
  if (iter > max_iter) throw InvalidInput("lambda_schedule: iter beyond max_iter");
  return 1.0 / (1.0 + 10.0 * static_cast<double>(iter) / static_cast<double>(max_iter));
}

namespace {

void accumulate(Matrix& into, const Matrix& g, double scale = 1.0) {
  auto dst = into.values();
  auto src = g.values();
  for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += scale * src[t];
}

}  // namespace

LossBreakdown total_loss(const Matrix& p, const Matrix& self_scores, const BatchGraph& graph,
                         const Matrix& scores, const LossFlags& flags, double r, double lambda_div) {
  LossBreakdown out;
  out.lambda_div = lambda_div;
  out.grad = Matrix(p.rows(), p.cols());
  if (flags.use_n) {
    auto t = loss_n(p, graph.knn, graph.affinity, scores);
    out.l_n = t.value;
    accumulate(out.grad, t.grad);
  }
  if (flags.use_e) {
    auto t = loss_e(p, graph.expanded, scores, flags.use_affinity ? r : 1.0, flags.dedupe_expanded);
    out.l_e = t.value;
    accumulate(out.grad, t.grad);
  }
  if (flags.use_self) {
    auto t = loss_self(p, self_scores);
    out.l_self = t.value;
    accumulate(out.grad, t.grad);
  }
  if (flags.use_div) {
    auto t = loss_div(p);
    out.l_div = t.value;
    accumulate(out.grad, t.grad, lambda_div);
  }
  if (flags.use_d) {
    auto t = loss_d(p, graph.density, graph.density_affinity, scores);
    out.l_d = t.value;
    accumulate(out.grad, t.grad);
  }
  out.total = out.l_n + out.l_d + out.l_e + out.l_self + lambda_div * out.l_div;
  return out;
}

void write_loss_log_header(std::ostream& out) { out << "iter,l_n,l_e,l_self,l_div,l_d,lambda_div,total\n"; }

void write_loss_log_row(std::ostream& out, std::size_t iter, const LossBreakdown& loss) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", iter, loss.l_n, loss.l_e,
                loss.l_self, loss.l_div, loss.l_d, loss.lambda_div, loss.total);
  out << buf;
}

}  // namespace nrc
