// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nrc/banks.hpp"
#include "nrc/checkpoint.hpp"
#include "nrc/config.hpp"
#include "nrc/data.hpp"
#include "nrc/diagnostics.hpp"
#include "nrc/graph.hpp"
#include "nrc/losses.hpp"
#include "nrc/model.hpp"
#include "nrc/trainer.hpp"
#include "oracles.hpp"

using nrc::Matrix;

namespace {

// Tolerances and budgets.
constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradRelFloor = 1e-6;
constexpr double kKnnSeconds = 1.0;
constexpr double kGradSeconds = 30.0;
constexpr double kGraphSeconds = 10.0;
constexpr double kBenchmarkSeconds = 120.0;
constexpr double kMinGain = 0.05;
constexpr double kMinAdaptedAccuracy = 0.90;
constexpr double kAblationSlack = 0.01;
constexpr double kMinFifoGain = 0.03;
constexpr double kTrendFraction = 0.8;
constexpr std::size_t kTrendWindow = 5;
constexpr std::size_t kSharedK = 5;

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. kNN retrieval equals a full-sort oracle.
void knn_oracle() {
  const auto start = Clock::now();
  const Matrix points = oracle::random_matrix(200, 16, 2024);
  const Matrix queries = oracle::random_matrix(50, 16, 2025);
  std::size_t mismatches = 0, checked = 0;
  for (std::size_t k : {1, 3, 5}) {
    const nrc::CosineIndex index(points);
    const auto self = index.search_all(k);
    const auto ext = index.search(queries, k);
    for (std::size_t i = 0; i < points.rows(); ++i) {
      auto got = self.of(i);
      mismatches += std::vector<std::size_t>(got.begin(), got.end()) != oracle::knn_full_sort(points, points, i, k, i);
      ++checked;
    }
    for (std::size_t q = 0; q < queries.rows(); ++q) {
      auto got = ext.of(q);
      mismatches += std::vector<std::size_t>(got.begin(), got.end()) != oracle::knn_full_sort(points, queries, q, k);
      ++checked;
    }
  }
  const double t = seconds_since(start);
  report(1, mismatches == 0 && t < kKnnSeconds,
         std::to_string(checked) + " lists, " + std::to_string(mismatches) + " mismatches, " + fmt("%.3fs", t));
}

// 2. Analytic parameter gradients of every objective term through the default
// network versus central differences.
void gradient_check() {
  const auto start = Clock::now();
  const nrc::Architecture arch;
  const std::size_t batch = 8;
  nrc::GraphParams gp;
  gp.density = true;
  double worst = 0.0;
  std::string worst_term;

  for (std::uint64_t seed : {11, 12, 13}) {
    const auto params = nrc::init_model(arch, seed);
    const Matrix x = oracle::random_matrix(batch, arch.input_dim, seed + 100, 2.0);
    const Matrix bank = oracle::random_matrix(64, arch.feature_dim, seed + 200);
    const Matrix scores = oracle::random_probs(64, arch.num_classes, seed + 300);
    std::vector<std::size_t> rows(64);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), std::mt19937_64(seed));
    rows.resize(batch);
    const auto graph = nrc::build_batch_graph(bank, rows, gp);
    const Matrix self = nrc::gather_rows(scores, rows);

    nrc::LossFlags all;
    all.use_d = true;
    const std::vector<std::pair<std::string, std::function<nrc::LossAndGrad(const Matrix&)>>> terms{
        {"L_N", [&](const Matrix& p) { return nrc::loss_n(p, graph.knn, graph.affinity, scores); }},
        {"L_E", [&](const Matrix& p) { return nrc::loss_e(p, graph.expanded, scores, gp.r); }},
        {"L_self", [&](const Matrix& p) { return nrc::loss_self(p, self); }},
        {"L_div", [&](const Matrix& p) { return nrc::loss_div(p); }},
        {"L_D", [&](const Matrix& p) { return nrc::loss_d(p, graph.density, graph.density_affinity, scores); }},
        {"total", [&](const Matrix& p) {
           auto b = nrc::total_loss(p, self, graph, scores, all, gp.r, nrc::lambda_schedule(3, 10));
           return nrc::LossAndGrad{b.total, b.grad};
         }}};

    const auto theta = nrc::flatten_trainable(params);
    for (const auto& [name, loss] : terms) {
      const auto cache = nrc::forward(params, x, nrc::Mode::train);
      const auto analytic = nrc::flatten_trainable(nrc::backward(params, cache, loss(cache.probs).grad));
      auto f = [&](const std::vector<double>& t) {
        nrc::ModelParams q = params;
        nrc::assign_trainable(q, t);
        return loss(nrc::forward(q, x, nrc::Mode::train).probs).value;
      };
      const auto numeric = oracle::central_difference(f, theta, kGradStep);
      const double err = oracle::max_relative_error(analytic, numeric, kGradRelFloor);
      if (err > worst) {
        worst = err;
        worst_term = name + " seed " + std::to_string(seed);
      }
    }
  }
  const double t = seconds_since(start);
  report(2, worst <= kGradRelTol && t < kGradSeconds,
         "max relative error " + fmt("%.2e", worst) + " (" + worst_term + "), " + fmt("%.1fs", t));
}

// 3. Graph invariants on random instances.
void graph_invariants() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 30 + rng() % 50;
    const Matrix bank = oracle::random_matrix(n, 2 + rng() % 8, rng());
    nrc::GraphParams gp;
    gp.k = 1 + rng() % 6;
    gp.m = trial % 2 ? gp.k : 1 + rng() % 6;
    gp.v = 1 + rng() % 5;
    gp.u = gp.v + 1 + rng() % 10;
    gp.r = 0.1;
    gp.density = true;
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const auto g = nrc::build_batch_graph(bank, rows, gp);
    const auto nm = oracle::knn_all(bank, gp.m);
    std::size_t density_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ego = 0;
      for (std::size_t j : g.knn.of(i)) ego += static_cast<std::size_t>(std::count(nm[j].begin(), nm[j].end(), i));
      violations += g.expanded[i].size() + ego != gp.k * gp.m;
      density_total += g.density[i].size();
      for (double b : g.density_affinity[i]) violations += !(b == 1.0 || b == gp.r);
    }
    violations += density_total != n * gp.u;
    for (double a : g.affinity) violations += !(a == 1.0 || a == gp.r);
    if (gp.k == gp.m) {
      std::map<std::pair<std::size_t, std::size_t>, bool> strong;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < gp.k; ++s) strong[{i, g.knn.of(i)[s]}] = g.affinity[i * gp.k + s] == 1.0;
      }
      for (const auto& [edge, one] : strong) {
        if (!one) continue;
        const auto back = strong.find({edge.second, edge.first});
        violations += back == strong.end() || !back->second;
      }
    }
  }
  const double t = seconds_since(start);
  report(3, violations == 0 && t < kGraphSeconds,
         "100 instances, " + std::to_string(violations) + " violations, " + fmt("%.2fs", t));
}

// 4. Decay schedule endpoints.
void lambda_endpoints() {
  bool ok = true;
  for (std::size_t max_iter : {1, 7, 320, 10000}) {
    ok = ok && nrc::lambda_schedule(0, max_iter) == 1.0;
    ok = ok && nrc::lambda_schedule(max_iter, max_iter) == 1.0 / 11.0;
  }
  report(4, ok, "lambda(0) = 1, lambda(max_iter) = 1/11 " + fmt("(%.17g)", nrc::lambda_schedule(320, 320)));
}

struct SeedResult {
  double source_only = 0;
  double full = 0;
  double neighbors_div = 0;
  double div_only = 0;
  double fifo = 0;
  double rnn_true = 0;   // source model, K = 5
  double nrnn_true = 0;
  std::vector<double> shared;  // all-5-shared ratio per epoch checkpoint
};

double target_accuracy(const nrc::ModelParams& params, const nrc::Domain& target) {
  return nrc::accuracy(nrc::predict(params, target.features), target.labels);
}

struct Benchmark {
  std::vector<SeedResult> seeds;
  double main_seconds = 0;
};

Benchmark run_benchmark() {
  Benchmark bench;
  for (std::uint64_t seed : kSeeds) {
    const auto start = Clock::now();
    const auto data = nrc::generate_synthetic_shift(4, 2, 500, nrc::ShiftParams{}, seed);
    nrc::AdaptConfig config;
    config.seed = seed;
    const auto source = nrc::pretrain_source(config, data.source.features, data.source.labels, 4);
    SeedResult r;
    r.source_only = target_accuracy(source.params, data.target);
    const auto before = nrc::forward(source.params, data.target.features, nrc::Mode::eval);
    const auto purity = nrc::neighbor_purity(before.features, before.probs,
                                             std::span<const std::uint32_t>(data.target.labels), kSharedK);
    r.rnn_true = purity.points.back().rnn_true;
    r.nrnn_true = purity.points.back().nrnn_true;

    nrc::AdaptHooks hooks;
    hooks.on_checkpoint = [&](const nrc::AdaptSnapshot& s) {
      r.shared.push_back(nrc::all_shared_ratio(s.banks.features(), s.banks.scores(), kSharedK));
    };
    r.full = target_accuracy(nrc::adapt(config, source.params, data.target.features, hooks).params, data.target);
    bench.main_seconds += seconds_since(start);

    nrc::AdaptConfig nd = config;
    nd.use_loss_e = false;
    nd.use_loss_self = false;
    r.neighbors_div = target_accuracy(nrc::adapt(nd, source.params, data.target.features).params, data.target);

    nrc::AdaptConfig div = nd;
    div.use_loss_n = false;
    r.div_only = target_accuracy(nrc::adapt(div, source.params, data.target.features).params, data.target);

    nrc::AdaptConfig fifo = config;
    fifo.bank_mode = nrc::BankMode::fifo;
    fifo.bank_capacity = data.target.features.rows() / 5;
    r.fifo = target_accuracy(nrc::adapt(fifo, source.params, data.target.features).params, data.target);

    std::printf("  seed %llu: source-only %.4f, full %.4f, L_N+L_div %.4f, L_div %.4f, fifo-20%% %.4f, "
                "source RNN/nRNN correct %.4f/%.4f\n",
                static_cast<unsigned long long>(seed), r.source_only, r.full, r.neighbors_div, r.div_only, r.fifo,
                r.rnn_true, r.nrnn_true);
    std::fflush(stdout);
    bench.seeds.push_back(std::move(r));
  }
  return bench;
}

// 5. Adaptation gain on the default shifted benchmark.
void adaptation_gain(const Benchmark& b) {
  std::vector<double> gains, post;
  for (const auto& r : b.seeds) {
    gains.push_back(r.full - r.source_only);
    post.push_back(r.full);
  }
  const double g = median(gains), p = median(post);
  report(5, g >= kMinGain && p >= kMinAdaptedAccuracy && b.main_seconds < kBenchmarkSeconds,
         "median gain " + fmt("%+.4f", g) + ", median adapted accuracy " + fmt("%.4f", p) + ", " +
             fmt("%.1fs", b.main_seconds));
}

// 6. Ablation ordering.
void ablation_order(const Benchmark& b) {
  std::vector<double> full, nd, div;
  for (const auto& r : b.seeds) {
    full.push_back(r.full);
    nd.push_back(r.neighbors_div);
    div.push_back(r.div_only);
  }
  const double f = median(full), n = median(nd), d = median(div);
  report(6, f >= n - kAblationSlack && n >= d - kAblationSlack,
         "medians full " + fmt("%.4f", f) + " >= L_N+L_div " + fmt("%.4f", n) + " >= L_div " + fmt("%.4f", d));
}

// 7. The all-5-shared ratio rises and its moving average is mostly
// non-decreasing over the epoch checkpoints.
void shared_trend(const Benchmark& b) {
  bool all_ok = true;
  std::string detail;
  for (std::size_t s = 0; s < b.seeds.size(); ++s) {
    const auto& series = b.seeds[s].shared;
    std::vector<double> avg;
    for (std::size_t t = 0; t + kTrendWindow <= series.size(); ++t) {
      double sum = 0;
      for (std::size_t w = 0; w < kTrendWindow; ++w) sum += series[t + w];
      avg.push_back(sum / kTrendWindow);
    }
    std::size_t up = 0;
    for (std::size_t t = 1; t < avg.size(); ++t) up += avg[t] >= avg[t - 1];
    const double frac = avg.size() > 1 ? static_cast<double>(up) / static_cast<double>(avg.size() - 1) : 0.0;
    const bool ok = series.size() >= 2 && series.back() > series.front() && frac >= kTrendFraction;
    all_ok = all_ok && ok;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%sseed %llu %.3f->%.3f (%.0f%% non-decreasing)", s ? "; " : "",
                  static_cast<unsigned long long>(kSeeds[s]), series.front(), series.back(), 100 * frac);
    detail += buf;
  }
  report(7, all_ok, detail);
}

// 8. Duplicated expanded neighbors count once per occurrence.
void duplicate_semantics() {
  // Query 0's neighbors 1 and 2 both list 3 among their two nearest rows, so
  // row 3 appears twice in the expanded multiset.
  Matrix bank(5, 2);
  const double coords[5][2] = {{1, 0}, {1, 0.35}, {1, -0.35}, {1, 0.01}, {-1, 0}};
  for (std::size_t r = 0; r < 5; ++r) {
    bank(r, 0) = coords[r][0];
    bank(r, 1) = coords[r][1];
  }
  nrc::GraphParams gp;
  gp.k = 3;
  gp.m = 2;
  const std::vector<std::size_t> rows{0};
  const auto g = nrc::build_batch_graph(bank, rows, gp);
  const auto& e = g.expanded[0];
  const auto dup_count = std::count(e.begin(), e.end(), std::size_t{3});

  Matrix scores(5, 2);
  for (std::size_t r = 0; r < 5; ++r) scores(r, r == 3 ? 0 : 1) = 1.0;
  Matrix p(1, 2);
  p(0, 0) = 0.75;
  p(0, 1) = 0.25;
  const double r = 0.5;
  const double with_dups = nrc::loss_e(p, g.expanded, scores, r, false).value;
  const double deduped = nrc::loss_e(p, g.expanded, scores, r, true).value;
  // Each extra copy of row 3 adds -r * S_3 . p = -0.5 * 0.75.
  const double expected = -r * 0.75 * static_cast<double>(dup_count - 1);
  report(8, dup_count == 2 && with_dups - deduped == expected,
         "row 3 multiplicity " + std::to_string(dup_count) + ", difference " + fmt("%.17g", with_dups - deduped) +
             " expected " + fmt("%.17g", expected));
}

// 9. FIFO bank: capacity, eviction order, and adaptation with a 20% ring.
void fifo_bank(const Benchmark& b) {
  const std::size_t capacity = 64;
  auto banks = nrc::MemoryBanks::fifo(capacity, 2, 2);
  std::deque<std::pair<std::size_t, double>> list;
  std::mt19937_64 rng(5);
  std::size_t violations = 0;
  double stamp = 0;
  for (int push = 0; push < 1000; ++push) {
    const std::size_t n = 1 + rng() % 16;
    std::vector<std::size_t> idx(n);
    Matrix z(n, 2);
    Matrix p(n, 2);
    for (std::size_t t = 0; t < n; ++t) {
      idx[t] = rng() % 1000;
      z(t, 0) = ++stamp;
      p(t, 0) = 1.0;
      list.emplace_back(idx[t], stamp);
      if (list.size() > capacity) list.pop_front();
    }
    banks.push(idx, z, p);
    violations += banks.size() > capacity;
    violations += banks.size() != list.size();
    for (std::size_t r = 0; r < std::min(banks.size(), list.size()); ++r) {
      violations += banks.dataset_index(r) != list[r].first || banks.features()(r, 0) != list[r].second;
    }
  }
  std::vector<double> gains;
  for (const auto& r : b.seeds) gains.push_back(r.fifo - r.source_only);
  const double g = median(gains);
  report(9, violations == 0 && g >= kMinFifoGain,
         "1000 pushes, " + std::to_string(violations) + " violations; median gain with 20% ring " + fmt("%+.4f", g));
}

// 10. Identical seeds give byte-identical logs and checkpoints.
void determinism() {
  auto run = [](nrc::AdaptMode mode, std::size_t per_class) {
    const auto data = nrc::generate_synthetic_shift(4, 2, per_class, nrc::ShiftParams{}, 9);
    nrc::AdaptConfig config;
    config.seed = 9;
    config.mode = mode;
    const auto source = nrc::pretrain_source(config, data.source.features, data.source.labels, 4);
    const auto adapted = nrc::adapt(config, source.params, data.target.features);
    std::ostringstream log;
    nrc::write_training_log(log, adapted.log);
    return std::make_tuple(nrc::encode_checkpoint(source.params), nrc::encode_checkpoint(adapted.params), log.str());
  };
  const bool nrc_same = run(nrc::AdaptMode::nrc, 500) == run(nrc::AdaptMode::nrc, 500);
  const bool plus_same = run(nrc::AdaptMode::nrc_plus_plus, 100) == run(nrc::AdaptMode::nrc_plus_plus, 100);
  report(10, nrc_same && plus_same,
         std::string("nrc ") + (nrc_same ? "identical" : "differs") + ", nrc++ " + (plus_same ? "identical" : "differs"));
}

}  // namespace

int main() {
  knn_oracle();
  gradient_check();
  graph_invariants();
  lambda_endpoints();
  const Benchmark bench = run_benchmark();
  adaptation_gain(bench);
  ablation_order(bench);
  shared_trend(bench);
  duplicate_semantics();
  fifo_bank(bench);
  determinism();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
