#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "nrc/banks.hpp"
#include "nrc/config.hpp"
#include "nrc/error.hpp"
#include "nrc/trainer.hpp"
#include "oracles.hpp"

using nrc::Matrix;
using nrc::MemoryBanks;

namespace {

nrc::ModelParams small_model() {
  nrc::Architecture a;
  a.input_dim = 3;
  a.hidden_dims = {8};
  a.feature_dim = 5;
  a.num_classes = 3;
  return nrc::init_model(a, 17);
}

}  // namespace

TEST(Banks, InitializeMatchesPerSampleLoop) {
  const auto params = small_model();
  const Matrix target = oracle::random_matrix(12, 3, 1);
  const auto banks = nrc::initialize_banks(params, target);
  ASSERT_EQ(banks.size(), 12u);
  EXPECT_EQ(banks.mode(), nrc::BankMode::full);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto one = nrc::forward(params, nrc::gather_rows(target, std::vector<std::size_t>{i}), nrc::Mode::eval);
    for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(banks.features()(i, d), one.features(0, d), 1e-12);
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(banks.scores()(i, c), one.probs(0, c), 1e-12);
      s += banks.scores()(i, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_EQ(banks.dataset_index(i), i);
  }
}

TEST(Banks, SingleSampleAndDeterminism) {
  const auto params = small_model();
  const Matrix one = oracle::random_matrix(1, 3, 2);
  const auto a = nrc::initialize_banks(params, one);
  EXPECT_EQ(a.size(), 1u);
  const auto b = nrc::initialize_banks(params, one);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.scores(), b.scores());
  EXPECT_THROW(nrc::initialize_banks(params, Matrix(0, 3)), nrc::InvalidInput);
}

TEST(Banks, UpdateTouchesOnlyBatchRows) {
  auto banks = MemoryBanks::full(oracle::random_matrix(8, 4, 3), oracle::random_probs(8, 3, 4));
  const auto before = banks;
  const std::vector<std::size_t> idx{2, 5};
  const Matrix z = oracle::random_matrix(2, 4, 5);
  const Matrix p = oracle::random_probs(2, 3, 6);
  banks.update(idx, z, p);
  for (std::size_t r = 0; r < 8; ++r) {
    const bool touched = r == 2 || r == 5;
    for (std::size_t d = 0; d < 4; ++d) {
      if (touched) {
        EXPECT_EQ(banks.features()(r, d), z(r == 2 ? 0 : 1, d));
      } else {
        EXPECT_EQ(banks.features()(r, d), before.features()(r, d));
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      if (!touched) EXPECT_EQ(banks.scores()(r, c), before.scores()(r, c));
    }
  }
}

TEST(Banks, UpdateWithIdenticalValuesIsNoOp) {
  auto banks = MemoryBanks::full(oracle::random_matrix(6, 4, 3), oracle::random_probs(6, 3, 4));
  const auto before = banks;
  const std::vector<std::size_t> idx{1, 4};
  banks.update(idx, nrc::gather_rows(before.features(), idx), nrc::gather_rows(before.scores(), idx));
  EXPECT_EQ(banks.features(), before.features());
  EXPECT_EQ(banks.scores(), before.scores());
}

TEST(Banks, UpdateErrors) {
  auto banks = MemoryBanks::full(oracle::random_matrix(6, 4, 3), oracle::random_probs(6, 3, 4));
  const std::vector<std::size_t> out_of_range{6};
  EXPECT_THROW(banks.update(out_of_range, oracle::random_matrix(1, 4, 1), oracle::random_probs(1, 3, 1)),
               nrc::InvalidInput);
  const std::vector<std::size_t> ok{0};
  EXPECT_THROW(banks.update(ok, oracle::random_matrix(1, 5, 1), oracle::random_probs(1, 3, 1)), nrc::InvalidInput);
  EXPECT_THROW(banks.push(ok, oracle::random_matrix(1, 4, 1), oracle::random_probs(1, 3, 1)), nrc::InvalidInput);
}

TEST(Banks, FifoEvictsOldest) {
  auto banks = MemoryBanks::fifo(10, 2, 2);
  std::size_t next = 0;
  for (int round = 0; round < 3; ++round) {
    std::vector<std::size_t> idx;
    Matrix z(4, 2);
    for (std::size_t t = 0; t < 4; ++t) {
      idx.push_back(next);
      z(t, 0) = static_cast<double>(next++);
    }
    banks.push(idx, z, oracle::random_probs(4, 2, round));
  }
  ASSERT_EQ(banks.size(), 10u);
  for (std::size_t r = 0; r < 10; ++r) {
    EXPECT_EQ(banks.dataset_index(r), r + 2);
    EXPECT_EQ(banks.features()(r, 0), static_cast<double>(r + 2));
  }
  const std::vector<std::size_t> too_many(11, 0);
  EXPECT_THROW(banks.push(too_many, Matrix(11, 2), oracle::random_probs(11, 2, 1)), nrc::InvalidInput);
}

TEST(Banks, FifoMatchesListOracle) {
  std::mt19937_64 rng(99);
  const std::size_t capacity = 37;
  auto banks = MemoryBanks::fifo(capacity, 3, 2);
  std::deque<std::pair<std::size_t, double>> list;
  std::size_t previous = 0;
  double stamp = 0;
  for (int step = 0; step < 300; ++step) {
    const std::size_t n = 1 + rng() % capacity;
    std::vector<std::size_t> idx(n);
    Matrix z(n, 3);
    for (std::size_t t = 0; t < n; ++t) {
      idx[t] = rng() % 500;
      z(t, 0) = ++stamp;
      list.emplace_back(idx[t], stamp);
      if (list.size() > capacity) list.pop_front();
    }
    const auto rows = banks.write(idx, z, oracle::random_probs(n, 2, step));
    ASSERT_LE(banks.size(), capacity);
    ASSERT_GE(banks.size(), previous);
    previous = banks.size();
    ASSERT_EQ(banks.size(), list.size());
    for (std::size_t r = 0; r < list.size(); ++r) {
      ASSERT_EQ(banks.dataset_index(r), list[r].first);
      ASSERT_EQ(banks.features()(r, 0), list[r].second);
    }
    for (std::size_t t = 0; t < n; ++t) ASSERT_EQ(banks.features()(rows[t], 0), z(t, 0));
  }
}

TEST(Banks, FullEpochMatchesFreshInitialization) {
  nrc::AdaptConfig c;
  c.epochs = 1;
  c.batch_size = 5;
  c.lr_backbone = 0.0;
  c.lr_head = 0.0;
  c.bn_train_mode = false;
  const auto params = small_model();
  const Matrix target = oracle::random_matrix(23, 3, 8);
  nrc::AdaptHooks hooks;
  std::optional<MemoryBanks> last;
  hooks.on_checkpoint = [&](const nrc::AdaptSnapshot& s) { last = s.banks; };
  const auto result = nrc::adapt(c, params, target, hooks);
  ASSERT_TRUE(last.has_value());
  const auto fresh = nrc::initialize_banks(result.params, target);
  for (std::size_t t = 0; t < fresh.features().values().size(); ++t) {
    EXPECT_NEAR(last->features().values()[t], fresh.features().values()[t], 1e-6);
  }
  for (std::size_t t = 0; t < fresh.scores().values().size(); ++t) {
    EXPECT_NEAR(last->scores().values()[t], fresh.scores().values()[t], 1e-6);
  }
}
