#include <gtest/gtest.h>

#include <omp.h>

#include "logvec/kernels/scan.hpp"
#include "support/oracles.hpp"

namespace logvec {
namespace {

class KernelsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    // Oversubscribe so the parallel paths really split work, even on one core.
    omp_set_num_threads(4);
  }
};

TEST_F(KernelsTest, ParallelScanEqualsSerialReference) {
  const std::size_t dim = 24, n = 20'000;
  auto data = testing::uniform_dataset(n, dim, 42);
  auto queries = testing::uniform_dataset(5, dim, 43);
  DeleteBitmap bitmap(1, n);
  for (std::uint32_t r = 0; r < n; r += 7) bitmap.set(r);
  const RowFilter filter{&bitmap, nullptr};
  kernels::RowSource rows{data, {}, nullptr, {}, dim};
  for (auto m : {Metric::kEuclidean, Metric::kInnerProduct, Metric::kAngular}) {
    for (std::size_t q = 0; q < 5; ++q) {
      std::span<const float> query(queries.data() + q * dim, dim);
      kernels::ScanStats s1, s2;
      auto a = kernels::serial::scan_topk(m, query, rows, 50, filter, &s1);
      auto b = kernels::omp::scan_topk(m, query, rows, 50, filter, &s2);
      EXPECT_EQ(a, b);
      EXPECT_EQ(s1.distance_evals, s2.distance_evals);
    }
  }
}

TEST_F(KernelsTest, ScanMatchesBruteForceOracle) {
  const std::size_t dim = 8, n = 5'000;
  auto data = testing::uniform_dataset(n, dim, 1);
  auto query = testing::uniform_dataset(1, dim, 2);
  kernels::RowSource rows{data, {}, nullptr, {}, dim};
  auto got = kernels::omp::scan_topk(Metric::kEuclidean, query, rows, 20, RowFilter{});
  auto want = testing::brute_force_topk(Metric::kEuclidean, query, data, dim, 20);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].row, want[i].id);
    EXPECT_EQ(got[i].score, want[i].score);
  }
}

TEST_F(KernelsTest, TiesBreakByRowId) {
  std::vector<float> data(10 * 2, 1.0f);
  std::vector<float> q{0.0f, 0.0f};
  kernels::RowSource rows{data, {}, nullptr, {}, 2};
  auto got = kernels::omp::scan_topk(Metric::kEuclidean, q, rows, 3, RowFilter{});
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].row, 0u);
  EXPECT_EQ(got[1].row, 1u);
  EXPECT_EQ(got[2].row, 2u);
}

TEST_F(KernelsTest, BatchScanEqualsSerial) {
  const std::size_t dim = 16;
  auto data = testing::uniform_dataset(3'000, dim, 5);
  auto queries = testing::uniform_dataset(33, dim, 6);
  kernels::RowSource rows{data, {}, nullptr, {}, dim};
  EXPECT_EQ(kernels::serial::batch_scan_topk(Metric::kInnerProduct, queries, rows, 10, RowFilter{}),
            kernels::omp::batch_scan_topk(Metric::kInnerProduct, queries, rows, 10, RowFilter{}));
}

TEST_F(KernelsTest, AssignNearestEqualsSerial) {
  const std::size_t dim = 12;
  auto data = testing::uniform_dataset(9'000, dim, 8);
  auto cents = testing::uniform_dataset(40, dim, 9);
  std::vector<std::uint32_t> a1(9'000), a2(9'000);
  std::vector<double> d1(9'000), d2(9'000);
  kernels::serial::assign_nearest(data, cents, dim, a1, d1);
  kernels::omp::assign_nearest(data, cents, dim, a2, d2);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(d1, d2);
}

TEST_F(KernelsTest, ZeroVectorUnderAngularPropagatesFromParallelRegion) {
  const std::size_t dim = 4, n = 10'000;
  auto data = testing::uniform_dataset(n, dim, 10);
  std::fill_n(data.begin() + 5'000 * dim, dim, 0.0f);
  auto q = testing::uniform_dataset(1, dim, 11);
  kernels::RowSource rows{data, {}, nullptr, {}, dim};
  EXPECT_THROW(kernels::omp::scan_topk(Metric::kAngular, q, rows, 5, RowFilter{}), Error);
}

}  // namespace
}  // namespace logvec
