#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "logvec/core/error.hpp"
#include "logvec/ssd/bucket_index.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace logvec {
namespace {

using testing::TempDir;

TEST(BucketIndex, MemberCapacityForDim128) {
  EXPECT_EQ(BucketIndex::max_members(128, 4096), 30u);
}

TEST(BucketIndex, OversizedVectorIsConfigError) {
  TempDir dir;
  ObjectStore store(dir.path());
  std::vector<float> v(5000, 1.0f);
  try {
    BucketIndex::build(store, "b", Metric::kEuclidean, v, 5000, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  BucketBuildOptions big;
  big.bucket_cap = 8192;
  EXPECT_NO_THROW(BucketIndex::build(store, "b", Metric::kEuclidean, v, 5000, big));
}

TEST(BucketIndex, IdenticalVectorsFormCappedChain) {
  TempDir dir;
  ObjectStore store(dir.path());
  const std::size_t dim = 128, rows = 100;
  std::vector<float> data(rows * dim, 0.25f);
  auto idx = BucketIndex::build(store, "b", Metric::kEuclidean, data, dim, {});
  EXPECT_GE(idx.bucket_count(), 4u);  // ceil(100 / 30)
  std::size_t total = 0;
  for (std::size_t b = 0; b < idx.bucket_count(); ++b) {
    EXPECT_LE(idx.buckets()[b].members, 30u);
    total += idx.buckets()[b].members;
    for (float c : idx.center(b)) EXPECT_EQ(c, 0.25f);
  }
  EXPECT_EQ(total, rows);
}

class BucketAudit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    store_ = new ObjectStore(dir_->path());
    data_ = new std::vector<float>(testing::uniform_dataset(10'000, 128, 42));
    BucketBuildOptions o;
    o.replicas = 2;
    index_ = new BucketIndex(BucketIndex::build(*store_, "seg/buckets", Metric::kEuclidean, *data_, 128, o));
  }
  static void TearDownTestSuite() {
    delete index_;
    delete data_;
    delete store_;
    delete dir_;
  }
  static TempDir* dir_;
  static ObjectStore* store_;
  static std::vector<float>* data_;
  static BucketIndex* index_;
};

TempDir* BucketAudit::dir_ = nullptr;
ObjectStore* BucketAudit::store_ = nullptr;
std::vector<float>* BucketAudit::data_ = nullptr;
BucketIndex* BucketAudit::index_ = nullptr;

TEST_F(BucketAudit, SizeCapAndAlignment) {
  const auto& idx = *index_;
  for (std::size_t b = 0; b < idx.bucket_count(); ++b) {
    const auto& info = idx.buckets()[b];
    EXPECT_LE(info.byte_size, 4096u);
    EXPECT_EQ(info.byte_size, 2 + info.members * BucketIndex::entry_bytes(128));
    EXPECT_EQ(info.offset % 4096, 0u);
  }
  EXPECT_EQ(store_->size("seg/buckets") % 4096, 0u);
}

TEST_F(BucketAudit, EachReplicaPartitionsRows) {
  const auto& idx = *index_;
  std::vector<std::vector<int>> seen(idx.replicas(), std::vector<int>(10'000, 0));
  for (std::size_t b = 0; b < idx.bucket_count(); ++b) {
    for (const auto& [row, code] : idx.read_bucket(b)) ++seen[idx.buckets()[b].replica][row];
  }
  for (const auto& per : seen) {
    for (int c : per) ASSERT_EQ(c, 1);
  }
}

TEST_F(BucketAudit, ExhaustiveSearchEqualsDecodedBruteForce) {
  const auto& idx = *index_;
  std::vector<float> decoded(data_->size());
  for (std::size_t r = 0; r < 10'000; ++r) {
    auto code = idx.codec().encode(std::span<const float>(*data_).subspan(r * 128, 128));
    auto back = idx.codec().decode(code);
    std::copy(back.begin(), back.end(), decoded.begin() + r * 128);
  }
  auto queries = testing::uniform_dataset(5, 128, 7);
  for (int q = 0; q < 5; ++q) {
    std::span<const float> query(queries.data() + q * 128, 128);
    auto res = idx.search_two_stage(query, idx.bucket_count(), 50);
    auto truth = testing::brute_force_topk(Metric::kEuclidean, query, decoded, 128, 50);
    ASSERT_EQ(res.hits.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      EXPECT_EQ(res.hits[i].row, truth[i].id);
      EXPECT_EQ(res.hits[i].score, truth[i].score);
    }
    EXPECT_EQ(res.bytes_read, idx.bucket_count() * 4096);
  }
}

TEST_F(BucketAudit, BytesReadIsProbesTimesCap) {
  auto queries = testing::uniform_dataset(10, 128, 8);
  for (std::size_t nprobe : {1u, 3u, 17u, 64u}) {
    store_->reset_counters();
    auto res = index_->search_two_stage(std::span<const float>(queries).subspan(0, 128), nprobe, 10);
    EXPECT_EQ(res.bytes_read, nprobe * 4096);
    EXPECT_EQ(store_->bytes_read(), nprobe * 4096);
  }
}

TEST_F(BucketAudit, ResultsAreDeduplicated) {
  auto res = index_->search_two_stage(std::span<const float>(*data_).subspan(0, 128), 200, 100);
  std::set<std::uint32_t> rows;
  for (const auto& h : res.hits) EXPECT_TRUE(rows.insert(h.row).second);
  ASSERT_FALSE(res.hits.empty());
  EXPECT_EQ(res.hits[0].row, 0u);  // query equals row 0
}

TEST_F(BucketAudit, ReopenFromStore) {
  auto reopened = BucketIndex::open(*store_, "seg/buckets", Metric::kEuclidean);
  EXPECT_EQ(reopened.bucket_count(), index_->bucket_count());
  EXPECT_EQ(reopened.codec(), index_->codec());
  for (std::size_t b = 0; b < reopened.bucket_count(); ++b) {
    EXPECT_EQ(reopened.buckets()[b].offset, index_->buckets()[b].offset);
    EXPECT_EQ(reopened.buckets()[b].members, index_->buckets()[b].members);
  }
  std::span<const float> q(data_->data() + 77 * 128, 128);
  auto a = index_->search_two_stage(q, 8, 20);
  auto b = reopened.search_two_stage(q, 8, 20);
  EXPECT_EQ(a.hits, b.hits);
}

TEST(BucketIndex, RecallGrowsWithReplicas) {
  TempDir dir;
  ObjectStore store(dir.path());
  const std::size_t dim = 128, rows = 10'000, k = 50, nq = 40;
  auto data = testing::uniform_dataset(rows, dim, 42);
  auto queries = testing::uniform_dataset(nq, dim, 43);
  std::vector<std::vector<std::int64_t>> truth;
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<std::int64_t> ids;
    for (const auto& h : testing::brute_force_topk(Metric::kEuclidean, std::span<const float>(queries).subspan(q * dim, dim), data, dim, k)) {
      ids.push_back(h.id);
    }
    truth.push_back(std::move(ids));
  }
  std::vector<std::vector<double>> recall;  // [replica setting][query]
  for (std::uint32_t r : {1u, 2u, 4u}) {
    BucketBuildOptions o;
    o.replicas = r;
    auto idx = BucketIndex::build(store, "r" + std::to_string(r), Metric::kEuclidean, data, dim, o);
    std::vector<double> per;
    for (std::size_t q = 0; q < nq; ++q) {
      auto res = idx.search_two_stage(std::span<const float>(queries).subspan(q * dim, dim), 64, k);
      std::vector<std::int64_t> got;
      for (const auto& h : res.hits) got.push_back(h.row);
      per.push_back(testing::recall_at_k(got, truth[q]));
    }
    recall.push_back(per);
  }
  int ok12 = 0, ok24 = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    ok12 += recall[1][q] >= recall[0][q];
    ok24 += recall[2][q] >= recall[1][q];
  }
  double m[3];
  for (int i = 0; i < 3; ++i) m[i] = std::accumulate(recall[i].begin(), recall[i].end(), 0.0) / nq;
  RecordProperty("recall_r1", std::to_string(m[0]));
  RecordProperty("recall_r2", std::to_string(m[1]));
  RecordProperty("recall_r4", std::to_string(m[2]));
  std::printf("mean recall R=1 %.4f R=2 %.4f R=4 %.4f; trials nondecreasing %d/%zu %d/%zu\n", m[0], m[1], m[2], ok12, nq, ok24, nq);
  EXPECT_GT(ok12, static_cast<int>(nq / 2));
  EXPECT_GT(ok24, static_cast<int>(nq / 2));
}

}  // namespace
}  // namespace logvec
