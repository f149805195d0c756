#include <gtest/gtest.h>

#include <random>

#include "logvec/core/error.hpp"
#include "logvec/core/hlc.hpp"
#include "logvec/core/metric.hpp"
#include "logvec/core/schema.hpp"
#include "logvec/core/segment.hpp"
#include "support/oracles.hpp"

namespace logvec {
namespace {

TEST(Hlc, PhysicalAdvanceResetsLogical) {
  HlcClockState st{HlcTimestamp(1000, 5)};
  EXPECT_EQ(hlc_tick(st, 1001), HlcTimestamp(1001, 0));
}

TEST(Hlc, SameMillisecondIncrementsLogical) {
  HlcClockState st{HlcTimestamp(1000, 5)};
  EXPECT_EQ(hlc_tick(st, 1000), HlcTimestamp(1000, 6));
}

TEST(Hlc, RegressingClockStillIncreases) {
  HlcClockState st{HlcTimestamp(1000, 5)};
  EXPECT_EQ(hlc_tick(st, 900), HlcTimestamp(1000, 6));
}

TEST(Hlc, LogicalOverflowRollsIntoNextMillisecond) {
  HlcClockState st{HlcTimestamp(1000, HlcTimestamp::kLogicalMask)};
  EXPECT_EQ(hlc_tick(st, 1000), HlcTimestamp(1001, 0));
}

TEST(Hlc, MonotoneUnderJitteringWallClock) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> jitter(-50, 50);
  HlcClockState st;
  std::int64_t wall = 1'000'000;
  std::uint64_t prev = 0;
  for (int i = 0; i < 100'000; ++i) {
    wall += jitter(rng) / 10;
    const auto ts = hlc_tick(st, static_cast<std::uint64_t>(wall));
    ASSERT_GT(ts.raw(), prev) << "at step " << i;
    prev = ts.raw();
  }
}

TEST(Hlc, EncodingRoundTripAndOrder) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> phys(0, HlcTimestamp::kMaxPhysical);
  std::uniform_int_distribution<std::uint32_t> logi(0, HlcTimestamp::kLogicalMask);
  for (int i = 0; i < 10'000; ++i) {
    const HlcTimestamp a(phys(rng), logi(rng)), b(phys(rng), logi(rng));
    const auto back = HlcTimestamp::from_raw(a.raw());
    EXPECT_EQ(back.physical(), a.physical());
    EXPECT_EQ(back.logical(), a.logical());
    const bool lex = std::pair(a.physical(), a.logical()) < std::pair(b.physical(), b.logical());
    EXPECT_EQ(lex, a.raw() < b.raw());
  }
}

TEST(Tso, FollowsVirtualClock) {
  VirtualClock clock(5000);
  Tso tso(clock);
  EXPECT_EQ(tso.allocate(), HlcTimestamp(5000, 0));
  EXPECT_EQ(tso.allocate(), HlcTimestamp(5000, 1));
  clock.advance(3);
  EXPECT_EQ(tso.allocate(), HlcTimestamp(5003, 0));
  tso.observe(HlcTimestamp(9000, 4));
  EXPECT_EQ(tso.allocate(), HlcTimestamp(9000, 5));
}

TEST(Metric, EuclideanThreeFourFive) {
  const std::vector<float> a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(distance(Metric::kEuclidean, a, b), 5.0);
}

TEST(Metric, InnerProductOfUnitVectorWithItself) {
  const std::vector<float> u{0.6f, 0.8f};
  EXPECT_NEAR(distance(Metric::kInnerProduct, u, u), 1.0, 1e-7);
}

TEST(Metric, AngularMatchesHighPrecisionOracle) {
  auto data = testing::uniform_dataset(2, 32, 42);
  for (auto& x : data) x -= 0.5f;
  const std::span<const float> a(data.data(), 32), b(data.data() + 32, 32);
  const double got = distance(Metric::kAngular, a, b);
  const auto want = testing::oracle_score(Metric::kAngular, a.data(), b.data(), 32);
  EXPECT_NEAR(got, static_cast<double>(want), 1e-6);
}

TEST(Metric, Errors) {
  const std::vector<float> a{1, 2}, b{1, 2, 3}, z{0, 0};
  try {
    distance(Metric::kEuclidean, a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  try {
    distance(Metric::kAngular, a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroVector);
  }
}

TEST(Metric, SymmetryAndIdentity) {
  auto data = testing::uniform_dataset(200, 16, 3);
  for (std::size_t i = 0; i + 1 < 200; i += 2) {
    std::span<const float> a(data.data() + i * 16, 16), b(data.data() + (i + 1) * 16, 16);
    for (auto m : {Metric::kEuclidean, Metric::kInnerProduct, Metric::kAngular}) {
      EXPECT_DOUBLE_EQ(distance(m, a, b), distance(m, b, a));
    }
    EXPECT_EQ(distance(Metric::kEuclidean, a, a), 0.0);
  }
}

Schema demo_schema(bool auto_pk = false) {
  Schema s;
  s.auto_pk = auto_pk;
  s.vector_fields = {{"embedding", 128}};
  s.label_fields = {{"color"}};
  s.numeric_fields = {{"price", NumericType::kFloat32}};
  return s;
}

Entity demo_entity(std::size_t dim) {
  Entity e;
  e.pk = std::int64_t{7};
  e.vectors = {std::vector<float>(dim, 0.5f)};
  e.labels = {"red"};
  e.numerics = {NumericValue{9.5f}};
  return e;
}

TEST(Schema, MatchingEntityIsValid) {
  EXPECT_TRUE(validate_entity(demo_schema(), demo_entity(128)).ok());
}

TEST(Schema, DimensionMismatchReported) {
  auto res = validate_entity(demo_schema(), demo_entity(96));
  ASSERT_EQ(res.violations.size(), 1u);
  EXPECT_NE(res.violations[0].find("dimension mismatch"), std::string::npos);
}

TEST(Schema, MissingPkUnderAutoPkIsAssigned) {
  auto e = demo_entity(128);
  e.pk.reset();
  auto res = validate_entity(demo_schema(true), e);
  EXPECT_TRUE(res.ok());
  EXPECT_TRUE(res.auto_pk_assigned);
  EXPECT_FALSE(validate_entity(demo_schema(false), e).ok());
}

TEST(Schema, CollectsEveryViolation) {
  Entity e;
  e.pk = std::string("x");
  e.numerics = {NumericValue{std::int64_t{3}}};
  auto res = validate_entity(demo_schema(), e);
  // wrong pk type, missing vector, missing label, wrong numeric type
  EXPECT_EQ(res.violations.size(), 4u);
}

TEST(Schema, CheckRejectsBadSchemas) {
  Schema dup = demo_schema();
  dup.label_fields.push_back({"price"});
  EXPECT_THROW(dup.check(), Error);
  Schema zero = demo_schema();
  zero.vector_fields[0].dim = 0;
  EXPECT_THROW(zero.check(), Error);
  Schema none = demo_schema();
  none.vector_fields.clear();
  EXPECT_THROW(none.check(), Error);
}

TEST(Schema, JsonRoundTrip) {
  auto s = demo_schema(true);
  EXPECT_EQ(Schema::from_json(s.to_json()), s);
}

TEST(Entity, WireRoundTrip) {
  auto e = demo_entity(4);
  e.lsn = HlcTimestamp(77, 3);
  ByteWriter w;
  write_entity(w, e);
  ByteReader r(w.data());
  auto back = read_entity(r);
  EXPECT_EQ(back.pk, e.pk);
  EXPECT_EQ(back.vectors, e.vectors);
  EXPECT_EQ(back.labels, e.labels);
  EXPECT_EQ(back.numerics, e.numerics);
  EXPECT_EQ(back.lsn, e.lsn);
  EXPECT_TRUE(r.done());
}

TEST(SegmentDescriptor, JsonRoundTrip) {
  SegmentDescriptor d;
  d.segment_id = 3;
  d.collection_id = 1;
  d.shard_id = 2;
  d.state = SegmentState::kSealed;
  d.row_count = 904;
  d.progress = HlcTimestamp(100, 2);
  d.binlog_paths = {{0, "a"}, {1, "b"}};
  d.index_paths = {{"embedding", "c"}};
  EXPECT_EQ(SegmentDescriptor::from_json(d.to_json()), d);
  d.merged_into = 9;
  d.retired_at = HlcTimestamp(200, 0);
  EXPECT_EQ(SegmentDescriptor::from_json(d.to_json()), d);
}

TEST(PrimaryKey, HashIsStable) {
  // Frozen values: routing must not change between builds or platforms.
  EXPECT_EQ(pk_hash(PrimaryKey{std::int64_t{0}}), 0xe220a8397b1dcdafULL);
  EXPECT_NE(pk_hash(PrimaryKey{std::string("a")}), pk_hash(PrimaryKey{std::string("b")}));
}

}  // namespace
}  // namespace logvec
