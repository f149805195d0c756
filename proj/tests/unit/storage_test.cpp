#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "logvec/core/error.hpp"
#include "logvec/storage/binlog.hpp"
#include "logvec/storage/metastore.hpp"
#include "logvec/storage/object_store.hpp"
#include "logvec/storage/sorted_run.hpp"
#include "support/golden.hpp"
#include "support/temp_dir.hpp"

namespace logvec {
namespace {

using testing::TempDir;

Schema mixed_schema() {
  Schema s;
  s.vector_fields = {{"emb", 3}};
  s.label_fields = {{"color"}};
  s.numeric_fields = {{"price", NumericType::kFloat32}, {"qty", NumericType::kInt64}};
  return s;
}

Entity mixed_row(std::mt19937_64& rng, std::int64_t pk, HlcTimestamp lsn) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Entity e;
  e.pk = PrimaryKey{pk};
  e.vectors = {{u(rng), u(rng), u(rng)}};
  e.labels = {std::string(1 + rng() % 5, static_cast<char>('a' + rng() % 26))};
  e.numerics = {NumericValue{u(rng) * 100.0f}, NumericValue{static_cast<std::int64_t>(rng() % 1000) - 500}};
  e.lsn = lsn;
  return e;
}

TEST(ObjectStore, PutGetListRemove) {
  TempDir dir;
  ObjectStore store(dir.path());
  store.put("collection/1/segment/2/binlog/lsn", std::string("abc"));
  store.put("collection/1/segment/3/binlog/lsn", std::string("de"));
  store.put("other/x", std::string("z"));
  EXPECT_EQ(store.get_text("collection/1/segment/2/binlog/lsn"), "abc");
  EXPECT_EQ(store.list("collection/1/"),
            (std::vector<std::string>{"collection/1/segment/2/binlog/lsn",
                                      "collection/1/segment/3/binlog/lsn"}));
  EXPECT_EQ(store.size("other/x"), 1u);
  EXPECT_TRUE(store.remove("other/x"));
  EXPECT_FALSE(store.exists("other/x"));
  EXPECT_THROW(store.get("other/x"), Error);
  EXPECT_THROW(store.put("../escape", std::string("x")), Error);
}

TEST(ObjectStore, CountsBytesRead) {
  TempDir dir;
  ObjectStore store(dir.path());
  std::vector<std::uint8_t> blob(10'000, 7);
  store.put("k", blob);
  store.reset_counters();
  store.get_range("k", 4096, 4096);
  EXPECT_EQ(store.bytes_read(), 4096u);
  store.get("k");
  EXPECT_EQ(store.bytes_read(), 4096u + 10'000u);
  EXPECT_THROW(store.get_range("k", 8000, 4096), Error);
}

// Readers racing with a rewriter only ever see one of the two whole values.
TEST(ObjectStore, ReadersNeverSeePartialObjects) {
  TempDir dir;
  ObjectStore store(dir.path());
  const std::vector<std::uint8_t> a(200'000, 'a'), b(300'000, 'b');
  store.put("obj", a);
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    for (int i = 0; i < 50; ++i) store.put("obj", (i & 1) ? a : b);
    stop = true;
  });
  int reads = 0;
  while (!stop || reads < 10) {
    auto v = store.get("obj");
    ASSERT_TRUE(v == a || v == b);
    ++reads;
  }
  writer.join();
}

TEST(ObjectStore, RetriesTransientFailures) {
  TempDir dir;
  ObjectStore store(dir.path());
  store.inject_put_failures(2);
  with_retries(3, [&] { store.put("k", std::string("v")); });
  EXPECT_EQ(store.get_text("k"), "v");
  store.inject_put_failures(3);
  EXPECT_THROW(with_retries(3, [&] { store.put("k2", std::string("v")); }), Error);
}

TEST(Binlog, HeaderLayout) {
  Schema s;
  s.vector_fields = {{"v", 2}};
  auto cols = SegmentColumns::empty_for(s);
  Entity e;
  e.pk = PrimaryKey{std::int64_t{-1}};
  e.vectors = {{1.0f, -2.0f}};
  e.lsn = HlcTimestamp::from_raw(0x1122);
  cols.append(s, e);
  auto bytes = encode_binlog(s, 5, 9, 1, cols);
  // Independently laid out by hand.
  std::vector<std::uint8_t> expected = {'M', 'B', 'L', '1', 1, 0};
  auto le = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) expected.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  le(5, 8);
  le(9, 8);
  le(1, 4);
  le(1, 8);
  le(0x1122, 8);
  le(0x1122, 8);
  le(0x3f800000, 4);  // 1.0f
  le(0xc0000000, 4);  // -2.0f
  EXPECT_EQ(bytes, expected);
  EXPECT_EQ(BinlogHeader::kSize, 50u);
}

TEST(Binlog, ShapeAndColumnarReads) {
  TempDir dir;
  ObjectStore store(dir.path());
  Schema s;
  s.vector_fields = {{"emb", 8}};
  s.label_fields = {{"tag"}};
  auto cols = SegmentColumns::empty_for(s);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 904; ++i) {
    Entity e;
    e.pk = PrimaryKey{std::int64_t{i}};
    e.vectors = {std::vector<float>(8, static_cast<float>(i) * 0.5f)};
    e.labels = {"t" + std::to_string(i % 7)};
    e.lsn = HlcTimestamp(1000 + i, 0);
    cols.append(s, e);
  }
  SegmentDescriptor d;
  d.segment_id = 3;
  d.collection_id = 1;
  d.state = SegmentState::kSealed;
  d.row_count = 904;
  d.binlog_paths = write_segment_binlogs(store, s, 1, 3, cols);
  ASSERT_EQ(d.binlog_paths.size(), 4u);  // pk, emb, tag, lsn
  for (const auto& [field, key] : d.binlog_paths) {
    EXPECT_EQ(decode_binlog_header(store.get(key)).rows, 904u);
  }
  store.reset_counters();
  auto vec = read_vector_column(store, s, d, 0);
  EXPECT_EQ(vec, cols.vectors[0]);
  EXPECT_EQ(store.bytes_read(), BinlogHeader::kSize + 904u * 8 * 4);
  EXPECT_LT(store.bytes_read(), store.size(d.binlog_paths.at(0)) + store.size(d.binlog_paths.at(2)) +
                                    store.bytes_read());
}

TEST(Binlog, RandomSegmentsRoundTripBitExact) {
  TempDir dir;
  ObjectStore store(dir.path());
  const auto s = mixed_schema();
  std::mt19937_64 rng(42);
  for (SegmentId seg = 1; seg <= 100; ++seg) {
    auto cols = SegmentColumns::empty_for(s);
    const auto rows = rng() % 300;
    for (std::uint64_t i = 0; i < rows; ++i) {
      cols.append(s, mixed_row(rng, static_cast<std::int64_t>(rng()), HlcTimestamp(5000 + i, i % 3)));
    }
    SegmentDescriptor d;
    d.segment_id = seg;
    d.collection_id = 2;
    d.row_count = rows;
    d.binlog_paths = write_segment_binlogs(store, s, 2, seg, cols);
    auto back = read_segment_binlogs(store, s, d);
    ASSERT_EQ(back, cols) << "segment " << seg;
  }
}

TEST(Binlog, StringPrimaryKeys) {
  TempDir dir;
  ObjectStore store(dir.path());
  Schema s;
  s.pk_type = PkType::kString;
  s.vector_fields = {{"v", 1}};
  auto cols = SegmentColumns::empty_for(s);
  for (std::string pk : {"", "x", "hello world"}) {
    Entity e;
    e.pk = PrimaryKey{pk};
    e.vectors = {{1.0f}};
    cols.append(s, e);
  }
  SegmentDescriptor d;
  d.segment_id = 1;
  d.row_count = 3;
  d.binlog_paths = write_segment_binlogs(store, s, 1, 1, cols);
  EXPECT_EQ(read_segment_binlogs(store, s, d), cols);
}

TEST(Binlog, CorruptionDetected) {
  Schema s;
  s.vector_fields = {{"v", 2}};
  auto cols = SegmentColumns::empty_for(s);
  Entity e;
  e.pk = PrimaryKey{std::int64_t{1}};
  e.vectors = {{1.0f, 2.0f}};
  cols.append(s, e);
  auto bytes = encode_binlog(s, 1, 1, 1, cols);
  auto out = SegmentColumns::empty_for(s);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_binlog(s, bad, out), Error);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_binlog(s, bad, out), Error);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_binlog(s, bad, out), Error);
}

TEST(Binlog, GoldenBytesStable) {
  const auto s = mixed_schema();
  std::mt19937_64 rng(7);
  auto cols = SegmentColumns::empty_for(s);
  for (int i = 0; i < 3; ++i) cols.append(s, mixed_row(rng, 100 + i, HlcTimestamp(2'000'000 + i, 1)));
  for (std::uint32_t field : {0u, 1u, 2u, 3u, 4u, Schema::kLsnFieldId}) {
    const auto hex = testing::to_hex(encode_binlog(s, 1, 1, field, cols));
    const auto name = "binlog_" + binlog_kind(field).substr(7) + ".hex";
    EXPECT_EQ(hex, testing::golden(name, hex)) << name;
  }
}

TEST(SortedRun, FindAcrossBlocks) {
  std::map<PrimaryKey, SegmentId> m;
  for (std::int64_t i = 0; i < 1000; ++i) m[PrimaryKey{i * 3}] = static_cast<SegmentId>(i % 5);
  m[PrimaryKey{std::string("zz")}] = 9;
  auto run = SortedRun::decode(SortedRun::encode(m));
  EXPECT_EQ(run.size(), 1001u);
  for (std::int64_t i = -3; i < 3010; ++i) {
    auto got = run.find(PrimaryKey{i});
    auto it = m.find(PrimaryKey{i});
    if (it == m.end()) {
      EXPECT_FALSE(got) << i;
    } else {
      ASSERT_TRUE(got);
      EXPECT_EQ(*got, it->second);
    }
  }
  EXPECT_EQ(run.find(PrimaryKey{std::string("zz")}), 9u);
  EXPECT_FALSE(run.find(PrimaryKey{std::string("a")}));
  EXPECT_EQ(run.entries().size(), 1001u);
}

TEST(SortedRun, EmptyAndMagic) {
  auto bytes = SortedRun::encode({});
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MSR1");
  auto run = SortedRun::decode(bytes);
  EXPECT_FALSE(run.find(PrimaryKey{std::int64_t{1}}));
  bytes[1] = 'X';
  EXPECT_THROW(SortedRun::decode(bytes), Error);
}

TEST(MetaStore, PersistsAcrossReopen) {
  TempDir dir;
  {
    MetaStore m(dir.path());
    m.put("a/1", "x");
    m.put("a/2", "y");
    m.put("b/1", "z");
    m.remove("a/2");
    EXPECT_EQ(m.next_id("segment"), 1u);
    EXPECT_EQ(m.next_id("segment"), 2u);
  }
  MetaStore m(dir.path());
  EXPECT_EQ(m.get("a/1"), "x");
  EXPECT_FALSE(m.get("a/2"));
  EXPECT_EQ(m.list("a/").size(), 1u);
  EXPECT_EQ(m.next_id("segment"), 3u);
}

TEST(MetaStore, TornLastLineIgnored) {
  TempDir dir;
  {
    MetaStore m(dir.path());
    m.put("k", "v");
  }
  std::ofstream(dir.path() / "meta.log", std::ios::app) << "{\"k\":\"k2\",\"v\":";
  MetaStore m(dir.path());
  EXPECT_EQ(m.get("k"), "v");
  EXPECT_FALSE(m.get("k2"));
  m.put("k3", "w");
  MetaStore again(dir.path());
  EXPECT_EQ(again.get("k3"), "w");
}

}  // namespace
}  // namespace logvec
