#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "logvec/core/error.hpp"
#include "logvec/storage/binlog.hpp"
#include "logvec/write/data_node.hpp"
#include "logvec/write/entity_map.hpp"
#include "logvec/write/hash_ring.hpp"
#include "logvec/write/logger.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace logvec {
namespace {

using testing::TempDir;

struct Env {
  TempDir dir;
  VirtualClock clock;
  Tso tso{clock};
  std::unique_ptr<LogBroker> broker = std::make_unique<LogBroker>(dir.path() / "log");
  ObjectStore store{dir.path() / "objects"};
  std::unique_ptr<MetaStore> meta = std::make_unique<MetaStore>(dir.path() / "meta");
  CollectionInfo info;

  explicit Env(std::uint32_t shards = 1, std::uint32_t dim = 4) {
    info.id = 1;
    info.name = "c";
    info.schema.vector_fields = {{"v", dim}};
    info.schema.label_fields = {{"tag"}};
    info.shards = shards;
  }

  void restart() {
    broker.reset();
    meta.reset();
    broker = std::make_unique<LogBroker>(dir.path() / "log");
    meta = std::make_unique<MetaStore>(dir.path() / "meta");
  }

  Entity entity(std::int64_t pk, std::mt19937_64& rng) const {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Entity e;
    e.pk = PrimaryKey{pk};
    e.vectors = {std::vector<float>(info.schema.vector_fields[0].dim)};
    for (auto& x : e.vectors[0]) x = u(rng);
    e.labels = {"t" + std::to_string(pk % 3)};
    return e;
  }

  // Inserts pks [from, to) that hash to `shard`.
  std::vector<InsertAck> insert_range(Logger& lg, std::int64_t from, std::int64_t to, ShardId shard,
                                      std::mt19937_64& rng) {
    std::vector<InsertAck> out;
    for (auto pk = from; pk < to; ++pk) {
      if (shard_of(PrimaryKey{pk}, info.shards) != shard) continue;
      out.push_back(lg.handle_insert(info.id, shard, entity(pk, rng)));
      clock.advance(1);
    }
    return out;
  }
};

// Segment -> row count from the WAL alone.
std::map<SegmentId, std::size_t> replay_segment_rows(const LogBroker& broker, const std::string& channel) {
  std::map<SegmentId, std::size_t> rows;
  Subscription sub(broker, channel, broker.base_offset(channel));
  while (auto e = sub.poll()) {
    if (e->kind == EntryKind::kInsert) ++rows[e->as_insert().segment];
  }
  return rows;
}

TEST(HashRing, SingleLoggerOwnsEverything) {
  HashRing ring;
  ring.add_logger(7);
  for (std::int64_t pk = 0; pk < 100; ++pk) EXPECT_EQ(ring.route(1, 4, PrimaryKey{pk}).logger, 7u);
}

TEST(HashRing, EmptyRingFails) {
  HashRing ring;
  EXPECT_THROW(ring.route(1, 2, PrimaryKey{std::int64_t{1}}), Error);
}

TEST(HashRing, RemovingALoggerMovesOnlyItsBuckets) {
  HashRing ring;
  for (LoggerId id = 1; id <= 4; ++id) ring.add_logger(id);
  std::vector<LoggerId> before;
  for (std::uint32_t b = 0; b < ring.bucket_count(); ++b) before.push_back(ring.owner_of_bucket(b));
  ring.remove_logger(3);
  int moved = 0;
  for (std::uint32_t b = 0; b < ring.bucket_count(); ++b) {
    if (before[b] == 3) {
      EXPECT_NE(ring.owner_of_bucket(b), 3u);
      ++moved;
    } else {
      EXPECT_EQ(ring.owner_of_bucket(b), before[b]) << "bucket " << b;
    }
  }
  EXPECT_GT(moved, 0);
  ring.add_logger(3);
  for (std::uint32_t b = 0; b < ring.bucket_count(); ++b) EXPECT_EQ(ring.owner_of_bucket(b), before[b]);
}

TEST(HashRing, EveryLoggerOwnsSomeBuckets) {
  HashRing ring;
  for (LoggerId id = 1; id <= 4; ++id) ring.add_logger(id);
  std::map<LoggerId, int> owned;
  for (std::uint32_t b = 0; b < ring.bucket_count(); ++b) ++owned[ring.owner_of_bucket(b)];
  EXPECT_EQ(owned.size(), 4u);
}

TEST(HashRing, ShardCountsAreUniform) {
  std::mt19937_64 rng(42);
  const int n = 10'000, shards = 4;
  std::vector<int> counts(shards, 0);
  for (int i = 0; i < n; ++i) ++counts[shard_of(PrimaryKey{static_cast<std::int64_t>(rng())}, shards)];
  const double mean = double(n) / shards;
  const double sigma = std::sqrt(n * (1.0 / shards) * (1 - 1.0 / shards));
  double chi2 = 0;
  for (int c : counts) {
    EXPECT_LT(std::abs(c - mean), 3 * sigma);
    chi2 += (c - mean) * (c - mean) / mean;
  }
  EXPECT_LT(chi2, 16.27);  // df = 3, p = 0.001
}

TEST(HashRing, RouteIsDeterministic) {
  HashRing a, b;
  for (LoggerId id : {1u, 2u, 3u}) {
    a.add_logger(id);
    b.add_logger(id);
  }
  for (std::int64_t pk = 0; pk < 200; ++pk) {
    auto ra = a.route(5, 3, PrimaryKey{pk});
    auto rb = b.route(5, 3, PrimaryKey{pk});
    EXPECT_EQ(ra.shard, rb.shard);
    EXPECT_EQ(ra.logger, rb.logger);
    EXPECT_EQ(ra.channel, "wal/5/shard-" + std::to_string(ra.shard));
  }
}

TEST(EntitySegmentMap, FlushThenLookup) {
  TempDir dir;
  ObjectStore store(dir.path());
  EntitySegmentMap m(store, "map");
  m.put(PrimaryKey{std::int64_t{1}}, 10);
  m.put(PrimaryKey{std::int64_t{2}}, 10);
  EXPECT_TRUE(m.flush());
  EXPECT_EQ(m.memtable_size(), 0u);
  EXPECT_EQ(m.find(PrimaryKey{std::int64_t{1}}), 10u);
  EXPECT_FALSE(m.flush());
}

TEST(EntitySegmentMap, NewestRunWins) {
  TempDir dir;
  ObjectStore store(dir.path());
  EntitySegmentMap m(store, "map");
  m.put(PrimaryKey{std::int64_t{1}}, 10);
  m.flush();
  m.put(PrimaryKey{std::int64_t{1}}, 20);
  m.flush();
  EXPECT_EQ(m.find(PrimaryKey{std::int64_t{1}}), 20u);
  m.erase(PrimaryKey{std::int64_t{1}});
  EXPECT_FALSE(m.find(PrimaryKey{std::int64_t{1}}));
  m.flush();
  EntitySegmentMap reloaded(store, "map");
  EXPECT_EQ(reloaded.run_count(), 3u);
  EXPECT_FALSE(reloaded.find(PrimaryKey{std::int64_t{1}}));
}

TEST(EntitySegmentMap, FailedFlushKeepsMemtable) {
  TempDir dir;
  ObjectStore store(dir.path());
  EntitySegmentMap m(store, "map");
  m.put(PrimaryKey{std::string("a")}, 3);
  store.inject_put_failures(1);
  EXPECT_THROW(m.flush(), Error);
  EXPECT_EQ(m.memtable_size(), 1u);
  EXPECT_EQ(m.find(PrimaryKey{std::string("a")}), 3u);
  EXPECT_TRUE(m.flush());
}

TEST(Logger, FirstInsertCreatesSegmentOne) {
  Env env;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  auto ack = lg.handle_insert(1, 0, env.entity(5, rng));
  EXPECT_EQ(ack.segment, 1u);
  EXPECT_EQ(ack.offset, 0u);
  EXPECT_EQ(lg.lookup(1, 0, PrimaryKey{std::int64_t{5}}), 1u);
  auto e = env.broker->read(env.info.wal_channel(0), 0);
  EXPECT_EQ(e.kind, EntryKind::kInsert);
  EXPECT_EQ(e.as_insert().entity.lsn, ack.lsn);
}

TEST(Logger, SizeThresholdSplitsSegments) {
  Env env;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  env.insert_range(lg, 0, 5000, 0, rng);
  auto rows = replay_segment_rows(*env.broker, env.info.wal_channel(0));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], 4096u);
  EXPECT_EQ(rows[2], 904u);
  // The seal announcement sits right after row 4096.
  auto e = env.broker->read(env.info.wal_channel(0), 4096);
  ASSERT_EQ(e.kind, EntryKind::kCoord);
  EXPECT_EQ(e.as_coord().type, CoordType::kSealSegment);
  EXPECT_EQ(e.as_coord().segment, 1u);
  EXPECT_EQ(static_cast<SealTrigger>(e.as_coord().flag), SealTrigger::kSize);
}

TEST(Logger, ByteThresholdSealsWithSizeTrigger) {
  Env env(1, 64);
  WriteOptions opt;
  opt.seal_bytes = 10 * 1024;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, opt);
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  env.insert_range(lg, 0, 100, 0, rng);
  auto rows = replay_segment_rows(*env.broker, env.info.wal_channel(0));
  EXPECT_GT(rows.size(), 1u);
  std::mt19937_64 probe(1);
  const auto per_row = env.info.schema.row_bytes(env.entity(0, probe));
  EXPECT_EQ(rows[1], (opt.seal_bytes + per_row - 1) / per_row);
}

TEST(Logger, InactivitySealsAndNextInsertOpensNewSegment) {
  Env env;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  auto a = lg.handle_insert(1, 0, env.entity(1, rng));
  env.clock.advance(9'999);
  EXPECT_EQ(lg.on_time(env.clock.now_ms()), 0);
  env.clock.advance(1);
  EXPECT_EQ(lg.on_time(env.clock.now_ms()), 1);
  EXPECT_FALSE(lg.open_segment(1, 0));
  auto b = lg.handle_insert(1, 0, env.entity(2, rng));
  EXPECT_NE(a.segment, b.segment);
  auto seal = env.broker->read(env.info.wal_channel(0), 1);
  EXPECT_EQ(static_cast<SealTrigger>(seal.as_coord().flag), SealTrigger::kInactivity);
}

TEST(Logger, RejectsInvalidAndDuplicateWithoutLogging) {
  Env env;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  lg.handle_insert(1, 0, env.entity(1, rng));
  auto bad = env.entity(2, rng);
  bad.vectors[0].pop_back();
  EXPECT_THROW(lg.handle_insert(1, 0, bad), Error);
  try {
    lg.handle_insert(1, 0, env.entity(1, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlreadyExists);
  }
  try {
    lg.handle_delete(1, 0, PrimaryKey{std::int64_t{99}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  EXPECT_EQ(env.broker->end_offset(env.info.wal_channel(0)), 1u);
}

TEST(Logger, DeleteThenReinsertAllowed) {
  Env env;
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  auto ins = lg.handle_insert(1, 0, env.entity(1, rng));
  auto del = lg.handle_delete(1, 0, PrimaryKey{std::int64_t{1}});
  EXPECT_EQ(del.segment, ins.segment);
  EXPECT_GT(del.lsn, ins.lsn);
  EXPECT_FALSE(lg.lookup(1, 0, PrimaryKey{std::int64_t{1}}));
  EXPECT_NO_THROW(lg.handle_insert(1, 0, env.entity(1, rng)));
}

TEST(Logger, NotOwnedShardIsUnavailable) {
  Env env(2);
  Logger lg(1, *env.broker, env.tso, env.store, *env.meta, {});
  lg.attach_shard(env.info, 0);
  std::mt19937_64 rng(1);
  EXPECT_THROW(lg.handle_insert(1, 1, env.entity(1, rng)), Error);
}

// After a crash the logger rebuilds its map from flushed runs plus the WAL
// tail; the result must equal a replay of the whole transcript.
TEST(Logger, RebuildAfterCrashMatchesReplay) {
  Env env;
  WriteOptions opt;
  opt.map_flush_entries = 100;
  opt.seal_rows = 300;
  std::mt19937_64 rng(5);
  std::map<PrimaryKey, std::optional<SegmentId>> oracle;
  {
    Logger lg(1, *env.broker, env.tso, env.store, *env.meta, opt);
    lg.attach_shard(env.info, 0);
    for (int i = 0; i < 1000; ++i) {
      const auto pk = PrimaryKey{static_cast<std::int64_t>(rng() % 400)};
      try {
        if (oracle[pk] && rng() % 3 == 0) {
          lg.handle_delete(1, 0, pk);
          oracle[pk].reset();
        } else if (!oracle[pk]) {
          oracle[pk] = lg.handle_insert(1, 0, env.entity(std::get<std::int64_t>(pk), rng)).segment;
        }
      } catch (const Error&) {
        FAIL();
      }
      env.clock.advance(1);
    }
    EXPECT_GT(env.store.list(mapping_prefix(1, 0)).size(), 0u);
  }
  env.restart();
  Logger lg(2, *env.broker, env.tso, env.store, *env.meta, opt);
  lg.attach_shard(env.info, 0);
  for (const auto& [pk, seg] : oracle) EXPECT_EQ(lg.lookup(1, 0, pk), seg) << pk_to_string(pk);
  // The open segment survived too: the next insert continues it.
  auto before = lg.open_segment(1, 0);
  std::int64_t fresh = 10'000;
  auto ack = lg.handle_insert(1, 0, env.entity(fresh, rng));
  if (before) EXPECT_EQ(ack.segment, *before);
}

struct DataEnv : Env {
  Logger lg{1, *broker, tso, store, *meta, options()};
  DataNode dn{1, *broker, tso, store, *meta, options()};

  static WriteOptions options() {
    WriteOptions o;
    o.seal_rows = 904;
    return o;
  }
  DataEnv() {
    lg.attach_shard(info, 0);
    broker->create_channel(kCoordChannel);
    dn.watch(info, 0);
  }
  std::vector<SegmentDescriptor> sealed_announcements() const {
    std::vector<SegmentDescriptor> out;
    Subscription sub(*broker, kCoordChannel, 0);
    while (auto e = sub.poll()) {
      const auto& m = e->as_coord();
      if (m.type == CoordType::kSegmentSealed || m.type == CoordType::kSegmentsMerged) {
        out.push_back(SegmentDescriptor::from_json(nlohmann::json::parse(m.detail)));
      }
    }
    return out;
  }
};

TEST(DataNode, FullSliceGetsTemporaryIndex) {
  DataEnv env;
  std::mt19937_64 rng(1);
  env.insert_range(env.lg, 0, 256, 0, rng);
  env.dn.pump();
  auto* buf = env.dn.growing(1, 1);
  ASSERT_NE(buf, nullptr);
  EXPECT_EQ(buf->rows(), 256u);
  EXPECT_EQ(buf->full_slices(), 1u);
  EXPECT_NE(buf->temp_index(0, 0), nullptr);
  env.insert_range(env.lg, 256, 300, 0, rng);
  env.dn.pump();
  EXPECT_EQ(buf->full_slices(), 1u);
  EXPECT_EQ(buf->descriptor().slice_count, 2u);
}

TEST(DataNode, IncrementalEqualsFullReplay) {
  DataEnv env;
  std::mt19937_64 rng(1);
  for (int round = 0; round < 7; ++round) {
    env.insert_range(env.lg, round * 100, round * 100 + 100, 0, rng);
    env.dn.pump(37);
    env.dn.pump(11);
  }
  env.dn.pump();
  DataNode fresh(2, *env.broker, env.tso, env.store, *env.meta, DataEnv::options());
  fresh.watch(env.info, 0);
  fresh.pump();
  auto* a = env.dn.growing(1, 1);
  auto* b = fresh.growing(1, 1);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->columns(), b->columns());
  EXPECT_EQ(a->descriptor(), b->descriptor());
}

TEST(DataNode, SealWritesColumnarBinlogs) {
  DataEnv env;
  std::mt19937_64 rng(1);
  env.insert_range(env.lg, 0, 1000, 0, rng);
  env.dn.pump();
  auto sealed = env.sealed_announcements();
  ASSERT_EQ(sealed.size(), 1u);
  const auto& d = sealed[0];
  EXPECT_TRUE(d.sealed());
  EXPECT_EQ(d.row_count, 904u);
  ASSERT_EQ(d.binlog_paths.size(), 4u);  // pk, v, tag, lsn
  for (const auto& [f, key] : d.binlog_paths) EXPECT_EQ(decode_binlog_header(env.store.get(key)).rows, 904u);
  // Rows come back in WAL order and bit-identical.
  auto cols = read_segment_binlogs(env.store, env.info.schema, d);
  Subscription sub(*env.broker, env.info.wal_channel(0), 0);
  std::size_t i = 0;
  while (auto e = sub.poll()) {
    if (e->kind != EntryKind::kInsert || e->as_insert().segment != d.segment_id) continue;
    const auto& ent = e->as_insert().entity;
    ASSERT_LT(i, cols.rows());
    EXPECT_EQ(cols.pks[i], *ent.pk);
    EXPECT_EQ(cols.lsns[i], ent.lsn);
    EXPECT_TRUE(std::equal(ent.vectors[0].begin(), ent.vectors[0].end(),
                           cols.vector_at(env.info.schema, 0, i).begin()));
    ++i;
  }
  EXPECT_EQ(i, 904u);
  EXPECT_EQ(env.dn.growing(1, d.segment_id), nullptr);
  EXPECT_NE(env.dn.growing(1, d.segment_id + 1), nullptr);
}

TEST(DataNode, ProgressNeverExceedsConsumedTimestamps) {
  DataEnv env;
  std::mt19937_64 rng(1);
  HlcTimestamp max_seen;
  for (int i = 0; i < 50; ++i) {
    env.insert_range(env.lg, i * 10, i * 10 + 10, 0, rng);
    if (i % 5 == 0) env.lg.writers()[0]->tick();
    env.dn.pump(7);
    max_seen = env.broker->read(env.info.wal_channel(0),
                                env.dn.channel_state(1, 0).position.next_offset - 1)
                   .timestamp;
    for (const auto& g : env.dn.channel_state(1, 0).growing) EXPECT_LE(g.progress, max_seen);
  }
}

TEST(DataNode, StoreFailureRetriesWithoutLoss) {
  DataEnv env;
  std::mt19937_64 rng(1);
  env.insert_range(env.lg, 0, 1000, 0, rng);
  env.store.inject_put_failures(100);
  env.dn.pump();
  EXPECT_TRUE(env.sealed_announcements().empty());
  EXPECT_FALSE(env.dn.caught_up());
  env.store.inject_put_failures(0);
  env.dn.pump();
  EXPECT_EQ(env.sealed_announcements().size(), 1u);
  EXPECT_TRUE(env.dn.caught_up());
}

TEST(DataNode, MergeDropsDeletedRows) {
  DataEnv env;
  std::mt19937_64 rng(1);
  std::vector<PrimaryKey> pks;
  for (int s = 0; s < 2; ++s) {
    for (std::int64_t pk = s * 1000; pk < s * 1000 + 100; ++pk) {
      env.lg.handle_insert(1, 0, env.entity(pk, rng));
      pks.push_back(PrimaryKey{pk});
    }
    env.lg.seal_open(1, 0, SealTrigger::kManual);
  }
  env.dn.pump();
  auto sealed = env.sealed_announcements();
  ASSERT_EQ(sealed.size(), 2u);
  EXPECT_EQ(sealed[0].row_count, 100u);
  EXPECT_EQ(sealed[1].row_count, 100u);
  EXPECT_EQ(env.dn.merge_segments(sealed).row_count, 200u);

  std::set<PrimaryKey> deleted;
  for (int i = 0; i < 10; ++i) {
    env.lg.handle_delete(1, 0, pks[i * 7]);
    deleted.insert(pks[i * 7]);
  }
  env.dn.pump();
  auto merged = env.dn.merge_segments(sealed);
  EXPECT_EQ(merged.row_count, 190u);
  auto cols = read_segment_binlogs(env.store, env.info.schema, merged);
  for (const auto& pk : cols.pks) EXPECT_FALSE(deleted.count(pk));

  // FLAT search over the merged segment equals brute force over the live
  // rows of the inputs.
  std::vector<float> live;
  std::vector<PrimaryKey> live_pk;
  for (const auto& d : sealed) {
    auto c = read_segment_binlogs(env.store, env.info.schema, d);
    for (std::size_t r = 0; r < c.rows(); ++r) {
      if (deleted.count(c.pks[r])) continue;
      auto v = c.vector_at(env.info.schema, 0, r);
      live.insert(live.end(), v.begin(), v.end());
      live_pk.push_back(c.pks[r]);
    }
  }
  ASSERT_EQ(live_pk.size(), 190u);
  auto q = testing::uniform_dataset(20, 4, 9);
  for (int qi = 0; qi < 20; ++qi) {
    std::span<const float> query(q.data() + qi * 4, 4);
    auto truth = testing::brute_force_topk(Metric::kEuclidean, query, live, 4, 10);
    auto got = testing::brute_force_topk(Metric::kEuclidean, query, cols.vectors[0], 4, 10);
    ASSERT_EQ(truth.size(), got.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      EXPECT_EQ(live_pk[truth[i].id], cols.pks[got[i].id]);
      EXPECT_EQ(truth[i].score, got[i].score);
    }
  }
}

TEST(DataNode, MergeRejectsMixedCollections) {
  DataEnv env;
  SegmentDescriptor a, b;
  a.collection_id = 1;
  a.state = SegmentState::kSealed;
  b = a;
  b.collection_id = 2;
  EXPECT_THROW(env.dn.merge_segments({a, b}), Error);
}

}  // namespace
}  // namespace logvec
