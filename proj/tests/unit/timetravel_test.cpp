#include <gtest/gtest.h>

#include <random>

#include "logvec/core/error.hpp"
#include "logvec/timetravel/checkpoint.hpp"
#include "support/cluster_fixture.hpp"

namespace logvec {
namespace {

using testing::ClusterFixture;
using testing::exact_config;

struct Op {
  bool insert = true;
  std::int64_t pk = 0;
  std::vector<float> vec;
  HlcTimestamp ts;
};

// State at `t` by replaying the transcript from scratch.
std::map<std::int64_t, std::vector<float>> replay(const std::vector<Op>& ops, HlcTimestamp t) {
  std::map<std::int64_t, std::vector<float>> live;
  for (const auto& op : ops) {
    if (op.ts > t) break;
    if (op.insert) {
      live[op.pk] = op.vec;
    } else {
      live.erase(op.pk);
    }
  }
  return live;
}

std::map<std::int64_t, std::vector<float>> contents(const Snapshot& s) {
  std::map<std::int64_t, std::vector<float>> out;
  const auto& rows = s.rows();
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto v = rows.vector_at(s.info().schema, 0, r);
    out[std::get<std::int64_t>(rows.pks[r])] = std::vector<float>(v.begin(), v.end());
  }
  return out;
}

ClusterConfig churn_config() {
  auto c = exact_config();
  c.write.seal_rows = 40;
  c.write.inactivity_ms = 300;
  c.checkpoint_entries = 60;
  c.checkpoint_interval_ms = 3'000;
  c.merge = true;
  return c;
}

// 500 random inserts, deletes and re-inserts with time passing between them.
std::vector<Op> run_transcript(ClusterFixture& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Op> ops;
  std::vector<std::int64_t> deleted;
  for (int i = 0; i < 500; ++i) {
    const auto roll = rng() % 10;
    Op op;
    if (roll < 2 && !f.oracle.rows.empty()) {
      op.insert = false;
      op.pk = std::next(f.oracle.rows.begin(), static_cast<long>(rng() % f.oracle.rows.size()))->first;
      op.ts = f.cluster->remove(f.info.name, PrimaryKey{op.pk}).lsn;
      f.oracle.rows.erase(op.pk);
      deleted.push_back(op.pk);
    } else {
      op.pk = roll == 2 && !deleted.empty() ? deleted[rng() % deleted.size()] : f.next_pk++;
      if (f.oracle.rows.count(op.pk)) op.pk = f.next_pk++;
      op.vec = f.random_vector();
      Entity e;
      e.pk = PrimaryKey{op.pk};
      e.vectors = {op.vec};
      e.labels = {"t"};
      e.numerics = {0.0f};
      op.ts = f.cluster->insert(f.info.name, e).lsn;
      f.oracle.rows[op.pk] = op.vec;
    }
    ops.push_back(op);
    // Occasional pauses let inactivity seal small segments, which then merge.
    f.cluster->advance(rng() % 12 == 0 ? 400 : 1 + rng() % 60);
  }
  f.cluster->advance(3'000);
  return ops;
}

TEST(Checkpoint, EmptyCollectionHasEmptyMap) {
  ClusterFixture f;
  const auto all = list_checkpoints(f.cluster->store(), f.info.id);
  ASSERT_EQ(all.size(), 1u);
  const auto cp = read_checkpoint(f.cluster->store(), all[0].second);
  EXPECT_TRUE(cp.sealed.empty());
  ASSERT_EQ(cp.channels.size(), f.info.shards);
  for (const auto& ch : cp.channels) {
    EXPECT_TRUE(ch.growing.empty());
    EXPECT_TRUE(ch.deltalog.empty());
  }
  EXPECT_EQ(f.cluster->restore(f.info.name, HlcTimestamp::max()).size(), 0u);
}

TEST(Checkpoint, NoWritesBetweenMeansSameCheckpoint) {
  ClusterFixture f;
  for (int i = 0; i < 450; ++i) f.insert_random();
  f.remove(3);
  f.cluster->advance(500);
  const auto a = f.cluster->checkpoint(f.info.name);
  f.cluster->advance(10);
  const auto b = f.cluster->checkpoint(f.info.name);
  const auto ca = read_checkpoint(f.cluster->store(), a);
  const auto cb = read_checkpoint(f.cluster->store(), b);
  EXPECT_FALSE(ca.sealed.empty());
  EXPECT_EQ(ca.sealed, cb.sealed);
  for (std::size_t i = 0; i < ca.channels.size(); ++i) {
    EXPECT_EQ(ca.channels[i].deltalog, cb.channels[i].deltalog);
    EXPECT_EQ(ca.channels[i].growing, cb.channels[i].growing);
  }
  // Canonical form: serializing the parsed checkpoint gives the stored bytes.
  EXPECT_EQ(ca.to_json().dump(1), f.cluster->store().get_text(a));
}

TEST(Checkpoint, ProgressNeverPassesTheWatermark) {
  ClusterFixture f(churn_config());
  for (int i = 0; i < 300; ++i) {
    f.insert_random();
    f.cluster->advance(7);
    if (i % 37 == 0) {
      const auto cp = read_checkpoint(f.cluster->store(), f.cluster->checkpoint(f.info.name));
      for (const auto& ch : cp.channels) {
        for (const auto& g : ch.growing) EXPECT_LE(g.progress, cp.ts);
      }
      for (const auto& d : cp.sealed) EXPECT_LE(d.progress, cp.ts);
    }
  }
}

TEST(TimeTravel, RestoreMatchesReplayOracle) {
  ClusterFixture f(churn_config());
  const auto before = f.cluster->tso().allocate();
  const auto ops = run_transcript(f, 11);
  EXPECT_GT(list_checkpoints(f.cluster->store(), f.info.id).size(), 5u);
  EXPECT_GT(f.cluster->data_coord().segments(f.info.id, true).size(),
            f.cluster->data_coord().segments(f.info.id).size());  // merges happened

  EXPECT_EQ(f.cluster->restore(f.info.name, before).size(), 0u);
  EXPECT_EQ(contents(f.cluster->restore(f.info.name, HlcTimestamp::max())), f.oracle.rows);
  std::mt19937_64 rng(5);
  const auto lo = ops.front().ts.raw(), hi = ops.back().ts.raw();
  for (int i = 0; i < 50; ++i) {
    // Half the probes land exactly on an op, where off-by-one mistakes show.
    const auto t = i % 2 ? ops[rng() % ops.size()].ts : HlcTimestamp::from_raw(lo + rng() % (hi - lo + 1));
    EXPECT_EQ(contents(f.cluster->restore(f.info.name, t)), replay(ops, t)) << "t=" << t.raw();
  }
}

TEST(TimeTravel, TravelSearchScansTheSnapshot) {
  ClusterFixture f(churn_config());
  const auto ops = run_transcript(f, 12);
  const auto t = ops[250].ts;
  testing::LiveOracle then;
  then.dim = 8;
  then.rows = replay(ops, t);
  for (int i = 0; i < 10; ++i) {
    auto r = f.request(f.random_vector(), 10, kEventual);
    r.travel_ts = t;
    const auto res = f.cluster->search(r);
    const auto truth = then.topk(f.info.metric, r.queries[0], 10);
    ASSERT_EQ(res.hits[0].size(), truth.size());
    for (std::size_t j = 0; j < truth.size(); ++j) {
      EXPECT_EQ(res.hits[0][j].pk, PrimaryKey{truth[j].id});
      EXPECT_EQ(res.hits[0][j].score, truth[j].score);
    }
  }
}

TEST(TimeTravel, InfiniteExpirationDeletesNothing) {
  ClusterFixture f(churn_config());
  run_transcript(f, 13);
  const auto objects = f.cluster->store().list("").size();
  const auto report = f.cluster->gc(f.info.name, kNeverExpire);
  EXPECT_TRUE(report.deleted.empty());
  EXPECT_TRUE(report.truncated.empty());
  EXPECT_EQ(f.cluster->store().list("").size(), objects);
}

TEST(TimeTravel, GcKeepsTheWindowExactAndExpiresTheRest) {
  ClusterFixture f(churn_config());
  const auto ops = run_transcript(f, 14);
  const auto now = f.cluster->now_ms();
  const auto mid = ops[ops.size() / 2].ts.physical();
  const auto report = f.cluster->gc(f.info.name, now - mid);
  ASSERT_TRUE(report.horizon);
  EXPECT_FALSE(report.deleted.empty());
  EXPECT_FALSE(report.truncated.empty());
  const auto horizon = *report.horizon;
  EXPECT_LE(horizon.physical(), mid);

  std::mt19937_64 rng(9);
  int inside = 0, outside = 0;
  for (int i = 0; i < 50; ++i) {
    const auto t = ops[rng() % ops.size()].ts;
    if (t >= horizon) {
      EXPECT_EQ(contents(f.cluster->restore(f.info.name, t)), replay(ops, t));
      ++inside;
    } else {
      try {
        f.cluster->restore(f.info.name, t);
        ADD_FAILURE() << "restore before the horizon succeeded";
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kHistoryExpired);
        EXPECT_NE(std::string(e.what()).find("expired"), std::string::npos);
      }
      ++outside;
    }
  }
  EXPECT_GT(inside, 0);
  EXPECT_GT(outside, 0);
  // The window edge itself restores exactly.
  EXPECT_EQ(contents(f.cluster->restore(f.info.name, horizon)), replay(ops, horizon));
}

TEST(TimeTravel, RestartAfterGcRecoversFromCheckpoint) {
  testing::TempDir keep;
  std::map<std::int64_t, std::vector<float>> live;
  auto config = churn_config();
  {
    ClusterFixture f(config);
    run_transcript(f, 15);
    f.cluster->gc(f.info.name, 1'000);
    live = f.oracle.rows;
    std::filesystem::copy(f.dir.path() / "root", keep.path() / "root", std::filesystem::copy_options::recursive);
  }
  Cluster c(keep.path() / "root", config);
  ASSERT_TRUE(c.settle());
  EXPECT_EQ(c.stats("c").live_rows, live.size());
  testing::LiveOracle oracle;
  oracle.dim = 8;
  oracle.rows = live;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    SearchRequest r;
    r.collection = "c";
    r.queries = {std::vector<float>(8)};
    for (auto& x : r.queries[0]) x = u(rng);
    r.k = 10;
    r.tau_ms = 0;
    const auto res = c.search(r);
    const auto truth = oracle.topk(Metric::kEuclidean, r.queries[0], 10);
    ASSERT_EQ(res.hits[0].size(), truth.size());
    for (std::size_t j = 0; j < truth.size(); ++j) EXPECT_EQ(res.hits[0][j].pk, PrimaryKey{truth[j].id});
  }
}

}  // namespace
}  // namespace logvec
