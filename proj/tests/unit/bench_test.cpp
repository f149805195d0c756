#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "logvec/bench/workload.hpp"
#include "logvec/core/error.hpp"
#include "support/golden.hpp"
#include "support/temp_dir.hpp"

namespace logvec {
namespace {

using bench::Dataset;
using bench::WorkloadSpec;
using testing::TempDir;

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Dataset, FvecsRoundTripIsByteIdentical) {
  TempDir dir;
  const auto d = bench::uniform_dataset(300, 17, 7);
  bench::write_fvecs(dir.path() / "a.fvecs", d);
  const auto back = bench::read_fvecs(dir.path() / "a.fvecs");
  EXPECT_EQ(back.dim, 17u);
  ASSERT_EQ(back.data.size(), d.data.size());
  EXPECT_EQ(std::memcmp(back.data.data(), d.data.data(), d.data.size() * 4), 0);
  bench::write_fvecs(dir.path() / "b.fvecs", back);
  EXPECT_EQ(file_bytes(dir.path() / "a.fvecs"), file_bytes(dir.path() / "b.fvecs"));
  EXPECT_EQ(file_bytes(dir.path() / "a.fvecs").size(), 300u * (4 + 17 * 4));
}

TEST(Dataset, LimitReadsAPrefix) {
  TempDir dir;
  const auto d = bench::uniform_dataset(50, 4, 1);
  bench::write_fvecs(dir.path() / "a.fvecs", d);
  const auto head = bench::read_fvecs(dir.path() / "a.fvecs", 10);
  EXPECT_EQ(head.size(), 10u);
  EXPECT_TRUE(std::equal(head.data.begin(), head.data.end(), d.data.begin()));
}

TEST(Dataset, EmptyFileIsAnEmptyDataset) {
  TempDir dir;
  std::ofstream(dir.path() / "e.fvecs").close();
  std::ofstream(dir.path() / "e.csv").close();
  EXPECT_EQ(bench::read_dataset(dir.path() / "e.fvecs").size(), 0u);
  EXPECT_EQ(bench::read_dataset(dir.path() / "e.csv").size(), 0u);
}

TEST(Dataset, MalformedFilesAreRejected) {
  TempDir dir;
  const auto d = bench::uniform_dataset(3, 4, 1);
  bench::write_fvecs(dir.path() / "a.fvecs", d);
  auto bytes = file_bytes(dir.path() / "a.fvecs");
  bytes.resize(bytes.size() - 3);
  std::ofstream(dir.path() / "cut.fvecs", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                                 static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(bench::read_fvecs(dir.path() / "cut.fvecs"), Error);

  // Second vector claims 5 dims.
  bytes = file_bytes(dir.path() / "a.fvecs");
  bytes[20] = 5;
  std::ofstream(dir.path() / "dims.fvecs", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                                  static_cast<std::streamsize>(bytes.size()));
  try {
    bench::read_fvecs(dir.path() / "dims.fvecs");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }

  std::ofstream(dir.path() / "ragged.csv") << "1,2,3\n4,5\n";
  std::ofstream(dir.path() / "junk.csv") << "1,2,x\n";
  std::ofstream(dir.path() / "a.txt") << "1,2\n";
  EXPECT_THROW(bench::read_dataset(dir.path() / "ragged.csv"), Error);
  EXPECT_THROW(bench::read_dataset(dir.path() / "junk.csv"), Error);
  EXPECT_THROW(bench::read_dataset(dir.path() / "a.txt"), Error);
  EXPECT_THROW(bench::read_fvecs(dir.path() / "missing.fvecs"), Error);
}

TEST(Dataset, CsvParses) {
  TempDir dir;
  std::ofstream(dir.path() / "a.csv") << "1, 2.5,-3\n\n4,5,6e-1\n";
  const auto d = bench::read_dataset(dir.path() / "a.csv");
  EXPECT_EQ(d.dim, 3u);
  EXPECT_EQ(d.data, (std::vector<float>{1, 2.5f, -3, 4, 5, 0.6f}));
}

TEST(Ingest, TenThousandRowsThroughTheWritePath) {
  TempDir dir;
  ClusterConfig config;
  config.write.seal_rows = 4096;
  Cluster cluster(dir.path(), config);
  cluster.create_collection(bench::vector_collection("c", 16, Metric::kEuclidean, {}, 2));
  const auto d = bench::uniform_dataset(10'000, 16, 3);
  bench::write_fvecs(dir.path() / "d.fvecs", d);
  EXPECT_EQ(bench::ingest(cluster, "c", bench::read_fvecs(dir.path() / "d.fvecs")), 10'000u);
  cluster.advance(500);
  const auto s = cluster.stats("c");
  EXPECT_EQ(s.sealed_rows + s.growing_rows, 10'000u);
  EXPECT_EQ(s.live_rows, 10'000u);
  EXPECT_GT(s.sealed_segments, 0u);

  EXPECT_EQ(bench::ingest(cluster, "c", Dataset{}), 0u);
  EXPECT_THROW(bench::ingest(cluster, "c", bench::uniform_dataset(2, 3, 1)), Error);
}

TEST(Recall, ExactIsOneAndDisjointIsZero) {
  const std::vector<std::vector<std::int64_t>> oracle = {{1, 2, 3}, {4, 5}};
  EXPECT_DOUBLE_EQ(bench::eval_recall(oracle, oracle).mean_recall, 1.0);
  const auto r = bench::eval_recall({{7, 8, 9}, {10, 11}}, oracle);
  EXPECT_DOUBLE_EQ(r.mean_recall, 0.0);
  const auto half = bench::eval_recall({{1, 9, 3}, {5, 4}}, oracle);
  EXPECT_DOUBLE_EQ(half.recall[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(half.recall[1], 1.0);
  EXPECT_THROW(bench::eval_recall({{1}}, oracle), Error);
  EXPECT_DOUBLE_EQ(bench::eval_recall({{}}, {{}}).mean_recall, 1.0);
}

TEST(Recall, IvfRecallIsMonotoneInNprobe) {
  const std::size_t dim = 16, n = 4'000, k = 20;
  const auto data = bench::uniform_dataset(n, dim, 42);
  const auto queries = bench::uniform_dataset(100, dim, 43);
  IndexParams p;
  p.kind = IndexKind::kIvfFlat;
  p.nlist = 64;
  const auto index = build_index(p, Metric::kEuclidean, data.data, dim);
  bench::ExactOracle oracle(Metric::kEuclidean, dim);
  for (std::size_t i = 0; i < n; ++i) oracle.put(static_cast<std::int64_t>(i), data.row(i));

  std::vector<std::vector<std::int64_t>> truth;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::int64_t> t;
    for (const auto& [pk, _] : oracle.topk(queries.row(q), k)) t.push_back(pk);
    truth.push_back(t);
  }
  double prev = -1;
  for (std::uint32_t nprobe : {1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
    std::vector<std::vector<std::int64_t>> got;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      std::vector<std::int64_t> ids;
      for (const auto& h : index->search(queries.row(q), k, {nprobe, 0}, RowFilter{})) ids.push_back(h.row);
      got.push_back(ids);
    }
    const double mean = bench::eval_recall(got, truth).mean_recall;
    EXPECT_GE(mean, prev) << "nprobe " << nprobe;
    prev = mean;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(WorkloadSpec, JsonRoundTripAndValidation) {
  WorkloadSpec s;
  s.rows = 500;
  s.tau_ms = kEventual;
  s.kill_at_ms = 300;
  s.query_nodes = 3;
  s.index.kind = IndexKind::kHnsw;
  const auto j = s.to_json();
  EXPECT_EQ(WorkloadSpec::from_json(j).to_json(), j);

  auto with = [&](const char* key, nlohmann::json v) {
    auto c = j;
    c[key] = std::move(v);
    return c;
  };
  EXPECT_THROW(WorkloadSpec::from_json(with("tau_ms", -1)), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("tau_ms", -0.5)), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("tau_ms", "soon")), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("frobnicate", 1)), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("k", 0)), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("preload", 501)), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("clock", "sundial")), Error);
  EXPECT_THROW(WorkloadSpec::from_json(with("rows", "many")), Error);
  EXPECT_EQ(WorkloadSpec::from_json(with("tau_ms", "inf")).tau_ms, kEventual);
}

WorkloadSpec static_spec() {
  WorkloadSpec s;
  s.rows = 2'000;
  s.dim = 16;
  s.preload = 2'000;
  s.seal_rows = 500;
  s.query_rate = 200;
  s.duration_ms = 1'000;
  s.k = 10;
  return s;
}

TEST(Workload, QueryOnlyFlatOnStaticDataHasRecallOne) {
  TempDir dir;
  const auto out = bench::run_workload(static_spec(), dir.path());
  EXPECT_GT(out.report.queries, 100u);
  EXPECT_EQ(out.report.errors, 0u);
  EXPECT_EQ(out.report.mismatches, 0u);
  EXPECT_DOUBLE_EQ(out.report.mean_recall, 1.0);
  EXPECT_EQ(out.trace.size(), out.report.queries);
  EXPECT_GT(out.report.throughput_qps, 0);
  EXPECT_LE(out.report.p50_ms, out.report.p95_ms);
  EXPECT_LE(out.report.p95_ms, out.report.p99_ms);
}

TEST(Workload, MixedWorkloadReadsEveryInsert) {
  TempDir dir;
  auto s = static_spec();
  s.preload = 500;
  s.insert_rate = 1'000;
  s.cluster = {{"temp_indexes", false}};
  const auto out = bench::run_workload(s, dir.path());
  EXPECT_GT(out.report.inserts, 800u);
  EXPECT_EQ(out.report.mismatches, 0u);
  EXPECT_DOUBLE_EQ(out.report.mean_recall, 1.0);
  EXPECT_EQ(out.report.queries + out.report.inserts, out.trace.size());
}

TEST(Workload, SameSeedSameTraceAndReport) {
  auto s = static_spec();
  s.preload = 1'000;
  s.insert_rate = 500;
  s.tau_ms = 0;
  TempDir a, b, c;
  const auto x = bench::run_workload(s, a.path());
  const auto y = bench::run_workload(s, b.path());
  EXPECT_EQ(x.trace, y.trace);
  EXPECT_EQ(x.report.to_json().dump(), y.report.to_json().dump());
  s.seed = 43;
  const auto z = bench::run_workload(s, c.path());
  EXPECT_NE(x.trace, z.trace);
}

TEST(Workload, MoreQueryNodesMoreThroughput) {
  double base = 0;
  for (std::uint32_t nodes : {1u, 2u, 4u}) {
    TempDir dir;
    auto s = static_spec();
    s.rows = s.preload = 8'000;
    s.seal_rows = 1'000;
    s.query_rate = 1e6;  // all queries arrive together
    s.duration_ms = 1;
    s.query_nodes = nodes;
    s.shards = 1;
    s.tau_ms = kEventual;
    s.cluster = {{"query_coord", {{"balance_ratio", 1.0}}}};
    const auto out = bench::run_workload(s, dir.path());
    ASSERT_GT(out.report.queries, 100u);
    if (nodes == 1) base = out.report.throughput_qps;
    EXPECT_NEAR(out.report.throughput_qps / base, nodes, 0.25 * nodes) << nodes << " nodes";
  }
}

TEST(Workload, SsdRunsCountBytesRead) {
  TempDir dir;
  auto s = static_spec();
  s.ssd = true;
  s.index.search.nprobe = 4;
  const auto out = bench::run_workload(s, dir.path());
  EXPECT_EQ(out.report.bytes_read, out.report.queries * 4 * 4096);
  EXPECT_GT(out.report.mean_recall, 0.3);
}

TEST(Workload, AutoscaleReactsToLatency) {
  TempDir dir;
  auto s = static_spec();
  s.rows = s.preload = 8'000;
  s.query_rate = 400;
  s.duration_ms = 8'000;
  s.autoscale = true;
  s.tau_ms = kEventual;
  s.node_evals_per_ms = 3'000;  // one node saturates
  s.cluster = {{"autoscale", {{"enabled", true}, {"max_nodes", 8}}}};
  const auto out = bench::run_workload(s, dir.path());
  EXPECT_GT(out.report.scale_events, 0u);
  std::uint64_t most = 0;
  for (const auto& line : out.trace) {
    const auto ev = nlohmann::json::parse(line);
    if (ev["ev"] == "scale") most = std::max(most, ev["nodes"].get<std::uint64_t>());
  }
  EXPECT_GE(most, 2u);
  EXPECT_EQ(out.report.errors, 0u);
  EXPECT_EQ(out.report.mismatches, 0u);
}

TEST(Workload, ReportMatchesGolden) {
  TempDir dir;
  auto s = static_spec();
  s.rows = 600;
  s.preload = 300;
  s.insert_rate = 300;
  s.query_rate = 20;
  s.k = 5;
  const auto out = bench::run_workload(s, dir.path());
  const auto actual = out.report.to_json().dump(1) + "\n";
  EXPECT_EQ(actual, testing::golden("workload_report.json", actual));
}

}  // namespace
}  // namespace logvec
