#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "logvec/bench/workload.hpp"
#include "support/temp_dir.hpp"

namespace logvec {
namespace {

using testing::TempDir;

struct Run {
  int status = 0;
  std::string out;
};

Run cli(const std::filesystem::path& root, const std::string& args) {
  const std::string cmd = std::string(LOGVEC_CLI) + " --compact --root '" + root.string() + "' " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf;
  while (auto n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  r.status = pclose(p);
  return r;
}

nlohmann::json cli_json(const std::filesystem::path& root, const std::string& args) {
  const auto r = cli(root, args);
  EXPECT_EQ(r.status, 0) << args << "\n" << r.out;
  return nlohmann::json::parse(r.out);
}

std::map<std::int64_t, std::vector<float>> contents(const Snapshot& s) {
  std::map<std::int64_t, std::vector<float>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto v = s.rows().vector_at(s.info().schema, 0, i);
    out[std::get<std::int64_t>(s.rows().pks[i])] = {v.begin(), v.end()};
  }
  return out;
}

TEST(Cli, IngestMatchesTheDirectApi) {
  TempDir dir;
  const auto data = bench::uniform_dataset(700, 8, 5);
  bench::write_fvecs(dir.path() / "d.fvecs", data);

  cli_json(dir.path() / "cli", "collection create c --dim 8");
  const auto ack = cli_json(dir.path() / "cli", "ingest c '" + (dir.path() / "d.fvecs").string() + "' --first-pk 100");
  EXPECT_EQ(ack["rows"], 700);

  Cluster direct(dir.path() / "api");
  direct.create_collection(bench::vector_collection("c", 8, Metric::kEuclidean, {}, 2));
  bench::ingest(direct, "c", data, 100);

  Cluster reopened(dir.path() / "cli");
  EXPECT_EQ(contents(reopened.restore("c", HlcTimestamp::max())).size(), 700u);
  EXPECT_EQ(contents(reopened.restore("c", HlcTimestamp::max())), contents(direct.restore("c", HlcTimestamp::max())));
  const auto a = reopened.stats("c");
  const auto b = direct.stats("c");
  EXPECT_EQ(a.sealed_rows + a.growing_rows, b.sealed_rows + b.growing_rows);
}

TEST(Cli, StatsFollowTheTranscript) {
  TempDir dir;
  const auto root = dir.path() / "r";
  cli_json(root, "collection create c --dim 3 --shards 1");
  std::ofstream(dir.path() / "a.csv") << "0,0,0\n1,1,1\n2,2,2\n";
  std::ofstream(dir.path() / "b.csv") << "3,3,3\n4,4,4\n";
  cli_json(root, "ingest c '" + (dir.path() / "a.csv").string() + "'");
  cli_json(root, "seal c");
  cli_json(root, "ingest c '" + (dir.path() / "b.csv").string() + "' --first-pk 3");
  const auto s = cli_json(root, "stats c");
  EXPECT_EQ(s["live_rows"], 5);
  EXPECT_EQ(s["sealed_rows"], 3);
  EXPECT_EQ(s["growing_rows"], 2);

  const auto hits = cli_json(root, "search c --query 4,4,3.9 -k 2 --tau 0");
  EXPECT_EQ(hits["hits"][0]["pk"], 4);
  EXPECT_EQ(hits["hits"][1]["pk"], 3);
}

TEST(Cli, NodeAddRaisesTheCount) {
  TempDir dir;
  const auto root = dir.path() / "r";
  cli_json(root, "collection create c --dim 2");
  EXPECT_EQ(cli_json(root, "node add query")["query_nodes"], 2);
  EXPECT_EQ(cli_json(root, "node add query")["query_nodes"], 3);
  EXPECT_EQ(cli_json(root, "node list").size(), 3u);
  EXPECT_EQ(cli_json(root, "node remove")["query_nodes"], 2);
}

TEST(Cli, CheckpointRestoreAndGc) {
  TempDir dir;
  const auto root = dir.path() / "r";
  cli_json(root, "collection create c --dim 2");
  std::ofstream(dir.path() / "a.csv") << "0,0\n1,1\n";
  cli_json(root, "ingest c '" + (dir.path() / "a.csv").string() + "'");
  const auto key = cli_json(root, "checkpoint c")["checkpoint"].get<std::string>();
  EXPECT_NE(key.find("checkpoint-"), std::string::npos);
  const auto snap = cli_json(root, "restore c --at 18446744073709551615 --dump '" + (dir.path() / "s.fvecs").string() + "'");
  EXPECT_EQ(snap["rows"], 2);
  EXPECT_EQ(snap["snapshot"], key);
  EXPECT_EQ(bench::read_fvecs(dir.path() / "s.fvecs").size(), 2u);
  EXPECT_EQ(cli_json(root, "restore c --at 1")["rows"], 0);
  const auto gc = cli_json(root, "gc c --expiration 0");
  EXPECT_FALSE(gc["horizon"].is_null());
  const auto expired = cli(root, "restore c --at 1");
  EXPECT_NE(expired.status, 0);
  EXPECT_NE(expired.out.find("history expired"), std::string::npos) << expired.out;
}

TEST(Cli, ErrorsExitNonZero) {
  TempDir dir;
  const auto root = dir.path() / "r";
  EXPECT_NE(cli(root, "stats nope").status, 0);
  EXPECT_NE(cli(root, "collection create c --dim 2 --metric manhattan").status, 0);
  EXPECT_NE(cli(root, "gc c --expiration -5").status, 0);
  EXPECT_NE(cli(root, "frobnicate").status, 0);
  std::ofstream(dir.path() / "bad.json") << R"({"tick_interval_ms": 100, "typo": 1})";
  const auto r = cli(root, "--config '" + (dir.path() / "bad.json").string() + "' collection list");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("typo"), std::string::npos);
}

TEST(Cli, WorkloadRunWritesTraceAndReport) {
  TempDir dir;
  bench::WorkloadSpec s;
  s.rows = s.preload = 500;
  s.dim = 8;
  s.query_rate = 50;
  s.duration_ms = 1'000;
  std::ofstream(dir.path() / "w.json") << s.to_json().dump();
  const auto trace = dir.path() / "t.jsonl";
  const auto report = dir.path() / "rep.json";
  const auto r = cli(dir.path() / "r", "workload run '" + (dir.path() / "w.json").string() + "' --trace '" +
                                           trace.string() + "' --report '" + report.string() + "'");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("mean recall"), std::string::npos);
  std::ifstream rep(report);
  const auto j = nlohmann::json::parse(rep);
  EXPECT_EQ(j["mean_recall"], 1.0);
  std::ifstream t(trace);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(t, line)) ++lines;
  EXPECT_EQ(lines, j["queries"].get<std::size_t>());
}

}  // namespace
}  // namespace logvec
