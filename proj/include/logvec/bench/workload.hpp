#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/cluster/cluster.hpp"

namespace logvec::bench {

// Row-major float vectors of one dimension.
struct Dataset {
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data).subspan(i * dim, dim);
  }
};

enum class DatasetFormat : std::uint8_t { kFvecs, kCsv };

// fvecs: per vector a little-endian int32 dim, then dim float32s.
Dataset read_fvecs(const std::filesystem::path& path, std::size_t limit = 0);
void write_fvecs(const std::filesystem::path& path, const Dataset& d);
// One vector per line, comma separated. Blank lines are skipped.
Dataset read_csv(const std::filesystem::path& path, std::size_t limit = 0);
// Picks the format from the extension unless one is given.
Dataset read_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format = std::nullopt,
                     std::size_t limit = 0);
// Coordinates drawn uniformly from [0, 1).
Dataset uniform_dataset(std::size_t rows, std::size_t dim, std::uint64_t seed);

// Collection with a single vector field "v", as the loaders create it.
CollectionInfo vector_collection(const std::string& name, std::uint32_t dim, Metric metric, IndexParams index,
                                 std::uint32_t shards);

// Inserts every row through the cluster's write path with pks first_pk,
// first_pk + 1, ... The clock moves `gap_ms` after each row.
std::size_t ingest(Cluster& cluster, const std::string& collection, const Dataset& d, std::int64_t first_pk = 0,
                   std::uint64_t gap_ms = 0);

// Exact top-k over a live set of integer-keyed rows, ties by ascending pk.
class ExactOracle {
 public:
  ExactOracle(Metric metric, std::size_t dim) : metric_(metric), dim_(dim) {}

  void put(std::int64_t pk, std::span<const float> v) { rows_[pk].assign(v.begin(), v.end()); }
  void erase(std::int64_t pk) { rows_.erase(pk); }
  std::size_t size() const { return rows_.size(); }

  std::vector<std::pair<std::int64_t, double>> topk(std::span<const float> query, std::size_t k) const;

 private:
  Metric metric_;
  std::size_t dim_;
  std::map<std::int64_t, std::vector<float>> rows_;
};

struct RecallReport {
  std::vector<double> recall;  // per query
  double mean_recall = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double p99_ms = 0;
  double mean_latency_ms = 0;
  double mean_wait_ms = 0;
  double throughput_qps = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t queries = 0;
  std::uint64_t errors = 0;      // searches that failed (timeout, unavailable)
  std::uint64_t mismatches = 0;  // answers differing from the exact oracle
  std::uint64_t inserts = 0;
  std::uint64_t scale_events = 0;
  std::uint64_t coverage_violations = 0;  // summed over every trace step
  std::uint64_t recovery_ms = 0;          // kill to last sign of degradation
  std::uint64_t index_builds = 0;
  double index_build_mean_ms = 0;
  std::uint64_t index_build_span_ms = 0;  // first submission to last finish
  std::uint32_t final_query_nodes = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Recall@k of each result against the oracle answer of the same query:
// |result ∩ oracle| / |oracle|, or 1 when the oracle is empty. Percentile
// and throughput fields are left zero.
RecallReport eval_recall(const std::vector<std::vector<std::int64_t>>& results,
                         const std::vector<std::vector<std::int64_t>>& oracle);

struct WorkloadSpec {
  // "uniform" or a path to an .fvecs or .csv file.
  std::string dataset = "uniform";
  std::string queries;  // optional query file; otherwise sampled from the data
  std::size_t rows = 10'000;
  std::uint32_t dim = 32;
  // Leading rows loaded, sealed and indexed before the clock starts.
  std::size_t preload = 0;
  double insert_rate = 0;   // rows/s for the remaining rows
  double query_rate = 100;  // q/s
  std::uint64_t duration_ms = 10'000;
  std::size_t k = 10;
  Metric metric = Metric::kEuclidean;
  std::uint64_t tau_ms = 0;
  std::uint32_t shards = 2;
  std::uint32_t query_nodes = 1;
  std::uint32_t data_nodes = 1;
  std::uint32_t index_nodes = 1;
  std::size_t seal_rows = 1000;
  IndexParams index;
  bool autoscale = false;
  std::uint64_t autoscale_window_ms = 1000;
  std::uint64_t seed = 42;
  bool wall_clock = false;
  // Query node service model: distance evaluations per ms, plus a fixed
  // cost per request and node.
  double node_evals_per_ms = 20'000;
  double per_request_ms = 0.02;
  std::optional<std::uint64_t> kill_at_ms;  // kills one query node at this offset
  // Answers come from an SSD bucket index over the preloaded rows.
  bool ssd = false;
  nlohmann::json cluster = nlohmann::json::object();  // ClusterConfig overrides

  void check() const;
  nlohmann::json to_json() const;
  static WorkloadSpec from_json(const nlohmann::json& j);
  static WorkloadSpec load(const std::filesystem::path& file);
};

struct WorkloadOutcome {
  RecallReport report;
  std::vector<std::string> trace;  // one JSON object per line
};

// Runs the workload on a fresh cluster under `root`. On the virtual clock
// the outcome is a pure function of `spec`.
WorkloadOutcome run_workload(const WorkloadSpec& spec, const std::filesystem::path& root);

}  // namespace logvec::bench
