#include "logvec/bench/workload.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "logvec/core/error.hpp"
#include "logvec/ssd/bucket_index.hpp"

namespace logvec::bench {

namespace {

[[noreturn]] void bad_file(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + what);
}

}  // namespace

Dataset read_fvecs(const std::filesystem::path& path, std::size_t limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Dataset d;
  for (std::size_t n = 0; limit == 0 || n < limit; ++n) {
    std::uint8_t head[4];
    in.read(reinterpret_cast<char*>(head), 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) bad_file(path, "truncated dimension header");
    const std::int32_t dim = static_cast<std::int32_t>(head[0] | head[1] << 8 | head[2] << 16 |
                                                       static_cast<std::uint32_t>(head[3]) << 24);
    if (dim <= 0) bad_file(path, "vector " + std::to_string(n) + " has dimension " + std::to_string(dim));
    if (d.dim == 0) d.dim = static_cast<std::size_t>(dim);
    if (static_cast<std::size_t>(dim) != d.dim) {
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": vector " + std::to_string(n) + " has " +
                                                      std::to_string(dim) + " dims, expected " +
                                                      std::to_string(d.dim));
    }
    std::vector<std::uint8_t> raw(d.dim * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) bad_file(path, "truncated vector " + std::to_string(n));
    for (std::size_t i = 0; i < d.dim; ++i) {
      const std::uint32_t bits = raw[4 * i] | raw[4 * i + 1] << 8 | raw[4 * i + 2] << 16 |
                                 static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
      float f;
      std::memcpy(&f, &bits, 4);
      d.data.push_back(f);
    }
  }
  return d;
}

void write_fvecs(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  for (std::size_t i = 0; i < d.size(); ++i) {
    put32(static_cast<std::uint32_t>(d.dim));
    for (float f : d.row(i)) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put32(bits);
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, std::size_t limit) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  while ((limit == 0 || d.size() < limit) && std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stof(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        bad_file(path, "line " + std::to_string(lineno) + ": '" + cell + "' is not a number");
      }
    }
    if (d.dim == 0) d.dim = row.size();
    if (row.size() != d.dim) {
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": line " + std::to_string(lineno) + " has " +
                                                      std::to_string(row.size()) + " values, expected " +
                                                      std::to_string(d.dim));
    }
    d.data.insert(d.data.end(), row.begin(), row.end());
  }
  return d;
}

Dataset read_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format, std::size_t limit) {
  if (!format) {
    const auto ext = path.extension().string();
    if (ext == ".fvecs") {
      format = DatasetFormat::kFvecs;
    } else if (ext == ".csv") {
      format = DatasetFormat::kCsv;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "cannot tell the format of " + path.string() + " (fvecs or csv)");
    }
  }
  return *format == DatasetFormat::kFvecs ? read_fvecs(path, limit) : read_csv(path, limit);
}

Dataset uniform_dataset(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Dataset d;
  d.dim = dim;
  d.data.resize(rows * dim);
  for (auto& x : d.data) x = u(rng);
  return d;
}

CollectionInfo vector_collection(const std::string& name, std::uint32_t dim, Metric metric, IndexParams index,
                                 std::uint32_t shards) {
  CollectionInfo p;
  p.name = name;
  p.schema.vector_fields = {{"v", dim}};
  p.metric = metric;
  p.index = index;
  p.shards = shards;
  return p;
}

std::size_t ingest(Cluster& cluster, const std::string& collection, const Dataset& d, std::int64_t first_pk,
                   std::uint64_t gap_ms) {
  const auto info = cluster.collection(collection);
  if (d.size() > 0 && d.dim != info.schema.vector_fields.at(0).dim) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset has " + std::to_string(d.dim) + " dims, collection '" +
                                                   collection + "' expects " +
                                                   std::to_string(info.schema.vector_fields.at(0).dim));
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    Entity e;
    e.pk = PrimaryKey{first_pk + static_cast<std::int64_t>(i)};
    const auto r = d.row(i);
    e.vectors = {std::vector<float>(r.begin(), r.end())};
    cluster.insert(collection, std::move(e));
    if (gap_ms > 0) {
      cluster.advance(gap_ms);
    } else if ((i + 1) % 1024 == 0) {
      cluster.step();
    }
  }
  cluster.step();
  return d.size();
}

std::vector<std::pair<std::int64_t, double>> ExactOracle::topk(std::span<const float> query, std::size_t k) const {
  if (query.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "oracle query has the wrong dimension");
  std::vector<std::pair<std::int64_t, double>> all;
  all.reserve(rows_.size());
  for (const auto& [pk, v] : rows_) {
    all.emplace_back(pk, static_cast<double>(score_raw(metric_, query.data(), v.data(), dim_)));
  }
  const auto better = [&](const auto& a, const auto& b) {
    const double ka = rank_key(metric_, a.second);
    const double kb = rank_key(metric_, b.second);
    if (ka != kb) return ka < kb;
    return a.first < b.first;
  };
  const auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
  all.resize(n);
  return all;
}

nlohmann::json RecallReport::to_json() const {
  return {{"queries", queries},
          {"errors", errors},
          {"mismatches", mismatches},
          {"inserts", inserts},
          {"mean_recall", mean_recall},
          {"recall", recall},
          {"latency_ms", {{"p50", p50_ms}, {"p95", p95_ms}, {"p99", p99_ms}, {"mean", mean_latency_ms}}},
          {"mean_wait_ms", mean_wait_ms},
          {"throughput_qps", throughput_qps},
          {"bytes_read", bytes_read},
          {"scale_events", scale_events},
          {"final_query_nodes", final_query_nodes},
          {"coverage_violations", coverage_violations},
          {"recovery_ms", recovery_ms},
          {"index_builds", {{"count", index_builds}, {"mean_ms", index_build_mean_ms}, {"span_ms", index_build_span_ms}}}};
}

std::string RecallReport::to_table() const {
  std::ostringstream out;
  char buf[128];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-22s %s\n", name, value.c_str());
    out << buf;
  };
  auto num = [](double v, int prec = 3) {
    char b[64];
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return std::string(b);
  };
  row("queries", std::to_string(queries));
  row("errors", std::to_string(errors));
  row("inserts", std::to_string(inserts));
  row("mean recall", num(mean_recall, 4));
  row("latency p50/p95/p99", num(p50_ms) + " / " + num(p95_ms) + " / " + num(p99_ms) + " ms");
  row("mean wait", num(mean_wait_ms) + " ms");
  row("throughput", num(throughput_qps, 1) + " q/s");
  if (bytes_read) row("bytes read", std::to_string(bytes_read));
  if (mismatches) row("mismatches", std::to_string(mismatches));
  if (scale_events) row("scale events", std::to_string(scale_events));
  row("query nodes at end", std::to_string(final_query_nodes));
  if (coverage_violations) row("coverage violations", std::to_string(coverage_violations));
  if (recovery_ms) row("recovery", std::to_string(recovery_ms) + " ms");
  if (index_builds) {
    row("index builds", std::to_string(index_builds) + " (mean " + num(index_build_mean_ms) + " ms, span " +
                            std::to_string(index_build_span_ms) + " ms)");
  }
  return out.str();
}

namespace {

double recall_of(const std::vector<std::int64_t>& found, const std::vector<std::int64_t>& truth) {
  if (truth.empty()) return 1.0;
  const std::set<std::int64_t> t(truth.begin(), truth.end());
  std::set<std::int64_t> seen;
  std::size_t hit = 0;
  for (auto id : found) {
    if (t.count(id) && seen.insert(id).second) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double percentile(std::vector<double> sorted_values, double p) {
  if (sorted_values.empty()) return 0;
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted_values.size())));
  return sorted_values[std::clamp<std::size_t>(rank, 1, sorted_values.size()) - 1];
}

void finish_recall(RecallReport& r) {
  double sum = 0;
  for (double x : r.recall) sum += x;
  r.mean_recall = r.recall.empty() ? 0 : sum / static_cast<double>(r.recall.size());
}

}  // namespace

RecallReport eval_recall(const std::vector<std::vector<std::int64_t>>& results,
                         const std::vector<std::vector<std::int64_t>>& oracle) {
  if (results.size() != oracle.size()) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(results.size()) + " results for " +
                                                 std::to_string(oracle.size()) + " oracle answers");
  }
  RecallReport r;
  r.queries = results.size();
  for (std::size_t i = 0; i < results.size(); ++i) r.recall.push_back(recall_of(results[i], oracle[i]));
  finish_recall(r);
  return r;
}

// --- WorkloadSpec ---

void WorkloadSpec::check() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, "workload: " + msg); };
  if (dataset.empty()) fail("dataset is empty");
  if (dataset == "uniform" && (rows == 0 || dim == 0)) fail("uniform data needs rows and dim");
  if (preload > rows) fail("preload exceeds rows");
  if (!(insert_rate >= 0) || !(query_rate >= 0)) fail("rates must be non-negative");
  if (k == 0) fail("k must be positive");
  if (shards == 0 || query_nodes == 0 || data_nodes == 0 || index_nodes == 0) fail("node counts must be positive");
  if (seal_rows == 0) fail("seal_rows must be positive");
  if (!(node_evals_per_ms > 0) || !(per_request_ms >= 0)) fail("bad service model");
  if (autoscale_window_ms == 0) fail("autoscale window must be positive");
  if (ssd && (preload == 0 || insert_rate > 0)) fail("ssd runs search static preloaded data only");
  if (kill_at_ms && query_nodes < 2) fail("killing a node needs at least two query nodes");
  index.check();
}

nlohmann::json WorkloadSpec::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  if (!queries.empty()) j["queries"] = queries;
  j["rows"] = rows;
  j["dim"] = dim;
  j["preload"] = preload;
  j["insert_rate"] = insert_rate;
  j["query_rate"] = query_rate;
  j["duration_ms"] = duration_ms;
  j["k"] = k;
  j["metric"] = metric_name(metric);
  if (tau_ms == kEventual) {
    j["tau_ms"] = "eventual";
  } else {
    j["tau_ms"] = tau_ms;
  }
  j["shards"] = shards;
  j["nodes"] = {{"query", query_nodes}, {"data", data_nodes}, {"index", index_nodes}};
  j["seal_rows"] = seal_rows;
  j["index"] = index.to_json();
  j["autoscale"] = {{"enabled", autoscale}, {"window_ms", autoscale_window_ms}};
  j["seed"] = seed;
  j["clock"] = wall_clock ? "wall" : "virtual";
  j["service"] = {{"evals_per_ms", node_evals_per_ms}, {"per_request_ms", per_request_ms}};
  if (kill_at_ms) j["kill_at_ms"] = *kill_at_ms;
  j["ssd"] = ssd;
  j["cluster"] = cluster;
  return j;
}

WorkloadSpec WorkloadSpec::from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, "workload: " + msg); };
  if (!j.is_object()) fail("spec must be a JSON object");
  static const std::set<std::string> known = {"dataset", "queries", "rows", "dim", "preload", "insert_rate",
                                              "query_rate", "duration_ms", "k", "metric", "tau_ms", "shards",
                                              "nodes", "seal_rows", "index", "autoscale", "seed", "clock",
                                              "service", "kill_at_ms", "ssd", "cluster"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail("unknown key '" + key + "'");
  }
  WorkloadSpec s;
  try {
    s.dataset = j.value("dataset", s.dataset);
    s.queries = j.value("queries", s.queries);
    s.rows = j.value("rows", s.rows);
    s.dim = j.value("dim", s.dim);
    s.preload = j.value("preload", s.preload);
    s.insert_rate = j.value("insert_rate", s.insert_rate);
    s.query_rate = j.value("query_rate", s.query_rate);
    s.duration_ms = j.value("duration_ms", s.duration_ms);
    s.k = j.value("k", s.k);
    if (j.contains("metric")) s.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("tau_ms")) {
      const auto& t = j.at("tau_ms");
      if (t.is_string() && (t == "eventual" || t == "inf")) {
        s.tau_ms = kEventual;
      } else if (t.is_number_integer() && t.get<std::int64_t>() < 0) {
        fail("tau must be non-negative");
      } else if (t.is_number_float() && t.get<double>() < 0) {
        fail("tau must be non-negative");
      } else if (t.is_number()) {
        s.tau_ms = static_cast<std::uint64_t>(t.get<double>());
      } else {
        fail("tau_ms must be a number or \"eventual\"");
      }
    }
    s.shards = j.value("shards", s.shards);
    if (j.contains("nodes")) {
      const auto& n = j.at("nodes");
      s.query_nodes = n.value("query", s.query_nodes);
      s.data_nodes = n.value("data", s.data_nodes);
      s.index_nodes = n.value("index", s.index_nodes);
    }
    s.seal_rows = j.value("seal_rows", s.seal_rows);
    if (j.contains("index")) s.index = IndexParams::from_json(j.at("index"));
    if (j.contains("autoscale")) {
      const auto& a = j.at("autoscale");
      s.autoscale = a.value("enabled", s.autoscale);
      s.autoscale_window_ms = a.value("window_ms", s.autoscale_window_ms);
    }
    s.seed = j.value("seed", s.seed);
    const auto clock = j.value("clock", std::string("virtual"));
    if (clock != "virtual" && clock != "wall") fail("clock must be virtual or wall");
    s.wall_clock = clock == "wall";
    if (j.contains("service")) {
      const auto& v = j.at("service");
      s.node_evals_per_ms = v.value("evals_per_ms", s.node_evals_per_ms);
      s.per_request_ms = v.value("per_request_ms", s.per_request_ms);
    }
    if (j.contains("kill_at_ms")) s.kill_at_ms = j.at("kill_at_ms").get<std::uint64_t>();
    s.ssd = j.value("ssd", s.ssd);
    if (j.contains("cluster")) s.cluster = j.at("cluster");
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  s.check();
  return s;
}

WorkloadSpec WorkloadSpec::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read workload file " + file.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, "workload file " + file.string() + ": " + e.what());
  }
}

// --- run_workload ---

namespace {

enum class EventKind : std::uint8_t { kKill = 0, kScale = 1, kInsert = 2, kQuery = 3 };

struct Event {
  double t = 0;  // ms after the start
  EventKind kind;
  std::size_t index = 0;
};

ClusterConfig config_for(const WorkloadSpec& spec) {
  ClusterConfig base;
  base.write.seal_rows = spec.seal_rows;
  base.query_nodes = spec.query_nodes;
  base.data_nodes = spec.data_nodes;
  base.autoscale = spec.autoscale;
  base.index = spec.index;
  auto j = base.to_json();
  j.merge_patch(spec.cluster);
  return ClusterConfig::from_json(j);
}

struct QuerySource {
  Dataset file;
  const Dataset* data = nullptr;
  bool uniform = false;
  float sigma = 0;

  std::vector<float> next(std::size_t i, std::mt19937_64& rng) const {
    if (file.size() > 0) {
      const auto r = file.row(i % file.size());
      return {r.begin(), r.end()};
    }
    if (uniform || data->size() == 0) {
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      std::vector<float> q(data->dim);
      for (auto& x : q) x = u(rng);
      return q;
    }
    // A data row, slightly moved.
    std::uniform_int_distribution<std::size_t> pick(0, data->size() - 1);
    const auto r = data->row(pick(rng));
    std::normal_distribution<float> noise(0.0f, sigma);
    std::vector<float> q(r.begin(), r.end());
    for (auto& x : q) x += noise(rng);
    return q;
  }
};

}  // namespace

WorkloadOutcome run_workload(const WorkloadSpec& spec, const std::filesystem::path& root) {
  spec.check();
  const Dataset data = spec.dataset == "uniform" ? uniform_dataset(spec.rows, spec.dim, spec.seed)
                                                 : read_dataset(spec.dataset, std::nullopt, spec.rows);
  if (data.size() == 0) throw Error(ErrorCode::kInvalidArgument, "workload: dataset " + spec.dataset + " is empty");
  if (spec.preload > data.size()) throw Error(ErrorCode::kInvalidArgument, "workload: preload exceeds the dataset");
  const auto dim = data.dim;

  QuerySource queries;
  queries.data = &data;
  queries.uniform = spec.dataset == "uniform";
  if (!spec.queries.empty()) {
    queries.file = read_dataset(spec.queries);
    if (queries.file.dim != dim) throw Error(ErrorCode::kDimensionMismatch, "workload: query file dimension differs");
  }
  if (!queries.uniform) {
    const auto [lo, hi] = std::minmax_element(data.data.begin(), data.data.end());
    queries.sigma = 0.01f * (*hi - *lo);
  }

  Cluster cluster(root, config_for(spec));
  const std::string name = "bench";
  cluster.create_collection(vector_collection(name, static_cast<std::uint32_t>(dim), spec.metric, spec.index, spec.shards));
  for (std::uint32_t i = 0; i < spec.index_nodes; ++i) cluster.index_coord().add_node(cluster.now_ms());

  WorkloadOutcome out;
  auto& report = out.report;
  ExactOracle oracle(spec.metric, dim);

  if (spec.preload > 0) {
    Dataset head;
    head.dim = dim;
    head.data.assign(data.data.begin(), data.data.begin() + static_cast<std::ptrdiff_t>(spec.preload * dim));
    ingest(cluster, name, head);
    for (std::size_t i = 0; i < spec.preload; ++i) oracle.put(static_cast<std::int64_t>(i), data.row(i));
    cluster.seal(name);
    cluster.settle(3'600'000);
  }

  std::optional<BucketIndex> bucket;
  if (spec.ssd) {
    BucketBuildOptions opts;
    opts.bucket_cap = cluster.config().bucket_cap;
    opts.seed = spec.seed;
    bucket = BucketIndex::build(cluster.store(), "bench/buckets", spec.metric,
                                std::span<const float>(data.data).first(spec.preload * dim), dim, opts);
  }

  // Event schedule: Poisson arrivals from one seeded stream.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Event> events;
  if (spec.insert_rate > 0) {
    std::exponential_distribution<double> gap(spec.insert_rate / 1000.0);
    double t = 0;
    for (std::size_t row = spec.preload; row < data.size(); ++row) {
      t += gap(rng);
      if (t >= static_cast<double>(spec.duration_ms)) break;
      events.push_back({t, EventKind::kInsert, row});
    }
  }
  if (spec.query_rate > 0) {
    std::exponential_distribution<double> gap(spec.query_rate / 1000.0);
    double t = 0;
    for (std::size_t q = 0;; ++q) {
      t += gap(rng);
      if (t >= static_cast<double>(spec.duration_ms)) break;
      events.push_back({t, EventKind::kQuery, q});
    }
  }
  if (spec.autoscale) {
    for (std::uint64_t t = spec.autoscale_window_ms; t < spec.duration_ms; t += spec.autoscale_window_ms) {
      events.push_back({static_cast<double>(t), EventKind::kScale, 0});
    }
  }
  if (spec.kill_at_ms) events.push_back({static_cast<double>(*spec.kill_at_ms), EventKind::kKill, 0});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.kind < b.kind;
  });

  std::mt19937_64 query_rng(spec.seed + 1);
  const bool exact = spec.index.kind == IndexKind::kFlat && spec.index.quantization == Quantization::kNone && !spec.ssd;
  const auto t0 = cluster.now_ms();
  const auto collection_id = cluster.collection(name).id;
  const auto timeout_ms = cluster.config().search_timeout_ms;

  std::map<NodeId, double> free_at;
  std::vector<double> latencies;
  double wait_sum = 0;
  double first_arrival = -1, last_completion = 0;
  double window_sum = 0;
  std::size_t window_n = 0;
  std::optional<std::uint64_t> killed_at;
  std::uint64_t last_bad = 0;
  double wall_service_ms = 0;
  const auto wall_start = std::chrono::steady_clock::now();

  auto emit = [&](nlohmann::json ev) {
    const auto cov = cluster.query_coord().coverage_violations().size();
    report.coverage_violations += cov;
    if (cov > 0 && killed_at) last_bad = cluster.now_ms() - t0;
    ev["cov"] = cov;
    out.trace.push_back(ev.dump());
  };

  // Queries waiting on the consistency guard. Clients are independent, so a
  // waiting query holds up neither later arrivals nor writes.
  struct Pending {
    std::size_t index;
    std::uint64_t arrival;  // cluster ms
    HlcTimestamp issue;
    std::vector<float> q;
  };
  std::deque<Pending> pending;

  auto guard_passes = [&](const Pending& p) {
    for (auto id : cluster.query_nodes()) {
      auto& node = cluster.query_node(id);
      if (!node.serves(collection_id)) continue;
      if (guard_consistency(spec.tau_ms, p.issue, node.serviceable_ts(collection_id)) == GuardDecision::kWait) {
        return false;
      }
    }
    return true;
  };

  auto fail_query = [&](const Pending& p, ErrorCode code) {
    ++report.errors;
    if (killed_at) last_bad = cluster.now_ms() - t0;
    emit({{"t", cluster.now_ms() - t0}, {"ev", "error"}, {"q", p.index}, {"code", error_code_name(code)}});
  };

  auto run_query = [&](const Pending& p) {
    const double arrival = static_cast<double>(p.arrival);
    const double start = static_cast<double>(cluster.now_ms());
    if (first_arrival < 0) first_arrival = arrival;
    ++report.queries;
    // Answers may include writes newer than the issue time, so the truth is
    // taken when the query runs.
    const auto truth = oracle.topk(p.q, spec.k);
    std::vector<std::int64_t> found;
    std::vector<double> scores;
    double latency = 0, wait = 0;
    if (bucket) {
      const auto before = cluster.store().bytes_read();
      const auto w0 = std::chrono::steady_clock::now();
      const auto res = bucket->search_two_stage(p.q, spec.index.search.nprobe, spec.k);
      const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - w0).count();
      report.bytes_read += cluster.store().bytes_read() - before;
      for (const auto& h : res.hits) {
        found.push_back(static_cast<std::int64_t>(h.row));
        scores.push_back(h.score);
      }
      double evals = static_cast<double>(res.buckets_read) * static_cast<double>(BucketIndex::max_members(dim, bucket->bucket_cap()));
      auto& free = free_at[0];
      const double service = spec.wall_clock ? wall : spec.per_request_ms + evals / spec.node_evals_per_ms;
      free = std::max(free, arrival) + service;
      latency = free - arrival;
    } else {
      SearchRequest req;
      req.collection = name;
      req.queries = {p.q};
      req.k = spec.k;
      req.tau_ms = spec.tau_ms;
      req.issue_ts = p.issue;
      Proxy::NodeCosts costs;
      SearchResult res;
      const auto w0 = std::chrono::steady_clock::now();
      try {
        res = cluster.search(std::move(req), &costs);
      } catch (const Error& e) {
        fail_query(p, e.code());
        return;
      }
      const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - w0).count();
      wait = start - arrival + static_cast<double>(res.waited_ms);
      for (const auto& h : res.hits.at(0)) {
        found.push_back(std::get<std::int64_t>(h.pk));
        scores.push_back(h.score);
      }
      double completion = arrival + wait;
      if (spec.wall_clock) {
        completion += wall;
        wall_service_ms += wall;
      } else {
        for (const auto& [node, st] : costs) {
          auto& free = free_at[node];
          free = std::max(free, arrival + wait) +
                 spec.per_request_ms + static_cast<double>(st.distance_evals) / spec.node_evals_per_ms;
          completion = std::max(completion, free);
        }
      }
      latency = completion - arrival;
    }
    last_completion = std::max(last_completion, arrival + latency);
    std::vector<std::int64_t> truth_pks;
    bool same = truth.size() == found.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
      truth_pks.push_back(truth[i].first);
      if (same && (truth[i].first != found[i] || truth[i].second != scores[i])) same = false;
    }
    if (exact && !same) ++report.mismatches;
    const double recall = recall_of(found, truth_pks);
    report.recall.push_back(recall);
    latencies.push_back(latency);
    wait_sum += wait;
    window_sum += latency;
    ++window_n;
    nlohmann::json hits = found;
    emit({{"t", cluster.now_ms() - t0}, {"ev", "search"}, {"q", p.index}, {"wait", wait}, {"lat", latency},
          {"recall", recall}, {"hits", hits}});
  };

  // Runs every pending query whose guard passes, in arrival order, and fails
  // the ones that outlived the search timeout.
  auto serve_pending = [&] {
    for (auto it = pending.begin(); it != pending.end();) {
      if (bucket || guard_passes(*it)) {
        run_query(*it);
      } else if (cluster.now_ms() - it->arrival >= timeout_ms) {
        ++report.queries;
        fail_query(*it, ErrorCode::kTimeout);
      } else {
        ++it;
        continue;
      }
      it = pending.erase(it);
    }
  };

  // Moves the clock to `target`, stopping at every tick round and timeout
  // while queries wait.
  auto advance_serving = [&](std::uint64_t target) {
    serve_pending();
    while (!pending.empty() && cluster.now_ms() < target) {
      std::uint64_t next = std::min(target, std::max(cluster.next_tick_ms(), cluster.now_ms() + 1));
      for (const auto& p : pending) next = std::min(next, std::max(p.arrival + timeout_ms, cluster.now_ms() + 1));
      cluster.advance_to(next);
      serve_pending();
    }
    if (target > cluster.now_ms()) cluster.advance_to(target);
  };

  for (const auto& ev : events) {
    auto target = t0 + static_cast<std::uint64_t>(ev.t);
    if (spec.wall_clock) {
      const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start);
      target = std::max(target, t0 + static_cast<std::uint64_t>(elapsed.count()));
    }
    advance_serving(target);
    const auto rel = cluster.now_ms() - t0;

    switch (ev.kind) {
      case EventKind::kInsert: {
        Entity e;
        e.pk = PrimaryKey{static_cast<std::int64_t>(ev.index)};
        const auto r = data.row(ev.index);
        e.vectors = {std::vector<float>(r.begin(), r.end())};
        cluster.insert(name, std::move(e));
        oracle.put(static_cast<std::int64_t>(ev.index), r);
        ++report.inserts;
        emit({{"t", rel}, {"ev", "insert"}, {"pk", ev.index}});
        break;
      }
      case EventKind::kQuery: {
        pending.push_back({ev.index, cluster.now_ms(), cluster.tso().allocate(), queries.next(ev.index, query_rng)});
        serve_pending();
        break;
      }
      case EventKind::kScale: {
        const double mean = window_n ? window_sum / static_cast<double>(window_n) : 0;
        const auto before = cluster.query_nodes().size();
        const auto target_nodes = cluster.autoscale(mean);
        if (target_nodes != before) ++report.scale_events;
        window_sum = 0;
        window_n = 0;
        emit({{"t", rel}, {"ev", "scale"}, {"mean_ms", mean}, {"nodes", target_nodes}});
        break;
      }
      case EventKind::kKill: {
        const auto nodes = cluster.query_nodes();
        const auto victim = nodes.at(nodes.size() / 2);
        cluster.kill_query_node(victim);
        killed_at = rel;
        emit({{"t", rel}, {"ev", "kill"}, {"node", victim}});
        break;
      }
    }
  }
  if (!pending.empty()) advance_serving(pending.back().arrival + timeout_ms);

  std::sort(latencies.begin(), latencies.end());
  report.p50_ms = percentile(latencies, 0.50);
  report.p95_ms = percentile(latencies, 0.95);
  report.p99_ms = percentile(latencies, 0.99);
  if (!latencies.empty()) {
    double sum = 0;
    for (double l : latencies) sum += l;
    report.mean_latency_ms = sum / static_cast<double>(latencies.size());
    report.mean_wait_ms = wait_sum / static_cast<double>(latencies.size());
  }
  const double span = spec.wall_clock ? wall_service_ms : last_completion - first_arrival;
  if (span > 0) report.throughput_qps = static_cast<double>(latencies.size()) * 1000.0 / span;
  finish_recall(report);
  if (killed_at) report.recovery_ms = last_bad > *killed_at ? last_bad - *killed_at : 0;
  report.final_query_nodes = static_cast<std::uint32_t>(cluster.query_nodes().size());

  std::uint64_t first_submit = UINT64_MAX, last_finish = 0;
  double build_sum = 0;
  for (const auto& t : cluster.index_coord().tasks()) {
    if (t.state != TaskState::kDone) continue;
    ++report.index_builds;
    build_sum += static_cast<double>(t.finished_ms - t.started_ms);
    first_submit = std::min(first_submit, t.submitted_ms);
    last_finish = std::max(last_finish, t.finished_ms);
  }
  if (report.index_builds) {
    report.index_build_mean_ms = build_sum / static_cast<double>(report.index_builds);
    report.index_build_span_ms = last_finish - first_submit;
  }
  return out;
}

}  // namespace logvec::bench
