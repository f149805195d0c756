// Operator CLI: one process opens the deployment stored under the root,
// runs one command on it and exits. The root comes from --root or LOGVEC_ROOT.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "logvec/bench/workload.hpp"
#include "logvec/cluster/cluster.hpp"
#include "logvec/core/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace logvec;

namespace {

struct Globals {
  std::string root;
  std::string config;
  bool compact = false;
};

void print(const Globals& g, const json& j) { std::cout << (g.compact ? j.dump() : j.dump(2)) << "\n"; }

fs::path root_of(const Globals& g) {
  if (!g.root.empty()) return g.root;
  if (const char* env = std::getenv("LOGVEC_ROOT"); env && *env) return env;
  throw Error(ErrorCode::kConfig, "no store root: pass --root or set LOGVEC_ROOT");
}

// The config in force is saved next to the data so later commands reopen the
// deployment the same way. --config replaces it.
ClusterConfig config_of(const Globals& g, const fs::path& root) {
  const auto saved = root / "config.json";
  if (!g.config.empty()) {
    auto c = ClusterConfig::load(g.config);
    fs::create_directories(root);
    std::ofstream(saved) << c.to_json().dump(2) << "\n";
    return c;
  }
  if (fs::exists(saved)) return ClusterConfig::load(saved);
  return {};
}

void save_config(const fs::path& root, const ClusterConfig& c) {
  fs::create_directories(root);
  std::ofstream(root / "config.json") << c.to_json().dump(2) << "\n";
}

std::unique_ptr<Cluster> open(const Globals& g) {
  const auto root = root_of(g);
  return std::make_unique<Cluster>(root, config_of(g, root));
}

std::vector<float> parse_vector(const std::string& text) {
  std::vector<float> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stof(cell));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad vector component '" + cell + "'");
    }
  }
  return v;
}

std::uint64_t parse_ms(const std::string& text, const char* what) {
  if (text == "eventual" || text == "inf" || text == "never") return UINT64_MAX;
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be a non-negative integer, got '" + text + "'");
  }
}

HlcTimestamp parse_at(const std::string& raw, const std::string& ms) {
  if (!ms.empty()) {
    // The last timestamp of that millisecond.
    return HlcTimestamp::from_raw(parse_ms(ms, "--at-ms") << 18 | HlcTimestamp::kLogicalMask);
  }
  return HlcTimestamp::from_raw(parse_ms(raw, "--at"));
}

std::optional<bench::DatasetFormat> parse_format(const std::string& f) {
  if (f.empty()) return std::nullopt;
  if (f == "fvecs") return bench::DatasetFormat::kFvecs;
  if (f == "csv") return bench::DatasetFormat::kCsv;
  throw Error(ErrorCode::kInvalidArgument, "format must be fvecs or csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logvec: log-structured vector database"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--root", g.root, "store root (default: $LOGVEC_ROOT)");
  app.add_option("--config", g.config, "cluster config JSON; saved under the root for later commands");
  app.add_flag("--compact", g.compact, "one-line JSON output");

  // collection create|drop|list
  auto* coll = app.add_subcommand("collection", "create, drop or list collections");
  coll->require_subcommand(1);
  struct {
    std::string name, metric = "l2", index = "flat";
    std::uint32_t dim = 0, shards = 2, nlist = 64, M = 16, efc = 200, nprobe = 8, ef = 64;
    bool sq8 = false;
  } cc;
  auto* create = coll->add_subcommand("create", "create a collection with one vector field");
  create->add_option("name", cc.name)->required();
  create->add_option("--dim", cc.dim, "vector dimension")->required();
  create->add_option("--metric", cc.metric, "l2, ip or cosine");
  create->add_option("--shards", cc.shards);
  create->add_option("--index", cc.index, "flat, ivf_flat or hnsw");
  create->add_option("--nlist", cc.nlist);
  create->add_option("--M", cc.M);
  create->add_option("--ef-construction", cc.efc);
  create->add_option("--nprobe", cc.nprobe);
  create->add_option("--ef", cc.ef);
  create->add_flag("--sq8", cc.sq8, "SQ8-quantized IVF lists");
  std::string drop_name;
  auto* drop = coll->add_subcommand("drop", "drop a collection and its data");
  drop->add_option("name", drop_name)->required();
  auto* list = coll->add_subcommand("list", "list collections");

  // ingest
  struct {
    std::string name, file, format;
    std::int64_t first_pk = 0;
    std::uint64_t gap_ms = 0;
  } in;
  auto* ingest = app.add_subcommand("ingest", "insert a fvecs or csv file through the write path");
  ingest->add_option("collection", in.name)->required();
  ingest->add_option("file", in.file)->required();
  ingest->add_option("--format", in.format, "fvecs or csv (default: by extension)");
  ingest->add_option("--first-pk", in.first_pk, "pk of the first row; later rows count up");
  ingest->add_option("--gap-ms", in.gap_ms, "clock advance between rows");

  // search
  struct {
    std::string name, query, query_file, tau = "eventual", filter, at, at_ms, field;
    std::size_t k = 10;
  } sr;
  auto* search = app.add_subcommand("search", "top-k search");
  search->add_option("collection", sr.name)->required();
  search->add_option("--query", sr.query, "comma-separated vector");
  search->add_option("--query-file", sr.query_file, "fvecs or csv file of query vectors");
  search->add_option("-k", sr.k);
  search->add_option("--tau", sr.tau, "staleness tolerance in ms, or eventual");
  search->add_option("--filter", sr.filter, "attribute filter expression");
  search->add_option("--field", sr.field, "vector field");
  search->add_option("--at", sr.at, "search the state as of this HLC timestamp");
  search->add_option("--at-ms", sr.at_ms, "search the state as of this physical time");

  // workload run
  struct {
    std::string spec, trace, report, dir;
    bool json = false;
  } wl;
  auto* workload = app.add_subcommand("workload", "simulated workloads");
  workload->require_subcommand(1);
  auto* run = workload->add_subcommand("run", "run a workload spec on a fresh cluster");
  run->add_option("spec", wl.spec, "workload JSON")->required();
  run->add_option("--trace", wl.trace, "write the event trace here (JSON lines)");
  run->add_option("--report", wl.report, "write the JSON report here");
  run->add_option("--dir", wl.dir, "cluster directory (default: <root>/workload, replaced)");
  run->add_flag("--json", wl.json, "print the JSON report instead of the table");

  // node add|remove|list
  auto* node = app.add_subcommand("node", "query node membership");
  node->require_subcommand(1);
  std::string node_kind;
  auto* node_add = node->add_subcommand("add", "add a query node");
  node_add->add_option("kind", node_kind, "query")->check(CLI::IsMember({"query"}));
  NodeId remove_id = 0;
  auto* node_remove = node->add_subcommand("remove", "drain a query node and shut it down");
  node_remove->add_option("id", remove_id, "node id (default: the newest)");
  auto* node_list = node->add_subcommand("list", "running query nodes and their load");

  std::string seal_name, cp_name, stats_name;
  auto* seal = app.add_subcommand("seal", "seal every open segment of a collection");
  seal->add_option("collection", seal_name)->required();
  auto* checkpoint = app.add_subcommand("checkpoint", "write a checkpoint now");
  checkpoint->add_option("collection", cp_name)->required();

  struct {
    std::string name, at, at_ms, dump;
  } rs;
  auto* restore = app.add_subcommand("restore", "reconstruct a collection as of a past timestamp");
  restore->add_option("collection", rs.name)->required();
  auto* at_opt = restore->add_option("--at", rs.at, "HLC timestamp");
  restore->add_option("--at-ms", rs.at_ms, "physical time in ms")->excludes(at_opt);
  restore->add_option("--dump", rs.dump, "write the restored vectors as fvecs");

  std::string gc_name, gc_exp;
  auto* gc = app.add_subcommand("gc", "drop history older than the expiration window");
  gc->add_option("collection", gc_name)->required();
  gc->add_option("--expiration", gc_exp, "window in ms, or never")->required();

  auto* stats = app.add_subcommand("stats", "segment and row counts of a collection");
  stats->add_option("collection", stats_name)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (create->parsed()) {
      auto cluster = open(g);
      IndexParams p;
      p.kind = parse_index_kind(cc.index);
      p.quantization = cc.sq8 ? Quantization::kSq8 : Quantization::kNone;
      p.nlist = cc.nlist;
      p.M = cc.M;
      p.ef_construction = cc.efc;
      p.search.nprobe = cc.nprobe;
      p.search.ef_search = cc.ef;
      auto info = cluster->create_collection(bench::vector_collection(cc.name, cc.dim, parse_metric(cc.metric), p, cc.shards));
      print(g, info.to_json());
    } else if (drop->parsed()) {
      auto cluster = open(g);
      cluster->drop_collection(drop_name);
      print(g, {{"dropped", drop_name}});
    } else if (list->parsed()) {
      auto cluster = open(g);
      auto arr = json::array();
      for (const auto& c : cluster->collections()) arr.push_back(c.to_json());
      print(g, arr);
    } else if (ingest->parsed()) {
      auto cluster = open(g);
      const auto data = bench::read_dataset(in.file, parse_format(in.format));
      const auto n = bench::ingest(*cluster, in.name, data, in.first_pk, in.gap_ms);
      // One more tick so the rows are durable behind a watermark.
      cluster->advance(cluster->config().tick_interval_ms);
      print(g, {{"collection", in.name}, {"rows", n}, {"dim", data.dim}});
    } else if (search->parsed()) {
      auto cluster = open(g);
      SearchRequest req;
      req.collection = sr.name;
      req.k = sr.k;
      req.tau_ms = parse_ms(sr.tau, "--tau");
      req.vector_field = sr.field;
      if (!sr.filter.empty()) req.filter = sr.filter;
      if (!sr.at.empty() || !sr.at_ms.empty()) req.travel_ts = parse_at(sr.at, sr.at_ms);
      if (!sr.query.empty()) req.queries.push_back(parse_vector(sr.query));
      if (!sr.query_file.empty()) {
        const auto qs = bench::read_dataset(sr.query_file);
        for (std::size_t i = 0; i < qs.size(); ++i) req.queries.emplace_back(qs.row(i).begin(), qs.row(i).end());
      }
      if (req.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "give --query or --query-file");
      // A reopened deployment starts with empty query nodes.
      if (!req.travel_ts) cluster->settle();
      print(g, result_to_json(cluster->search(std::move(req))));
    } else if (run->parsed()) {
      const auto spec = bench::WorkloadSpec::load(wl.spec);
      const fs::path dir = wl.dir.empty() ? root_of(g) / "workload" : fs::path(wl.dir);
      fs::remove_all(dir);
      const auto out = bench::run_workload(spec, dir);
      if (!wl.trace.empty()) {
        std::ofstream t(wl.trace);
        for (const auto& line : out.trace) t << line << "\n";
      }
      if (!wl.report.empty()) std::ofstream(wl.report) << out.report.to_json().dump(1) << "\n";
      if (wl.json) {
        print(g, out.report.to_json());
      } else {
        std::cout << out.report.to_table();
      }
    } else if (node_add->parsed()) {
      auto cluster = open(g);
      const auto id = cluster->add_query_node();
      cluster->settle();
      auto config = cluster->config();
      config.query_nodes = static_cast<std::uint32_t>(cluster->query_nodes().size());
      save_config(cluster->root(), config);
      print(g, {{"added", id}, {"query_nodes", config.query_nodes}});
    } else if (node_remove->parsed()) {
      auto cluster = open(g);
      cluster->settle();
      if (remove_id == 0 && !cluster->query_nodes().empty()) remove_id = cluster->query_nodes().back();
      cluster->remove_query_node(remove_id);
      cluster->settle();
      auto config = cluster->config();
      config.query_nodes = static_cast<std::uint32_t>(cluster->query_nodes().size());
      save_config(cluster->root(), config);
      print(g, {{"removed", remove_id}, {"query_nodes", config.query_nodes}});
    } else if (node_list->parsed()) {
      auto cluster = open(g);
      cluster->settle();
      auto arr = json::array();
      for (auto id : cluster->query_nodes()) {
        arr.push_back({{"id", id}, {"hosted_rows", cluster->query_node(id).hosted_rows()}});
      }
      print(g, arr);
    } else if (seal->parsed()) {
      auto cluster = open(g);
      print(g, {{"sealed", cluster->seal(seal_name)}});
    } else if (checkpoint->parsed()) {
      auto cluster = open(g);
      print(g, {{"checkpoint", cluster->checkpoint(cp_name)}});
    } else if (restore->parsed()) {
      if (rs.at.empty() && rs.at_ms.empty()) throw Error(ErrorCode::kInvalidArgument, "give --at or --at-ms");
      auto cluster = open(g);
      const auto snap = cluster->restore(rs.name, parse_at(rs.at, rs.at_ms));
      if (!rs.dump.empty()) {
        bench::Dataset d;
        d.dim = snap.info().schema.vector_fields.at(0).dim;
        d.data = snap.rows().vectors.at(0);
        bench::write_fvecs(rs.dump, d);
      }
      print(g, {{"snapshot", snap.checkpoint()}, {"ts", snap.ts().raw()}, {"rows", snap.size()}});
    } else if (gc->parsed()) {
      auto cluster = open(g);
      const auto report = cluster->gc(gc_name, parse_ms(gc_exp, "--expiration"));
      json j = {{"deleted", report.deleted}, {"truncated", report.truncated}};
      j["horizon"] = report.horizon ? json(report.horizon->raw()) : json(nullptr);
      print(g, j);
    } else if (stats->parsed()) {
      auto cluster = open(g);
      print(g, cluster->stats(stats_name).to_json());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
