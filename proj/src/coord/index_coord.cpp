#include "logvec/coord/index_coord.hpp"

#include <cmath>

#include "logvec/core/error.hpp"
#include "logvec/storage/binlog.hpp"

namespace logvec {

namespace {

std::string task_key(CollectionId c, SegmentId s, const std::string& field) {
  return "index-task/" + std::to_string(c) + "/" + std::to_string(s) + "/" + field;
}

}  // namespace

const char* task_state_name(TaskState s) {
  switch (s) {
    case TaskState::kPending: return "pending";
    case TaskState::kBuilding: return "building";
    case TaskState::kDone: return "done";
    case TaskState::kFailed: return "failed";
  }
  return "?";
}

nlohmann::json IndexTask::to_json() const {
  return {{"collection", collection}, {"segment", segment},         {"field", field},
          {"state", static_cast<int>(state)}, {"attempts", attempts}, {"node", node},
          {"key", key},               {"rows", rows},               {"submitted_ms", submitted_ms},
          {"started_ms", started_ms}, {"finished_ms", finished_ms}, {"descriptor", descriptor}};
}

IndexTask IndexTask::from_json(const nlohmann::json& j) {
  IndexTask t;
  t.collection = j.at("collection");
  t.segment = j.at("segment");
  t.field = j.at("field");
  t.state = static_cast<TaskState>(j.at("state").get<int>());
  t.attempts = j.at("attempts");
  t.node = j.at("node");
  t.key = j.at("key");
  t.rows = j.at("rows");
  t.submitted_ms = j.at("submitted_ms");
  t.started_ms = j.at("started_ms");
  t.finished_ms = j.at("finished_ms");
  t.descriptor = j.at("descriptor");
  return t;
}

IndexNode::Outcome IndexNode::build(const IndexTask& task, const CollectionInfo& info) {
  const auto desc = SegmentDescriptor::from_json(nlohmann::json::parse(task.descriptor));
  const auto field = info.schema.find_vector_field(task.field);
  if (!field) throw Error(ErrorCode::kInvalidArgument, "no vector field '" + task.field + "'");
  const auto data = read_vector_column(store_, info.schema, desc, *field);
  const std::size_t dim = info.schema.vector_fields[*field].dim;
  const std::size_t rows = dim ? data.size() / dim : 0;
  auto params = info.index;
  if (params.kind == IndexKind::kIvfFlat) {
    // A segment smaller than nlist gets one list per row.
    params.nlist = static_cast<std::uint32_t>(std::max<std::size_t>(1, std::min<std::size_t>(params.nlist, rows)));
    params.search.nprobe = std::min(params.search.nprobe, params.nlist);
  }
  BuildStats stats;
  auto index = build_index(params, info.metric, data, dim, &stats);
  Outcome out;
  out.key = segment_key(task.collection, task.segment, "index/" + task.field);
  store_.put(out.key, serialize_index(*index, params));
  out.distance_evals = stats.distance_evals;
  return out;
}

IndexCoord::IndexCoord(LogBroker& broker, Tso& tso, MetaStore& meta, ObjectStore& store, const RootCoord& root,
                       IndexCoordOptions options)
    : broker_(broker),
      tso_(tso),
      meta_(meta),
      store_(store),
      root_(root),
      options_(options),
      inbox_(broker, meta, kCoordChannel, "index-coord") {
  // Tasks interrupted by a restart start over.
  for (const auto& [k, v] : meta_.list("index-task/")) {
    auto t = IndexTask::from_json(nlohmann::json::parse(v));
    if (t.state == TaskState::kBuilding) t.state = TaskState::kPending;
    tasks_[k] = std::move(t);
  }
}

void IndexCoord::save(const IndexTask& t) {
  meta_.put(task_key(t.collection, t.segment, t.field), t.to_json().dump());
}

void IndexCoord::announce(const IndexTask& t) {
  CoordMessage m;
  m.type = CoordType::kIndexBuilt;
  m.collection = t.collection;
  m.segment = t.segment;
  m.node = t.node;
  m.flag = t.state == TaskState::kDone ? 0 : 1;
  m.detail = nlohmann::json{{"field", t.field}, {"key", t.key}}.dump();
  publish_stamped(broker_, tso_, kCoordChannel, LogEntry::coord({}, m));
}

std::size_t IndexCoord::pump(std::uint64_t now_ms) {
  return inbox_.drain([&](const LogEntry& e) { apply(e, now_ms); });
}

void IndexCoord::apply(const LogEntry& e, std::uint64_t now_ms) {
  if (e.kind != EntryKind::kCoord) return;
  const auto& m = e.as_coord();
  if (m.type == CoordType::kCollectionDropped) {
    std::erase_if(tasks_, [&](const auto& kv) {
      if (kv.second.collection != m.collection) return false;
      meta_.remove(kv.first);
      return true;
    });
    for (auto& [_, n] : nodes_) {
      std::erase_if(n.queue, [&](const std::string& k) { return !tasks_.count(k); });
      if (n.running && !tasks_.count(*n.running)) n.running.reset();
    }
    return;
  }
  if (m.type != CoordType::kSegmentSealed && m.type != CoordType::kSegmentsMerged) return;
  auto info = root_.get(m.collection);
  if (!info || info->index.kind == IndexKind::kFlat) return;
  const auto desc = SegmentDescriptor::from_json(nlohmann::json::parse(m.detail));
  for (const auto& f : info->schema.vector_fields) {
    const auto key = task_key(m.collection, m.segment, f.name);
    if (tasks_.count(key)) continue;  // at most one task per segment and field
    IndexTask t;
    t.collection = m.collection;
    t.segment = m.segment;
    t.field = f.name;
    t.rows = desc.row_count;
    t.submitted_ms = now_ms;
    t.descriptor = m.detail;
    tasks_[key] = t;
    save(t);
  }
}

NodeId IndexCoord::add_node(std::uint64_t now_ms) {
  const auto id = static_cast<NodeId>(meta_.next_id("node/index"));
  Node n;
  n.worker = std::make_unique<IndexNode>(id, store_);
  n.idle_since_ms = now_ms;
  nodes_.emplace(id, std::move(n));
  ++provisioned_;
  return id;
}

std::vector<NodeId> IndexCoord::nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, _] : nodes_) out.push_back(id);
  return out;
}

void IndexCoord::schedule(const std::string& key, std::uint64_t now_ms) {
  if (nodes_.empty()) add_node(now_ms);
  NodeId best = 0;
  std::size_t best_load = SIZE_MAX;
  for (const auto& [id, n] : nodes_) {
    const std::size_t load = n.queue.size() + (n.running ? 1 : 0);
    if (load < best_load) {
      best = id;
      best_load = load;
    }
  }
  auto& t = tasks_.at(key);
  t.node = best;
  nodes_.at(best).queue.push_back(key);
}

std::size_t IndexCoord::step(std::uint64_t now_ms) {
  std::size_t finished = 0;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    // Queue unassigned pending tasks.
    for (auto& [key, t] : tasks_) {
      if (t.state != TaskState::kPending) continue;
      bool queued = false;
      for (const auto& [_, n] : nodes_) {
        queued = queued || (n.running == key) || std::find(n.queue.begin(), n.queue.end(), key) != n.queue.end();
      }
      if (!queued) schedule(key, now_ms);
    }
    for (auto& [id, n] : nodes_) {
      if (n.running) {
        auto& t = tasks_.at(*n.running);
        if (t.finished_ms > now_ms) continue;
        if (t.state == TaskState::kBuilding) {
          t.state = TaskState::kDone;
          announce(t);
        } else if (t.attempts >= options_.max_attempts) {
          t.state = TaskState::kFailed;
          announce(t);
        } else {
          t.state = TaskState::kPending;
        }
        save(t);
        ++finished;
        n.idle_since_ms = t.finished_ms;
        n.running.reset();
        progressed = true;
      }
      if (!n.running && !n.queue.empty()) {
        const auto key = n.queue.front();
        n.queue.pop_front();
        auto& t = tasks_.at(key);
        auto info = root_.get(t.collection);
        if (!info) {
          t.state = TaskState::kFailed;
          save(t);
          continue;
        }
        const std::uint64_t start = std::max(t.submitted_ms, n.idle_since_ms);
        t.started_ms = start;
        t.node = id;
        ++t.attempts;
        std::uint64_t evals = 0;
        bool ok = true;
        if (failures_ > 0) {
          --failures_;
          ok = false;
          evals = t.rows;
        } else {
          try {
            auto out = n.worker->build(t, *info);
            t.key = out.key;
            evals = out.distance_evals;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kIo && e.code() != ErrorCode::kNotFound) throw;
            ok = false;
          }
        }
        const auto duration = std::max<std::uint64_t>(
            1, static_cast<std::uint64_t>(std::ceil(static_cast<double>(evals) / options_.evals_per_ms)));
        t.finished_ms = start + duration;
        // A failed attempt is noticed when it would have finished.
        t.state = ok ? TaskState::kBuilding : TaskState::kPending;
        if (!ok) t.key.clear();
        n.running = key;
        save(t);
        progressed = true;
      }
    }
  }
  // Shut down nodes that have been idle too long.
  std::erase_if(nodes_, [&](const auto& kv) {
    const auto& n = kv.second;
    return !n.running && n.queue.empty() && now_ms >= n.idle_since_ms + options_.idle_shutdown_ms;
  });
  return finished;
}

std::optional<std::uint64_t> IndexCoord::next_completion_ms() const {
  std::optional<std::uint64_t> out;
  for (const auto& [_, n] : nodes_) {
    if (!n.running) continue;
    const auto f = tasks_.at(*n.running).finished_ms;
    if (!out || f < *out) out = f;
  }
  return out;
}

bool IndexCoord::idle() const {
  for (const auto& [_, t] : tasks_) {
    if (t.state == TaskState::kPending || t.state == TaskState::kBuilding) return false;
  }
  return true;
}

std::vector<IndexTask> IndexCoord::tasks() const {
  std::vector<IndexTask> out;
  for (const auto& [_, t] : tasks_) out.push_back(t);
  return out;
}

std::optional<IndexTask> IndexCoord::task(CollectionId collection, SegmentId segment, const std::string& field) const {
  auto it = tasks_.find(task_key(collection, segment, field));
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

}  // namespace logvec
