#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "logvec/coord/inbox.hpp"
#include "logvec/coord/root_coord.hpp"
#include "logvec/storage/object_store.hpp"

namespace logvec {

enum class TaskState : std::uint8_t { kPending = 0, kBuilding = 1, kDone = 2, kFailed = 3 };
const char* task_state_name(TaskState s);

struct IndexTask {
  CollectionId collection = 0;
  SegmentId segment = 0;
  std::string field;
  TaskState state = TaskState::kPending;
  int attempts = 0;
  NodeId node = 0;
  std::string key;  // output object once done
  std::uint64_t rows = 0;
  std::uint64_t submitted_ms = 0;
  std::uint64_t started_ms = 0;
  std::uint64_t finished_ms = 0;
  std::string descriptor;  // segment descriptor JSON the build reads from

  nlohmann::json to_json() const;
  static IndexTask from_json(const nlohmann::json& j);
};

struct IndexCoordOptions {
  int max_attempts = 3;
  // Index nodes without work for this long are shut down.
  std::uint64_t idle_shutdown_ms = 60'000;
  // Modeled build speed: distance evaluations per millisecond.
  double evals_per_ms = 20'000;
};

// Builds one index and writes it to the object store.
class IndexNode {
 public:
  IndexNode(NodeId id, ObjectStore& store) : id_(id), store_(store) {}

  struct Outcome {
    std::string key;
    std::uint64_t distance_evals = 0;
  };
  Outcome build(const IndexTask& task, const CollectionInfo& info);

  NodeId id() const { return id_; }

 private:
  NodeId id_;
  ObjectStore& store_;
};

// Turns sealed segments into index tasks, queues each on the index node with
// the fewest queued tasks, and announces finished indexes on the coord
// channel. Build time is modeled from the work a build does, so a run on a
// virtual clock stays reproducible.
class IndexCoord {
 public:
  IndexCoord(LogBroker& broker, Tso& tso, MetaStore& meta, ObjectStore& store, const RootCoord& root,
             IndexCoordOptions options = {});

  std::size_t pump(std::uint64_t now_ms);
  // Completes builds whose modeled time has passed, starts queued ones and
  // shuts down idle nodes. Returns the number of tasks that finished.
  std::size_t step(std::uint64_t now_ms);
  // Earliest pending completion, if a build is running.
  std::optional<std::uint64_t> next_completion_ms() const;
  bool idle() const;

  NodeId add_node(std::uint64_t now_ms);
  std::vector<NodeId> nodes() const;
  std::uint64_t provisioned() const { return provisioned_; }

  std::vector<IndexTask> tasks() const;
  std::optional<IndexTask> task(CollectionId collection, SegmentId segment, const std::string& field) const;

  // The next n builds fail as if the node crashed mid-build.
  void inject_build_failures(int n) { failures_ += n; }

 private:
  struct Node {
    std::unique_ptr<IndexNode> worker;
    std::deque<std::string> queue;  // task keys
    std::optional<std::string> running;
    std::uint64_t idle_since_ms = 0;
  };
  void apply(const LogEntry& e, std::uint64_t now_ms);
  void schedule(const std::string& key, std::uint64_t now_ms);
  void save(const IndexTask& t);
  void announce(const IndexTask& t);

  LogBroker& broker_;
  Tso& tso_;
  MetaStore& meta_;
  ObjectStore& store_;
  const RootCoord& root_;
  IndexCoordOptions options_;
  Inbox inbox_;
  std::map<std::string, IndexTask> tasks_;
  std::map<NodeId, Node> nodes_;
  std::map<std::string, std::uint64_t> pending_evals_;
  std::uint64_t provisioned_ = 0;
  int failures_ = 0;
};

}  // namespace logvec
