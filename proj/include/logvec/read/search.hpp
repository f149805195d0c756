#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "logvec/core/hlc.hpp"
#include "logvec/core/metric.hpp"
#include "logvec/core/primary_key.hpp"
#include "logvec/core/segment.hpp"
#include "logvec/index/vector_index.hpp"

namespace logvec {

// Staleness tolerance in milliseconds. 0 is strong consistency.
inline constexpr std::uint64_t kEventual = std::numeric_limits<std::uint64_t>::max();

struct SearchRequest {
  std::string collection;
  CollectionId collection_id = 0;  // filled in by the proxy
  std::vector<std::vector<float>> queries;
  std::string vector_field;  // empty: the first vector field
  std::size_t k = 10;
  std::optional<Metric> metric;  // default: the collection's metric
  std::uint64_t tau_ms = kEventual;
  std::optional<std::string> filter;
  std::optional<HlcTimestamp> travel_ts;
  std::optional<SearchKnobs> knobs;
  HlcTimestamp issue_ts;  // assigned by the proxy unless the client sets it
};

struct Hit {
  PrimaryKey pk;
  double score = 0;
  SegmentId segment = 0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

// Hits of one query from one source, best first.
struct PartialResult {
  NodeId node = 0;
  std::vector<std::vector<Hit>> hits;  // per query
};

struct SearchResult {
  std::vector<std::vector<Hit>> hits;  // per query
  std::uint64_t waited_ms = 0;
};

// Best first by metric, then ascending pk.
struct HitOrder {
  Metric metric;
  bool operator()(const Hit& a, const Hit& b) const {
    const double ka = rank_key(metric, a.score);
    const double kb = rank_key(metric, b.score);
    if (ka != kb) return ka < kb;
    return a.pk < b.pk;
  }
};

// Merges hit lists into the k best, keeping one hit per pk (its best).
std::vector<Hit> reduce_hits(Metric metric, const std::vector<const std::vector<Hit>*>& lists,
                             std::size_t k);

// Global reduce over node partials. Every expected node must have answered;
// a missing partial is a kTimeout error rather than a smaller answer.
SearchResult reduce_global(Metric metric, const std::vector<std::optional<PartialResult>>& partials,
                           std::size_t queries, std::size_t k);

enum class GuardDecision : std::uint8_t { kProceed, kWait };

// Staleness check of a query issued at `issued` against a node whose
// channels are serviceable up to `serviceable`. With tau 0 the node must have
// caught up to the issue time; otherwise the physical gap must stay below tau.
GuardDecision guard_consistency(std::uint64_t tau_ms, HlcTimestamp issued, HlcTimestamp serviceable);

// Line-delimited JSON request/response format of the service boundary.
SearchRequest request_from_json(const nlohmann::json& j);
nlohmann::json request_to_json(const SearchRequest& r);
nlohmann::json result_to_json(const SearchResult& r);
nlohmann::json pk_to_json(const PrimaryKey& pk);

}  // namespace logvec
