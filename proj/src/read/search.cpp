#include "logvec/read/search.hpp"

#include <algorithm>
#include <map>

#include "logvec/core/error.hpp"

namespace logvec {

std::vector<Hit> reduce_hits(Metric metric, const std::vector<const std::vector<Hit>*>& lists,
                             std::size_t k) {
  const HitOrder order{metric};
  std::map<PrimaryKey, const Hit*> best;
  for (const auto* list : lists) {
    for (const auto& h : *list) {
      auto [it, fresh] = best.try_emplace(h.pk, &h);
      if (!fresh && order(h, *it->second)) it->second = &h;
    }
  }
  std::vector<Hit> out;
  out.reserve(best.size());
  for (const auto& [_, h] : best) out.push_back(*h);
  std::sort(out.begin(), out.end(), order);
  if (out.size() > k) out.resize(k);
  return out;
}

SearchResult reduce_global(Metric metric, const std::vector<std::optional<PartialResult>>& partials,
                           std::size_t queries, std::size_t k) {
  std::size_t missing = 0;
  for (const auto& p : partials) missing += p.has_value() ? 0 : 1;
  if (missing > 0) {
    throw Error(ErrorCode::kTimeout, std::to_string(missing) + " of " + std::to_string(partials.size()) +
                                         " query nodes did not answer; result would be partial");
  }
  SearchResult out;
  out.hits.resize(queries);
  for (std::size_t q = 0; q < queries; ++q) {
    std::vector<const std::vector<Hit>*> lists;
    for (const auto& p : partials) {
      if (q < p->hits.size()) lists.push_back(&p->hits[q]);
    }
    out.hits[q] = reduce_hits(metric, lists, k);
  }
  return out;
}

GuardDecision guard_consistency(std::uint64_t tau_ms, HlcTimestamp issued, HlcTimestamp serviceable) {
  if (tau_ms == kEventual || serviceable >= issued) return GuardDecision::kProceed;
  if (tau_ms == 0) return GuardDecision::kWait;
  const std::uint64_t gap = issued.physical() - std::min(issued.physical(), serviceable.physical());
  return gap < tau_ms ? GuardDecision::kProceed : GuardDecision::kWait;
}

nlohmann::json pk_to_json(const PrimaryKey& pk) {
  if (pk_is_int(pk)) return std::get<std::int64_t>(pk);
  return std::get<std::string>(pk);
}

SearchRequest request_from_json(const nlohmann::json& j) {
  try {
    if (j.value("op", std::string("search")) != "search") {
      throw Error(ErrorCode::kInvalidArgument, "unsupported op '" + j.at("op").get<std::string>() + "'");
    }
    SearchRequest r;
    r.collection = j.at("collection").get<std::string>();
    if (j.contains("vector")) r.queries.push_back(j.at("vector").get<std::vector<float>>());
    if (j.contains("vectors")) {
      for (const auto& v : j.at("vectors")) r.queries.push_back(v.get<std::vector<float>>());
    }
    if (r.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "search needs 'vector' or 'vectors'");
    r.k = j.value("k", std::size_t{10});
    if (r.k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    if (j.contains("metric")) r.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("tau_ms")) {
      const auto& t = j.at("tau_ms");
      if (t.is_string() && (t == "inf" || t == "eventual")) {
        r.tau_ms = kEventual;
      } else {
        if (!t.is_number() || t.get<double>() < 0) throw Error(ErrorCode::kInvalidArgument, "tau_ms must be >= 0");
        r.tau_ms = t.get<std::uint64_t>();
      }
    }
    if (j.contains("filter") && !j.at("filter").is_null()) r.filter = j.at("filter").get<std::string>();
    r.vector_field = j.value("field", std::string());
    if (j.contains("travel_ts")) r.travel_ts = HlcTimestamp::from_raw(j.at("travel_ts").get<std::uint64_t>());
    if (j.contains("nprobe") || j.contains("ef")) {
      SearchKnobs knobs;
      knobs.nprobe = j.value("nprobe", knobs.nprobe);
      knobs.ef_search = j.value("ef", knobs.ef_search);
      r.knobs = knobs;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed search request: ") + e.what());
  }
}

nlohmann::json request_to_json(const SearchRequest& r) {
  nlohmann::json j{{"op", "search"}, {"collection", r.collection}, {"k", r.k}};
  if (r.queries.size() == 1) {
    j["vector"] = r.queries.front();
  } else {
    j["vectors"] = r.queries;
  }
  if (r.metric) j["metric"] = metric_name(*r.metric);
  j["tau_ms"] = r.tau_ms == kEventual ? nlohmann::json("inf") : nlohmann::json(r.tau_ms);
  if (r.filter) j["filter"] = *r.filter;
  if (!r.vector_field.empty()) j["field"] = r.vector_field;
  if (r.travel_ts) j["travel_ts"] = r.travel_ts->raw();
  if (r.knobs) {
    j["nprobe"] = r.knobs->nprobe;
    j["ef"] = r.knobs->ef_search;
  }
  return j;
}

nlohmann::json result_to_json(const SearchResult& r) {
  auto encode = [](const std::vector<Hit>& hits) {
    auto arr = nlohmann::json::array();
    for (const auto& h : hits) arr.push_back({{"pk", pk_to_json(h.pk)}, {"score", h.score}});
    return arr;
  };
  nlohmann::json j;
  if (r.hits.size() == 1) {
    j["hits"] = encode(r.hits.front());
  } else {
    auto all = nlohmann::json::array();
    for (const auto& h : r.hits) all.push_back(encode(h));
    j["hits"] = all;
  }
  j["waited_ms"] = r.waited_ms;
  return j;
}

}  // namespace logvec
