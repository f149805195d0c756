#include "logvec/index/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>

#include "logvec/core/error.hpp"

namespace logvec {

double HnswIndex::key(const float* a, const float* b, std::uint64_t& evals) const {
  ++evals;
  return rank_key(metric_, score_raw(metric_, a, b, dim_));
}

std::unique_ptr<HnswIndex> HnswIndex::build(Metric metric, std::span<const float> data,
                                            std::size_t dim, std::uint32_t M,
                                            std::uint32_t ef_construction, std::uint64_t seed,
                                            BuildStats* stats) {
  if (M < 2) throw Error(ErrorCode::kConfig, "M must be >= 2");
  std::unique_ptr<HnswIndex> index(new HnswIndex(metric, dim));
  index->M_ = M;
  index->M0_ = 2 * M;
  index->ef_construction_ = std::max<std::uint32_t>(ef_construction, M);
  index->data_.assign(data.begin(), data.end());
  const std::size_t n = data.size() / dim;
  index->levels_.resize(n);
  index->links_.resize(n);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double mult = 1.0 / std::log(static_cast<double>(M));
  std::uint64_t evals = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 - unit(rng);  // (0, 1]
    const int level = static_cast<int>(std::floor(-std::log(u) * mult));
    index->insert(static_cast<std::uint32_t>(i), level, evals);
  }
  if (stats) stats->distance_evals += evals;
  return index;
}

void HnswIndex::insert(std::uint32_t id, int level, std::uint64_t& evals) {
  levels_[id] = level;
  links_[id].assign(static_cast<std::size_t>(level) + 1, {});
  if (max_level_ < 0) {
    entry_point_ = id;
    max_level_ = level;
    return;
  }
  const float* q = vec(id);
  std::uint32_t ep = greedy(q, entry_point_, max_level_, level, evals);
  for (int l = std::min(level, max_level_); l >= 0; --l) {
    auto candidates = search_layer(q, ep, ef_construction_, l, nullptr, evals);
    ep = candidates.front().id;
    const std::size_t cap = l == 0 ? M0_ : M_;
    auto selected = select_neighbors(q, candidates, M_, evals);
    links_[id][static_cast<std::size_t>(l)] = selected;
    for (std::uint32_t nb : selected) {
      auto& nb_links = links_[nb][static_cast<std::size_t>(l)];
      nb_links.push_back(id);
      if (nb_links.size() > cap) {
        std::vector<Candidate> pool;
        pool.reserve(nb_links.size());
        for (std::uint32_t x : nb_links) pool.push_back({key(vec(nb), vec(x), evals), x});
        std::sort(pool.begin(), pool.end());
        nb_links = select_neighbors(vec(nb), std::move(pool), cap, evals);
      }
    }
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_point_ = id;
  }
}

std::uint32_t HnswIndex::greedy(const float* q, std::uint32_t ep, int from_level, int to_level,
                                std::uint64_t& evals) const {
  double best = key(q, vec(ep), evals);
  for (int l = from_level; l > to_level; --l) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[ep][static_cast<std::size_t>(l)]) {
        const double d = key(q, vec(nb), evals);
        if (d < best || (d == best && nb < ep)) {
          best = d;
          ep = nb;
          changed = true;
        }
      }
    }
  }
  return ep;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* q, std::uint32_t ep,
                                                          std::size_t ef, int level,
                                                          const RowFilter* filter,
                                                          std::uint64_t& evals) const {
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> results;  // worst on top
  std::unordered_set<std::uint32_t> visited;

  const Candidate start{key(q, vec(ep), evals), ep};
  frontier.push(start);
  visited.insert(ep);
  if (!filter || filter->admit(ep)) results.push(start);

  while (!frontier.empty()) {
    const Candidate cur = frontier.top();
    if (results.size() >= ef && results.top() < cur) break;
    frontier.pop();
    for (std::uint32_t nb : links_[cur.id][static_cast<std::size_t>(level)]) {
      if (!visited.insert(nb).second) continue;
      const Candidate c{key(q, vec(nb), evals), nb};
      if (results.size() < ef || c < results.top()) {
        frontier.push(c);
        if (!filter || filter->admit(nb)) {
          results.push(c);
          if (results.size() > ef) results.pop();
        }
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Diversity heuristic: keep a candidate only if it is closer to the base than
// to every neighbor already kept. Rejected candidates back-fill the list so
// degree stays at m when enough candidates exist.
std::vector<std::uint32_t> HnswIndex::select_neighbors(const float*, std::vector<Candidate> candidates,
                                                       std::size_t m, std::uint64_t& evals) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  std::vector<std::uint32_t> pruned;
  for (const auto& c : candidates) {
    if (kept.size() >= m) break;
    bool diverse = true;
    for (std::uint32_t k : kept) {
      if (key(vec(c.id), vec(k), evals) < c.key) {
        diverse = false;
        break;
      }
    }
    if (diverse) {
      kept.push_back(c.id);
    } else {
      pruned.push_back(c.id);
    }
  }
  for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i) kept.push_back(pruned[i]);
  return kept;
}

std::vector<Neighbor> HnswIndex::search(std::span<const float> query, std::size_t k,
                                        const SearchKnobs& knobs, const RowFilter& filter,
                                        kernels::ScanStats* stats) const {
  if (query.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "hnsw query");
  if (levels_.empty() || k == 0) return {};
  std::uint64_t evals = 0;
  const std::size_t ef = std::max<std::size_t>(knobs.ef_search, k);
  const std::uint32_t ep = greedy(query.data(), entry_point_, max_level_, 0, evals);
  auto found = search_layer(query.data(), ep, ef, 0, &filter, evals);
  if (stats) stats->distance_evals += evals;

  std::vector<Neighbor> out;
  for (const auto& c : found) {
    if (out.size() >= k) break;
    out.push_back({c.id, metric_ == Metric::kEuclidean ? c.key : -c.key});
  }
  return out;
}

void HnswIndex::serialize_body(ByteWriter& w) const {
  w.u32(M_);
  w.u32(ef_construction_);
  w.u64(levels_.size());
  w.u32(entry_point_);
  w.u32(static_cast<std::uint32_t>(max_level_ + 1));
  w.f32s(data_);
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(levels_[i]));
    for (const auto& layer : links_[i]) {
      w.u32(static_cast<std::uint32_t>(layer.size()));
      for (auto nb : layer) w.u32(nb);
    }
  }
}

std::unique_ptr<HnswIndex> HnswIndex::deserialize(ByteReader& r, Metric metric, std::size_t dim) {
  std::unique_ptr<HnswIndex> index(new HnswIndex(metric, dim));
  index->M_ = r.u32();
  index->M0_ = 2 * index->M_;
  index->ef_construction_ = r.u32();
  const std::size_t n = r.u64();
  index->entry_point_ = r.u32();
  index->max_level_ = static_cast<int>(r.u32()) - 1;
  index->data_.resize(n * dim);
  r.f32s(index->data_);
  index->levels_.resize(n);
  index->links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    index->levels_[i] = static_cast<int>(r.u32());
    index->links_[i].resize(static_cast<std::size_t>(index->levels_[i]) + 1);
    for (auto& layer : index->links_[i]) {
      layer.resize(r.u32());
      for (auto& nb : layer) nb = r.u32();
    }
  }
  return index;
}

}  // namespace logvec
