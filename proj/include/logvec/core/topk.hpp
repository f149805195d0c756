#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <vector>

#include "logvec/core/metric.hpp"

namespace logvec {

// One scored row inside a segment or index.
struct Neighbor {
  std::uint32_t row = 0;
  double score = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Strict total order: closer first, ties by ascending row id.
struct NeighborOrder {
  Metric metric;
  bool operator()(const Neighbor& a, const Neighbor& b) const {
    const double ka = rank_key(metric, a.score);
    const double kb = rank_key(metric, b.score);
    if (ka != kb) return ka < kb;
    return a.row < b.row;
  }
};

// Bounded collector keeping the k best neighbors under NeighborOrder.
class TopK {
 public:
  TopK(Metric metric, std::size_t k) : order_{metric}, k_(k), heap_(order_) {}

  void push(std::uint32_t row, double score) {
    if (k_ == 0) return;
    Neighbor n{row, score};
    if (heap_.size() < k_) {
      heap_.push(n);
    } else if (order_(n, heap_.top())) {
      heap_.pop();
      heap_.push(n);
    }
  }

  bool full() const { return heap_.size() >= k_; }
  std::size_t size() const { return heap_.size(); }
  const Neighbor& worst() const { return heap_.top(); }

  std::vector<Neighbor> take_sorted() {
    std::vector<Neighbor> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  NeighborOrder order_;
  std::size_t k_;
  std::priority_queue<Neighbor, std::vector<Neighbor>, NeighborOrder> heap_;
};

inline std::vector<Neighbor> merge_topk(Metric metric, std::vector<Neighbor> a, std::size_t k) {
  std::sort(a.begin(), a.end(), NeighborOrder{metric});
  if (a.size() > k) a.resize(k);
  return a;
}

}  // namespace logvec
