#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "logvec/core/segment.hpp"

namespace logvec {

// Logically deleted rows of one segment. Bits only go from 0 to 1; a rebuild
// starts a fresh bitmap over the surviving rows.
class DeleteBitmap {
 public:
  DeleteBitmap() = default;
  DeleteBitmap(SegmentId segment_id, std::size_t rows)
      : segment_id_(segment_id), rows_(rows), words_((rows + 63) / 64, 0) {}

  // Returns true when the bit was newly set.
  bool set(std::uint32_t row) {
    if (row >= rows_) grow(row + 1);
    auto& w = words_[row >> 6];
    const std::uint64_t bit = std::uint64_t{1} << (row & 63);
    if (w & bit) return false;
    w |= bit;
    ++deleted_;
    return true;
  }
  bool test(std::uint32_t row) const {
    if (row >= rows_) return false;
    return (words_[row >> 6] >> (row & 63)) & 1;
  }
  void grow(std::size_t rows) {
    if (rows <= rows_) return;
    rows_ = rows;
    words_.resize((rows + 63) / 64, 0);
  }

  SegmentId segment_id() const { return segment_id_; }
  std::size_t rows() const { return rows_; }
  std::size_t deleted_count() const { return deleted_; }

 private:
  SegmentId segment_id_ = 0;
  std::size_t rows_ = 0;
  std::size_t deleted_ = 0;
  std::vector<std::uint64_t> words_;
};

using RowPredicate = std::function<bool(std::uint32_t row)>;

// Admission test applied while scanning: deleted rows and rows failing the
// predicate never enter a result set.
struct RowFilter {
  const DeleteBitmap* deleted = nullptr;
  const RowPredicate* predicate = nullptr;

  bool admit(std::uint32_t row) const {
    if (deleted && deleted->test(row)) return false;
    if (predicate && !(*predicate)(row)) return false;
    return true;
  }
  bool trivial() const {
    return (deleted == nullptr || deleted->deleted_count() == 0) && predicate == nullptr;
  }
};

// True iff deleted_count / row_count reaches the threshold (inclusive).
bool should_rebuild(const DeleteBitmap& bitmap, std::size_t row_count, double threshold_fraction);

}  // namespace logvec
