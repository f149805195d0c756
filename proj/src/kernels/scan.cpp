#include "logvec/kernels/scan.hpp"

#include <exception>
#include <limits>

#include <omp.h>

#include "logvec/core/error.hpp"

namespace logvec::kernels {
namespace {

// Below this many rows the OpenMP team costs more than it saves.
constexpr std::size_t kParallelMinRows = 4096;

void check_query(std::span<const float> query, const RowSource& rows) {
  if (query.size() != rows.dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query has " + std::to_string(query.size()) + " dims, rows have " +
                    std::to_string(rows.dim));
  }
}

void scan_range(Metric metric, std::span<const float> query, const RowSource& rows,
                std::size_t begin, std::size_t end, const RowFilter& filter, TopK& top,
                std::uint64_t& evals) {
  const std::size_t dim = rows.dim;
  std::vector<float> buf(rows.codec ? dim : 0);
  for (std::size_t j = begin; j < end; ++j) {
    const std::uint32_t id = rows.id(j);
    if (!filter.admit(id)) continue;
    const float* v;
    if (rows.codec) {
      rows.codec->decode(rows.codes.subspan(j * dim, dim), buf);
      v = buf.data();
    } else {
      v = rows.floats.data() + j * dim;
    }
    top.push(id, score_raw(metric, query.data(), v, dim));
    ++evals;
  }
}

}  // namespace

double squared_l2(const float* a, const float* b, std::size_t dim) {
  double acc = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

namespace serial {

void scan_into(Metric metric, std::span<const float> query, const RowSource& rows,
               const RowFilter& filter, TopK& top, ScanStats* stats) {
  check_query(query, rows);
  std::uint64_t evals = 0;
  scan_range(metric, query, rows, 0, rows.size(), filter, top, evals);
  if (stats) stats->distance_evals += evals;
}

std::vector<Neighbor> scan_topk(Metric metric, std::span<const float> query, const RowSource& rows,
                                std::size_t k, const RowFilter& filter, ScanStats* stats) {
  check_query(query, rows);
  TopK top(metric, k);
  std::uint64_t evals = 0;
  scan_range(metric, query, rows, 0, rows.size(), filter, top, evals);
  if (stats) stats->distance_evals += evals;
  return top.take_sorted();
}

std::vector<std::vector<Neighbor>> batch_scan_topk(Metric metric, std::span<const float> queries,
                                                   const RowSource& rows, std::size_t k,
                                                   const RowFilter& filter) {
  const std::size_t nq = rows.dim ? queries.size() / rows.dim : 0;
  std::vector<std::vector<Neighbor>> out(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    out[q] = scan_topk(metric, queries.subspan(q * rows.dim, rows.dim), rows, k, filter);
  }
  return out;
}

void assign_nearest(std::span<const float> data, std::span<const float> centroids, std::size_t dim,
                    std::span<std::uint32_t> assign, std::span<double> dist2) {
  const std::size_t n = data.size() / dim;
  const std::size_t nc = centroids.size() / dim;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      const double d = squared_l2(data.data() + i * dim, centroids.data() + c * dim, dim);
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    assign[i] = best_c;
    dist2[i] = best;
  }
}

}  // namespace serial

namespace omp {

std::vector<Neighbor> scan_topk(Metric metric, std::span<const float> query, const RowSource& rows,
                                std::size_t k, const RowFilter& filter, ScanStats* stats) {
  check_query(query, rows);
  const std::size_t n = rows.size();
  if (n < kParallelMinRows || omp_get_max_threads() == 1) {
    return serial::scan_topk(metric, query, rows, k, filter, stats);
  }
  std::vector<Neighbor> merged;
  std::uint64_t evals = 0;
  std::exception_ptr failure;
#pragma omp parallel reduction(+ : evals)
  try {
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t chunk = (n + nt - 1) / nt;
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    TopK local(metric, k);
    std::uint64_t local_evals = 0;
    scan_range(metric, query, rows, begin, end, filter, local, local_evals);
    evals += local_evals;
    auto part = local.take_sorted();
#pragma omp critical
    merged.insert(merged.end(), part.begin(), part.end());
  } catch (...) {
#pragma omp critical
    failure = std::current_exception();
  }
  if (failure) std::rethrow_exception(failure);
  if (stats) stats->distance_evals += evals;
  return merge_topk(metric, std::move(merged), k);
}

std::vector<std::vector<Neighbor>> batch_scan_topk(Metric metric, std::span<const float> queries,
                                                   const RowSource& rows, std::size_t k,
                                                   const RowFilter& filter) {
  const std::size_t nq = rows.dim ? queries.size() / rows.dim : 0;
  std::vector<std::vector<Neighbor>> out(nq);
  const auto nq_signed = static_cast<std::int64_t>(nq);
  // Exceptions must not escape a parallel region.
  if (nq > 0) check_query(queries.subspan(0, rows.dim), rows);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t q = 0; q < nq_signed; ++q) {
    const auto qi = static_cast<std::size_t>(q);
    try {
      out[qi] = serial::scan_topk(metric, queries.subspan(qi * rows.dim, rows.dim), rows, k, filter);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void assign_nearest(std::span<const float> data, std::span<const float> centroids, std::size_t dim,
                    std::span<std::uint32_t> assign, std::span<double> dist2) {
  const auto n = static_cast<std::int64_t>(data.size() / dim);
  const std::size_t nc = centroids.size() / dim;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_c = 0;
    const float* row = data.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t c = 0; c < nc; ++c) {
      const double d = squared_l2(row, centroids.data() + c * dim, dim);
      if (d < best) {
        best = d;
        best_c = static_cast<std::uint32_t>(c);
      }
    }
    assign[static_cast<std::size_t>(i)] = best_c;
    dist2[static_cast<std::size_t>(i)] = best;
  }
}

}  // namespace omp
}  // namespace logvec::kernels
