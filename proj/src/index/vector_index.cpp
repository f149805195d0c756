#include "logvec/index/vector_index.hpp"

#include "logvec/core/error.hpp"
#include "logvec/index/flat.hpp"
#include "logvec/index/hnsw.hpp"
#include "logvec/index/ivf.hpp"

namespace logvec {
namespace {

constexpr char kIndexMagic[4] = {'M', 'I', 'X', '1'};
constexpr std::uint16_t kIndexVersion = 1;

}  // namespace

const char* index_kind_name(IndexKind kind) {
  switch (kind) {
    case IndexKind::kFlat: return "flat";
    case IndexKind::kIvfFlat: return "ivf_flat";
    case IndexKind::kHnsw: return "hnsw";
  }
  return "?";
}

IndexKind parse_index_kind(const std::string& name) {
  if (name == "flat" || name == "FLAT") return IndexKind::kFlat;
  if (name == "ivf_flat" || name == "ivf" || name == "IVF_FLAT") return IndexKind::kIvfFlat;
  if (name == "hnsw" || name == "HNSW") return IndexKind::kHnsw;
  throw Error(ErrorCode::kInvalidArgument, "unknown index kind: " + name);
}

bool should_rebuild(const DeleteBitmap& bitmap, std::size_t row_count, double threshold_fraction) {
  if (row_count == 0) return false;
  return static_cast<double>(bitmap.deleted_count()) / static_cast<double>(row_count) >=
         threshold_fraction;
}

void IndexParams::check() const {
  if (kind == IndexKind::kIvfFlat) {
    if (nlist < 1) throw Error(ErrorCode::kConfig, "nlist must be >= 1");
    if (search.nprobe < 1 || search.nprobe > nlist) {
      throw Error(ErrorCode::kConfig, "nprobe must be in [1, nlist]");
    }
  }
  if (kind == IndexKind::kHnsw) {
    if (M < 2) throw Error(ErrorCode::kConfig, "M must be >= 2");
    if (quantization != Quantization::kNone) {
      throw Error(ErrorCode::kConfig, "sq8 applies to flat and ivf_flat only");
    }
  }
}

nlohmann::json IndexParams::to_json() const {
  return {{"kind", index_kind_name(kind)},
          {"quantization", quantization == Quantization::kSq8 ? "sq8" : "none"},
          {"nlist", nlist},
          {"max_iters", max_iters},
          {"M", M},
          {"ef_construction", ef_construction},
          {"seed", seed},
          {"nprobe", search.nprobe},
          {"ef_search", search.ef_search}};
}

IndexParams IndexParams::from_json(const nlohmann::json& j) {
  IndexParams p;
  try {
    p.kind = parse_index_kind(j.value("kind", std::string("flat")));
    p.quantization =
        j.value("quantization", std::string("none")) == "sq8" ? Quantization::kSq8 : Quantization::kNone;
    p.nlist = j.value("nlist", p.nlist);
    p.max_iters = j.value("max_iters", p.max_iters);
    p.M = j.value("M", p.M);
    p.ef_construction = j.value("ef_construction", p.ef_construction);
    p.seed = j.value("seed", p.seed);
    p.search.nprobe = j.value("nprobe", p.search.nprobe);
    p.search.ef_search = j.value("ef_search", p.search.ef_search);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad index params: ") + e.what());
  }
  return p;
}

void VectorStore::append(std::span<const float> v) {
  if (v.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "vector store append");
  if (codec_) {
    auto code = codec_->encode(v);
    codes_.insert(codes_.end(), code.begin(), code.end());
  } else {
    floats_.insert(floats_.end(), v.begin(), v.end());
  }
}

std::size_t VectorStore::size() const {
  if (dim_ == 0) return 0;
  return codec_ ? codes_.size() / dim_ : floats_.size() / dim_;
}

kernels::RowSource VectorStore::source(std::span<const std::uint32_t> ids) const {
  kernels::RowSource src;
  src.dim = dim_;
  src.ids = ids;
  if (codec_) {
    src.codes = codes_;
    src.codec = &*codec_;
  } else {
    src.floats = floats_;
  }
  return src;
}

void VectorStore::serialize(ByteWriter& w) const {
  w.u64(size());
  if (codec_) {
    w.bytes(codes_);
  } else {
    w.f32s(floats_);
  }
}

VectorStore VectorStore::deserialize(ByteReader& r, std::size_t dim,
                                     const std::optional<Sq8Codec>& codec) {
  VectorStore s(dim, codec);
  const std::uint64_t n = r.u64();
  if (codec) {
    auto b = r.bytes(n * dim);
    s.codes_.assign(b.begin(), b.end());
  } else {
    s.floats_.resize(n * dim);
    r.f32s(s.floats_);
  }
  return s;
}

std::unique_ptr<VectorIndex> build_index(const IndexParams& params, Metric metric,
                                         std::span<const float> data, std::size_t dim,
                                         BuildStats* stats) {
  params.check();
  if (dim == 0 || data.size() % dim != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "index input is not a whole number of rows");
  }
  switch (params.kind) {
    case IndexKind::kFlat:
      return FlatIndex::build(metric, data, dim, params.quantization);
    case IndexKind::kIvfFlat:
      return IvfFlatIndex::build(metric, data, dim, params.nlist, params.max_iters, params.seed,
                                 params.quantization, stats);
    case IndexKind::kHnsw:
      return HnswIndex::build(metric, data, dim, params.M, params.ef_construction, params.seed,
                              stats);
  }
  throw Error(ErrorCode::kConfig, "unknown index kind");
}

std::vector<std::uint8_t> serialize_index(const VectorIndex& index, const IndexParams& params) {
  ByteWriter w;
  w.raw(std::string_view(kIndexMagic, 4));
  w.u16(kIndexVersion);
  w.u8(static_cast<std::uint8_t>(index.kind()));
  w.u8(static_cast<std::uint8_t>(index.metric()));
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u8(static_cast<std::uint8_t>(params.quantization));
  w.u32(params.nlist);
  w.u32(params.max_iters);
  w.u32(params.M);
  w.u32(params.ef_construction);
  w.u64(params.seed);
  w.u32(params.search.nprobe);
  w.u32(params.search.ef_search);
  index.serialize_body(w);
  return w.take();
}

LoadedIndex deserialize_index(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kIndexMagic, 4)) {
    throw Error(ErrorCode::kCorrupt, "not an index file");
  }
  if (r.u16() != kIndexVersion) throw Error(ErrorCode::kCorrupt, "unsupported index version");
  LoadedIndex out;
  out.params.kind = static_cast<IndexKind>(r.u8());
  const auto metric = static_cast<Metric>(r.u8());
  const std::size_t dim = r.u32();
  out.params.quantization = static_cast<Quantization>(r.u8());
  out.params.nlist = r.u32();
  out.params.max_iters = r.u32();
  out.params.M = r.u32();
  out.params.ef_construction = r.u32();
  out.params.seed = r.u64();
  out.params.search.nprobe = r.u32();
  out.params.search.ef_search = r.u32();
  switch (out.params.kind) {
    case IndexKind::kFlat: out.index = FlatIndex::deserialize(r, metric, dim); break;
    case IndexKind::kIvfFlat: out.index = IvfFlatIndex::deserialize(r, metric, dim); break;
    case IndexKind::kHnsw: out.index = HnswIndex::deserialize(r, metric, dim); break;
    default: throw Error(ErrorCode::kCorrupt, "unknown index kind tag");
  }
  if (!r.done()) throw Error(ErrorCode::kCorrupt, "trailing bytes after index body");
  return out;
}

}  // namespace logvec
