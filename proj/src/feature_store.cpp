#include <cmath>
#include <bit>
#include <cstring>

#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"
#include "dermpipe/fusion_head.hpp"

namespace dermpipe {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view source) : bytes_(bytes), source_(source) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw PipelineError(ErrorKind::Io, std::string(source_) + ": truncated feature file");
  }

  std::string_view bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

}  // namespace

FeatureStore::FeatureStore(int dim, int replicates) : dim_(dim), replicates_(replicates) {
  if (dim < 1 || replicates < 1) throw PipelineError(ErrorKind::InvalidArgument, "feature dimension and replicate count must be >= 1");
}

void FeatureStore::add(const std::string& image, std::span<const float> values) {
  if (values.size() != static_cast<std::size_t>(dim_) * replicates_) {
    throw PipelineError(ErrorKind::ShapeMismatch, "image '" + image + "' needs " +
                                                      std::to_string(static_cast<std::size_t>(dim_) * replicates_) +
                                                      " feature values");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw PipelineError(ErrorKind::InvalidArgument, "non-finite feature for image '" + image + "'");
  }
  if (!index_.emplace(image, ids_.size()).second) {
    throw PipelineError(ErrorKind::InvalidArgument, "duplicate image '" + image + "' in feature store");
  }
  ids_.push_back(image);
  data_.insert(data_.end(), values.begin(), values.end());
}

bool FeatureStore::contains(const std::string& image) const { return index_.count(image) != 0; }

std::size_t FeatureStore::offset(const std::string& image) const {
  const auto it = index_.find(image);
  if (it == index_.end()) throw PipelineError(ErrorKind::MissingFeatures, "no features for image '" + image + "'");
  return it->second * static_cast<std::size_t>(dim_) * replicates_;
}

std::span<const float> FeatureStore::vector(const std::string& image, int replicate) const {
  if (replicate < 0 || replicate >= replicates_) throw PipelineError(ErrorKind::InvalidArgument, "replicate out of range");
  return {data_.data() + offset(image) + static_cast<std::size_t>(replicate) * dim_, static_cast<std::size_t>(dim_)};
}

std::string serialize_feature_store(const FeatureStore& store) {
  std::string out = "DFV1";
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  put_u32(out, static_cast<std::uint32_t>(store.dim()));
  put_u32(out, static_cast<std::uint32_t>(store.replicates()));
  for (const auto& id : store.ids()) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  out.reserve(out.size() + store.raw().size() * 4);
  for (float v : store.raw()) put_f32(out, v);
  return out;
}

FeatureStore parse_feature_store(std::string_view bytes, std::string_view source_name) {
  Reader in(bytes, source_name);
  if (in.take(4) != "DFV1") throw PipelineError(ErrorKind::Io, std::string(source_name) + ": bad magic, expected DFV1");
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  const std::uint32_t replicates = in.u32();
  if (dim == 0 || replicates == 0) throw PipelineError(ErrorKind::Io, std::string(source_name) + ": zero F or R");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) ids.emplace_back(in.take(in.u32()));
  FeatureStore store(static_cast<int>(dim), static_cast<int>(replicates));
  std::vector<float> values(static_cast<std::size_t>(dim) * replicates);
  for (const auto& id : ids) {
    for (auto& v : values) v = in.f32();
    store.add(id, values);
  }
  if (!in.done()) throw PipelineError(ErrorKind::Io, std::string(source_name) + ": trailing bytes");
  return store;
}

void save_feature_store(const FeatureStore& store, const std::string& path) {
  write_file_atomic(path, serialize_feature_store(store));
}

FeatureStore load_feature_store(const std::string& path) { return parse_feature_store(read_file(path), path); }

}  // namespace dermpipe
