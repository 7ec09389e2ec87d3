#include "tgvlm/feature_cache.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

namespace {

void put_vector(io::ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw FormatError("refusing to cache a non-finite feature value");
  }
  w.u32(static_cast<std::uint32_t>(v.size()));
  w.f64s(v);
}

std::vector<double> get_vector(io::ByteReader& r) {
  const std::uint32_t n = r.u32();
  return r.f64s(n);
}

}  // namespace

void write_feature_cache(const std::filesystem::path& path, const std::vector<CacheRecord>& records) {
  io::ByteWriter w;
  w.bytes("TGFC");
  w.u32(kFeatureCacheVersion);
  std::vector<std::pair<std::string, std::uint32_t>> index;
  for (const auto& [id, f] : records) {
    if (w.size() > std::numeric_limits<std::uint32_t>::max()) throw FormatError("feature cache exceeds 4 GiB");
    index.emplace_back(id, static_cast<std::uint32_t>(w.size()));
    w.u32(static_cast<std::uint32_t>(id.size()));
    w.bytes(id);
    put_vector(w, f.global.rgb);
    put_vector(w, f.global.depth);
    w.u32(static_cast<std::uint32_t>(f.regions.size()));
    for (const RegionFeature& region : f.regions) {
      put_vector(w, region.rgb);
      put_vector(w, region.depth);
    }
  }
  const auto index_offset = static_cast<std::uint32_t>(w.size());
  w.u32(static_cast<std::uint32_t>(index.size()));
  for (const auto& [id, offset] : index) {
    w.u32(static_cast<std::uint32_t>(id.size()));
    w.bytes(id);
    w.u32(offset);
  }
  w.u32(index_offset);
  io::write_file_atomic(path, w.buffer());
}

FeatureCache FeatureCache::open(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw CacheMissError("feature cache " + path.string() + " does not exist; run `tgvlm cache-features` first");
  }
  FeatureCache cache;
  cache.path_ = path;
  cache.blob_ = io::read_file(path);
  const std::string context = "feature cache " + path.string();
  io::ByteReader r(cache.blob_, context);
  if (cache.blob_.size() < 12 || r.bytes(4) != "TGFC") throw FormatError(context + ": bad header");
  const std::uint32_t version = r.u32();
  if (version != kFeatureCacheVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(version));
  }
  r.seek(cache.blob_.size() - 4);
  const std::uint32_t index_offset = r.u32();
  if (index_offset < 8 || index_offset > cache.blob_.size() - 4) throw FormatError(context + ": bad index offset");
  r.seek(index_offset);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string id = r.bytes(len);
    const std::uint32_t offset = r.u32();
    if (offset >= index_offset) throw FormatError(context + ": record offset past index for " + id);
    cache.order_.push_back(id);
    cache.offsets_[std::move(id)] = offset;
  }
  if (r.position() != cache.blob_.size() - 4) throw FormatError(context + ": trailing bytes after index");
  return cache;
}

SampleFeatures FeatureCache::read(const std::string& sample_id) const {
  auto it = offsets_.find(sample_id);
  if (it == offsets_.end()) {
    throw CacheMissError("sample " + sample_id + " is not in feature cache " + path_.string());
  }
  io::ByteReader r(blob_, "feature cache " + path_.string());
  r.seek(it->second);
  const std::uint32_t len = r.u32();
  if (r.bytes(len) != sample_id) throw FormatError("feature cache index points at the wrong record for " + sample_id);
  SampleFeatures f;
  f.global.rgb = get_vector(r);
  f.global.depth = get_vector(r);
  const std::uint32_t regions = r.u32();
  for (std::uint32_t i = 0; i < regions; ++i) {
    RegionFeature region;
    region.rgb = get_vector(r);
    region.depth = get_vector(r);
    f.regions.push_back(std::move(region));
  }
  return f;
}

std::vector<std::string> FeatureCache::ids() const { return order_; }

void cache_write(const std::string& sample_id, const GlobalFeatures& global, const std::vector<RegionFeature>& regions,
                 const std::filesystem::path& path) {
  std::vector<CacheRecord> records;
  if (std::filesystem::exists(path)) {
    FeatureCache existing = FeatureCache::open(path);
    for (const std::string& id : existing.ids()) {
      if (id != sample_id) records.emplace_back(id, existing.read(id));
    }
  }
  records.emplace_back(sample_id, SampleFeatures{global, regions});
  write_feature_cache(path, records);
}

SampleFeatures cache_read(const std::filesystem::path& path, const std::string& sample_id) {
  return FeatureCache::open(path).read(sample_id);
}

}  // namespace tgvlm
