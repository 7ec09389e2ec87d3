#pragma once

// On-disk cache of pre-extracted features. Layout (integers u32 LE, floats
// f64 LE):
//
//   "TGFC" | u32 version
//   record*:  u32 id_len | id | u32 d_rgb | f64[d_rgb] | u32 d_depth | f64[d_depth]
//             | u32 R | R x ( u32 d | f64[d] (rgb)  u32 d | f64[d] (depth) )
//   index:    u32 count | count x ( u32 id_len | id | u32 record_offset )
//   footer:   u32 index_offset
//
// A cache has one writer or many readers, never both at once.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tgvlm/features.hpp"

namespace tgvlm {

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

using CacheRecord = std::pair<std::string, SampleFeatures>;

// Writes all records atomically, replacing any existing file.
void write_feature_cache(const std::filesystem::path& path, const std::vector<CacheRecord>& records);

// Adds or replaces one record, rewriting the file.
void cache_write(const std::string& sample_id, const GlobalFeatures& global, const std::vector<RegionFeature>& regions,
                 const std::filesystem::path& path);

class FeatureCache {
 public:
  static FeatureCache open(const std::filesystem::path& path);

  bool contains(const std::string& sample_id) const { return offsets_.count(sample_id) != 0; }
  SampleFeatures read(const std::string& sample_id) const;
  std::vector<std::string> ids() const;  // file order
  std::size_t size() const { return order_.size(); }

 private:
  std::filesystem::path path_;
  std::string blob_;
  std::map<std::string, std::uint32_t> offsets_;
  std::vector<std::string> order_;
};

SampleFeatures cache_read(const std::filesystem::path& path, const std::string& sample_id);

}  // namespace tgvlm
