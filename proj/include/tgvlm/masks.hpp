#pragma once

// Run-length encoded region masks and their projection onto ViT patch grids.
//
// RLE follows the COCO convention: runs alternate background/foreground over
// the column-major pixel order, starting with a (possibly empty) background run.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tgvlm {

struct RleMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const RleMask&) const = default;
};

// Row-major binary pixel grid.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0) {}

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  void set(std::size_t row, std::size_t col, bool on = true) { pixels[row * width + col] = on ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

struct PatchGrid {
  std::size_t grid_rows = 16;
  std::size_t grid_cols = 16;
  std::size_t patch_h = 14;
  std::size_t patch_w = 14;

  std::size_t image_rows() const { return grid_rows * patch_h; }
  std::size_t image_cols() const { return grid_cols * patch_w; }
  std::size_t num_patches() const { return grid_rows * grid_cols; }

  static PatchGrid square(std::size_t image_size, std::size_t patch_size);
};

struct RegionIndexSet {
  int region_id = 0;
  std::vector<std::size_t> indices;  // sorted, row-major patch order
};

inline constexpr double kDefaultCoverageThreshold = 0.5;

BinaryMask rle_decode(const RleMask& mask);
RleMask rle_encode(const BinaryMask& pixels);

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width);

// Foreground fraction of every patch after resizing the mask to the grid's
// pixel extent.
std::vector<double> patch_coverage(const BinaryMask& pixels, const PatchGrid& grid);

// Patches with coverage >= threshold. When none qualifies the single
// best-covered patch (lowest index on ties) is returned so the set is never
// empty. Throws MaskError for a mask with no foreground at all.
RegionIndexSet downsample_mask(const BinaryMask& pixels, const PatchGrid& grid,
                               double threshold = kDefaultCoverageThreshold, int region_id = 0);

}  // namespace tgvlm
