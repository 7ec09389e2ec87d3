#include "tgvlm/masks.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

PatchGrid PatchGrid::square(std::size_t image_size, std::size_t patch_size) {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw InputError("image size " + std::to_string(image_size) + " is not divisible by patch size " +
                     std::to_string(patch_size));
  }
  const std::size_t g = image_size / patch_size;
  return PatchGrid{g, g, patch_size, patch_size};
}

BinaryMask rle_decode(const RleMask& mask) {
  const std::size_t total = mask.height * mask.width;
  const std::uint64_t run_sum = std::accumulate(mask.counts.begin(), mask.counts.end(), std::uint64_t{0});
  if (run_sum != total) {
    throw MaskError("malformed RLE mask: runs sum to " + std::to_string(run_sum) + " but size is " +
                    std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  BinaryMask out(mask.height, mask.width);
  std::size_t pos = 0;
  for (std::size_t r = 0; r < mask.counts.size(); ++r) {
    const bool fg = (r % 2) == 1;
    for (std::uint32_t i = 0; i < mask.counts[r]; ++i, ++pos) {
      if (fg) out.set(pos % mask.height, pos / mask.height);
    }
  }
  return out;
}

RleMask rle_encode(const BinaryMask& pixels) {
  RleMask out{pixels.height, pixels.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::size_t col = 0; col < pixels.width; ++col) {
    for (std::size_t row = 0; row < pixels.height; ++row) {
      const std::uint8_t v = pixels.at(row, col) ? 1 : 0;
      if (v != current) {
        out.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  out.counts.push_back(run);
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width) {
  if (mask.height == height && mask.width == width) return mask;
  BinaryMask out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t sr = r * mask.height / height;
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t sc = c * mask.width / width;
      out.pixels[r * width + c] = mask.at(sr, sc);
    }
  }
  return out;
}

std::vector<double> patch_coverage(const BinaryMask& pixels, const PatchGrid& grid) {
  const BinaryMask resized = resize_nearest(pixels, grid.image_rows(), grid.image_cols());
  std::vector<double> coverage(grid.num_patches(), 0.0);
  const double area = static_cast<double>(grid.patch_h * grid.patch_w);
  for (std::size_t r = 0; r < resized.height; ++r) {
    const std::size_t gr = r / grid.patch_h;
    for (std::size_t c = 0; c < resized.width; ++c) {
      if (resized.at(r, c)) coverage[gr * grid.grid_cols + c / grid.patch_w] += 1.0;
    }
  }
  for (double& v : coverage) v /= area;
  return coverage;
}

RegionIndexSet downsample_mask(const BinaryMask& pixels, const PatchGrid& grid, double threshold, int region_id) {
  if (pixels.height == 0 || pixels.width == 0 || pixels.count() == 0) {
    throw MaskError("region " + std::to_string(region_id) + " has an empty mask and cannot be grounded");
  }
  const std::vector<double> coverage = patch_coverage(pixels, grid);
  RegionIndexSet out{region_id, {}};
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    if (coverage[i] >= threshold) out.indices.push_back(i);
  }
  if (!out.indices.empty()) return out;

  auto best = std::max_element(coverage.begin(), coverage.end());  // first maximum = lowest index
  if (*best > 0.0) {
    out.indices.push_back(static_cast<std::size_t>(best - coverage.begin()));
    return out;
  }
  // Downscaling dropped every foreground pixel; fall back to the patch that
  // holds the first foreground pixel in source coordinates.
  const auto first = static_cast<std::size_t>(
      std::find(pixels.pixels.begin(), pixels.pixels.end(), std::uint8_t{1}) - pixels.pixels.begin());
  const std::size_t row = (first / pixels.width) * grid.image_rows() / pixels.height;
  const std::size_t col = (first % pixels.width) * grid.image_cols() / pixels.width;
  out.indices.push_back((row / grid.patch_h) * grid.grid_cols + col / grid.patch_w);
  return out;
}

}  // namespace tgvlm
