#include "tgvlm/features.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tgvlm/errors.hpp"

namespace tgvlm {

void ModalityEncoderConfig::validate() const {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw InputError("encoder image size " + std::to_string(image_size) + " is not divisible by patch size " +
                     std::to_string(patch_size));
  }
  if (embed_dim == 0) throw InputError("encoder embed_dim must be positive");
}

Image resize_image_nearest(const Image& image, std::size_t height, std::size_t width) {
  if (image.height == height && image.width == width) return image;
  Image out(image.channels, height, width);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        out.at(c, y, x) = image.at(c, y * image.height / height, x * image.width / width);
  return out;
}

Image replicate_channels(const Image& single, std::size_t channels) {
  if (single.channels != 1) {
    throw InputError("expected a single-channel map, got " + std::to_string(single.channels) + " channels");
  }
  Image out(channels, single.height, single.width);
  for (std::size_t c = 0; c < channels; ++c)
    std::copy(single.values.begin(), single.values.end(), out.values.begin() + c * single.values.size());
  return out;
}

ToyPatchEncoder::ToyPatchEncoder(ModalityEncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t pd = config_.patch_dim(), d = config_.embed_dim, n = config_.num_patches();
  std::mt19937_64 rng(seed ^ (config_.modality == Modality::Rgb ? 0x5247424ull : 0x44455054ull));
  std::normal_distribution<double> normal(0.0, 1.0);

  projection_.resize(pd * d);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(pd));
  for (double& v : projection_) v = normal(rng) * proj_scale;
  bias_.resize(d);
  for (double& v : bias_) v = 0.1 * normal(rng);

  // Separable 2D sinusoidal code: the first half of the channels encodes the
  // patch row, the second half the patch column.
  position_.assign(n * d, 0.0);
  const std::size_t side = config_.grid_side(), half = d / 2;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      double* row = position_.data() + (r * side + c) * d;
      for (std::size_t k = 0; k < d; ++k) {
        const bool use_row = k < half;
        const std::size_t kk = use_row ? k : k - half;
        const std::size_t width = use_row ? half : d - half;
        const double freq = std::pow(100.0, -static_cast<double>(kk / 2 * 2) / static_cast<double>(width));
        const double coord = static_cast<double>(use_row ? r : c);
        row[k] = 0.5 * ((kk % 2 == 0) ? std::sin(coord * freq) : std::cos(coord * freq));
      }
    }
  }

  global_projection_.resize(d * d);
  const double g_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : global_projection_) v = normal(rng) * g_scale;
  global_bias_.resize(d);
  for (double& v : global_bias_) v = 0.1 * normal(rng);
}

void ToyPatchEncoder::zero_bias() {
  std::fill(bias_.begin(), bias_.end(), 0.0);
  std::fill(position_.begin(), position_.end(), 0.0);
  std::fill(global_bias_.begin(), global_bias_.end(), 0.0);
}

EncodedImage ToyPatchEncoder::encode(const Image& image) const {
  if (image.channels != 3) {
    throw InputError("encoder expects 3 channels, got " + std::to_string(image.channels));
  }
  if (image.height != config_.image_size || image.width != config_.image_size) {
    throw InputError("encoder expects a " + std::to_string(config_.image_size) + "x" +
                     std::to_string(config_.image_size) + " image, got " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }
  if (image.values.size() != image.channels * image.height * image.width) {
    throw InputError("image buffer does not match its declared size");
  }
  const std::size_t side = config_.grid_side(), p = config_.patch_size, d = config_.embed_dim;
  const std::size_t n = config_.num_patches();
  EncodedImage out{std::vector<double>(d, 0.0), Tensor::zeros({n, d})};
  std::vector<double> patch(config_.patch_dim());
  for (std::size_t gr = 0; gr < side; ++gr) {
    for (std::size_t gc = 0; gc < side; ++gc) {
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) patch[k++] = image.at(c, gr * p + y, gc * p + x);
      const std::size_t idx = gr * side + gc;
      double* row = out.patches.data().data() + idx * d;
      for (std::size_t j = 0; j < d; ++j) row[j] = bias_[j] + position_[idx * d + j];
      for (std::size_t q = 0; q < patch.size(); ++q) {
        const double v = patch[q];
        if (v == 0.0) continue;
        const double* w = projection_.data() + q * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += v * w[j];
      }
    }
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += out.patches.at(i, j);
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = global_bias_[j];
    for (std::size_t i = 0; i < d; ++i) acc += mean[i] * global_projection_[i * d + j];
    out.global[j] = acc;
  }
  return out;
}

std::vector<double> pool_region(const Tensor& patches, const RegionIndexSet& region) {
  if (region.indices.empty()) {
    throw MaskError("region " + std::to_string(region.region_id) + " has an empty patch index set");
  }
  const std::size_t n = patches.rows(), d = patches.cols();
  std::vector<double> acc(d, 0.0);
  for (std::size_t i : region.indices) {
    if (i >= n) {
      throw IndexError("patch index " + std::to_string(i) + " out of range for " + std::to_string(n) + " patches");
    }
    for (std::size_t j = 0; j < d; ++j) acc[j] += patches.at(i, j);
  }
  const double count = static_cast<double>(region.indices.size());
  for (double& v : acc) v /= count;
  return acc;
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& config)
    : config_(config), rgb_(config.rgb, config.seed), depth_(config.depth, config.seed) {}

SampleFeatures FeatureExtractor::extract(const Image& rgb, const Image& depth,
                                         std::span<const BinaryMask> masks) const {
  const std::size_t rs = config_.rgb.image_size, ds = config_.depth.image_size;
  const EncodedImage er = rgb_.encode(resize_image_nearest(rgb, rs, rs));
  const Image depth3 = depth.channels == 1 ? replicate_channels(depth) : depth;
  const EncodedImage ed = depth_.encode(resize_image_nearest(depth3, ds, ds));

  SampleFeatures out;
  out.global = GlobalFeatures{er.global, ed.global};
  const PatchGrid rgb_grid = config_.rgb.grid();
  const PatchGrid depth_grid = config_.depth.grid();
  for (std::size_t r = 0; r < masks.size(); ++r) {
    const int id = static_cast<int>(r);
    RegionFeature f;
    f.rgb = pool_region(er.patches, downsample_mask(masks[r], rgb_grid, config_.coverage_threshold, id));
    f.depth = pool_region(ed.patches, downsample_mask(masks[r], depth_grid, config_.coverage_threshold, id));
    out.regions.push_back(std::move(f));
  }
  return out;
}

}  // namespace tgvlm
