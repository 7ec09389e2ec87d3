#pragma once

// Frozen toy patch encoders standing in for the pretrained RGB and depth
// backbones, plus region pooling over their patch embeddings.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tgvlm/masks.hpp"
#include "tgvlm/tensor.hpp"

namespace tgvlm {

enum class Modality { Rgb, Depth };

struct ModalityEncoderConfig {
  Modality modality = Modality::Rgb;
  std::size_t image_size = 224;
  std::size_t patch_size = 14;
  std::size_t embed_dim = 32;

  static ModalityEncoderConfig rgb(std::size_t embed_dim = 32) { return {Modality::Rgb, 224, 14, embed_dim}; }
  static ModalityEncoderConfig depth(std::size_t embed_dim = 32) { return {Modality::Depth, 384, 16, embed_dim}; }

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }
  PatchGrid grid() const { return PatchGrid::square(image_size, patch_size); }
  void validate() const;
};

// Channel-major (C×H×W) float image.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), values(c * h * w, 0.0) {}
  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

Image resize_image_nearest(const Image& image, std::size_t height, std::size_t width);
// Single-channel depth map repeated across three channels.
Image replicate_channels(const Image& single, std::size_t channels = 3);

struct EncodedImage {
  std::vector<double> global;  // stand-in for the [CLS] embedding
  Tensor patches;              // num_patches × embed_dim, row-major grid order
};

// patchify -> per-patch linear map (+ bias + fixed positional code);
// global = linear map of the mean patch embedding.
class ToyPatchEncoder {
 public:
  ToyPatchEncoder(ModalityEncoderConfig config, std::uint64_t seed);

  const ModalityEncoderConfig& config() const { return config_; }
  EncodedImage encode(const Image& image) const;

  // Zeroes every additive term (bias, positional code, global bias) so the
  // encoder becomes a linear map of the pixels.
  void zero_bias();

 private:
  ModalityEncoderConfig config_;
  std::vector<double> projection_;  // patch_dim × embed_dim
  std::vector<double> bias_;        // embed_dim
  std::vector<double> position_;    // num_patches × embed_dim
  std::vector<double> global_projection_;  // embed_dim × embed_dim
  std::vector<double> global_bias_;        // embed_dim
};

// f_r = (1/|P_r|) Σ_{i∈P_r} e_i over rows of `patches`.
std::vector<double> pool_region(const Tensor& patches, const RegionIndexSet& region);

struct GlobalFeatures {
  std::vector<double> rgb;
  std::vector<double> depth;
  bool operator==(const GlobalFeatures&) const = default;
};

struct RegionFeature {
  std::vector<double> rgb;
  std::vector<double> depth;
  bool operator==(const RegionFeature&) const = default;
};

struct SampleFeatures {
  GlobalFeatures global;
  std::vector<RegionFeature> regions;
  bool operator==(const SampleFeatures&) const = default;
};

struct FeatureExtractorConfig {
  ModalityEncoderConfig rgb = ModalityEncoderConfig::rgb();
  ModalityEncoderConfig depth = ModalityEncoderConfig::depth();
  double coverage_threshold = kDefaultCoverageThreshold;
  std::uint64_t seed = 0;
};

// Runs both frozen encoders on one sample and pools every region.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureExtractorConfig& config);

  // rgb: 3 channels, values already scaled; depth: 1 channel. Either image is
  // resized (nearest neighbour) to its encoder's input size first. Masks
  // may have any resolution and are projected onto each patch grid.
  SampleFeatures extract(const Image& rgb, const Image& depth, std::span<const BinaryMask> masks) const;

  const ToyPatchEncoder& rgb_encoder() const { return rgb_; }
  const ToyPatchEncoder& depth_encoder() const { return depth_; }

 private:
  FeatureExtractorConfig config_;
  ToyPatchEncoder rgb_;
  ToyPatchEncoder depth_;
};

}  // namespace tgvlm
