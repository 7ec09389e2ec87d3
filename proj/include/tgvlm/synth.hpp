#pragma once

// Synthetic top-down warehouse scenes and region-grounded questions about
// them. Ground truth comes straight from the scene geometry.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tgvlm/features.hpp"
#include "tgvlm/masks.hpp"
#include "tgvlm/task.hpp"

namespace tgvlm {

enum class ObjectClass { Pallet = 0, Buffer = 1, Transporter = 2, Shelf = 3 };

std::string_view class_name(ObjectClass cls);
std::string_view class_plural(ObjectClass cls);
ObjectClass parse_class(std::string_view name);

struct SceneObject {
  ObjectClass cls = ObjectClass::Pallet;
  double x = 0.0;  // center, meters; x grows to the right of the image
  double y = 0.0;  // center, meters; y grows downward
  double w = 1.0;  // footprint along x
  double h = 1.0;  // footprint along y
  double height = 0.5;
};

struct Scene {
  double extent = 20.0;  // square world, meters
  double camera_height = 12.0;
  std::vector<SceneObject> objects;
};

// Mirror about the vertical image axis.
Scene mirror_scene(const Scene& scene);

double center_distance(const SceneObject& a, const SceneObject& b);
std::string format_distance(double meters);  // two decimals
std::size_t count_class(const Scene& scene, ObjectClass cls);
// "left" when a's center lies left of b's in image space.
std::string left_right_answer(const Scene& scene, std::size_t a, std::size_t b);

Image render_rgb(const Scene& scene, std::size_t size);    // 3 channels, integer values 0..255
Image render_depth(const Scene& scene, std::size_t size);  // 1 channel, meters from the camera
BinaryMask object_mask(const Scene& scene, std::size_t index, std::size_t size);

struct SampleRegion {
  RleMask mask;
  ObjectClass cls = ObjectClass::Pallet;
};

struct Sample {
  std::string id;
  Image rgb;
  Image depth;
  std::vector<SampleRegion> regions;
  std::string question;
  TaskType task = TaskType::Distance;
  std::string answer_free;
  std::string answer_norm;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_samples = 64;
  std::array<double, kNumTasks> task_mix = {0.25, 0.25, 0.25, 0.25};
  std::size_t rgb_size = 224;
  std::size_t depth_size = 384;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  int max_retries = 200;
};

// Exact per-task sample counts (largest remainder). Throws GenerationError
// for a mix that is negative or does not sum to 1.
std::array<std::size_t, kNumTasks> task_quotas(const std::array<double, kNumTasks>& mix, std::size_t n);

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index);
Scene generate_scene(std::mt19937_64& rng, const SynthConfig& config, std::size_t min_objects);

struct QuestionAnswer {
  std::vector<std::size_t> objects;  // scene object behind <R0>, <R1>, ...
  std::string question;
  std::string answer_free;
  std::string answer_norm;
};

QuestionAnswer make_question(const Scene& scene, TaskType task, std::mt19937_64& rng);

Sample generate_sample(const SynthConfig& config, std::size_t index, TaskType task);
// Task of every sample index: exact quotas in a seeded order.
std::vector<TaskType> dataset_tasks(const SynthConfig& config);
std::vector<Sample> generate_dataset(const SynthConfig& config);
// Same samples as generate_dataset, written one line at a time.
void generate_dataset_file(const SynthConfig& config, const std::filesystem::path& path);

// JSON-lines, one sample per line.
void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples);
// With with_images=false the rgb/depth arrays are skipped while parsing and
// the returned samples carry empty images.
std::vector<Sample> read_dataset(const std::filesystem::path& path, bool with_images = true);
void for_each_sample(const std::filesystem::path& path, bool with_images, const std::function<void(Sample&&)>& fn);

}  // namespace tgvlm
