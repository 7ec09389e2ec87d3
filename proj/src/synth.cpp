#include "tgvlm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

using json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 4> kClassNames = {"pallet", "buffer", "transporter", "shelf"};
constexpr std::array<std::string_view, 4> kClassPlurals = {"pallets", "buffers", "transporters", "shelves"};

// Base colors, shaded by object height when rendered.
constexpr std::array<std::array<double, 3>, 4> kClassColors = {{
    {200, 150, 60},
    {60, 170, 80},
    {60, 90, 200},
    {170, 60, 60},
}};
constexpr std::array<double, 3> kFloorColor = {90, 90, 90};

constexpr double kBorder = 0.5;         // keep-out band along the frame edge
constexpr double kGap = 0.5;            // minimum spacing between footprints
constexpr double kLeftRightMargin = 1.0;
constexpr double kMcqMargin = 0.5;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

SceneObject random_object(std::mt19937_64& rng) {
  SceneObject o;
  const double roll = uniform(rng, 0.0, 1.0);
  o.cls = roll < 0.4 ? ObjectClass::Pallet : roll < 0.6 ? ObjectClass::Buffer
                     : roll < 0.8 ? ObjectClass::Transporter : ObjectClass::Shelf;
  switch (o.cls) {
    case ObjectClass::Pallet:
      o.w = uniform(rng, 1.0, 1.6);
      o.h = uniform(rng, 1.0, 1.6);
      o.height = uniform(rng, 0.2, 1.5);
      break;
    case ObjectClass::Buffer:
      o.w = uniform(rng, 1.8, 2.8);
      o.h = uniform(rng, 1.8, 2.8);
      o.height = uniform(rng, 0.05, 0.1);
      break;
    case ObjectClass::Transporter:
      o.w = uniform(rng, 1.2, 2.0);
      o.h = uniform(rng, 0.8, 1.2);
      o.height = uniform(rng, 0.4, 0.8);
      break;
    case ObjectClass::Shelf:
      o.w = uniform(rng, 3.0, 4.0);
      o.h = uniform(rng, 1.0, 1.4);
      o.height = uniform(rng, 2.0, 3.5);
      if (uniform(rng, 0.0, 1.0) < 0.5) std::swap(o.w, o.h);
      break;
  }
  o.w = round2(o.w);
  o.h = round2(o.h);
  o.height = round2(o.height);
  return o;
}

bool overlaps(const SceneObject& a, const SceneObject& b) {
  return std::abs(a.x - b.x) < (a.w + b.w) / 2 + kGap && std::abs(a.y - b.y) < (a.h + b.h) / 2 + kGap;
}

// Pixel (row, col) of an N×N render belongs to the object when its center
// falls inside the footprint.
bool covers(const SceneObject& o, std::size_t row, std::size_t col, std::size_t n, double extent) {
  const double px = (static_cast<double>(col) + 0.5) * extent / static_cast<double>(n);
  const double py = (static_cast<double>(row) + 0.5) * extent / static_cast<double>(n);
  return px >= o.x - o.w / 2 && px < o.x + o.w / 2 && py >= o.y - o.h / 2 && py < o.y + o.h / 2;
}

std::string tag(std::size_t j) { return "<R" + std::to_string(j) + ">"; }

std::string tag_list(std::size_t n) {
  std::string out;
  for (std::size_t j = 0; j < n; ++j) {
    if (j > 0) out += ", ";
    out += tag(j);
  }
  return out;
}

std::optional<QuestionAnswer> distance_question(const Scene& s, std::mt19937_64& rng) {
  const std::size_t a = pick(rng, s.objects.size());
  std::size_t b = pick(rng, s.objects.size() - 1);
  if (b >= a) ++b;
  const std::string d = format_distance(center_distance(s.objects[a], s.objects[b]));
  return QuestionAnswer{{a, b},
                        "What is the distance between <R0> and <R1>?",
                        "The distance between <R0> and <R1> is " + d + " meters.",
                        d};
}

std::optional<QuestionAnswer> count_question(const Scene& s, std::mt19937_64& rng) {
  std::vector<ObjectClass> present;
  for (const SceneObject& o : s.objects) {
    if (std::find(present.begin(), present.end(), o.cls) == present.end()) present.push_back(o.cls);
  }
  std::sort(present.begin(), present.end());
  const ObjectClass cls = present[pick(rng, present.size())];
  std::vector<std::size_t> objects(s.objects.size());
  std::iota(objects.begin(), objects.end(), std::size_t{0});
  const std::string n = std::to_string(count_class(s, cls));
  const std::string plural(class_plural(cls));
  return QuestionAnswer{objects,
                        "Among " + tag_list(objects.size()) + ", how many are " + plural + "?",
                        "The number of " + plural + " is " + n + ".",
                        n};
}

std::optional<QuestionAnswer> mcq_question(const Scene& s, std::mt19937_64& rng) {
  const std::size_t n = s.objects.size();
  const std::size_t variant = pick(rng, n >= 4 ? 3 : 2);  // 0 leftmost, 1 rightmost, 2 closest
  for (int attempt = 0; attempt < 50; ++attempt) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<std::size_t> options(order.begin(), order.begin() + 3);
    std::array<double, 3> key{};
    for (std::size_t j = 0; j < 3; ++j) {
      const SceneObject& o = s.objects[options[j]];
      key[j] = variant == 0 ? o.x : variant == 1 ? -o.x : center_distance(o, s.objects[order[3]]);
    }
    std::array<std::size_t, 3> rank = {0, 1, 2};
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    if (key[rank[1]] - key[rank[0]] < (variant == 2 ? kMcqMargin : kLeftRightMargin)) continue;
    const std::string answer = tag(rank[0]);
    QuestionAnswer qa;
    qa.objects = options;
    if (variant == 2) {
      qa.objects.push_back(order[3]);
      qa.question = "Which of <R0>, <R1>, <R2> is closest to <R3>?";
      qa.answer_free = answer + " is the closest to <R3>.";
    } else {
      const std::string side = variant == 0 ? "leftmost" : "rightmost";
      qa.question = "Which of <R0>, <R1>, <R2> is the " + side + "?";
      qa.answer_free = answer + " is the " + side + " one.";
    }
    qa.answer_norm = answer;
    return qa;
  }
  return std::nullopt;
}

std::optional<QuestionAnswer> left_right_question(const Scene& s, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (left object, right object)
  for (std::size_t a = 0; a < s.objects.size(); ++a)
    for (std::size_t b = 0; b < s.objects.size(); ++b)
      if (s.objects[b].x - s.objects[a].x >= kLeftRightMargin) pairs.emplace_back(a, b);
  if (pairs.empty()) return std::nullopt;
  const auto [l, r] = pairs[pick(rng, pairs.size())];
  const bool ask_left = uniform(rng, 0.0, 1.0) < 0.5;
  QuestionAnswer qa;
  qa.objects = ask_left ? std::vector<std::size_t>{l, r} : std::vector<std::size_t>{r, l};
  qa.question = "Is <R0> to the left or right of <R1>?";
  qa.answer_norm = left_right_answer(s, qa.objects[0], qa.objects[1]);
  qa.answer_free = "<R0> is to the " + qa.answer_norm + " of <R1>.";
  return qa;
}

std::size_t min_objects_for(TaskType task, const SynthConfig& config) {
  const std::size_t needed = task == TaskType::Mcq ? 4 : task == TaskType::Distance || task == TaskType::LeftRight ? 2 : 1;
  return std::max(config.min_objects, needed);
}

json image_json(const Image& img, bool integral) {
  json channels = json::array();
  for (std::size_t c = 0; c < img.channels; ++c) {
    json rows = json::array();
    for (std::size_t y = 0; y < img.height; ++y) {
      json row = json::array();
      for (std::size_t x = 0; x < img.width; ++x) {
        if (integral) {
          row.push_back(static_cast<int>(img.at(c, y, x)));
        } else {
          row.push_back(img.at(c, y, x));
        }
      }
      rows.push_back(std::move(row));
    }
    channels.push_back(std::move(rows));
  }
  return channels;
}

Image image_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty() || !j[0][0].is_array()) {
    throw FormatError(what + " must be a C×H×W nested list");
  }
  Image img(j.size(), j[0].size(), j[0][0].size());
  for (std::size_t c = 0; c < img.channels; ++c) {
    if (j[c].size() != img.height) throw FormatError(what + " has ragged rows");
    for (std::size_t y = 0; y < img.height; ++y) {
      const json& row = j[c][y];
      if (row.size() != img.width) throw FormatError(what + " has ragged rows");
      for (std::size_t x = 0; x < img.width; ++x) img.at(c, y, x) = row[x].get<double>();
    }
  }
  return img;
}

json sample_json(const Sample& s) {
  json regions = json::array();
  for (const SampleRegion& r : s.regions) {
    regions.push_back({{"size", {r.mask.height, r.mask.width}},
                       {"counts", r.mask.counts},
                       {"class", std::string(class_name(r.cls))}});
  }
  json j;
  j["id"] = s.id;
  j["rgb"] = image_json(s.rgb, true);
  j["depth"] = image_json(s.depth, false);
  j["regions"] = std::move(regions);
  j["question"] = s.question;
  j["task"] = std::string(task_name(s.task));
  j["answer_free"] = s.answer_free;
  j["answer_norm"] = s.answer_norm;
  return j;
}

Sample sample_from_json(const json& j, bool with_images) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  if (with_images) {
    s.rgb = image_from_json(j.at("rgb"), "rgb of " + s.id);
    s.depth = image_from_json(j.at("depth"), "depth of " + s.id);
  }
  for (const json& r : j.at("regions")) {
    SampleRegion region;
    const auto size = r.at("size").get<std::vector<std::size_t>>();
    if (size.size() != 2) throw FormatError("region size of " + s.id + " must be [H, W]");
    region.mask.height = size[0];
    region.mask.width = size[1];
    region.mask.counts = r.at("counts").get<std::vector<std::uint32_t>>();
    region.cls = parse_class(r.at("class").get<std::string>());
    s.regions.push_back(std::move(region));
  }
  s.question = j.at("question").get<std::string>();
  s.task = parse_task(j.at("task").get<std::string>());
  s.answer_free = j.at("answer_free").get<std::string>();
  s.answer_norm = j.at("answer_norm").get<std::string>();
  return s;
}

}  // namespace

std::string_view class_name(ObjectClass cls) { return kClassNames[static_cast<std::size_t>(cls)]; }
std::string_view class_plural(ObjectClass cls) { return kClassPlurals[static_cast<std::size_t>(cls)]; }

ObjectClass parse_class(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return static_cast<ObjectClass>(i);
  }
  throw FormatError("unknown object class '" + std::string(name) + "'");
}

Scene mirror_scene(const Scene& scene) {
  Scene out = scene;
  for (SceneObject& o : out.objects) o.x = scene.extent - o.x;
  return out;
}

double center_distance(const SceneObject& a, const SceneObject& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string format_distance(double meters) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", meters);
  return buf;
}

std::size_t count_class(const Scene& scene, ObjectClass cls) {
  return static_cast<std::size_t>(
      std::count_if(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) { return o.cls == cls; }));
}

std::string left_right_answer(const Scene& scene, std::size_t a, std::size_t b) {
  return scene.objects.at(a).x < scene.objects.at(b).x ? "left" : "right";
}

BinaryMask object_mask(const Scene& scene, std::size_t index, std::size_t size) {
  const SceneObject& o = scene.objects.at(index);
  BinaryMask m(size, size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      if (covers(o, r, c, size, scene.extent)) m.set(r, c);
  if (m.count() == 0) {
    // Footprint smaller than a pixel: keep the pixel under the center.
    const auto clamp = [&](double v) {
      return std::min(size - 1, static_cast<std::size_t>(std::max(0.0, v / scene.extent * static_cast<double>(size))));
    };
    m.set(clamp(o.y), clamp(o.x));
  }
  return m;
}

Image render_rgb(const Scene& scene, std::size_t size) {
  Image img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) img.at(c, y, x) = kFloorColor[c];
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    const double shade = 0.7 + 0.3 * std::min(1.0, o.height / 3.5);
    const BinaryMask m = object_mask(scene, i, size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (m.at(y, x))
          for (std::size_t c = 0; c < 3; ++c)
            img.at(c, y, x) = std::round(kClassColors[static_cast<std::size_t>(o.cls)][c] * shade);
  }
  return img;
}

Image render_depth(const Scene& scene, std::size_t size) {
  Image img(1, size, size);
  for (double& v : img.values) v = scene.camera_height;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    const BinaryMask m = object_mask(scene, i, size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (m.at(y, x)) img.at(0, y, x) = round2(scene.camera_height - o.height);
  }
  return img;
}

std::array<std::size_t, kNumTasks> task_quotas(const std::array<double, kNumTasks>& mix, std::size_t n) {
  double total = 0.0;
  for (double p : mix) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw GenerationError("task mix entries must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw GenerationError("task mix sums to " + std::to_string(total) + ", expected 1");
  }
  std::array<std::size_t, kNumTasks> quota{};
  std::array<double, kNumTasks> remainder{};
  std::size_t assigned = 0;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const double exact = mix[t] * static_cast<double>(n);
    quota[t] = static_cast<std::size_t>(std::floor(exact));
    remainder[t] = exact - static_cast<double>(quota[t]);
    assigned += quota[t];
  }
  std::array<std::size_t, kNumTasks> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[order[i % kNumTasks]];
  return quota;
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t{index} >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

Scene generate_scene(std::mt19937_64& rng, const SynthConfig& config, std::size_t min_objects) {
  if (min_objects > config.max_objects) {
    throw GenerationError("scene needs " + std::to_string(min_objects) + " objects but max_objects is " +
                          std::to_string(config.max_objects));
  }
  Scene scene;
  const std::size_t target = min_objects + pick(rng, config.max_objects - min_objects + 1);
  int failures = 0;
  while (scene.objects.size() < target) {
    SceneObject o = random_object(rng);
    o.x = round2(uniform(rng, kBorder + o.w / 2, scene.extent - kBorder - o.w / 2));
    o.y = round2(uniform(rng, kBorder + o.h / 2, scene.extent - kBorder - o.h / 2));
    const bool clash =
        std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& p) { return overlaps(o, p); });
    if (!clash) {
      scene.objects.push_back(o);
    } else if (++failures > config.max_retries) {
      throw GenerationError("could not place " + std::to_string(target) + " non-overlapping objects after " +
                            std::to_string(config.max_retries) + " retries");
    }
  }
  return scene;
}

QuestionAnswer make_question(const Scene& scene, TaskType task, std::mt19937_64& rng) {
  std::optional<QuestionAnswer> qa;
  switch (task) {
    case TaskType::Distance: qa = distance_question(scene, rng); break;
    case TaskType::Count: qa = count_question(scene, rng); break;
    case TaskType::Mcq: qa = mcq_question(scene, rng); break;
    case TaskType::LeftRight: qa = left_right_question(scene, rng); break;
  }
  if (!qa) throw GenerationError("scene does not admit a " + std::string(task_name(task)) + " question");
  return *qa;
}

Sample generate_sample(const SynthConfig& config, std::size_t index, TaskType task) {
  std::mt19937_64 rng = sample_rng(config.seed, index);
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    const Scene scene = generate_scene(rng, config, min_objects_for(task, config));
    QuestionAnswer qa;
    try {
      qa = make_question(scene, task, rng);
    } catch (const GenerationError&) {
      continue;
    }
    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "sample-%06zu", index);
    s.id = id;
    s.task = task;
    s.rgb = render_rgb(scene, config.rgb_size);
    s.depth = render_depth(scene, config.depth_size);
    for (std::size_t obj : qa.objects) {
      s.regions.push_back({rle_encode(object_mask(scene, obj, config.rgb_size)), scene.objects[obj].cls});
    }
    s.question = std::move(qa.question);
    s.answer_free = std::move(qa.answer_free);
    s.answer_norm = std::move(qa.answer_norm);
    return s;
  }
  throw GenerationError("no valid " + std::string(task_name(task)) + " sample after " +
                        std::to_string(config.max_retries) + " scenes");
}

std::vector<TaskType> dataset_tasks(const SynthConfig& config) {
  if (config.rgb_size < 16 || config.depth_size < 16) throw GenerationError("image sizes below 16 pixels");
  if (config.max_objects > static_cast<std::size_t>(16)) throw GenerationError("at most 16 objects per scene");
  const auto quota = task_quotas(config.task_mix, config.n_samples);
  std::vector<TaskType> tasks;
  for (std::size_t t = 0; t < kNumTasks; ++t) tasks.insert(tasks.end(), quota[t], kAllTasks[t]);
  std::mt19937_64 order_rng = sample_rng(config.seed, static_cast<std::size_t>(-1));
  std::shuffle(tasks.begin(), tasks.end(), order_rng);
  return tasks;
}

std::vector<Sample> generate_dataset(const SynthConfig& config) {
  const std::vector<TaskType> tasks = dataset_tasks(config);
  std::vector<Sample> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) out.push_back(generate_sample(config, i, tasks[i]));
  return out;
}

void generate_dataset_file(const SynthConfig& config, const std::filesystem::path& path) {
  const std::vector<TaskType> tasks = dataset_tasks(config);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    for (std::size_t i = 0; i < tasks.size(); ++i) out << sample_json(generate_sample(config, i, tasks[i])).dump() << '\n';
    if (!out) throw InputError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::string out;
  for (const Sample& s : samples) {
    out += sample_json(s).dump();
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

void for_each_sample(const std::filesystem::path& path, bool with_images, const std::function<void(Sample&&)>& fn) {
  if (!std::filesystem::exists(path)) {
    throw InputError("dataset " + path.string() + " not found; run `tgvlm gen-data` first");
  }
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  const json::parser_callback_t skip_images = [](int depth, json::parse_event_t event, json& parsed) {
    return !(depth == 1 && event == json::parse_event_t::key && (parsed == "rgb" || parsed == "depth"));
  };
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    Sample s;
    try {
      const json j = with_images ? json::parse(line) : json::parse(line, skip_images);
      s = sample_from_json(j, with_images);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    fn(std::move(s));
  }
}

std::vector<Sample> read_dataset(const std::filesystem::path& path, bool with_images) {
  std::vector<Sample> out;
  for_each_sample(path, with_images, [&](Sample&& s) { out.push_back(std::move(s)); });
  return out;
}

}  // namespace tgvlm
