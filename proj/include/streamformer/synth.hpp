#pragma once

#include <string>
#include <vector>

#include "streamformer/losses.hpp"
#include "streamformer/tensor.hpp"
#include "streamformer/text.hpp"

// Deterministic moving-shape videos with analytically exact ground truth at
// all three granularities. Geometry is integer-only and colors are exact
// rational floats, so batches are bit-identical across runs and platforms.
// The mask is rasterized first and the clip is colored from it: one source
// of truth, no rendering/labeling drift.

namespace sf::synth {

enum class ShapeKind { square = 0, circle = 1, triangle = 2 };
enum class ColorKind { red = 0, green = 1, blue = 2 };
enum class Direction { left, right, up, down };

const char* shape_name(ShapeKind s);
const char* color_name(ColorKind c);
const char* direction_name(Direction d);

struct SceneSpec {
  ShapeKind shape;
  ColorKind color;
  int64_t size;        // px (square side, circle radius, triangle height)
  int64_t x0, y0;      // top-left of the bounding box at t_on
  int64_t vx, vy;      // px/frame, axis-aligned (one of them is 0)
  int64_t t_on, t_off; // visible span [t_on, t_off)

  // 1..9; 0 is reserved for background
  int64_t class_id() const { return static_cast<int64_t>(shape) * 3 + static_cast<int64_t>(color) + 1; }
  Direction direction() const;
  int64_t bbox_extent() const;  // bounding box side length
};

struct SynthConfig {
  int64_t frames = 8;
  int64_t image = 32;
  // global tasks see the action through the whole clip; temporal/pixel
  // tasks get proper sub-intervals
  bool full_interval = false;
};

// class ids 1..9 map to "{color} {shape}"
constexpr int64_t kNumClasses = 9;
std::string class_label(int64_t class_id);

template <typename T>
struct SyntheticSample {
  Tensor<T> clip;  // [T, H, W, 3], values in [0, 1]
  SceneSpec scene;
  int64_t class_id;                  // 1..9
  std::string caption;               // "a {color} {shape} moving {direction}"
  std::vector<int32_t> frame_labels; // [T], 0 = background
  FrameInterval interval;            // == visible span
  std::vector<int32_t> mask;         // [T*H*W], 0 or class_id
};

// integer rasterization of the scene into a [T*H*W] class-id grid
std::vector<int32_t> rasterize(const SceneSpec& scene, int64_t frames, int64_t image);

SceneSpec make_scene(uint64_t seed, const SynthConfig& cfg);

template <typename T>
SyntheticSample<T> make_sample(uint64_t seed, const SynthConfig& cfg) {
  SceneSpec scene = make_scene(seed, cfg);
  SyntheticSample<T> s;
  s.scene = scene;
  s.class_id = scene.class_id();
  s.caption = std::string("a ") + color_name(scene.color) + " " + shape_name(scene.shape) +
              " moving " + direction_name(scene.direction());
  s.mask = rasterize(scene, cfg.frames, cfg.image);
  s.interval = {scene.t_on, scene.t_off};
  s.frame_labels.assign(static_cast<size_t>(cfg.frames), 0);
  for (int64_t t = scene.t_on; t < scene.t_off; ++t)
    s.frame_labels[static_cast<size_t>(t)] = static_cast<int32_t>(s.class_id);

  s.clip = Tensor<T>({cfg.frames, cfg.image, cfg.image, 3});
  T* px = s.clip.data();
  const int64_t chan = static_cast<int64_t>(scene.color);
  for (size_t i = 0; i < s.mask.size(); ++i) {
    if (s.mask[i] != 0) px[static_cast<int64_t>(i) * 3 + chan] = T(1);
  }
  return s;
}

template <typename T>
struct TaskBatch {
  Task task;
  std::vector<SyntheticSample<T>> samples;
};

// One mini-batch for exactly one task. Sample k of the batch is derived from
// splitmix64(seed ^ k), so a batch is a pure function of (seed, config, task).
template <typename T>
TaskBatch<T> generate(uint64_t seed, const SynthConfig& cfg, Task task, int64_t batch) {
  TaskBatch<T> out;
  out.task = task;
  SynthConfig c = cfg;
  c.full_interval = (task == Task::AR || task == Task::VTR);
  out.samples.reserve(static_cast<size_t>(batch));
  for (int64_t k = 0; k < batch; ++k)
    out.samples.push_back(make_sample<T>(splitmix64(seed ^ static_cast<uint64_t>(k * 2 + 1)), c));
  return out;
}

// ---- sample dump / load (raw little-endian payloads + text manifest) -------

void dump_sample(const std::string& dir, const SyntheticSample<float>& s);
SyntheticSample<float> load_sample(const std::string& dir);

}  // namespace sf::synth
