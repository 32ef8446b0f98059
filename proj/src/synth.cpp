#include "streamformer/synth.hpp"

#include <filesystem>
#include <fstream>

#include "streamformer/checkpoint.hpp"

namespace sf::synth {

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::square: return "square";
    case ShapeKind::circle: return "circle";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

const char* color_name(ColorKind c) {
  switch (c) {
    case ColorKind::red: return "red";
    case ColorKind::green: return "green";
    case ColorKind::blue: return "blue";
  }
  return "?";
}

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::up: return "up";
    case Direction::down: return "down";
  }
  return "?";
}

Direction SceneSpec::direction() const {
  if (vx < 0) return Direction::left;
  if (vx > 0) return Direction::right;
  if (vy < 0) return Direction::up;
  return Direction::down;
}

int64_t SceneSpec::bbox_extent() const {
  switch (shape) {
    case ShapeKind::square: return size;
    case ShapeKind::circle: return 2 * size + 1;
    case ShapeKind::triangle: return size;
  }
  return size;
}

std::string class_label(int64_t class_id) {
  if (class_id < 1 || class_id > kNumClasses)
    throw InputError("class_label: id " + std::to_string(class_id) + " out of range 1..9");
  const int64_t z = class_id - 1;
  return std::string(color_name(static_cast<ColorKind>(z % 3))) + " " +
         shape_name(static_cast<ShapeKind>(z / 3));
}

SceneSpec make_scene(uint64_t seed, const SynthConfig& cfg) {
  const int64_t t = cfg.frames, im = cfg.image;
  SceneSpec s;
  // stratified class assignment: consecutive seeds cycle the 9 classes
  const int64_t cls = static_cast<int64_t>(seed % 9);
  s.shape = static_cast<ShapeKind>(cls / 3);
  s.color = static_cast<ColorKind>(cls % 3);

  Rng rng(splitmix64(seed));
  s.size = 6 + rng.uniform_int(5);  // 6..10 px
  if (s.bbox_extent() + 4 > im)
    throw InputError("make_scene: shape too large for image " + std::to_string(im));

  if (cfg.full_interval) {
    s.t_on = 0;
    s.t_off = t;
  } else {
    s.t_on = rng.uniform_int(t);                       // 0..T-1
    s.t_off = s.t_on + 1 + rng.uniform_int(t - s.t_on);  // t_on < t_off <= T
  }

  const int64_t speed = 1 + rng.uniform_int(2);  // 1..2 px/frame
  const int64_t axis = rng.uniform_int(2), sign = rng.uniform_int(2) ? 1 : -1;
  s.vx = axis == 0 ? sign * speed : 0;
  s.vy = axis == 1 ? sign * speed : 0;

  // the whole visible path must stay inside the frame
  const int64_t span = s.t_off - 1 - s.t_on;
  const int64_t ext = s.bbox_extent();
  auto place = [&](int64_t vel) {
    const int64_t travel = vel * span;
    const int64_t lo = std::max<int64_t>(0, -travel);
    const int64_t hi = im - ext - std::max<int64_t>(0, travel);
    return lo + rng.uniform_int(hi - lo + 1);
  };
  s.x0 = place(s.vx);
  s.y0 = place(s.vy);
  return s;
}

namespace {

bool inside_shape(const SceneSpec& s, int64_t lx, int64_t ly) {
  switch (s.shape) {
    case ShapeKind::square:
      return lx >= 0 && lx < s.size && ly >= 0 && ly < s.size;
    case ShapeKind::circle: {
      // pixel centers within radius of the bbox center; integer arithmetic
      const int64_t dx = lx - s.size, dy = ly - s.size;
      return dx * dx + dy * dy <= s.size * s.size;
    }
    case ShapeKind::triangle:
      // right triangle: row ly spans columns 0..ly, size*(size+1)/2 pixels
      return ly >= 0 && ly < s.size && lx >= 0 && lx <= ly;
  }
  return false;
}

}  // namespace

std::vector<int32_t> rasterize(const SceneSpec& scene, int64_t frames, int64_t image) {
  std::vector<int32_t> mask(static_cast<size_t>(frames * image * image), 0);
  const int32_t id = static_cast<int32_t>(scene.class_id());
  const int64_t ext = scene.bbox_extent();
  for (int64_t t = scene.t_on; t < scene.t_off; ++t) {
    const int64_t ox = scene.x0 + scene.vx * (t - scene.t_on);
    const int64_t oy = scene.y0 + scene.vy * (t - scene.t_on);
    for (int64_t ly = 0; ly < ext; ++ly) {
      const int64_t py = oy + ly;
      if (py < 0 || py >= image) continue;
      for (int64_t lx = 0; lx < ext; ++lx) {
        const int64_t px = ox + lx;
        if (px < 0 || px >= image) continue;
        if (inside_shape(scene, lx, ly))
          mask[static_cast<size_t>((t * image + py) * image + px)] = id;
      }
    }
  }
  return mask;
}

// ---- dump / load -------------------------------------------------------------

namespace fs = std::filesystem;

void dump_sample(const std::string& dir, const SyntheticSample<float>& s) {
  fs::create_directories(dir);
  const int64_t t = s.clip.shape()[0], im = s.clip.shape()[1];
  {
    std::ofstream m(fs::path(dir) / "manifest.txt");
    m << "streamformer-sample v1\n";
    m << "frames " << t << "\n";
    m << "image " << im << "\n";
    m << "class_id " << s.class_id << "\n";
    m << "caption " << s.caption << "\n";
    m << "interval " << s.interval.start << " " << s.interval.end << "\n";
    m << "frame_labels";
    for (int32_t l : s.frame_labels) m << " " << l;
    m << "\n";
  }
  {
    std::ofstream c(fs::path(dir) / "clip.f32", std::ios::binary);
    ckpt::write_le(c, s.clip.data(), s.clip.numel());
  }
  {
    std::ofstream mk(fs::path(dir) / "mask.i32", std::ios::binary);
    ckpt::write_le(mk, s.mask.data(), static_cast<int64_t>(s.mask.size()));
  }
}

SyntheticSample<float> load_sample(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.txt");
  if (!m) throw ParseError("load_sample: missing manifest in " + dir);
  std::string header;
  std::getline(m, header);
  if (header != "streamformer-sample v1") throw ParseError("load_sample: bad header '" + header + "'");
  SyntheticSample<float> s;
  int64_t frames = -1, image = -1;
  std::string line;
  while (std::getline(m, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "frames") is >> frames;
    else if (key == "image") is >> image;
    else if (key == "class_id") is >> s.class_id;
    else if (key == "caption") {
      std::getline(is, s.caption);
      if (!s.caption.empty() && s.caption.front() == ' ') s.caption.erase(0, 1);
    } else if (key == "interval") {
      is >> s.interval.start >> s.interval.end;
    } else if (key == "frame_labels") {
      int32_t v;
      while (is >> v) s.frame_labels.push_back(v);
    } else if (!key.empty()) {
      throw ParseError("load_sample: unknown manifest key '" + key + "'");
    }
  }
  if (frames <= 0 || image <= 0) throw ParseError("load_sample: manifest missing dimensions");
  s.clip = Tensor<float>({frames, image, image, 3});
  {
    std::ifstream c(fs::path(dir) / "clip.f32", std::ios::binary);
    if (!c) throw ParseError("load_sample: missing clip payload");
    ckpt::read_le(c, s.clip.data(), s.clip.numel());
  }
  s.mask.resize(static_cast<size_t>(frames * image * image));
  {
    std::ifstream mk(fs::path(dir) / "mask.i32", std::ios::binary);
    if (!mk) throw ParseError("load_sample: missing mask payload");
    ckpt::read_le(mk, s.mask.data(), static_cast<int64_t>(s.mask.size()));
  }
  return s;
}

}  // namespace sf::synth
