#include "evalharness/textures.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "common/image_io.hpp"
#include "common/resize.hpp"
#include "common/rng.hpp"

namespace rosmm::evalharness {

namespace {

using Field = std::vector<double>;  // 3 * size * size, values in [0, 255]

double pick_level(Rng& rng) { return rng.uniform_range(40.0, 216.0); }

Field gen_gradient(int size, Rng& rng) {
  Field f(static_cast<size_t>(3) * size * size);
  for (int c = 0; c < 3; ++c) {
    const double base = pick_level(rng);
    const double gx = rng.uniform_range(-120.0, 120.0);
    const double gy = rng.uniform_range(-120.0, 120.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double v = base + gx * x / size + gy * y / size;
        f[(static_cast<size_t>(c) * size + y) * size + x] = std::clamp(v, 0.0, 255.0);
      }
  }
  return f;
}

Field gen_stripes(int size, Rng& rng) {
  Field f(static_cast<size_t>(3) * size * size);
  const double angle = rng.uniform_range(0.0, M_PI);
  const double freq = rng.uniform_range(0.5, 3.0);
  const double phase = rng.uniform_range(0.0, 2.0 * M_PI);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int c = 0; c < 3; ++c) {
    const double lo = pick_level(rng);
    const double hi = pick_level(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double t = (ca * x + sa * y) / size;
        const double s = 0.5 + 0.5 * std::sin(2.0 * M_PI * freq * t + phase);
        f[(static_cast<size_t>(c) * size + y) * size + x] = lo + (hi - lo) * s;
      }
  }
  return f;
}

Field gen_blurred_noise(int size, Rng& rng) {
  // low-resolution noise upsampled bilinearly stays smooth by construction
  const int low = std::max(2, size / 8);
  std::vector<double> noise(static_cast<size_t>(low) * low);
  for (auto& v : noise) v = rng.uniform();
  const auto up = bilinear_resize_plane(noise, low, low, size, size);
  Field f(static_cast<size_t>(3) * size * size);
  for (int c = 0; c < 3; ++c) {
    const double lo = pick_level(rng);
    const double hi = pick_level(rng);
    for (size_t i = 0; i < up.size(); ++i) f[static_cast<size_t>(c) * size * size + i] = lo + (hi - lo) * up[i];
  }
  return f;
}

Field gen_shapes(int size, Rng& rng) {
  Field f = gen_gradient(size, rng);
  const int shapes = 2 + static_cast<int>(rng.below(3));
  for (int s = 0; s < shapes; ++s) {
    const double cy = rng.uniform_range(0.1, 0.9) * size;
    const double cx = rng.uniform_range(0.1, 0.9) * size;
    const double radius = rng.uniform_range(size / 8.0, size / 3.0);
    const double soft = radius * 0.35;
    double color[3];
    for (double& c : color) c = pick_level(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx));
        double alpha = 0.0;
        if (d <= radius - soft)
          alpha = 1.0;
        else if (d < radius + soft) {
          const double t = (radius + soft - d) / (2.0 * soft);
          alpha = t * t * (3.0 - 2.0 * t);  // smoothstep edge
        }
        if (alpha <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = f[(static_cast<size_t>(c) * size + y) * size + x];
          v = v * (1.0 - alpha) + color[c] * alpha;
        }
      }
  }
  return f;
}

Field gen_kind(int kind, int size, Rng& rng) {
  switch (kind) {
    case 0: return gen_gradient(size, rng);
    case 1: return gen_stripes(size, rng);
    case 2: return gen_blurred_noise(size, rng);
    default: return gen_shapes(size, rng);
  }
}

}  // namespace

Image make_texture(int size, uint64_t seed) {
  if (size < 16) throw std::invalid_argument("make_texture: size must be >= 16");
  Rng rng(seed);
  const int kind_a = static_cast<int>(rng.below(4));
  const int kind_b = static_cast<int>(rng.below(4));
  const double w = rng.uniform_range(0.55, 0.9);
  const Field a = gen_kind(kind_a, size, rng);
  const Field b = gen_kind(kind_b, size, rng);
  Image img(3, size, size);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = clamp_round_u8(a[i] * w + b[i] * (1.0 - w));
  return img;
}

std::vector<Image> gen_textures(const TextureSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("gen_textures: count must be >= 1");
  std::vector<Image> out;
  out.reserve(spec.count);
  double mean = 0.0;
  for (int i = 0; i < spec.count; ++i) {
    out.push_back(make_texture(spec.image_size, mix_seed(spec.seed, static_cast<uint64_t>(i), 0x74657874ULL)));
    for (uint8_t p : out.back().pixels) mean += p;
  }
  mean /= static_cast<double>(spec.count) * out[0].pixels.size();
  if (mean < 64.0 || mean > 192.0)
    throw std::runtime_error("gen_textures: dataset mean pixel " + std::to_string(mean) +
                             " outside [64, 192], generator drifted degenerate");
  return out;
}

void gen_texture_dataset(const TextureSpec& spec, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("gen_texture_dataset: cannot create '" + out_dir + "': " + ec.message());
  const auto images = gen_textures(spec);
  for (size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    write_ppm((std::filesystem::path(out_dir) / name).string(), images[i]);
  }
}

std::vector<Image> load_ppm_dir(const std::string& dir, std::vector<std::string>* names) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("load_ppm_dir: no .ppm files in '" + dir + "'");
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.push_back(read_ppm(f));
    if (names) names->push_back(std::filesystem::path(f).stem().string());
  }
  return images;
}

}  // namespace rosmm::evalharness
