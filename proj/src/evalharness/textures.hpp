#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common/image.hpp"

namespace rosmm::evalharness {

struct TextureSpec {
  int count = 500;
  int image_size = 64;
  uint64_t seed = 1;
};

// one procedural RGB texture: a seeded blend of smooth gradients, low
// frequency stripes, blurred noise fields, and soft-edged shapes
Image make_texture(int size, uint64_t seed);

// deterministic dataset; asserts the dataset mean pixel lands in [64, 192]
std::vector<Image> gen_textures(const TextureSpec& spec);

// writes <index>.ppm files with zero-padded names into out_dir
void gen_texture_dataset(const TextureSpec& spec, const std::string& out_dir);

// sorted .ppm files from a directory
std::vector<Image> load_ppm_dir(const std::string& dir, std::vector<std::string>* names = nullptr);

}  // namespace rosmm::evalharness
