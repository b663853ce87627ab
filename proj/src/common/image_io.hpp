#pragma once

#include <string>

#include "common/image.hpp"

namespace rosmm {

// binary PPM (P6, maxval 255); planar Image <-> interleaved file layout
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

}  // namespace rosmm
