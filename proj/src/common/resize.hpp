#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace rosmm {

// corner-aligned bilinear resample of one plane; output(0,0) and output(OH-1,
// OW-1) sample the exact input corners, values stay within the input's range
inline std::vector<double> bilinear_resize_plane(const std::vector<double>& src, int sh, int sw, int dh, int dw) {
  if (sh <= 0 || sw <= 0 || dh <= 0 || dw <= 0) throw std::invalid_argument("bilinear_resize_plane: bad extents");
  if (static_cast<size_t>(sh) * sw != src.size()) throw std::invalid_argument("bilinear_resize_plane: size mismatch");
  std::vector<double> dst(static_cast<size_t>(dh) * dw);
  const double sy = dh > 1 ? static_cast<double>(sh - 1) / (dh - 1) : 0.0;
  const double sx = dw > 1 ? static_cast<double>(sw - 1) / (dw - 1) : 0.0;
  for (int y = 0; y < dh; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = y0 + 1 < sh ? y0 + 1 : y0;
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = x0 + 1 < sw ? x0 + 1 : x0;
      const double wx = fx - x0;
      const double top = src[static_cast<size_t>(y0) * sw + x0] * (1.0 - wx) + src[static_cast<size_t>(y0) * sw + x1] * wx;
      const double bot = src[static_cast<size_t>(y1) * sw + x0] * (1.0 - wx) + src[static_cast<size_t>(y1) * sw + x1] * wx;
      dst[static_cast<size_t>(y) * dw + x] = top * (1.0 - wy) + bot * wy;
    }
  }
  return dst;
}

}  // namespace rosmm
