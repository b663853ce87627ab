#include "evalharness/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace rosmm::evalharness {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

std::vector<double> gray_plane(const Image& img) {
  std::vector<double> gray(static_cast<size_t>(img.height) * img.width);
  if (img.channels == 3) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        gray[static_cast<size_t>(y) * img.width + x] = luma601(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
  } else if (img.channels == 1) {
    for (size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<double>(img.pixels[i]);
  } else {
    throw std::invalid_argument("ssim: images must have 1 or 3 channels");
  }
  return gray;
}

// 11x11 Gaussian, sigma 1.5, normalized to sum 1
const std::vector<double>& ssim_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(121);
    double sum = 0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        const double dy = y - 5, dx = x - 5;
        w[y * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += w[y * 11 + x];
      }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return win;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw std::invalid_argument("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " is smaller than the 11x11 window");
  const auto ga = gray_plane(a);
  const auto gb = gray_plane(b);
  const auto& win = ssim_window();
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height; ++y)
    for (int x = 0; x + 11 <= a.width; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int wy = 0; wy < 11; ++wy)
        for (int wx = 0; wx < 11; ++wx) {
          const double w = win[wy * 11 + wx];
          mu_a += w * ga[static_cast<size_t>(y + wy) * a.width + (x + wx)];
          mu_b += w * gb[static_cast<size_t>(y + wy) * a.width + (x + wx)];
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int wy = 0; wy < 11; ++wy)
        for (int wx = 0; wx < 11; ++wx) {
          const double w = win[wy * 11 + wx];
          const double da = ga[static_cast<size_t>(y + wy) * a.width + (x + wx)] - mu_a;
          const double db = gb[static_cast<size_t>(y + wy) * a.width + (x + wx)] - mu_b;
          var_a += w * da * da;
          var_b += w * db * db;
          cov += w * da * db;
        }
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += num / den;
      ++count;
    }
  return total / count;
}

double bit_accuracy(const payload::BitPayload& sent, const payload::BitPayload& received) {
  if (sent.size() != received.size())
    throw std::invalid_argument("bit_accuracy: length mismatch, " + std::to_string(sent.size()) + " vs " +
                                std::to_string(received.size()));
  if (sent.empty()) throw std::invalid_argument("bit_accuracy: empty payloads");
  size_t match = 0;
  for (size_t i = 0; i < sent.size(); ++i)
    if (sent[i] == received[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(sent.size());
}

}  // namespace rosmm::evalharness
