#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "carrier/carrier.hpp"
#include "common/resize.hpp"
#include "common/rng.hpp"

namespace rosmm::carrier {

AttackFamily attack_family_from_name(const std::string& name) {
  if (name == "gaussian_noise") return AttackFamily::GaussianNoise;
  if (name == "brightness") return AttackFamily::Brightness;
  if (name == "random_crop") return AttackFamily::RandomCrop;
  if (name == "jpeg") return AttackFamily::Jpeg;
  if (name == "resize") return AttackFamily::Resize;
  if (name == "saturation") return AttackFamily::Saturation;
  if (name == "rotation") return AttackFamily::Rotation;
  if (name == "none") return AttackFamily::None;
  throw std::invalid_argument("unknown attack family '" + name + "'");
}

std::string attack_family_name(AttackFamily family) {
  switch (family) {
    case AttackFamily::GaussianNoise: return "gaussian_noise";
    case AttackFamily::Brightness: return "brightness";
    case AttackFamily::RandomCrop: return "random_crop";
    case AttackFamily::Jpeg: return "jpeg";
    case AttackFamily::Resize: return "resize";
    case AttackFamily::Saturation: return "saturation";
    case AttackFamily::Rotation: return "rotation";
    case AttackFamily::None: return "none";
  }
  throw std::logic_error("attack_family_name: unknown family");
}

namespace {

[[noreturn]] void reject_theta(const std::string& family, double theta, const std::string& domain) {
  throw std::invalid_argument("attack " + family + ": theta " + std::to_string(theta) + " outside domain " + domain);
}

Image attack_gaussian_noise(const Image& img, double theta, uint64_t seed) {
  if (!(theta > 0.0 && theta <= 1.0)) reject_theta("gaussian_noise", theta, "(0, 1]");
  Rng rng(seed);
  const double sigma = theta * 255.0;
  Image out(img.channels, img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = clamp_round_u8(static_cast<double>(img.pixels[i]) + sigma * rng.normal());
  return out;
}

Image attack_brightness(const Image& img, double theta) {
  if (!(theta > 0.0)) reject_theta("brightness", theta, "(0, inf)");
  Image out(img.channels, img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = clamp_round_u8(static_cast<double>(img.pixels[i]) * theta);
  return out;
}

Image attack_random_crop(const Image& img, double theta, uint64_t seed) {
  if (!(theta > 0.0 && theta <= 1.0)) reject_theta("random_crop", theta, "(0, 1]");
  const double side = std::sqrt(theta);
  const int keep_h = std::max(1, static_cast<int>(std::round(img.height * side)));
  const int keep_w = std::max(1, static_cast<int>(std::round(img.width * side)));
  Rng rng(seed);
  const int y0 = static_cast<int>(rng.below(static_cast<uint64_t>(img.height - keep_h + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<uint64_t>(img.width - keep_w + 1)));
  Image out(img.channels, img.height, img.width);  // zero-filled
  for (int c = 0; c < img.channels; ++c)
    for (int y = y0; y < y0 + keep_h; ++y)
      for (int x = x0; x < x0 + keep_w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

// standard luminance quantization table (JPEG Annex K)
constexpr int kJpegLumaTable[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

Image attack_jpeg(const Image& img, double theta) {
  if (!(theta >= 1.0 && theta <= 100.0)) reject_theta("jpeg", theta, "[1, 100]");
  const double scale = theta < 50.0 ? 5000.0 / theta : 200.0 - 2.0 * theta;
  int qtab[64];
  for (int i = 0; i < 64; ++i) {
    const int q = static_cast<int>(std::floor((kJpegLumaTable[i] * scale + 50.0) / 100.0));
    qtab[i] = std::clamp(q, 1, 255);
  }
  Image out(img.channels, img.height, img.width);
  std::vector<double> block(64), coef(64);
  for (int c = 0; c < img.channels; ++c)
    for (int by = 0; by < img.height; by += 8)
      for (int bx = 0; bx < img.width; bx += 8) {
        // edge blocks replicate border pixels, output written only in range
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by + y, img.height - 1);
            const int sx = std::min(bx + x, img.width - 1);
            block[y * 8 + x] = static_cast<double>(img.at(c, sy, sx)) - 128.0;
          }
        coef = dct2_forward(block, 8, 8);
        for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / qtab[i]) * qtab[i];
        block = dct2_inverse(coef, 8, 8);
        for (int y = 0; y < 8 && by + y < img.height; ++y)
          for (int x = 0; x < 8 && bx + x < img.width; ++x)
            out.at(c, by + y, bx + x) = clamp_round_u8(block[y * 8 + x] + 128.0);
      }
  return out;
}

Image attack_resize(const Image& img, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) reject_theta("resize", theta, "(0, 1)");
  const int dh = std::max(1, static_cast<int>(std::round(img.height * theta)));
  const int dw = std::max(1, static_cast<int>(std::round(img.width * theta)));
  Image out(img.channels, img.height, img.width);
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  std::vector<double> src(plane);
  for (int c = 0; c < img.channels; ++c) {
    for (size_t i = 0; i < plane; ++i) src[i] = static_cast<double>(img.pixels[c * plane + i]);
    const auto down = bilinear_resize_plane(src, img.height, img.width, dh, dw);
    const auto up = bilinear_resize_plane(down, dh, dw, img.height, img.width);
    for (size_t i = 0; i < plane; ++i) out.pixels[c * plane + i] = clamp_round_u8(up[i]);
  }
  return out;
}

Image attack_saturation(const Image& img, double theta) {
  if (!(theta >= 0.0)) reject_theta("saturation", theta, "[0, inf)");
  if (img.channels != 3) throw std::invalid_argument("attack saturation: needs 3 channels");
  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      const double gray = luma601(r, g, b);
      out.at(0, y, x) = clamp_round_u8(gray + theta * (r - gray));
      out.at(1, y, x) = clamp_round_u8(gray + theta * (g - gray));
      out.at(2, y, x) = clamp_round_u8(gray + theta * (b - gray));
    }
  return out;
}

Image attack_rotation(const Image& img, double theta) {
  const double rad = theta * M_PI / 180.0;
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  Image out(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // inverse map: rotate destination back by -theta
      const double dy = y - cy, dx = x - cx;
      const int sy = static_cast<int>(std::lround(cy + dy * cs - dx * sn));
      const int sx = static_cast<int>(std::lround(cx + dy * sn + dx * cs));
      if (sy < 0 || sy >= img.height || sx < 0 || sx >= img.width) continue;
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, sy, sx);
    }
  return out;
}

}  // namespace

Image apply_attack(const Image& img, const AttackSpec& spec) {
  switch (spec.family) {
    case AttackFamily::GaussianNoise: return attack_gaussian_noise(img, spec.theta, spec.seed);
    case AttackFamily::Brightness: return attack_brightness(img, spec.theta);
    case AttackFamily::RandomCrop: return attack_random_crop(img, spec.theta, spec.seed);
    case AttackFamily::Jpeg: return attack_jpeg(img, spec.theta);
    case AttackFamily::Resize: return attack_resize(img, spec.theta);
    case AttackFamily::Saturation: return attack_saturation(img, spec.theta);
    case AttackFamily::Rotation: return attack_rotation(img, spec.theta);
    case AttackFamily::None: return img;
  }
  throw std::logic_error("apply_attack: unknown family");
}

payload::BitPayload transmit(const payload::BitPayload& bits, const ChannelModel& channel) {
  switch (channel.kind) {
    case ChannelKind::Bsc: {
      if (channel.p < 0.0 || channel.p > 1.0)
        throw std::invalid_argument("transmit: bsc flip probability must be in [0, 1]");
      Rng rng(channel.seed);
      payload::BitPayload out(bits);
      for (auto& b : out)
        if (rng.uniform() < channel.p) b ^= 1;
      return out;
    }
    case ChannelKind::Burst: {
      if (channel.burst_len < 1) throw std::invalid_argument("transmit: burst length must be >= 1");
      payload::BitPayload out(bits);
      if (out.empty()) return out;
      const size_t len = std::min(static_cast<size_t>(channel.burst_len), out.size());
      Rng rng(channel.seed);
      const size_t start = static_cast<size_t>(rng.below(out.size() - len + 1));
      for (size_t i = start; i < start + len; ++i) out[i] ^= 1;
      return out;
    }
    case ChannelKind::Carrier: {
      const auto whitened = payload::whiten(bits, channel.key);
      const auto latent = embed_bits(whitened, channel.latent, channel.r, channel.perm_seed, channel.rng_seed);
      const Image container = render_latent(latent, channel.latent);
      const Image attacked = apply_attack(container, channel.attack);
      const auto inverted = invert_render(attacked);
      const auto extracted = extract_bits(inverted, channel.latent, bits.size(), channel.r, channel.perm_seed);
      return payload::whiten(extracted, channel.key);
    }
  }
  throw std::logic_error("transmit: unknown channel kind");
}

}  // namespace rosmm::carrier
