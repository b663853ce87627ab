#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common/image.hpp"
#include "payload/payload.hpp"

namespace rosmm::carrier {

struct LatentShape {
  int channels = 3;
  int height = 64;
  int width = 64;

  int64_t cells() const { return static_cast<int64_t>(channels) * height * width; }
};

inline constexpr double kRenderScale = 28.0;

// Each (whitened) bit claims r cells of a seeded keyed permutation of the
// latent; claimed cells are half-normal samples carrying the bit's sign,
// the rest are standard normal filler.
std::vector<double> embed_bits(const payload::BitPayload& bits, LatentShape shape, int r, uint64_t perm_seed,
                               uint64_t rng_seed);

// soft majority vote: sum the r cells of each bit, positive sum -> 1
payload::BitPayload extract_bits(const std::vector<double>& values, LatentShape shape, size_t n_bits, int r,
                                 uint64_t perm_seed);

// per channel: pixels = clamp_round(128 + scale * inverse-DCT(coefficients));
// the transform is the full-frame orthonormal 2-D DCT
Image render_latent(const std::vector<double>& values, LatentShape shape, double scale = kRenderScale);
std::vector<double> invert_render(const Image& img, double scale = kRenderScale);

// orthonormal full-frame 2-D DCT of one plane (row-major h*w)
std::vector<double> dct2_forward(const std::vector<double>& plane, int h, int w);
std::vector<double> dct2_inverse(const std::vector<double>& coef, int h, int w);

enum class AttackFamily { GaussianNoise, Brightness, RandomCrop, Jpeg, Resize, Saturation, Rotation, None };

struct AttackSpec {
  AttackFamily family = AttackFamily::None;
  double theta = 0.0;
  uint64_t seed = 0;
};

AttackFamily attack_family_from_name(const std::string& name);
std::string attack_family_name(AttackFamily family);

Image apply_attack(const Image& img, const AttackSpec& spec);

enum class ChannelKind { Bsc, Burst, Carrier };

struct ChannelModel {
  ChannelKind kind = ChannelKind::Bsc;
  uint64_t seed = 0;

  // bsc
  double p = 0.0;
  // burst
  int burst_len = 1;
  // carrier
  LatentShape latent;
  AttackSpec attack;
  uint64_t key = 0;
  int r = 8;
  uint64_t perm_seed = 0;
  uint64_t rng_seed = 0;
};

// bsc: independent seeded flips; burst: one contiguous seeded run flipped;
// carrier: whiten -> embed -> render -> attack -> invert -> extract -> unwhiten
payload::BitPayload transmit(const payload::BitPayload& bits, const ChannelModel& channel);

}  // namespace rosmm::carrier
