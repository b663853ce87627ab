#pragma once

#include "common/image.hpp"
#include "payload/payload.hpp"

namespace rosmm::evalharness {

// 10*log10(255^2 / MSE); identical images return +infinity
double psnr(const Image& a, const Image& b);

// grayscale SSIM (ITU-R 601 luma), 11x11 Gaussian window sigma 1.5,
// C1=(0.01*255)^2, C2=(0.03*255)^2, mean over valid window positions
double ssim(const Image& a, const Image& b);

// matching bits / total
double bit_accuracy(const payload::BitPayload& sent, const payload::BitPayload& received);

}  // namespace rosmm::evalharness
