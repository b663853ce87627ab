#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoenc/codec.hpp"
#include "carrier/carrier.hpp"
#include "common/image.hpp"
#include "common/rng.hpp"
#include "ndgrad/adam.hpp"
#include "ndgrad/checkpoint.hpp"
#include "ndgrad/layers.hpp"
#include "payload/payload.hpp"

namespace rosmm::restore {

// Three stride-2 down blocks, three stride-2 up blocks, one skip from the
// first down block's output into the last up block's input, and a final
// 3-channel projection clamped to [0,1]. Input sides must divide by 8.
template <typename T>
struct RestorerModel {
  int base_width = 16;
  std::vector<autoenc::ConvBlock<T>> down;  // 3 blocks
  std::vector<autoenc::ConvBlock<T>> up;    // 3 blocks
  ndgrad::Layer<T> final_proj;

  std::vector<ndgrad::TensorPtr<T>> trainable() const {
    std::vector<ndgrad::TensorPtr<T>> out;
    auto take = [&out](const ndgrad::Layer<T>& l) {
      for (auto& p : l.trainable()) out.push_back(p);
    };
    for (const auto& b : down) {
      take(b.conv);
      take(b.bn);
    }
    for (const auto& b : up) {
      take(b.conv);
      take(b.bn);
    }
    take(final_proj);
    return out;
  }

  ndgrad::TensorPtr<T> forward(ndgrad::Tape<T>* tape, const ndgrad::TensorPtr<T>& x, bool training) const {
    if (x->shape.size() != 4 || x->shape[1] != 3)
      throw std::invalid_argument("restorer: expected Nx3xHxW input, got " + ndgrad::shape_str(x->shape));
    if (x->shape[2] % 8 != 0 || x->shape[3] % 8 != 0)
      throw std::invalid_argument("restorer: spatial dims must divide by 8, got " + ndgrad::shape_str(x->shape));
    auto d1 = ndgrad::relu(tape, down[0].bn.forward(tape, down[0].conv.forward(tape, x, training), training));
    auto d2 = ndgrad::relu(tape, down[1].bn.forward(tape, down[1].conv.forward(tape, d1, training), training));
    auto d3 = ndgrad::relu(tape, down[2].bn.forward(tape, down[2].conv.forward(tape, d2, training), training));
    auto u1 = ndgrad::relu(tape, up[0].bn.forward(tape, up[0].conv.forward(tape, d3, training), training));
    auto u2 = ndgrad::relu(tape, up[1].bn.forward(tape, up[1].conv.forward(tape, u1, training), training));
    auto cat = ndgrad::concat_channels(tape, u2, d1);
    auto u3 = ndgrad::relu(tape, up[2].bn.forward(tape, up[2].conv.forward(tape, cat, training), training));
    return ndgrad::clamp01(tape, final_proj.forward(tape, u3, training));
  }
};

template <typename T>
RestorerModel<T> make_restorer(uint64_t seed, int base_width = 16) {
  if (base_width < 1) throw std::invalid_argument("make_restorer: base width must be positive");
  Rng rng(mix_seed(seed, 0x726573746f726572ULL));
  RestorerModel<T> m;
  m.base_width = base_width;
  const int w0 = base_width, w1 = base_width * 2, w2 = base_width * 4;
  m.down.push_back({ndgrad::make_conv<T>(3, w0, 3, 2, 1, rng), ndgrad::make_batch_norm<T>(w0)});
  m.down.push_back({ndgrad::make_conv<T>(w0, w1, 3, 2, 1, rng), ndgrad::make_batch_norm<T>(w1)});
  m.down.push_back({ndgrad::make_conv<T>(w1, w2, 3, 2, 1, rng), ndgrad::make_batch_norm<T>(w2)});
  m.up.push_back({ndgrad::make_conv_transpose<T>(w2, w1, 3, 2, 1, 1, rng), ndgrad::make_batch_norm<T>(w1)});
  m.up.push_back({ndgrad::make_conv_transpose<T>(w1, w0, 3, 2, 1, 1, rng), ndgrad::make_batch_norm<T>(w0)});
  // skip concat doubles the channel count entering the last up block
  m.up.push_back({ndgrad::make_conv_transpose<T>(w0 * 2, w0, 3, 2, 1, 1, rng), ndgrad::make_batch_norm<T>(w0)});
  m.final_proj = ndgrad::make_conv<T>(w0, 3, 3, 1, 1, rng);
  return m;
}

template <typename T>
Image restore_image(const RestorerModel<T>& m, const Image& img) {
  auto out = m.forward(nullptr, image_to_tensor<T>(img), false);
  return tensor_to_image(out);
}

// ---- training -----------------------------------------------------------------

struct CorruptionSampler {
  double lo = 0.0;
  double hi = 0.2;
  uint64_t seed = 0;

  void validate() const {
    if (!(lo >= 0.0 && lo <= hi && hi < 0.5))
      throw std::invalid_argument("corruption sampler: need 0 <= lo <= hi < 0.5, got [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
  }
};

struct RestorerTrainStats {
  std::vector<double> epoch_mean_loss;
};

// Pairs are built through the frozen codec: the clean decode is the target
// and the decode of channel-corrupted bits is the input. A slice of pairs is
// kept exactly clean so restoration learns to leave good decodes alone.
template <typename T>
RestorerTrainStats train_restorer(RestorerModel<T>& m, autoenc::CodecModel<T>& codec,
                                  const std::vector<Image>& images, const CorruptionSampler& sampler, int epochs,
                                  uint64_t seed, int batch_size = 16, T lr = T(1e-3)) {
  sampler.validate();
  if (images.empty()) throw std::invalid_argument("train_restorer: empty dataset");
  if (epochs < 1) throw std::invalid_argument("train_restorer: epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("train_restorer: batch size must be >= 2");

  // codec is frozen: cache payload and clean decode per image
  std::vector<payload::BitPayload> payloads;
  std::vector<Image> targets;
  payloads.reserve(images.size());
  targets.reserve(images.size());
  for (const auto& img : images) {
    auto cells = autoenc::encode_image(codec, img);
    auto qg = vq::quantize_nearest(cells, codec.codebook);
    payloads.push_back(payload::pack_indices(qg.indices));
    targets.push_back(autoenc::decode_indices(codec, qg.indices));
  }

  ndgrad::Adam<T> opt(m.trainable(), lr);
  RestorerTrainStats stats;
  const size_t n_bits = payloads[0].size();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(seed, static_cast<uint64_t>(epoch), 0x7368756666ULL));
    auto order = shuffle_rng.permutation(static_cast<uint32_t>(images.size()));
    Rng pair_rng(mix_seed(sampler.seed ^ seed, static_cast<uint64_t>(epoch), 0x70616972ULL));

    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start + 2 <= order.size(); start += batch_size) {
      const size_t end = std::min(order.size(), start + batch_size);
      if (end - start < 2) break;
      std::vector<Image> corrupted, clean;
      for (size_t i = start; i < end; ++i) {
        const uint32_t idx = order[i];
        double ber = 0.0;
        if (pair_rng.uniform() >= 0.15) {  // keep a clean slice
          const double v = pair_rng.uniform();
          ber = sampler.lo + (sampler.hi - sampler.lo) * v * v;
        }
        const bool use_burst = pair_rng.uniform() < 0.5;
        const uint64_t chan_seed = pair_rng.next_u64();
        payload::BitPayload received = payloads[idx];
        if (ber > 0.0) {
          carrier::ChannelModel ch;
          ch.seed = chan_seed;
          if (use_burst) {
            ch.kind = carrier::ChannelKind::Burst;
            ch.burst_len = std::max(1, static_cast<int>(std::round(ber * static_cast<double>(n_bits))));
          } else {
            ch.kind = carrier::ChannelKind::Bsc;
            ch.p = ber;
          }
          received = carrier::transmit(payloads[idx], ch);
        }
        const auto indices = payload::unpack_indices(received, codec.cells_per_image());
        corrupted.push_back(autoenc::decode_indices(codec, indices));
        clean.push_back(targets[idx]);
      }
      auto x = images_to_tensor<T>(corrupted);
      auto y = images_to_tensor<T>(clean);

      ndgrad::Tape<T> tape;
      auto restored = m.forward(&tape, x, true);
      auto l1 = ndgrad::l1_loss(&tape, restored, y);
      auto lf = autoenc::feature_loss(&tape, codec.extractor, y, restored);
      auto total = ndgrad::weighted_sum<T>(&tape, {l1, lf}, {T(1), T(0.5)});
      if (!std::isfinite(static_cast<double>(total->data[0])))
        throw std::runtime_error("train_restorer: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batches));
      opt.zero_grad();
      tape.backward(total);
      opt.step();
      epoch_loss += static_cast<double>(total->data[0]);
      ++batches;
    }
    stats.epoch_mean_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
  }
  return stats;
}

// ---- bit refinement -------------------------------------------------------------

struct RefineResult {
  payload::BitPayload bits;
  Image restored;
};

// unpack -> decode -> restore -> re-encode -> quantize -> pack, iterated up
// to `rounds` times or until the bits reach a fixed point
template <typename T>
RefineResult refine_bits(const payload::BitPayload& bits, autoenc::CodecModel<T>& codec, const RestorerModel<T>& m,
                         int rounds) {
  if (rounds < 1) throw std::invalid_argument("refine_bits: rounds must be >= 1");
  RefineResult result;
  result.bits = bits;
  for (int round = 0; round < rounds; ++round) {
    const auto indices = payload::unpack_indices(result.bits, codec.cells_per_image());
    const Image decoded = autoenc::decode_indices(codec, indices);
    result.restored = restore_image(m, decoded);
    auto cells = autoenc::encode_image(codec, result.restored);
    auto qg = vq::quantize_nearest(cells, codec.codebook);
    auto next = payload::pack_indices(qg.indices);
    const bool fixed_point = next == result.bits;
    result.bits = std::move(next);
    if (fixed_point) break;
  }
  return result;
}

// ---- persistence (float models) ---------------------------------------------------

inline void save_restorer_records(ndgrad::Checkpoint& cp, const RestorerModel<float>& m) {
  cp.put_scalar("restorer.config.base_width", m.base_width);
  for (size_t i = 0; i < m.down.size(); ++i) {
    autoenc::detail::save_layer(cp, m.down[i].conv, "restorer.down." + std::to_string(i) + ".conv");
    autoenc::detail::save_layer(cp, m.down[i].bn, "restorer.down." + std::to_string(i) + ".bn");
  }
  for (size_t i = 0; i < m.up.size(); ++i) {
    autoenc::detail::save_layer(cp, m.up[i].conv, "restorer.up." + std::to_string(i) + ".convt");
    autoenc::detail::save_layer(cp, m.up[i].bn, "restorer.up." + std::to_string(i) + ".bn");
  }
  autoenc::detail::save_layer(cp, m.final_proj, "restorer.final");
}

inline void save_restorer(const RestorerModel<float>& m, const std::string& path) {
  ndgrad::Checkpoint cp;
  save_restorer_records(cp, m);
  cp.save(path);
}

inline RestorerModel<float> load_restorer_records(const ndgrad::Checkpoint& cp) {
  const int base_width = static_cast<int>(cp.scalar("restorer.config.base_width"));
  RestorerModel<float> m = make_restorer<float>(1, base_width);
  for (size_t i = 0; i < m.down.size(); ++i) {
    autoenc::detail::load_layer(cp, m.down[i].conv, "restorer.down." + std::to_string(i) + ".conv");
    autoenc::detail::load_layer(cp, m.down[i].bn, "restorer.down." + std::to_string(i) + ".bn");
  }
  for (size_t i = 0; i < m.up.size(); ++i) {
    autoenc::detail::load_layer(cp, m.up[i].conv, "restorer.up." + std::to_string(i) + ".convt");
    autoenc::detail::load_layer(cp, m.up[i].bn, "restorer.up." + std::to_string(i) + ".bn");
  }
  autoenc::detail::load_layer(cp, m.final_proj, "restorer.final");
  return m;
}

inline RestorerModel<float> load_restorer(const std::string& path) {
  return load_restorer_records(ndgrad::Checkpoint::load(path));
}

}  // namespace rosmm::restore
