#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "common/image.hpp"
#include "common/rng.hpp"
#include "ndgrad/adam.hpp"
#include "ndgrad/checkpoint.hpp"
#include "ndgrad/layers.hpp"
#include "ndgrad/tape.hpp"
#include "vq/vq.hpp"

namespace rosmm::autoenc {

struct CodecConfig {
  int image_size = 64;
  int grid = 8;
  int codebook_size = 256;
  int dim = 64;
  int base_width = 16;
  double alpha = 1.0;   // embedding-loss weight
  double beta = 0.25;   // commitment-loss weight
  uint64_t extractor_seed = 0;

  int num_blocks() const {
    if (image_size < grid || grid < 1) throw std::invalid_argument("codec config: grid larger than image");
    int ratio = image_size / grid;
    if (ratio * grid != image_size) throw std::invalid_argument("codec config: image size not a grid multiple");
    int n = 0;
    while (ratio > 1) {
      if (ratio % 2 != 0) throw std::invalid_argument("codec config: image/grid ratio must be a power of two");
      ratio /= 2;
      ++n;
    }
    if (n < 1) throw std::invalid_argument("codec config: need at least one downsampling block");
    return n;
  }

  int block_width(int i) const { return base_width << i; }
};

// fixed seeded conv stack; taps after each ReLU feed the feature loss
template <typename T>
struct FeatureExtractor {
  std::vector<ndgrad::Layer<T>> convs;

  static FeatureExtractor<T> make(uint64_t seed) {
    Rng rng(seed);
    FeatureExtractor<T> fx;
    fx.convs.push_back(ndgrad::make_conv<T>(3, 8, 3, 1, 1, rng));
    fx.convs.push_back(ndgrad::make_conv<T>(8, 8, 3, 2, 1, rng));
    fx.convs.push_back(ndgrad::make_conv<T>(8, 8, 3, 2, 1, rng));
    for (auto& l : fx.convs) {
      l.weight->requires_grad = false;
      l.bias->requires_grad = false;
    }
    return fx;
  }

  std::vector<ndgrad::TensorPtr<T>> taps(ndgrad::Tape<T>* tape, const ndgrad::TensorPtr<T>& x) const {
    std::vector<ndgrad::TensorPtr<T>> out;
    auto h = x;
    for (const auto& l : convs) {
      h = ndgrad::relu(tape, l.forward(tape, h, false));
      out.push_back(h);
    }
    return out;
  }
};

// sum over taps of mean absolute feature difference
template <typename T>
ndgrad::TensorPtr<T> feature_loss(ndgrad::Tape<T>* tape, const FeatureExtractor<T>& fx,
                                  const ndgrad::TensorPtr<T>& real, const ndgrad::TensorPtr<T>& fake) {
  auto real_taps = fx.taps(nullptr, ndgrad::detach(real));
  auto fake_taps = fx.taps(tape, fake);
  std::vector<ndgrad::TensorPtr<T>> terms;
  for (size_t k = 0; k < fake_taps.size(); ++k)
    terms.push_back(ndgrad::l1_loss(tape, fake_taps[k], real_taps[k]));
  return ndgrad::weighted_sum(tape, terms, std::vector<T>(terms.size(), T(1)));
}

template <typename T>
struct ConvBlock {
  ndgrad::Layer<T> conv;
  ndgrad::Layer<T> bn;
};

template <typename T>
struct CodecModel {
  CodecConfig cfg;
  std::vector<ConvBlock<T>> enc_blocks;
  ndgrad::Layer<T> enc_proj;  // 1x1 conv to D channels
  ndgrad::Layer<T> dec_proj;  // 1x1 conv from D channels
  std::vector<ConvBlock<T>> dec_blocks;
  ndgrad::Layer<T> dec_final;  // transposed conv to 3 channels
  vq::Codebook<T> codebook;
  FeatureExtractor<T> extractor;

  int cells_per_image() const { return cfg.grid * cfg.grid; }

  std::vector<ndgrad::TensorPtr<T>> trainable() const {
    std::vector<ndgrad::TensorPtr<T>> out;
    auto take = [&out](const ndgrad::Layer<T>& l) {
      for (auto& p : l.trainable()) out.push_back(p);
    };
    for (const auto& b : enc_blocks) {
      take(b.conv);
      take(b.bn);
    }
    take(enc_proj);
    take(dec_proj);
    for (const auto& b : dec_blocks) {
      take(b.conv);
      take(b.bn);
    }
    take(dec_final);
    out.push_back(codebook.entries);
    return out;
  }

  // image batch in [0,1] -> latent rows (N*grid*grid, D)
  ndgrad::TensorPtr<T> encode(ndgrad::Tape<T>* tape, const ndgrad::TensorPtr<T>& x, bool training) const {
    if (x->shape.size() != 4 || x->shape[1] != 3 || x->shape[2] != cfg.image_size || x->shape[3] != cfg.image_size)
      throw std::invalid_argument("encode: expected Nx3x" + std::to_string(cfg.image_size) + "x" +
                                  std::to_string(cfg.image_size) + " input, got " + ndgrad::shape_str(x->shape));
    auto h = x;
    for (const auto& b : enc_blocks)
      h = ndgrad::relu(tape, b.bn.forward(tape, b.conv.forward(tape, h, training), training));
    h = enc_proj.forward(tape, h, training);
    return ndgrad::nchw_to_cells(tape, h);
  }

  // latent rows -> image batch in [0,1]
  ndgrad::TensorPtr<T> decode(ndgrad::Tape<T>* tape, const ndgrad::TensorPtr<T>& cells, int batch,
                              bool training) const {
    if (cells->shape.size() != 2 || cells->shape[1] != cfg.dim ||
        cells->shape[0] != batch * cells_per_image())
      throw std::invalid_argument("decode: expected (" + std::to_string(batch * cells_per_image()) + ", " +
                                  std::to_string(cfg.dim) + ") cells, got " + ndgrad::shape_str(cells->shape));
    auto h = ndgrad::cells_to_nchw(tape, cells, batch, cfg.dim, cfg.grid, cfg.grid);
    h = dec_proj.forward(tape, h, training);
    for (const auto& b : dec_blocks)
      h = ndgrad::relu(tape, b.bn.forward(tape, b.conv.forward(tape, h, training), training));
    h = dec_final.forward(tape, h, training);
    return ndgrad::clamp01(tape, h);
  }
};

template <typename T>
CodecModel<T> make_codec(const CodecConfig& cfg, uint64_t seed) {
  const int n = cfg.num_blocks();
  CodecModel<T> m;
  m.cfg = cfg;
  if (m.cfg.extractor_seed == 0) m.cfg.extractor_seed = mix_seed(seed, 0x6665617475726573ULL);
  Rng rng(mix_seed(seed, 0x636f646563ULL));

  int in_ch = 3;
  for (int i = 0; i < n; ++i) {
    const int out_ch = cfg.block_width(i);
    m.enc_blocks.push_back({ndgrad::make_conv<T>(in_ch, out_ch, 3, 2, 1, rng), ndgrad::make_batch_norm<T>(out_ch)});
    in_ch = out_ch;
  }
  m.enc_proj = ndgrad::make_conv<T>(in_ch, cfg.dim, 1, 1, 0, rng);
  m.dec_proj = ndgrad::make_conv<T>(cfg.dim, in_ch, 1, 1, 0, rng);
  for (int i = n - 1; i >= 1; --i) {
    const int out_ch = cfg.block_width(i - 1);
    m.dec_blocks.push_back(
        {ndgrad::make_conv_transpose<T>(cfg.block_width(i), out_ch, 3, 2, 1, 1, rng), ndgrad::make_batch_norm<T>(out_ch)});
  }
  m.dec_final = ndgrad::make_conv_transpose<T>(cfg.block_width(0), 3, 3, 2, 1, 1, rng);
  m.codebook = vq::make_codebook<T>(cfg.codebook_size, cfg.dim);
  Rng cb_rng(mix_seed(seed, 0x636f6465626f6f6bULL));
  for (auto& v : m.codebook.entries->data) v = static_cast<T>(cb_rng.normal() * 0.1);
  m.codebook.entries->requires_grad = true;
  m.extractor = FeatureExtractor<T>::make(m.cfg.extractor_seed);
  return m;
}

// single [0,1] image -> latent rows (grid*grid, D), inference mode
template <typename T>
ndgrad::TensorPtr<T> encode_image(const CodecModel<T>& m, const Image& img) {
  if (img.channels != 3 || img.height != m.cfg.image_size || img.width != m.cfg.image_size)
    throw std::invalid_argument("encode_image: image is " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + ", codec expects " + std::to_string(m.cfg.image_size) +
                                "x" + std::to_string(m.cfg.image_size));
  return m.encode(nullptr, image_to_tensor<T>(img), false);
}

// index grid -> decoded image, inference mode. Indices are reduced modulo the
// codebook size: payloads arrive as fixed 8-bit indices, so a corrupted bit can
// name a codeword past the end of a smaller codebook and the receiver must still
// produce an image.
template <typename T>
Image decode_indices(CodecModel<T>& m, const std::vector<int32_t>& indices) {
  if (static_cast<int>(indices.size()) != m.cells_per_image())
    throw std::invalid_argument("decode_indices: expected " + std::to_string(m.cells_per_image()) + " indices, got " +
                                std::to_string(indices.size()));
  std::vector<int32_t> in_range(indices);
  for (auto& ix : in_range) ix = static_cast<int32_t>(((ix % m.cfg.codebook_size) + m.cfg.codebook_size) % m.cfg.codebook_size);
  auto cells = ndgrad::gather_rows<T>(nullptr, m.codebook.entries, in_range);
  auto img_t = m.decode(nullptr, cells, 1, false);
  return tensor_to_image(img_t);
}

// ---- training ---------------------------------------------------------------

struct EpochStats {
  double mean_feature = 0.0;
  double mean_embedding = 0.0;
  double mean_commitment = 0.0;
  double mean_total = 0.0;
  int batches = 0;
};

// k-means init of the codebook from encoder outputs on a sample of images
template <typename T>
void init_codebook_from_images(CodecModel<T>& m, const std::vector<Image>& images, int iterations, uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("init_codebook_from_images: empty dataset");
  const size_t sample = std::min<size_t>(images.size(), 64);
  std::vector<T> rows;
  for (size_t i = 0; i < sample; ++i) {
    auto cells = encode_image(m, images[i]);
    rows.insert(rows.end(), cells->data.begin(), cells->data.end());
  }
  const int n = static_cast<int>(rows.size()) / m.cfg.dim;
  if (n < m.cfg.codebook_size)
    throw std::invalid_argument("init_codebook_from_images: only " + std::to_string(n) + " latent vectors for K=" +
                                std::to_string(m.cfg.codebook_size));
  m.codebook = vq::init_codebook_kmeans<T>(rows, n, m.cfg.dim, m.cfg.codebook_size, iterations, seed);
  m.codebook.entries->requires_grad = true;
}

// one pass over the dataset: feature loss + alpha*embedding + beta*commitment
template <typename T>
EpochStats train_epoch(CodecModel<T>& m, const std::vector<Image>& images, ndgrad::Adam<T>& opt, int batch_size,
                       uint64_t seed, int epoch, std::vector<std::string>* log_rows) {
  if (images.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size < 2) throw std::invalid_argument("train_epoch: batch size must be >= 2");
  Rng shuffle_rng(mix_seed(seed, static_cast<uint64_t>(epoch), 0x7368756666ULL));
  auto order = shuffle_rng.permutation(static_cast<uint32_t>(images.size()));

  EpochStats stats;
  std::vector<T> last_cells;
  int last_cells_n = 0;
  for (size_t start = 0; start + 2 <= order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;  // batch norm needs at least two images
    std::vector<Image> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(images[order[i]]);
    auto x = images_to_tensor<T>(batch);

    ndgrad::Tape<T> tape;
    auto cells = m.encode(&tape, x, true);
    auto qg = vq::quantize_nearest(cells, m.codebook);
    for (int32_t idx : qg.indices)
      if (idx < 0 || idx >= m.cfg.codebook_size)
        throw std::runtime_error("train_epoch: index outside codebook at batch " + std::to_string(stats.batches));
    auto st = ndgrad::straight_through(&tape, cells, qg.quantized);
    auto decoded = m.decode(&tape, st, static_cast<int>(batch.size()), true);
    auto l_feat = feature_loss(&tape, m.extractor, x, decoded);
    auto [l_embed, l_commit] = vq::vq_losses(&tape, cells, m.codebook, qg.indices);
    auto total = ndgrad::weighted_sum<T>(&tape, {l_feat, l_embed, l_commit},
                                         {T(1), static_cast<T>(m.cfg.alpha), static_cast<T>(m.cfg.beta)});
    if (!std::isfinite(static_cast<double>(total->data[0])))
      throw std::runtime_error("train_epoch: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(stats.batches));
    opt.zero_grad();
    tape.backward(total);
    opt.step();

    last_cells.assign(cells->data.begin(), cells->data.end());
    last_cells_n = cells->shape[0];

    stats.mean_feature += static_cast<double>(l_feat->data[0]);
    stats.mean_embedding += static_cast<double>(l_embed->data[0]);
    stats.mean_commitment += static_cast<double>(l_commit->data[0]);
    stats.mean_total += static_cast<double>(total->data[0]);
    if (log_rows) {
      char row[160];
      std::snprintf(row, sizeof row, "%d,%d,%.6f,%.6f,%.6f,%.6f", epoch, stats.batches,
                    static_cast<double>(l_feat->data[0]), static_cast<double>(l_embed->data[0]),
                    static_cast<double>(l_commit->data[0]), static_cast<double>(total->data[0]));
      log_rows->push_back(row);
    }
    ++stats.batches;
  }
  if (stats.batches > 0) {
    stats.mean_feature /= stats.batches;
    stats.mean_embedding /= stats.batches;
    stats.mean_commitment /= stats.batches;
    stats.mean_total /= stats.batches;
  }
  vq::reseed_dead_codes(m.codebook, last_cells, last_cells_n, 0,
                        mix_seed(seed, static_cast<uint64_t>(epoch), 0x726573656564ULL));
  return stats;
}

// ---- persistence (float models) ----------------------------------------------

namespace detail {

inline void put_u64(ndgrad::Checkpoint& cp, const std::string& name, uint64_t v) {
  cp.put_scalar(name + ".hi", static_cast<double>(v >> 32));
  cp.put_scalar(name + ".lo", static_cast<double>(v & 0xFFFFFFFFULL));
}

inline uint64_t get_u64(const ndgrad::Checkpoint& cp, const std::string& name) {
  const uint64_t hi = static_cast<uint64_t>(cp.scalar(name + ".hi"));
  const uint64_t lo = static_cast<uint64_t>(cp.scalar(name + ".lo"));
  return (hi << 32) | lo;
}

inline void save_layer(ndgrad::Checkpoint& cp, const ndgrad::Layer<float>& l, const std::string& prefix) {
  for (const auto& [name, t] : l.state(prefix)) cp.put_tensor(name, *t);
}

inline void load_layer(const ndgrad::Checkpoint& cp, ndgrad::Layer<float>& l, const std::string& prefix) {
  for (auto& [name, t] : l.state(prefix)) cp.load_into(name, *t);
}

}  // namespace detail

inline void save_codec_records(ndgrad::Checkpoint& cp, const CodecModel<float>& m) {
  cp.put_scalar("config.image_size", m.cfg.image_size);
  cp.put_scalar("config.grid", m.cfg.grid);
  cp.put_scalar("config.codebook_size", m.cfg.codebook_size);
  cp.put_scalar("config.dim", m.cfg.dim);
  cp.put_scalar("config.base_width", m.cfg.base_width);
  cp.put_scalar("config.alpha", m.cfg.alpha);
  cp.put_scalar("config.beta", m.cfg.beta);
  detail::put_u64(cp, "config.extractor_seed", m.cfg.extractor_seed);
  for (size_t i = 0; i < m.enc_blocks.size(); ++i) {
    detail::save_layer(cp, m.enc_blocks[i].conv, "enc." + std::to_string(i) + ".conv");
    detail::save_layer(cp, m.enc_blocks[i].bn, "enc." + std::to_string(i) + ".bn");
  }
  detail::save_layer(cp, m.enc_proj, "enc.proj");
  detail::save_layer(cp, m.dec_proj, "dec.proj");
  for (size_t i = 0; i < m.dec_blocks.size(); ++i) {
    detail::save_layer(cp, m.dec_blocks[i].conv, "dec." + std::to_string(i) + ".convt");
    detail::save_layer(cp, m.dec_blocks[i].bn, "dec." + std::to_string(i) + ".bn");
  }
  detail::save_layer(cp, m.dec_final, "dec.final");
  cp.put_tensor("codebook.entries", *m.codebook.entries);
  std::vector<double> usage(m.codebook.usage.begin(), m.codebook.usage.end());
  cp.put_f64("codebook.usage", {static_cast<int>(usage.size())}, usage);
}

inline void save_codec(const CodecModel<float>& m, const std::string& path) {
  ndgrad::Checkpoint cp;
  save_codec_records(cp, m);
  cp.save(path);
}

inline CodecModel<float> load_codec_records(const ndgrad::Checkpoint& cp) {
  CodecConfig cfg;
  cfg.image_size = static_cast<int>(cp.scalar("config.image_size"));
  cfg.grid = static_cast<int>(cp.scalar("config.grid"));
  cfg.codebook_size = static_cast<int>(cp.scalar("config.codebook_size"));
  cfg.dim = static_cast<int>(cp.scalar("config.dim"));
  cfg.base_width = static_cast<int>(cp.scalar("config.base_width"));
  cfg.alpha = cp.scalar("config.alpha");
  cfg.beta = cp.scalar("config.beta");
  cfg.extractor_seed = detail::get_u64(cp, "config.extractor_seed");
  CodecModel<float> m = make_codec<float>(cfg, 1);
  for (size_t i = 0; i < m.enc_blocks.size(); ++i) {
    detail::load_layer(cp, m.enc_blocks[i].conv, "enc." + std::to_string(i) + ".conv");
    detail::load_layer(cp, m.enc_blocks[i].bn, "enc." + std::to_string(i) + ".bn");
  }
  detail::load_layer(cp, m.enc_proj, "enc.proj");
  detail::load_layer(cp, m.dec_proj, "dec.proj");
  for (size_t i = 0; i < m.dec_blocks.size(); ++i) {
    detail::load_layer(cp, m.dec_blocks[i].conv, "dec." + std::to_string(i) + ".convt");
    detail::load_layer(cp, m.dec_blocks[i].bn, "dec." + std::to_string(i) + ".bn");
  }
  detail::load_layer(cp, m.dec_final, "dec.final");
  cp.load_into("codebook.entries", *m.codebook.entries);
  const auto& usage = cp.get("codebook.usage");
  if (usage.dtype != 1 || usage.numel() != m.cfg.codebook_size)
    throw std::runtime_error("checkpoint: codebook.usage record is malformed");
  for (int i = 0; i < m.cfg.codebook_size; ++i) m.codebook.usage[i] = static_cast<uint64_t>(usage.f64[i]);
  return m;
}

inline CodecModel<float> load_codec(const std::string& path) {
  return load_codec_records(ndgrad::Checkpoint::load(path));
}

}  // namespace rosmm::autoenc
