#include "rosmm/rosmm.h"

#include <fstream>
#include <stdexcept>
#include <string>

#include "autoenc/codec.hpp"
#include "carrier/carrier.hpp"
#include "common/image_io.hpp"
#include "evalharness/experiment.hpp"
#include "evalharness/metrics.hpp"
#include "evalharness/textures.hpp"
#include "restore/restorer.hpp"

struct rosmm_codec {
  rosmm::autoenc::CodecModel<float> model;
};

struct rosmm_restorer {
  rosmm::restore::RestorerModel<float> model;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& message) {
  g_last_error = message;
  return code;
}

int require(bool cond, const std::string& message) {
  return cond ? ROSMM_OK : fail(ROSMM_ERR_INVALID_ARGUMENT, message);
}

// every entry point funnels exceptions into status codes here
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ROSMM_OK;
  } catch (const std::invalid_argument& e) {
    return fail(ROSMM_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(ROSMM_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(ROSMM_ERR_RUNTIME, e.what());
  }
}

// magnitude stream seed for file-level embed/extract, derived so the CLI
// surface needs only (key, perm_seed)
uint64_t derive_rng_seed(uint64_t key, uint64_t perm_seed) {
  return rosmm::mix_seed(key, perm_seed, 0x6d61676e69747564ULL);
}

}  // namespace

extern "C" {

const char* rosmm_version(void) { return "1.0.0"; }

const char* rosmm_last_error(void) { return g_last_error.c_str(); }

int rosmm_gen_textures(const char* out_dir, int count, int image_size, unsigned long long seed) {
  if (int rc = require(out_dir != nullptr, "gen_textures: out_dir is null")) return rc;
  return guarded([&] {
    rosmm::evalharness::TextureSpec spec;
    spec.count = count;
    spec.image_size = image_size;
    spec.seed = seed;
    rosmm::evalharness::gen_texture_dataset(spec, out_dir);
  });
}

int rosmm_train_vqvae(const char* data_dir, const char* out_checkpoint, int image_size, int grid, int codebook_size,
                      int dim, int epochs, int batch, unsigned long long seed, double alpha, double beta,
                      const char* log_csv) {
  if (int rc = require(data_dir && out_checkpoint, "train_vqvae: data_dir and out_checkpoint are required")) return rc;
  return guarded([&] {
    if (epochs < 1) throw std::invalid_argument("train_vqvae: epochs must be >= 1");
    rosmm::autoenc::CodecConfig cfg;
    cfg.image_size = image_size;
    cfg.grid = grid;
    cfg.codebook_size = codebook_size;
    cfg.dim = dim;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.num_blocks();  // validates the geometry before loading data

    const auto images = rosmm::evalharness::load_ppm_dir(data_dir);
    for (const auto& img : images)
      if (img.height != image_size || img.width != image_size)
        throw std::invalid_argument("train_vqvae: dataset image is " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + ", expected " + std::to_string(image_size));

    auto model = rosmm::autoenc::make_codec<float>(cfg, seed);
    rosmm::autoenc::init_codebook_from_images(model, images, 8, rosmm::mix_seed(seed, 0x6b6d65616e73ULL));
    rosmm::ndgrad::Adam<float> opt(model.trainable(), 1e-3f);
    std::vector<std::string> log_rows;
    for (int epoch = 0; epoch < epochs; ++epoch)
      rosmm::autoenc::train_epoch(model, images, opt, batch, seed, epoch, log_csv ? &log_rows : nullptr);
    rosmm::autoenc::save_codec(model, out_checkpoint);
    if (log_csv) {
      std::ofstream log(log_csv, std::ios::binary | std::ios::trunc);
      if (!log) throw std::runtime_error("train_vqvae: cannot open log '" + std::string(log_csv) + "'");
      log << "epoch,batch,L_feature,L_embedding,L_commitment,L_total\n";
      for (const auto& row : log_rows) log << row << "\n";
    }
  });
}

int rosmm_train_restorer(const char* codec_checkpoint, const char* data_dir, const char* out_checkpoint,
                         double ber_lo, double ber_hi, int epochs, unsigned long long seed) {
  if (int rc = require(codec_checkpoint && data_dir && out_checkpoint,
                       "train_restorer: codec, data_dir and out_checkpoint are required"))
    return rc;
  return guarded([&] {
    auto codec = rosmm::autoenc::load_codec(codec_checkpoint);
    const auto images = rosmm::evalharness::load_ppm_dir(data_dir);
    rosmm::restore::CorruptionSampler sampler;
    sampler.lo = ber_lo;
    sampler.hi = ber_hi;
    sampler.seed = rosmm::mix_seed(seed, 0x636f727275707473ULL);
    auto model = rosmm::restore::make_restorer<float>(seed);
    rosmm::restore::train_restorer(model, codec, images, sampler, epochs, seed);
    rosmm::restore::save_restorer(model, out_checkpoint);
  });
}

int rosmm_codec_open(const char* checkpoint, rosmm_codec_t** out) {
  if (int rc = require(checkpoint && out, "codec_open: checkpoint and out are required")) return rc;
  return guarded([&] { *out = new rosmm_codec{rosmm::autoenc::load_codec(checkpoint)}; });
}

void rosmm_codec_close(rosmm_codec_t* codec) { delete codec; }

int rosmm_codec_image_size(const rosmm_codec_t* codec, int* out) {
  if (int rc = require(codec && out, "codec_image_size: codec and out are required")) return rc;
  *out = codec->model.cfg.image_size;
  g_last_error.clear();
  return ROSMM_OK;
}

int rosmm_codec_payload_bits(const rosmm_codec_t* codec, int* out) {
  if (int rc = require(codec && out, "codec_payload_bits: codec and out are required")) return rc;
  *out = codec->model.cells_per_image() * 8;
  g_last_error.clear();
  return ROSMM_OK;
}

int rosmm_restorer_open(const char* checkpoint, rosmm_restorer_t** out) {
  if (int rc = require(checkpoint && out, "restorer_open: checkpoint and out are required")) return rc;
  return guarded([&] { *out = new rosmm_restorer{rosmm::restore::load_restorer(checkpoint)}; });
}

void rosmm_restorer_close(rosmm_restorer_t* restorer) { delete restorer; }

int rosmm_embed(rosmm_codec_t* codec, const char* secret_ppm, unsigned long long key, int r,
                unsigned long long perm_seed, const char* out_bits, const char* out_container_ppm) {
  if (int rc = require(codec && secret_ppm && out_bits && out_container_ppm,
                       "embed: codec, secret, out_bits and out_container are required"))
    return rc;
  return guarded([&] {
    auto& m = codec->model;
    const rosmm::Image secret = rosmm::read_ppm(secret_ppm);
    auto cells = rosmm::autoenc::encode_image(m, secret);
    auto qg = rosmm::vq::quantize_nearest(cells, m.codebook);
    const auto bits = rosmm::payload::pack_indices(qg.indices);
    const auto whitened = rosmm::payload::whiten(bits, key);
    rosmm::carrier::LatentShape shape{3, m.cfg.image_size, m.cfg.image_size};
    const auto latent = rosmm::carrier::embed_bits(whitened, shape, r, perm_seed, derive_rng_seed(key, perm_seed));
    const rosmm::Image container = rosmm::carrier::render_latent(latent, shape);
    rosmm::payload::write_payload_file(out_bits, bits);
    rosmm::write_ppm(out_container_ppm, container);
  });
}

int rosmm_attack(const char* in_ppm, const char* family, double theta, unsigned long long seed, const char* out_ppm) {
  if (int rc = require(in_ppm && family && out_ppm, "attack: in, family and out are required")) return rc;
  return guarded([&] {
    rosmm::carrier::AttackSpec spec;
    spec.family = rosmm::carrier::attack_family_from_name(family);
    spec.theta = theta;
    spec.seed = seed;
    rosmm::write_ppm(out_ppm, rosmm::carrier::apply_attack(rosmm::read_ppm(in_ppm), spec));
  });
}

int rosmm_extract(rosmm_codec_t* codec, const rosmm_restorer_t* restorer, const char* container_ppm,
                  unsigned long long key, int r, unsigned long long perm_seed, int refine_rounds,
                  const char* out_image_ppm, const char* out_bits) {
  if (int rc = require(codec && container_ppm && out_image_ppm, "extract: codec, container and out_image are required"))
    return rc;
  return guarded([&] {
    auto& m = codec->model;
    const rosmm::Image container = rosmm::read_ppm(container_ppm);
    if (container.height != m.cfg.image_size || container.width != m.cfg.image_size)
      throw std::invalid_argument("extract: container is " + std::to_string(container.height) + "x" +
                                  std::to_string(container.width) + ", codec expects " +
                                  std::to_string(m.cfg.image_size));
    rosmm::carrier::LatentShape shape{3, m.cfg.image_size, m.cfg.image_size};
    const auto values = rosmm::carrier::invert_render(container);
    const size_t n_bits = static_cast<size_t>(m.cells_per_image()) * 8;
    const auto extracted = rosmm::carrier::extract_bits(values, shape, n_bits, r, perm_seed);
    auto bits = rosmm::payload::whiten(extracted, key);

    rosmm::Image out_image;
    if (restorer && refine_rounds >= 1) {
      auto refined = rosmm::restore::refine_bits(bits, m, restorer->model, refine_rounds);
      bits = refined.bits;
      out_image = refined.restored;
    } else {
      const auto indices = rosmm::payload::unpack_indices(bits, m.cells_per_image());
      out_image = rosmm::autoenc::decode_indices(m, indices);
    }
    rosmm::write_ppm(out_image_ppm, out_image);
    if (out_bits) rosmm::payload::write_payload_file(out_bits, bits);
  });
}

int rosmm_evaluate(const char* config_json, const char* out_csv) {
  if (int rc = require(config_json != nullptr, "evaluate: config path is required")) return rc;
  return guarded([&] {
    auto cfg = rosmm::evalharness::load_experiment_config(config_json);
    if (out_csv) cfg.output_csv = out_csv;
    rosmm::evalharness::run_experiment(cfg);
  });
}

int rosmm_psnr(const char* a_ppm, const char* b_ppm, double* out) {
  if (int rc = require(a_ppm && b_ppm && out, "psnr: two images and out are required")) return rc;
  return guarded([&] { *out = rosmm::evalharness::psnr(rosmm::read_ppm(a_ppm), rosmm::read_ppm(b_ppm)); });
}

int rosmm_ssim(const char* a_ppm, const char* b_ppm, double* out) {
  if (int rc = require(a_ppm && b_ppm && out, "ssim: two images and out are required")) return rc;
  return guarded([&] { *out = rosmm::evalharness::ssim(rosmm::read_ppm(a_ppm), rosmm::read_ppm(b_ppm)); });
}

}  // extern "C"
