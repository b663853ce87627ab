// rosmm command line: texture generation, training, embed/attack/extract,
// and the CSV experiment runner, all through the C API.

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "rosmm/rosmm.h"

namespace {

// 64-bit hex key, optional 0x prefix
uint64_t parse_hex_key(const std::string& text) {
  std::string s = text;
  if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) s = s.substr(2);
  if (s.empty() || s.size() > 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw CLI::ValidationError("--key", "expected up to 16 hex digits, got '" + text + "'");
  return std::stoull(s, nullptr, 16);
}

int stage_failed(const char* stage, int rc) {
  std::fprintf(stderr, "rosmm %s failed (status %d): %s\n", stage, rc, rosmm_last_error());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"watermark codec and robustness laboratory"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_out;
  int gd_count = 500, gd_size = 64;
  uint64_t gd_seed = 1;
  auto* gen_data = app.add_subcommand("gen-data", "write a deterministic procedural texture dataset");
  gen_data->add_option("--out", gd_out, "output directory for <index>.ppm files")->required();
  gen_data->add_option("--count", gd_count, "number of images (default 500)");
  gen_data->add_option("--size", gd_size, "square image size in pixels (default 64)");
  gen_data->add_option("--seed", gd_seed, "dataset seed (default 1, never time-based)");

  // train-vqvae
  std::string tv_data, tv_out;
  int tv_image_size = 64, tv_grid = 8, tv_codebook = 256, tv_dim = 64, tv_epochs = 50, tv_batch = 16;
  uint64_t tv_seed = 1;
  double tv_alpha = 1.0, tv_beta = 0.25;
  auto* train_vqvae = app.add_subcommand("train-vqvae", "train the VQ autoencoder on a PPM directory");
  train_vqvae->add_option("--data", tv_data, "training image directory")->required();
  train_vqvae->add_option("--out", tv_out, "output checkpoint path")->required();
  train_vqvae->add_option("--image-size", tv_image_size, "square input size (default 64)");
  train_vqvae->add_option("--grid", tv_grid, "latent grid side (default 8)");
  train_vqvae->add_option("--codebook-size", tv_codebook, "codewords, at most 256 (default 256)");
  train_vqvae->add_option("--dim", tv_dim, "codeword dimension (default 64)");
  train_vqvae->add_option("--epochs", tv_epochs, "training epochs (default 50)");
  train_vqvae->add_option("--batch", tv_batch, "batch size (default 16)");
  train_vqvae->add_option("--seed", tv_seed, "training seed (default 1, never time-based)");
  train_vqvae->add_option("--alpha", tv_alpha, "embedding-loss weight (default 1.0)");
  train_vqvae->add_option("--beta", tv_beta, "commitment-loss weight (default 0.25)");

  // train-restorer
  std::string tr_vqvae, tr_data, tr_out;
  double tr_ber_lo = 0.0, tr_ber_hi = 0.3;
  int tr_epochs = 20;
  uint64_t tr_seed = 1;
  auto* train_restorer = app.add_subcommand("train-restorer", "train the restoration network against a frozen codec");
  train_restorer->add_option("--vqvae", tr_vqvae, "codec checkpoint")->required();
  train_restorer->add_option("--data", tr_data, "training image directory")->required();
  train_restorer->add_option("--out", tr_out, "output checkpoint path")->required();
  train_restorer->add_option("--ber-lo", tr_ber_lo, "lowest sampled bit error rate (default 0.0)");
  train_restorer->add_option("--ber-hi", tr_ber_hi, "highest sampled bit error rate (default 0.3)");
  train_restorer->add_option("--epochs", tr_epochs, "training epochs (default 20)");
  train_restorer->add_option("--seed", tr_seed, "training seed (default 1, never time-based)");

  // embed
  std::string em_vqvae, em_secret, em_key, em_out_bits, em_out_container;
  int em_r = 8;
  uint64_t em_perm_seed = 42;
  auto* embed = app.add_subcommand("embed", "encode a secret image and embed it into a rendered container");
  embed->add_option("--vqvae", em_vqvae, "codec checkpoint")->required();
  embed->add_option("--secret", em_secret, "secret PPM image")->required();
  embed->add_option("--key", em_key, "64-bit hex whitening key")->required();
  embed->add_option("--r", em_r, "latent cells per payload bit (default 8)");
  embed->add_option("--perm-seed", em_perm_seed, "cell permutation seed (default 42, never time-based)");
  embed->add_option("--out-bits", em_out_bits, "payload bits file")->required();
  embed->add_option("--out-container", em_out_container, "container PPM path")->required();

  // attack
  std::string at_in, at_attack, at_out;
  double at_theta = 0.0;
  uint64_t at_seed = 42;
  auto* attack = app.add_subcommand("attack", "apply one attack family to a PPM image");
  attack->add_option("--in", at_in, "input PPM image")->required();
  attack
      ->add_option("--attack", at_attack,
                   "family: gaussian_noise|brightness|random_crop|jpeg|resize|saturation|rotation|none")
      ->required();
  attack->add_option("--theta", at_theta, "attack strength (default 0.0)");
  attack->add_option("--seed", at_seed, "attack seed (default 42, never time-based)");
  attack->add_option("--out", at_out, "output PPM path")->required();

  // extract
  std::string ex_vqvae, ex_carrier, ex_key, ex_out_image, ex_out_bits, ex_restorer;
  int ex_r = 8, ex_refine = 1;
  uint64_t ex_perm_seed = 42;
  auto* extract = app.add_subcommand("extract", "recover the payload and secret image from a container");
  extract->add_option("--vqvae", ex_vqvae, "codec checkpoint")->required();
  extract->add_option("--carrier", ex_carrier, "container PPM image")->required();
  extract->add_option("--key", ex_key, "64-bit hex whitening key")->required();
  extract->add_option("--r", ex_r, "latent cells per payload bit (default 8)");
  extract->add_option("--perm-seed", ex_perm_seed, "cell permutation seed (default 42, never time-based)");
  extract->add_option("--out-image", ex_out_image, "decoded secret PPM path")->required();
  extract->add_option("--out-bits", ex_out_bits, "recovered payload bits file");
  auto* restorer_opt = extract->add_option("--restorer", ex_restorer, "restoration checkpoint");
  extract->add_option("--refine", ex_refine, "bit-refinement rounds (default 1)")->needs(restorer_opt);

  // evaluate
  std::string ev_config, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "run the experiment grid from a JSON config");
  evaluate->add_option("--config", ev_config, "experiment JSON config")->required();
  evaluate->add_option("--out", ev_out, "CSV output path (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (gen_data->parsed()) {
    std::printf("gen-data: out=%s count=%d size=%d seed=%llu\n", gd_out.c_str(), gd_count, gd_size,
                (unsigned long long)gd_seed);
    int rc = rosmm_gen_textures(gd_out.c_str(), gd_count, gd_size, gd_seed);
    return rc == ROSMM_OK ? 0 : stage_failed("gen-data", rc);
  }

  if (train_vqvae->parsed()) {
    std::printf(
        "train-vqvae: data=%s out=%s image-size=%d grid=%d codebook-size=%d dim=%d epochs=%d batch=%d seed=%llu "
        "alpha=%g beta=%g\n",
        tv_data.c_str(), tv_out.c_str(), tv_image_size, tv_grid, tv_codebook, tv_dim, tv_epochs, tv_batch,
        (unsigned long long)tv_seed, tv_alpha, tv_beta);
    int rc = rosmm_train_vqvae(tv_data.c_str(), tv_out.c_str(), tv_image_size, tv_grid, tv_codebook, tv_dim, tv_epochs,
                               tv_batch, tv_seed, tv_alpha, tv_beta, nullptr);
    return rc == ROSMM_OK ? 0 : stage_failed("train-vqvae", rc);
  }

  if (train_restorer->parsed()) {
    std::printf("train-restorer: vqvae=%s data=%s out=%s ber-lo=%g ber-hi=%g epochs=%d seed=%llu\n", tr_vqvae.c_str(),
                tr_data.c_str(), tr_out.c_str(), tr_ber_lo, tr_ber_hi, tr_epochs, (unsigned long long)tr_seed);
    int rc = rosmm_train_restorer(tr_vqvae.c_str(), tr_data.c_str(), tr_out.c_str(), tr_ber_lo, tr_ber_hi, tr_epochs,
                                  tr_seed);
    return rc == ROSMM_OK ? 0 : stage_failed("train-restorer", rc);
  }

  if (embed->parsed()) {
    uint64_t key = 0;
    try {
      key = parse_hex_key(em_key);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 1;
    }
    std::printf("embed: vqvae=%s secret=%s key=%016llx r=%d perm-seed=%llu out-bits=%s out-container=%s\n",
                em_vqvae.c_str(), em_secret.c_str(), (unsigned long long)key, em_r, (unsigned long long)em_perm_seed,
                em_out_bits.c_str(), em_out_container.c_str());
    rosmm_codec_t* codec = nullptr;
    int rc = rosmm_codec_open(em_vqvae.c_str(), &codec);
    if (rc == ROSMM_OK) {
      rc = rosmm_embed(codec, em_secret.c_str(), key, em_r, em_perm_seed, em_out_bits.c_str(),
                       em_out_container.c_str());
      rosmm_codec_close(codec);
    }
    return rc == ROSMM_OK ? 0 : stage_failed("embed", rc);
  }

  if (attack->parsed()) {
    std::printf("attack: in=%s attack=%s theta=%g seed=%llu out=%s\n", at_in.c_str(), at_attack.c_str(), at_theta,
                (unsigned long long)at_seed, at_out.c_str());
    int rc = rosmm_attack(at_in.c_str(), at_attack.c_str(), at_theta, at_seed, at_out.c_str());
    return rc == ROSMM_OK ? 0 : stage_failed("attack", rc);
  }

  if (extract->parsed()) {
    uint64_t key = 0;
    try {
      key = parse_hex_key(ex_key);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 1;
    }
    std::printf(
        "extract: vqvae=%s carrier=%s key=%016llx r=%d perm-seed=%llu out-image=%s out-bits=%s restorer=%s "
        "refine=%d\n",
        ex_vqvae.c_str(), ex_carrier.c_str(), (unsigned long long)key, ex_r, (unsigned long long)ex_perm_seed,
        ex_out_image.c_str(), ex_out_bits.empty() ? "(none)" : ex_out_bits.c_str(),
        ex_restorer.empty() ? "(none)" : ex_restorer.c_str(), ex_restorer.empty() ? 0 : ex_refine);
    rosmm_codec_t* codec = nullptr;
    rosmm_restorer_t* restorer = nullptr;
    int rc = rosmm_codec_open(ex_vqvae.c_str(), &codec);
    if (rc == ROSMM_OK && !ex_restorer.empty()) rc = rosmm_restorer_open(ex_restorer.c_str(), &restorer);
    if (rc == ROSMM_OK)
      rc = rosmm_extract(codec, restorer, ex_carrier.c_str(), key, ex_r, ex_perm_seed,
                         restorer ? ex_refine : 0, ex_out_image.c_str(),
                         ex_out_bits.empty() ? nullptr : ex_out_bits.c_str());
    rosmm_restorer_close(restorer);
    rosmm_codec_close(codec);
    return rc == ROSMM_OK ? 0 : stage_failed("extract", rc);
  }

  if (evaluate->parsed()) {
    std::printf("evaluate: config=%s out=%s\n", ev_config.c_str(), ev_out.empty() ? "(from config)" : ev_out.c_str());
    int rc = rosmm_evaluate(ev_config.c_str(), ev_out.empty() ? nullptr : ev_out.c_str());
    return rc == ROSMM_OK ? 0 : stage_failed("evaluate", rc);
  }

  return 1;
}
