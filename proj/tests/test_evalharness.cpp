#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "autoenc/codec.hpp"
#include "common/rng.hpp"
#include "evalharness/experiment.hpp"
#include "evalharness/metrics.hpp"
#include "evalharness/textures.hpp"

using namespace rosmm;
using namespace rosmm::evalharness;

namespace {

Image random_image(int c, int h, int w, uint64_t seed) {
  Rng rng(seed);
  Image img(c, h, w);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  return img;
}

// independent double-loop reimplementation of the grayscale windowed metric
double ssim_oracle(const Image& a, const Image& b) {
  const int h = a.height, w = a.width;
  auto gray = [](const Image& img, int y, int x) {
    if (img.channels == 1) return static_cast<double>(img.at(0, y, x));
    return luma601(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
  };
  std::vector<double> win(121);
  double wsum = 0;
  for (int i = 0; i < 121; ++i) {
    const double dy = i / 11 - 5, dx = i % 11 - 5;
    win[i] = std::exp(-(dx * dx + dy * dy) / 4.5);
    wsum += win[i];
  }
  const double c1 = 6.5025, c2 = 58.5225;  // (0.01*255)^2, (0.03*255)^2
  double total = 0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double mu_a = 0, mu_b = 0, raw_aa = 0, raw_bb = 0, raw_ab = 0;
      for (int i = 0; i < 121; ++i) {
        const double wv = win[i] / wsum;
        const double pa = gray(a, y + i / 11, x + i % 11);
        const double pb = gray(b, y + i / 11, x + i % 11);
        mu_a += wv * pa;
        mu_b += wv * pb;
        raw_aa += wv * pa * pa;
        raw_bb += wv * pb * pb;
        raw_ab += wv * pa * pb;
      }
      const double var_a = raw_aa - mu_a * mu_a;
      const double var_b = raw_bb - mu_b * mu_b;
      const double cov = raw_ab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  return total / count;
}

double psnr_oracle(const Image& a, const Image& b) {
  double mse = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const double d = double(a.at(c, y, x)) - double(b.at(c, y, x));
        mse += d * d;
      }
  mse /= double(a.pixels.size());
  return 10.0 * std::log10(65025.0 / mse);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("psnr: closed-form cases") {
  Image a = random_image(3, 16, 16, 1);
  CHECK(std::isinf(psnr(a, a)));

  Image c100(3, 10, 10), c116(3, 10, 10);
  for (auto& p : c100.pixels) p = 100;
  for (auto& p : c116.pixels) p = 116;
  CHECK(psnr(c100, c116) == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-12));

  // one pixel in ten thousand fully wrong: exactly 40 dB
  Image x(1, 100, 100), y(1, 100, 100);
  y.pixels[1234] = 255;
  CHECK(psnr(x, y) == doctest::Approx(40.0).epsilon(1e-12));

  Image other(3, 8, 8);
  CHECK_THROWS_AS(psnr(a, other), std::invalid_argument);
}

TEST_CASE("ssim: identity, symmetry, contrast inversion") {
  Image a = random_image(3, 24, 24, 2);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Image b = random_image(3, 24, 24, 3);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

  // high-contrast stripes against their negative: strong anticorrelation
  Image s(3, 24, 24), n(3, 24, 24);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        s.at(c, y, x) = (y / 4) % 2 ? 255 : 0;
        n.at(c, y, x) = (y / 4) % 2 ? 0 : 255;
      }
  CHECK(ssim(s, n) < 0.0);

  Image tiny(3, 8, 8);
  CHECK_THROWS_WITH_AS(ssim(tiny, tiny), doctest::Contains("11x11"), std::invalid_argument);
  Image two(2, 24, 24);
  CHECK_THROWS_AS(ssim(two, two), std::invalid_argument);
}

TEST_CASE("psnr and ssim agree with independent double-loop oracles") {
  for (uint64_t seed : {4ULL, 5ULL, 6ULL}) {
    Image a = random_image(3, 20, 28, seed);
    Image b = a;
    Rng rng(seed + 50);
    for (auto& p : b.pixels)
      if (rng.uniform() < 0.3) p = static_cast<uint8_t>(rng.below(256));
    CHECK(psnr(a, b) == doctest::Approx(psnr_oracle(a, b)).epsilon(1e-9));
    CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("bit_accuracy: exact ratios and validation") {
  payload::BitPayload a(2048, 0), b(2048, 0);
  CHECK(bit_accuracy(a, b) == 1.0);
  for (auto& v : b) v = 1;
  CHECK(bit_accuracy(a, b) == 0.0);
  for (size_t i = 0; i < 1948; ++i) b[i] = 0;
  CHECK(bit_accuracy(a, b) == doctest::Approx(1948.0 / 2048.0).epsilon(1e-15));

  payload::BitPayload shorter(100, 0);
  CHECK_THROWS_WITH_AS(bit_accuracy(a, shorter), doctest::Contains("length mismatch"), std::invalid_argument);
  payload::BitPayload empty;
  CHECK_THROWS_AS(bit_accuracy(empty, empty), std::invalid_argument);
}

TEST_CASE("textures: deterministic, sized, and mid-range on average") {
  TextureSpec spec;
  spec.count = 6;
  spec.image_size = 32;
  spec.seed = 7;
  auto imgs = gen_textures(spec);
  REQUIRE(imgs.size() == 6);
  double mean = 0;
  bool all_same = true;
  for (const auto& img : imgs) {
    CHECK(img.channels == 3);
    CHECK(img.height == 32);
    CHECK(img.width == 32);
    for (uint8_t p : img.pixels) mean += p;
    all_same &= img.pixels == imgs[0].pixels;
  }
  mean /= 6.0 * imgs[0].pixels.size();
  CHECK(mean >= 64.0);
  CHECK(mean <= 192.0);
  CHECK_FALSE(all_same);

  auto again = gen_textures(spec);
  for (size_t i = 0; i < imgs.size(); ++i) CHECK(imgs[i].pixels == again[i].pixels);

  spec.seed = 8;
  CHECK(gen_textures(spec)[0].pixels != imgs[0].pixels);
}

TEST_CASE("texture dataset: ppm files round trip through the loader in name order") {
  TempDir dir("rosmm_test_textures");
  TextureSpec spec;
  spec.count = 4;
  spec.image_size = 16;
  spec.seed = 9;
  gen_texture_dataset(spec, dir.path.string());

  std::vector<std::string> names;
  auto loaded = load_ppm_dir(dir.path.string(), &names);
  auto expected = gen_textures(spec);
  REQUIRE(loaded.size() == 4);
  CHECK(names == std::vector<std::string>{"00000", "00001", "00002", "00003"});
  for (size_t i = 0; i < 4; ++i) CHECK(loaded[i].pixels == expected[i].pixels);

  TempDir empty("rosmm_test_textures_empty");
  CHECK_THROWS_AS(load_ppm_dir(empty.path.string()), std::runtime_error);
}

TEST_CASE("experiment config: strict parsing") {
  const std::string good = R"({
    "codec": "c.ckpt",
    "attacks": [{"family": "gaussian_noise", "thetas": [0.05, 0.1]}],
    "seeds": [1, 2],
    "synthetic": {"count": 2, "size": 16, "seed": 3},
    "output_csv": "out.csv",
    "key": "0xdeadbeef",
    "r": 4
  })";
  auto cfg = parse_experiment_config(good);
  CHECK(cfg.codec_path == "c.ckpt");
  CHECK(cfg.key == 0xdeadbeefULL);
  CHECK(cfg.r == 4);
  CHECK(cfg.use_synthetic);
  CHECK(cfg.synthetic.image_size == 16);
  CHECK(cfg.channel == "carrier");
  CHECK(cfg.refine_rounds == 1);

  auto expect_reject = [](const std::string& text, const char* needle) {
    CHECK_THROWS_WITH_AS(parse_experiment_config(text), doctest::Contains(needle), std::invalid_argument);
  };
  expect_reject(R"({"codec":"c","bogus":1,"attacks":[{"family":"none","thetas":[0]}],"seeds":[1],)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "unknown key 'bogus'");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0],"extra":1}],"seeds":[1],)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "unknown key 'extra'");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[1],)"
                R"("synthetic":{"count":1,"size":16,"seed":1,"nested":2},"output_csv":"o"})",
                "unknown key 'nested'");
  expect_reject("not json at all", "invalid JSON");
  expect_reject(R"({"codec":"c","attacks":[],"seeds":[1],"synthetic":{"count":1,"size":16,"seed":1},)"
                R"("output_csv":"o"})",
                "at least one attack");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[],)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "at least one seed");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[1],"output_csv":"o"})",
                "either dataset or synthetic");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[1],"dataset":"d",)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "mutually exclusive");
  expect_reject(R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[1],"channel":"bsc",)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "requires attack family");
  expect_reject(R"({"codec":"c","attacks":[{"family":"melt","thetas":[0]}],"seeds":[1],)"
                R"("synthetic":{"count":1,"size":16,"seed":1},"output_csv":"o"})",
                "melt");

  // dataset-only configs are valid
  auto with_dataset = parse_experiment_config(
      R"({"codec":"c","attacks":[{"family":"none","thetas":[0]}],"seeds":[1],"dataset":"d","output_csv":"o"})");
  CHECK(with_dataset.dataset_dir == "d");
  CHECK_FALSE(with_dataset.use_synthetic);
}

TEST_CASE("rows_to_csv: exact header and formatting") {
  ExperimentRow r;
  r.method = "rosmm_w";
  r.attack = "gaussian_noise";
  r.theta = 0.05;
  r.seed = 7;
  r.image = "00001.ppm";
  r.psnr_db = 24.25;
  r.ssim = 0.5;
  r.bit_acc = 1.0;
  ExperimentRow inf_row = r;
  inf_row.psnr_db = std::numeric_limits<double>::infinity();
  inf_row.status = "ok";
  const auto csv = rows_to_csv({r, inf_row});
  CHECK(csv == "method,attack,theta,seed,image,psnr_db,ssim,bit_acc,status\n"
               "rosmm_w,gaussian_noise,0.05,7,00001.ppm,24.250000,0.500000,1.000000,ok\n"
               "rosmm_w,gaussian_noise,0.05,7,00001.ppm,inf,0.500000,1.000000,ok\n");
}

TEST_CASE("run_experiment: full grid over a bsc channel, repeatable byte for byte") {
  TempDir dir("rosmm_test_experiment");
  {
    autoenc::CodecConfig cc;
    cc.image_size = 16;
    cc.grid = 8;
    cc.codebook_size = 8;
    cc.dim = 8;
    cc.base_width = 8;
    auto codec = autoenc::make_codec<float>(cc, 5);
    autoenc::save_codec(codec, dir.file("codec.ckpt"));
  }
  ExperimentConfig cfg;
  cfg.codec_path = dir.file("codec.ckpt");
  cfg.attacks = {{"bsc", {0.0, 0.1}}};
  cfg.channel = "bsc";
  cfg.seeds = {1, 2};
  cfg.use_synthetic = true;
  cfg.synthetic = {3, 16, 11};
  cfg.output_csv = dir.file("a.csv");

  auto rows = run_experiment(cfg);
  REQUIRE(rows.size() == 3 * 1 * 2 * 2);  // images x families x thetas x seeds, one method
  for (const auto& row : rows) {
    CHECK(row.method == "rosmm_w");
    CHECK(row.status == "ok");
    CHECK(row.bit_acc >= 0.0);
    CHECK(row.bit_acc <= 1.0);
  }
  // theta 0 rows are exact round trips
  int clean_rows = 0;
  for (const auto& row : rows)
    if (row.theta == 0.0) {
      CHECK(row.bit_acc == 1.0);
      ++clean_rows;
    }
  CHECK(clean_rows == 6);

  cfg.output_csv = dir.file("b.csv");
  run_experiment(cfg);
  CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
  CHECK(slurp(dir.file("a.csv")) == rows_to_csv(rows));
}

TEST_CASE("run_experiment: capacity failures are reported per row, not thrown") {
  TempDir dir("rosmm_test_experiment_cap");
  {
    autoenc::CodecConfig cc;
    cc.image_size = 16;
    cc.grid = 8;
    cc.codebook_size = 8;
    cc.dim = 8;
    cc.base_width = 8;
    auto codec = autoenc::make_codec<float>(cc, 5);
    autoenc::save_codec(codec, dir.file("codec.ckpt"));
  }
  ExperimentConfig cfg;
  cfg.codec_path = dir.file("codec.ckpt");
  cfg.attacks = {{"none", {0.0}}};
  cfg.seeds = {1};
  cfg.r = 8;  // 512 bits * 8 replicas > 768 latent cells
  cfg.use_synthetic = true;
  cfg.synthetic = {2, 16, 12};
  cfg.output_csv = dir.file("cap.csv");

  auto rows = run_experiment(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.status != "ok");
    CHECK(row.status.find(',') == std::string::npos);
    CHECK(row.bit_acc == 0.0);
  }
}

TEST_CASE("run_experiment: carrier channel at r=1 round trips a clean attack") {
  TempDir dir("rosmm_test_experiment_carrier");
  {
    autoenc::CodecConfig cc;
    cc.image_size = 16;
    cc.grid = 8;
    cc.codebook_size = 8;
    cc.dim = 8;
    cc.base_width = 8;
    auto codec = autoenc::make_codec<float>(cc, 5);
    autoenc::save_codec(codec, dir.file("codec.ckpt"));
  }
  ExperimentConfig cfg;
  cfg.codec_path = dir.file("codec.ckpt");
  cfg.attacks = {{"brightness", {1.0}}};
  cfg.seeds = {1, 2, 3};
  cfg.r = 1;
  cfg.key = 0x5eed;
  cfg.use_synthetic = true;
  cfg.synthetic = {2, 16, 13};
  cfg.output_csv = dir.file("carrier.csv");

  auto rows = run_experiment(cfg);
  REQUIRE(rows.size() == 2 * 3);
  double mean_acc = 0;
  for (const auto& row : rows) {
    CHECK(row.status == "ok");
    mean_acc += row.bit_acc / rows.size();
  }
  CHECK(mean_acc > 0.95);  // r=1 tolerates a sub-percent quantization flip rate
}
