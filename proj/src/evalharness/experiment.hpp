#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evalharness/textures.hpp"

namespace rosmm::evalharness {

struct AttackGrid {
  std::string family;
  std::vector<double> thetas;
};

struct ExperimentConfig {
  std::string codec_path;
  std::string restorer_path;  // empty = no restoration rows
  std::vector<AttackGrid> attacks;
  std::string channel = "carrier";  // carrier | bsc | burst
  int r = 8;
  uint64_t key = 0;
  std::vector<uint64_t> seeds;
  std::string dataset_dir;  // exclusive with synthetic
  bool use_synthetic = false;
  TextureSpec synthetic;
  std::string output_csv;
  int refine_rounds = 1;

  void validate() const;
};

// strict parse: unknown keys anywhere are rejected
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

struct ExperimentRow {
  std::string method;
  std::string attack;
  double theta = 0.0;
  uint64_t seed = 0;
  std::string image;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double bit_acc = 0.0;
  std::string status = "ok";
};

// full grid: encode -> pack -> channel -> unpack -> decode (+ optional
// restore/refine); one row per (image, family, theta, seed, method); stage
// failures land in the row's status and the run continues
std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config);

std::string rows_to_csv(const std::vector<ExperimentRow>& rows);

}  // namespace rosmm::evalharness
