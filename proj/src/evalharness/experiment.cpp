#include "evalharness/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "autoenc/codec.hpp"
#include "carrier/carrier.hpp"
#include "common/rng.hpp"
#include "evalharness/metrics.hpp"
#include "restore/restorer.hpp"

namespace rosmm::evalharness {

void ExperimentConfig::validate() const {
  if (codec_path.empty()) throw std::invalid_argument("experiment config: codec path is required");
  if (attacks.empty()) throw std::invalid_argument("experiment config: need at least one attack grid entry");
  for (const auto& a : attacks)
    if (a.thetas.empty())
      throw std::invalid_argument("experiment config: attack '" + a.family + "' has no theta values");
  if (seeds.empty()) throw std::invalid_argument("experiment config: need at least one seed");
  if (channel != "carrier" && channel != "bsc" && channel != "burst")
    throw std::invalid_argument("experiment config: unknown channel '" + channel + "'");
  if (channel != "carrier") {
    for (const auto& a : attacks)
      if (a.family != channel)
        throw std::invalid_argument("experiment config: channel '" + channel + "' requires attack family '" +
                                    channel + "', got '" + a.family + "'");
  } else {
    for (const auto& a : attacks) carrier::attack_family_from_name(a.family);
  }
  if (r < 1) throw std::invalid_argument("experiment config: r must be >= 1");
  if (refine_rounds < 1) throw std::invalid_argument("experiment config: refine_rounds must be >= 1");
  if (!use_synthetic && dataset_dir.empty())
    throw std::invalid_argument("experiment config: need either dataset or synthetic");
  if (use_synthetic && !dataset_dir.empty())
    throw std::invalid_argument("experiment config: dataset and synthetic are mutually exclusive");
  if (output_csv.empty()) throw std::invalid_argument("experiment config: output_csv is required");
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw std::invalid_argument("experiment config: unknown key '" + key + "' in " + where);
  }
}

uint64_t parse_key_value(const json& v) {
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) s = s.substr(2);
    if (s.empty() || s.size() > 16) throw std::invalid_argument("experiment config: key must be 64-bit hex");
    uint64_t out = 0;
    for (char c : s) {
      int nib;
      if (c >= '0' && c <= '9')
        nib = c - '0';
      else if (c >= 'a' && c <= 'f')
        nib = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F')
        nib = c - 'A' + 10;
      else
        throw std::invalid_argument("experiment config: key has invalid hex character");
      out = (out << 4) | static_cast<uint64_t>(nib);
    }
    return out;
  }
  throw std::invalid_argument("experiment config: key must be an unsigned integer or hex string");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("experiment config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("experiment config: root must be an object");
  reject_unknown_keys(j,
                      {"codec", "restorer", "attacks", "channel", "r", "key", "seeds", "dataset", "synthetic",
                       "output_csv", "refine_rounds"},
                      "root");
  ExperimentConfig cfg;
  cfg.codec_path = j.at("codec").get<std::string>();
  if (j.contains("restorer")) cfg.restorer_path = j.at("restorer").get<std::string>();
  for (const auto& a : j.at("attacks")) {
    reject_unknown_keys(a, {"family", "thetas"}, "attacks entry");
    AttackGrid g;
    g.family = a.at("family").get<std::string>();
    for (const auto& t : a.at("thetas")) g.thetas.push_back(t.get<double>());
    cfg.attacks.push_back(std::move(g));
  }
  if (j.contains("channel")) cfg.channel = j.at("channel").get<std::string>();
  if (j.contains("r")) cfg.r = j.at("r").get<int>();
  if (j.contains("key")) cfg.key = parse_key_value(j.at("key"));
  for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<uint64_t>());
  if (j.contains("dataset")) cfg.dataset_dir = j.at("dataset").get<std::string>();
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    reject_unknown_keys(s, {"count", "size", "seed"}, "synthetic");
    cfg.use_synthetic = true;
    cfg.synthetic.count = s.at("count").get<int>();
    cfg.synthetic.image_size = s.at("size").get<int>();
    cfg.synthetic.seed = s.at("seed").get<uint64_t>();
  }
  cfg.output_csv = j.at("output_csv").get<std::string>();
  if (j.contains("refine_rounds")) cfg.refine_rounds = j.at("refine_rounds").get<int>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("experiment config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

namespace {

std::string sanitize_status(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_theta(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string rows_to_csv(const std::vector<ExperimentRow>& rows) {
  std::string csv = "method,attack,theta,seed,image,psnr_db,ssim,bit_acc,status\n";
  for (const auto& r : rows) {
    csv += r.method;
    csv += ',';
    csv += r.attack;
    csv += ',';
    csv += format_theta(r.theta);
    csv += ',';
    csv += std::to_string(r.seed);
    csv += ',';
    csv += r.image;
    csv += ',';
    csv += format_double(r.psnr_db);
    csv += ',';
    csv += format_double(r.ssim);
    csv += ',';
    csv += format_double(r.bit_acc);
    csv += ',';
    csv += r.status;
    csv += '\n';
  }
  return csv;
}

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  auto codec = autoenc::load_codec(config.codec_path);
  restore::RestorerModel<float> restorer;
  const bool with_restorer = !config.restorer_path.empty();
  if (with_restorer) restorer = restore::load_restorer(config.restorer_path);

  std::vector<std::string> names;
  std::vector<Image> images;
  if (config.use_synthetic) {
    images = gen_textures(config.synthetic);
    for (int i = 0; i < config.synthetic.count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "synthetic_%05d", i);
      names.push_back(name);
    }
  } else {
    images = load_ppm_dir(config.dataset_dir, &names);
  }

  // payload per image is channel-independent, compute once
  std::vector<payload::BitPayload> payloads;
  payloads.reserve(images.size());
  for (const auto& img : images) {
    auto cells = autoenc::encode_image(codec, img);
    auto qg = vq::quantize_nearest(cells, codec.codebook);
    payloads.push_back(payload::pack_indices(qg.indices));
  }

  std::vector<ExperimentRow> rows;
  for (size_t i = 0; i < images.size(); ++i) {
    for (const auto& grid : config.attacks) {
      for (double theta : grid.thetas) {
        for (uint64_t seed : config.seeds) {
          ExperimentRow base;
          base.attack = grid.family;
          base.theta = theta;
          base.seed = seed;
          base.image = names[i];

          payload::BitPayload received;
          bool channel_ok = true;
          std::string channel_err;
          try {
            carrier::ChannelModel ch;
            if (config.channel == "bsc") {
              ch.kind = carrier::ChannelKind::Bsc;
              ch.p = theta;
              ch.seed = mix_seed(seed, 0x6368616eULL);
            } else if (config.channel == "burst") {
              ch.kind = carrier::ChannelKind::Burst;
              ch.burst_len = std::max(1, static_cast<int>(std::round(theta * static_cast<double>(payloads[i].size()))));
              ch.seed = mix_seed(seed, 0x6368616eULL);
            } else {
              ch.kind = carrier::ChannelKind::Carrier;
              ch.latent = {3, codec.cfg.image_size, codec.cfg.image_size};
              ch.attack.family = carrier::attack_family_from_name(grid.family);
              ch.attack.theta = theta;
              ch.attack.seed = mix_seed(seed, 0x61747461636bULL);
              ch.key = config.key;
              ch.r = config.r;
              ch.perm_seed = mix_seed(seed, 0x7065726dULL);
              ch.rng_seed = mix_seed(seed, 0x726e67ULL);
            }
            received = carrier::transmit(payloads[i], ch);
          } catch (const std::exception& e) {
            channel_ok = false;
            channel_err = sanitize_status(e.what());
          }

          {
            ExperimentRow row = base;
            row.method = "rosmm_w";
            if (channel_ok) {
              try {
                const auto indices = payload::unpack_indices(received, codec.cells_per_image());
                const Image decoded = autoenc::decode_indices(codec, indices);
                row.psnr_db = psnr(images[i], decoded);
                row.ssim = ssim(images[i], decoded);
                row.bit_acc = bit_accuracy(payloads[i], received);
              } catch (const std::exception& e) {
                row.status = sanitize_status(e.what());
              }
            } else {
              row.status = channel_err;
            }
            rows.push_back(std::move(row));
          }

          if (with_restorer) {
            ExperimentRow row = base;
            row.method = "rosmm";
            if (channel_ok) {
              try {
                auto refined = restore::refine_bits(received, codec, restorer, config.refine_rounds);
                row.psnr_db = psnr(images[i], refined.restored);
                row.ssim = ssim(images[i], refined.restored);
                row.bit_acc = bit_accuracy(payloads[i], refined.bits);
              } catch (const std::exception& e) {
                row.status = sanitize_status(e.what());
              }
            } else {
              row.status = channel_err;
            }
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }

  std::sort(rows.begin(), rows.end(), [](const ExperimentRow& a, const ExperimentRow& b) {
    if (a.image != b.image) return a.image < b.image;
    if (a.attack != b.attack) return a.attack < b.attack;
    if (a.theta != b.theta) return a.theta < b.theta;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.method < b.method;
  });

  std::ofstream out(config.output_csv, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("run_experiment: cannot open '" + config.output_csv + "' for writing");
  out << rows_to_csv(rows);
  if (!out) throw std::runtime_error("run_experiment: write to '" + config.output_csv + "' failed");
  return rows;
}

}  // namespace rosmm::evalharness
