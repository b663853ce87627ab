#include "common/image_io.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace rosmm {

namespace {

// next token, skipping whitespace and '#' comments
std::string next_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("ppm: '" + path + "' is truncated");
  std::string tok;
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::string& what, const std::string& path) {
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (...) {
    throw std::runtime_error("ppm: '" + path + "' has invalid " + what + " '" + tok + "'");
  }
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm: cannot open '" + path + "'");
  if (next_token(in, path) != "P6") throw std::runtime_error("ppm: '" + path + "' is not a P6 file");
  const int w = parse_dim(next_token(in, path), "width", path);
  const int h = parse_dim(next_token(in, path), "height", path);
  const int maxval = parse_dim(next_token(in, path), "maxval", path);
  if (maxval != 255) throw std::runtime_error("ppm: '" + path + "' has unsupported maxval " + std::to_string(maxval));
  // header ends with exactly one whitespace byte, already consumed by next_token
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw std::runtime_error("ppm: '" + path + "' is truncated");
  Image img(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * 3 + c];
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("ppm: only 3-channel images supported");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("ppm: cannot open '" + path + "' for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(static_cast<size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) raw[(static_cast<size_t>(y) * img.width + x) * 3 + c] = img.at(c, y, x);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("ppm: write to '" + path + "' failed");
}

}  // namespace rosmm
