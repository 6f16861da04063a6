#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace advpatch {

// Grayscale image, values in [0, 255] as doubles. Values may exceed the
// range transiently (e.g. after noise injection); they are clamped when
// written out.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> px;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), px(size_t(h) * w, fill) {}

  double& at(int y, int x) { return px[size_t(y) * width + x]; }
  double at(int y, int x) const { return px[size_t(y) * width + x]; }
};

inline void save_pgm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double v = std::llround(img.at(y, x));
      if (v < 0) v = 0;
      if (v > 255) v = 255;
      row[x] = static_cast<unsigned char>(v);
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) throw std::runtime_error("short write: " + path);
}

namespace detail {
inline int pgm_token(std::istream& in) {
  // skips whitespace and '#' comments, returns a nonnegative int
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in || v < 0) throw std::runtime_error("malformed PGM header");
  return v;
}
}  // namespace detail

inline Image load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[2] = {0, 0};
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || magic[1] != '5')
    throw std::runtime_error("not a binary PGM (P5): " + path);
  const int w = detail::pgm_token(f);
  const int h = detail::pgm_token(f);
  const int maxval = detail::pgm_token(f);
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval: " + path);
  f.get();  // single whitespace after maxval
  Image img(h, w);
  std::vector<unsigned char> buf(size_t(h) * w);
  f.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!f) throw std::runtime_error("truncated PGM data: " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.px[i] = double(buf[i]);
  return img;
}

}  // namespace advpatch
