#include "fairgrain/image.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

namespace fairgrain {

namespace {
int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  in >> value;
  return value;
}
}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  int channels;
  if (magic == "P6")
    channels = 3;
  else if (magic == "P5")
    channels = 1;
  else
    throw IoError("unsupported image format in " + path + " (want binary PPM/PGM)");
  const int w = read_pnm_token(in);
  const int h = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw IoError("unsupported PNM header in " + path);
  in.get();  // single whitespace after header
  std::vector<std::uint8_t> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw IoError("truncated image data in " + path);
  Image img(h, w, channels);
  for (size_t i = 0; i < raw.size(); ++i) img.pix[i] = raw[i] / 255.0;
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  if (img.c != 3 && img.c != 1) throw IoError("write_ppm: needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<std::uint8_t> raw(img.pix.size());
  for (size_t i = 0; i < img.pix.size(); ++i) {
    const double v = std::clamp(img.pix[i], 0.0, 1.0);
    raw[i] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing image data: " + path);
}

Image resize_image(const Image& img, int th, int tw) {
  Image out(th, tw, img.c);
  for (int ch = 0; ch < img.c; ++ch)
    bilinear_resize(img.pix.data() + ch, img.h, img.w, img.c, out.pix.data() + ch, th, tw,
                    img.c);
  return out;
}

void heat_color(double t, double rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  // stops: blue, green, yellow, red
  static const double stops[4][3] = {
      {0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, {1.0, 0.0, 0.0}};
  const double pos = t * 3.0;
  const int band = std::min(2, static_cast<int>(pos));
  const double f = pos - band;
  for (int i = 0; i < 3; ++i)
    rgb[i] = stops[band][i] * (1.0 - f) + stops[band + 1][i] * f;
}

Image overlay_heatmap(const Image& img, const Plane& normalized, double alpha) {
  if (normalized.h != img.h || normalized.w != img.w)
    throw ConfigError("overlay_heatmap: map and image dimensions differ");
  Image out(img.h, img.w, 3);
  double rgb[3];
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      heat_color(normalized.at(y, x), rgb);
      for (int ch = 0; ch < 3; ++ch) {
        const double base = img.c == 3 ? img.at(y, x, ch) : img.at(y, x, 0);
        out.at(y, x, ch) = alpha * rgb[ch] + (1.0 - alpha) * base;
      }
    }
  return out;
}

}  // namespace fairgrain
