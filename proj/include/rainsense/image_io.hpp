// 8-bit image decoding (PGM/PPM, PNG) and encoding (PGM).
#pragma once

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rainsense/common.hpp"

namespace rainsense {

/// Luminance as real values in [0,1], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;
};

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return (kLumaR * r + kLumaG * g + kLumaB * b) / 255.0;
}

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw Error("corrupt PNM header in '" + path + "'");
  return v;
}

inline GrayImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing frame file '" + path + "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw Error("undecodable frame '" + path + "': only binary PGM (P5) or PPM (P6) supported");
  }
  bool rgb = magic[1] == '6';
  GrayImage img;
  img.width = read_pnm_int(in, path);
  img.height = read_pnm_int(in, path);
  int maxval = read_pnm_int(in, path);
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) {
    throw Error("undecodable frame '" + path + "': unsupported dimensions or maxval");
  }
  in.get();  // single whitespace before raster
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<std::uint8_t> raw(n * (rgb ? 3 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw Error("truncated frame '" + path + "'");
  img.pixels.resize(n);
  double scale = 255.0 / maxval;
  for (std::size_t i = 0; i < n; ++i) {
    double v = rgb ? luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) : raw[i] / 255.0;
    img.pixels[i] = std::min(1.0, v * scale);
  }
  return img;
}

inline GrayImage read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("undecodable frame '" + path + "': " + image.message);
  }
  bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("undecodable frame '" + path + "': " + msg);
  }
  GrayImage img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = color ? luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) : raw[i] / 255.0;
  }
  return img;
}

}  // namespace detail

/// Dispatches on extension: .pgm/.ppm/.pnm or .png.
inline GrayImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("missing frame file '" + path.string() + "'");
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return detail::read_png(path.string());
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return detail::read_pnm(path.string());
  throw Error("undecodable frame '" + path.string() + "': unknown extension");
}

inline void write_pgm(const std::filesystem::path& path, int width, int height, const std::uint8_t* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(width) * height);
}

/// Quantizes [0,1] values to 8 bits (round to nearest).
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  write_pgm(path, img.width, img.height, raw.data());
}

}  // namespace rainsense
