#pragma once

// 8-bit grayscale image files. Binary PGM (P5, maxval 255) is always
// available; PNG is compiled in when GMRF_HAVE_PNG is defined.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef GMRF_HAVE_PNG
#include <png.h>
#endif

#include "gmrf/lattice.hpp"

namespace gmrf {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

namespace detail {

inline std::size_t pgm_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) throw ImageFormatError("malformed PGM header");
  return std::stoul(buf.substr(start, pos - start));
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline GrayImage read_pgm(const std::filesystem::path& path) {
  const std::string buf = detail::slurp(path);
  if (buf.size() < 2 || buf[0] != 'P') throw ImageFormatError(path.string() + ": not a PNM file");
  if (buf[1] == '6' || buf[1] == '3')
    throw ImageFormatError(path.string() + ": colour image, expected 8-bit grayscale");
  if (buf[1] != '5') throw ImageFormatError(path.string() + ": only binary PGM (P5) is supported");
  std::size_t pos = 2;
  GrayImage img;
  img.width = detail::pgm_token(buf, pos);
  img.height = detail::pgm_token(buf, pos);
  const std::size_t maxval = detail::pgm_token(buf, pos);
  if (maxval != 255) throw ImageFormatError(path.string() + ": expected maxval 255");
  ++pos;  // single whitespace before raster
  const std::size_t count = img.width * img.height;
  if (buf.size() < pos + count) throw ImageFormatError(path.string() + ": truncated raster");
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                    buf.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

#ifdef GMRF_HAVE_PNG
inline GrayImage read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw ImageFormatError(path.string() + ": " + png.message);
  if ((png.format & PNG_FORMAT_FLAG_COLOR) != 0) {
    png_image_free(&png);
    throw ImageFormatError(path.string() + ": colour image, expected 8-bit grayscale");
  }
  png.format = PNG_FORMAT_GRAY;
  GrayImage img{png.width, png.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(png))};
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr))
    throw ImageFormatError(path.string() + ": " + png.message);
  return img;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.pixels.data(), 0, nullptr))
    throw std::runtime_error(path.string() + ": " + png.message);
}
#endif

inline bool is_png_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png";
}

inline GrayImage read_image(const std::filesystem::path& path) {
  if (is_png_path(path)) {
#ifdef GMRF_HAVE_PNG
    return read_png(path);
#else
    throw ImageFormatError(path.string() + ": PNG support not compiled in");
#endif
  }
  return read_pgm(path);
}

inline void write_image(const std::filesystem::path& path, const GrayImage& img) {
  if (is_png_path(path)) {
#ifdef GMRF_HAVE_PNG
    write_png(path, img);
    return;
#else
    throw ImageFormatError(path.string() + ": PNG support not compiled in");
#endif
  }
  write_pgm(path, img);
}

/// Square check plus conversion to doubles.
inline ImageBuffer to_buffer(const GrayImage& img, const std::string& what = "image") {
  if (img.width != img.height || img.width == 0)
    throw ImageFormatError(what + " is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + ", expected a square image");
  return ImageBuffer(std::vector<double>(img.pixels.begin(), img.pixels.end()));
}

/// Round to nearest and clamp to [0, 255].
inline GrayImage quantize(const ImageBuffer& buf, std::size_t side) {
  GrayImage img{side, side, std::vector<std::uint8_t>(buf.size())};
  for (std::size_t i = 0; i < buf.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(buf[i]), 0L, 255L));
  return img;
}

}  // namespace gmrf
