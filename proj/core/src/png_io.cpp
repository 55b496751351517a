#include "weatherseg/png_io.hpp"

#include <cstdio>
#include <csetjmp>
#include <memory>
#include <vector>

#include <png.h>

#include "weatherseg/error.hpp"

namespace weatherseg::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               int channels, const std::uint8_t* data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("", "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("", "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("", "failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

Decoded read_png(const std::filesystem::path& path, int want_color_type, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("", "missing file " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("", "not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("", "libpng initialization failed");
  }
  Decoded out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("", "corrupt PNG file: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type != want_color_type || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("", "unexpected PNG layout in " + path.string());
  }
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = static_cast<std::size_t>(out.width) * channels;
  out.pixels.resize(stride * out.height);
  for (int y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_rgb(const std::filesystem::path& path, const Image& image) {
  const auto bytes = image.to_bytes();
  write_png(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 3, bytes.data());
}

void write_gray(const std::filesystem::path& path, const LabelMap& labels) {
  write_png(path, labels.width(), labels.height(), PNG_COLOR_TYPE_GRAY, 1, labels.data().data());
}

Image read_rgb(const std::filesystem::path& path) {
  Decoded d = read_png(path, PNG_COLOR_TYPE_RGB, 3);
  return Image::from_bytes(d.height, d.width, d.pixels);
}

LabelMap read_gray(const std::filesystem::path& path) {
  Decoded d = read_png(path, PNG_COLOR_TYPE_GRAY, 1);
  return LabelMap(d.height, d.width, std::move(d.pixels));
}

}  // namespace weatherseg::png
