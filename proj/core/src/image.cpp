#include "weatherseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "weatherseg/error.hpp"

namespace weatherseg {

Image::Image(int height, int width, double fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InvalidInput("Image: negative dimensions");
  data_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

bool Image::in_unit_range() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

bool Image::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Image Image::quantized() const {
  Image out = *this;
  for (double& v : out.data_) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

std::vector<std::uint8_t> Image::to_bytes() const {
  std::vector<std::uint8_t> out(data_.size());
  std::transform(data_.begin(), data_.end(), out.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  return out;
}

Image Image::from_bytes(int height, int width, std::span<const std::uint8_t> rgb) {
  Image img(height, width);
  if (rgb.size() != img.data_.size()) throw InvalidInput("Image::from_bytes: size mismatch");
  std::transform(rgb.begin(), rgb.end(), img.data_.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return img;
}

double Raster::mean() const noexcept {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

LabelMap::LabelMap(int height, int width, std::vector<std::uint8_t> ids)
    : height_(height), width_(width), data_(std::move(ids)) {
  if (data_.size() != static_cast<std::size_t>(height) * width)
    throw InvalidInput("LabelMap: id count does not match dimensions");
}

int LabelMap::max_id() const noexcept {
  if (data_.empty()) return -1;
  return *std::max_element(data_.begin(), data_.end());
}

int LabelMap::distinct_count() const {
  std::set<std::uint8_t> s(data_.begin(), data_.end());
  return static_cast<int>(s.size());
}

}  // namespace weatherseg
