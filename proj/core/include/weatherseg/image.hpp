#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace weatherseg {

// H x W x 3 raster, interleaved RGB, values in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  // True when every value is finite and inside [0, 1].
  bool in_unit_range() const noexcept;
  bool all_finite() const noexcept;

  // Round to 8 bits and back: v -> round(255 v) / 255.
  Image quantized() const;
  std::vector<std::uint8_t> to_bytes() const;
  static Image from_bytes(int height, int width, std::span<const std::uint8_t> rgb);

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Scalar raster (masks, depth maps).
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, double fill = 0.0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double mean() const noexcept;

  bool operator==(const Raster&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Per-pixel class ids.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}
  LabelMap(int height, int width, std::vector<std::uint8_t> ids);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  int max_id() const noexcept;
  int distinct_count() const;

  bool operator==(const LabelMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace weatherseg
