#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cssl {

/// Class id marking pixels excluded from losses and metrics.
inline constexpr std::uint8_t kIgnore = 255;

/// H x W x 3 interleaved RGB image with values in [0, 1].
class Image {
 public:
  static constexpr std::size_t kChannels = 3;

  Image() = default;
  Image(std::size_t height, std::size_t width, float fill = 0.0f)
      : height_(height), width_(width), pixels_(height * width * kChannels, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }

  float& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return pixels_[(y * width_ + x) * kChannels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return pixels_[(y * width_ + x) * kChannels + c];
  }

  std::vector<float>& pixels() noexcept { return pixels_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

/// H x W class-id field; values are < K or kIgnore.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : height_(height), width_(width), labels_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::uint8_t& at(std::size_t y, std::size_t x) noexcept {
    return labels_[y * width_ + x];
  }
  std::uint8_t at(std::size_t y, std::size_t x) const noexcept {
    return labels_[y * width_ + x];
  }
  std::uint8_t& operator[](std::size_t i) noexcept { return labels_[i]; }
  std::uint8_t operator[](std::size_t i) const noexcept { return labels_[i]; }

  std::vector<std::uint8_t>& labels() noexcept { return labels_; }
  const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }

  bool operator==(const LabelMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// Per-pixel loss weights in [0, 1]; zero on invalid or ignored pixels.
struct WeightMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> w;

  WeightMap() = default;
  WeightMap(std::size_t h, std::size_t wd, float fill = 0.0f)
      : height(h), width(wd), w(h * wd, fill) {}

  bool operator==(const WeightMap&) const = default;
};

/// Reverses the column order of every row.
Image hflip(const Image& image);
LabelMask hflip(const LabelMask& mask);

}  // namespace cssl
