#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hmadapt/rng.hpp"

namespace hmadapt {

// Row-major integer grayscale raster. Intensities live in [0, levels-1];
// every transform that produces real values rounds half away from zero and
// clamps back into that range.
class Image2D {
 public:
  Image2D() = default;
  Image2D(int width, int height, std::uint32_t levels, std::uint16_t fill = 0);

  // Validates that every pixel is below `levels`.
  static Image2D from_pixels(int width, int height, std::uint32_t levels,
                             std::vector<std::uint16_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint32_t levels() const { return levels_; }
  std::uint16_t max_value() const { return static_cast<std::uint16_t>(levels_ - 1); }
  std::int64_t pixel_count() const { return static_cast<std::int64_t>(width_) * height_; }

  std::uint16_t at(int x, int y) const {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint16_t& at(int x, int y) {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  const std::vector<std::uint16_t>& pixels() const { return pixels_; }
  std::vector<std::uint16_t>& pixels() { return pixels_; }

  bool same_shape(const Image2D& other) const {
    return width_ == other.width_ && height_ == other.height_ && levels_ == other.levels_;
  }
  bool operator==(const Image2D& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::uint32_t levels_ = 0;
  std::vector<std::uint16_t> pixels_;
};

// Ordered slice stack; all slices must agree in shape and depth.
struct Volume3D {
  std::vector<Image2D> slices;

  // Throws std::invalid_argument if empty or inconsistent.
  void validate() const;
};

// Rectangular finding annotation, center given in pixel coordinates.
struct AnnotationBox {
  int center_x = 0;
  int center_y = 0;
  int width = 0;
  int height = 0;
};

// Per-pixel maximum over the stack.
Image2D mip(const Volume3D& volume);

// Pixel-center aligned bilinear resampling (clamp-to-edge at the borders).
Image2D bilinear_resize(const Image2D& img, int out_w, int out_h);

// Rotation about the image center, bilinear sampling, zero fill outside the
// source. Positive angles rotate content counterclockwise in standard x/y
// orientation (clockwise on screen with y pointing down). |degrees| <= 180.
Image2D rotate(const Image2D& img, double degrees);

Image2D flip_h(const Image2D& img);  // column reversal
Image2D flip_v(const Image2D& img);  // row reversal

// Integer shift; dx > 0 moves content toward larger x. Vacated pixels are 0.
Image2D translate(const Image2D& img, int dx, int dy);

// Adds i.i.d. N(0, sigma^2) per pixel on the raw intensity scale, then rounds
// and clamps. sigma == 0 returns the input unchanged.
Image2D add_gaussian_noise(const Image2D& img, double sigma, Rng& rng);

inline std::int64_t round_half_away(double x) { return std::llround(x); }

std::uint16_t clamp_level(double value, std::uint32_t levels);

}  // namespace hmadapt
