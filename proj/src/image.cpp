#include "hmadapt/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hmadapt {

Image2D::Image2D(int width, int height, std::uint32_t levels, std::uint16_t fill)
    : width_(width), height_(height), levels_(levels) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("Image2D: dimensions must be >= 1");
  if (levels < 2 || levels > 65536)
    throw std::invalid_argument("Image2D: levels must be in [2, 65536]");
  if (fill > max_value()) throw std::invalid_argument("Image2D: fill exceeds levels-1");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image2D Image2D::from_pixels(int width, int height, std::uint32_t levels,
                             std::vector<std::uint16_t> pixels) {
  Image2D img(width, height, levels);
  if (pixels.size() != img.pixels_.size())
    throw std::invalid_argument("Image2D: pixel count does not match width*height");
  for (std::uint16_t p : pixels) {
    if (p > img.max_value())
      throw std::invalid_argument("Image2D: pixel value " + std::to_string(p) +
                                  " exceeds levels-1");
  }
  img.pixels_ = std::move(pixels);
  return img;
}

std::uint16_t clamp_level(double value, std::uint32_t levels) {
  const std::int64_t rounded = round_half_away(value);
  const std::int64_t hi = static_cast<std::int64_t>(levels) - 1;
  return static_cast<std::uint16_t>(std::clamp<std::int64_t>(rounded, 0, hi));
}

void Volume3D::validate() const {
  if (slices.empty()) throw std::invalid_argument("Volume3D: no slices");
  for (const Image2D& s : slices) {
    if (!s.same_shape(slices.front()))
      throw std::invalid_argument("Volume3D: slices differ in shape or levels");
  }
}

Image2D mip(const Volume3D& volume) {
  volume.validate();
  Image2D out = volume.slices.front();
  for (std::size_t s = 1; s < volume.slices.size(); ++s) {
    const auto& src = volume.slices[s].pixels();
    auto& dst = out.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  return out;
}

namespace {

// Bilinear fetch with clamp-to-edge addressing.
double sample_clamped(const Image2D& img, double sx, double sy) {
  const int w = img.width(), h = img.height();
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  const int x0c = std::clamp(x0, 0, w - 1);
  const int x1c = std::clamp(x0 + 1, 0, w - 1);
  const int y0c = std::clamp(y0, 0, h - 1);
  const int y1c = std::clamp(y0 + 1, 0, h - 1);
  const double top = img.at(x0c, y0c) + fx * (img.at(x1c, y0c) - img.at(x0c, y0c));
  const double bot = img.at(x0c, y1c) + fx * (img.at(x1c, y1c) - img.at(x0c, y1c));
  return top + fy * (bot - top);
}

// Bilinear fetch where out-of-bounds neighbors read as 0.
double sample_zero_fill(const Image2D& img, double sx, double sy) {
  const int w = img.width(), h = img.height();
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  auto fetch = [&](int x, int y) -> double {
    if (x < 0 || x >= w || y < 0 || y >= h) return 0.0;
    return img.at(x, y);
  };
  const double v00 = fetch(x0, y0), v10 = fetch(x0 + 1, y0);
  const double v01 = fetch(x0, y0 + 1), v11 = fetch(x0 + 1, y0 + 1);
  const double top = v00 + fx * (v10 - v00);
  const double bot = v01 + fx * (v11 - v01);
  return top + fy * (bot - top);
}

}  // namespace

Image2D bilinear_resize(const Image2D& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw std::invalid_argument("bilinear_resize: target dimensions must be >= 1");
  if (out_w == img.width() && out_h == img.height()) return img;
  Image2D out(out_w, out_h, img.levels());
  const double x_scale = static_cast<double>(img.width()) / out_w;
  const double y_scale = static_cast<double>(img.height()) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double sy = (y + 0.5) * y_scale - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double sx = (x + 0.5) * x_scale - 0.5;
      out.at(x, y) = clamp_level(sample_clamped(img, sx, sy), img.levels());
    }
  }
  return out;
}

Image2D rotate(const Image2D& img, double degrees) {
  if (!(std::abs(degrees) <= 180.0))
    throw std::invalid_argument("rotate: |degrees| must be <= 180");
  if (degrees == 0.0) return img;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.width() - 1) / 2.0;
  const double cy = (img.height() - 1) / 2.0;
  Image2D out(img.width(), img.height(), img.levels());
  for (int y = 0; y < img.height(); ++y) {
    const double dy = y - cy;
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - cx;
      // Inverse mapping: rotate the output grid back into the source.
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      out.at(x, y) = clamp_level(sample_zero_fill(img, sx, sy), img.levels());
    }
  }
  return out;
}

Image2D flip_h(const Image2D& img) {
  Image2D out(img.width(), img.height(), img.levels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(img.width() - 1 - x, y);
  return out;
}

Image2D flip_v(const Image2D& img) {
  Image2D out(img.width(), img.height(), img.levels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(x, img.height() - 1 - y);
  return out;
}

Image2D translate(const Image2D& img, int dx, int dy) {
  Image2D out(img.width(), img.height(), img.levels());
  for (int y = 0; y < img.height(); ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= img.height()) continue;
    for (int x = 0; x < img.width(); ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= img.width()) continue;
      out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

Image2D add_gaussian_noise(const Image2D& img, double sigma, Rng& rng) {
  if (sigma < 0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0) return img;
  Image2D out(img.width(), img.height(), img.levels());
  const auto& src = img.pixels();
  auto& dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = clamp_level(src[i] + rng.normal(0.0, sigma), img.levels());
  return out;
}

}  // namespace hmadapt
