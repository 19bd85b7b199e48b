#pragma once

// Independent reference implementations used as test oracles. Everything here
// is written the slow, obvious way on purpose; none of it shares code with
// the library beyond the basic Image2D container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hmadapt/image.hpp"
#include "hmadapt/rng.hpp"
#include "hmadapt/tensor.hpp"

namespace oracle {

inline std::uint16_t quantize(double v, std::uint32_t levels) {
  const double r = std::llround(v);
  if (r < 0.0) return 0;
  if (r > levels - 1.0) return static_cast<std::uint16_t>(levels - 1);
  return static_cast<std::uint16_t>(r);
}

// Pixel-center-aligned bilinear sampling with clamp-to-edge, restated from
// the documented convention in exact rational arithmetic. The sample position
// (x+0.5)*W/OW - 0.5 has denominator 2*OW, so every interpolated value is a
// rational with denominator 4*OW*OH; `tie` flags pixels whose exact value
// falls halfway between two levels, where any floating-point implementation
// may legitimately round to either neighbor.
struct BilinearExact {
  hmadapt::Image2D rounded;       // round-half-away-from-zero of the exact value
  std::vector<std::uint8_t> tie;  // flat row-major, 1 at exact half-level values
};

inline BilinearExact bilinear_exact(const hmadapt::Image2D& img, int ow, int oh) {
  BilinearExact out{hmadapt::Image2D(ow, oh, img.levels()),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(ow) * oh, 0)};
  auto floor_div = [](std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
  };
  auto pix = [&](std::int64_t x, std::int64_t y) -> std::int64_t {
    x = std::clamp<std::int64_t>(x, 0, img.width() - 1);
    y = std::clamp<std::int64_t>(y, 0, img.height() - 1);
    return img.at(static_cast<int>(x), static_cast<int>(y));
  };
  const std::int64_t dx_den = 2 * ow, dy_den = 2 * oh;
  for (int y = 0; y < oh; ++y) {
    const std::int64_t ay_num = (2ll * y + 1) * img.height() - oh;  // sy = ay_num / dy_den
    const std::int64_t y0 = floor_div(ay_num, dy_den);
    const std::int64_t fy = ay_num - y0 * dy_den;  // fractional part, / dy_den
    for (int x = 0; x < ow; ++x) {
      const std::int64_t ax_num = (2ll * x + 1) * img.width() - ow;
      const std::int64_t x0 = floor_div(ax_num, dx_den);
      const std::int64_t fx = ax_num - x0 * dx_den;
      const std::int64_t num = (dx_den - fx) * (dy_den - fy) * pix(x0, y0) +
                               fx * (dy_den - fy) * pix(x0 + 1, y0) +
                               (dx_den - fx) * fy * pix(x0, y0 + 1) +
                               fx * fy * pix(x0 + 1, y0 + 1);
      const std::int64_t den = dx_den * dy_den;
      const std::int64_t rem = num % den;
      const std::int64_t rounded = num / den + (2 * rem >= den ? 1 : 0);
      out.rounded.at(x, y) = static_cast<std::uint16_t>(rounded);
      out.tie[static_cast<std::size_t>(y) * ow + x] = (2 * rem == den) ? 1 : 0;
    }
  }
  return out;
}

inline hmadapt::Image2D bilinear(const hmadapt::Image2D& img, int ow, int oh) {
  return bilinear_exact(img, ow, oh).rounded;
}

inline hmadapt::Image2D elementwise_max(const std::vector<hmadapt::Image2D>& slices) {
  hmadapt::Image2D out = slices.front();
  for (const auto& s : slices)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(x, y) = std::max(out.at(x, y), s.at(x, y));
  return out;
}

// CDF by direct counting: values[v] = #(pixels <= v) / total.
inline std::vector<double> counting_cdf(const hmadapt::Image2D& img) {
  std::vector<double> values(img.levels(), 0.0);
  for (std::uint16_t p : img.pixels()) values[p] += 1.0;
  double acc = 0.0;
  for (double& v : values) {
    acc += v;
    v = acc / static_cast<double>(img.pixel_count());
  }
  return values;
}

// All-pairs Mann-Whitney statistic: (wins + ties/2) / (P*N).
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, ties = 0.0;
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) ties += 1.0;
    }
  }
  for (int l : labels) neg += (l == 0);
  return (wins + 0.5 * ties) / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline hmadapt::Image2D random_image(int w, int h, std::uint32_t levels, hmadapt::Rng& rng) {
  hmadapt::Image2D img(w, h, levels);
  for (std::uint16_t& p : img.pixels())
    p = static_cast<std::uint16_t>(rng.uniform_int(levels));
  return img;
}

// Relative disagreement between an analytic and a finite-difference value;
// both near zero counts as agreement.
inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-10) return 0.0;
  return std::abs(a - b) / scale;
}

// FD variant with a larger dead zone: gradient entries whose analytic and
// finite-difference values are both below the guard carry no information at
// h^2 truncation accuracy and count as agreement.
inline double fd_rel_err(double analytic, double fd, double guard = 1e-8) {
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  if (scale < guard) return 0.0;
  return std::abs(analytic - fd) / scale;
}

// Convolution restated directly from the definition (no bias term).
inline hmadapt::Tensor conv_ref(const hmadapt::Tensor& x, const hmadapt::Tensor& w,
                                int stride, int pad) {
  const int oh = (x.h + 2 * pad - w.h) / stride + 1;
  const int ow = (x.w + 2 * pad - w.w) / stride + 1;
  hmadapt::Tensor y(x.n, w.n, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int co = 0; co < w.n; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < x.c; ++ci)
            for (int ky = 0; ky < w.h; ++ky)
              for (int kx = 0; kx < w.w; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

}  // namespace oracle
