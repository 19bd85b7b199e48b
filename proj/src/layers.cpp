#include "hmadapt/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hmadapt {

namespace {

int out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, int stride, int pad) {
  if (weight.c != x.c) throw std::invalid_argument("conv2d: channel mismatch");
  if (weight.h != weight.w) throw std::invalid_argument("conv2d: kernel must be square");
  const int k = weight.h;
  const int oh = out_extent(x.h, k, stride, pad);
  const int ow = out_extent(x.w, k, stride, pad);
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: output would be empty");
  Tensor y(x.n, weight.n, oh, ow);
  for (int n = 0; n < x.n; ++n) {
    for (int co = 0; co < weight.n; ++co) {
      for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = weight.at(co, ci, ky, kx);
            if (wv == 0.0) continue;
            // Hoist the bounds test: ox in [lo, hi) iff ix lands inside x.
            const int lo = std::max(0, (pad - kx + stride - 1) / stride);
            const int top = x.w - 1 - kx + pad;
            const int hi = std::min(ow, top < 0 ? 0 : top / stride + 1);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= x.h) continue;
              const std::size_t ybase = y.index(n, co, oy, 0);
              const std::ptrdiff_t xbase =
                  static_cast<std::ptrdiff_t>(x.index(n, ci, iy, 0)) + kx - pad;
              for (int ox = lo; ox < hi; ++ox)
                y.v[ybase + ox] += wv * x.v[xbase + std::ptrdiff_t{ox} * stride];
            }
          }
        }
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, int stride, int pad,
                     const Tensor& dy, Tensor* dx, Tensor* dweight) {
  const int k = weight.h;
  for (int n = 0; n < x.n; ++n) {
    for (int co = 0; co < weight.n; ++co) {
      for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = weight.at(co, ci, ky, kx);
            double wgrad = 0.0;
            const int lo = std::max(0, (pad - kx + stride - 1) / stride);
            const int top = x.w - 1 - kx + pad;
            const int hi = std::min(dy.w, top < 0 ? 0 : top / stride + 1);
            for (int oy = 0; oy < dy.h; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= x.h) continue;
              const std::size_t ybase = dy.index(n, co, oy, 0);
              const std::ptrdiff_t xbase =
                  static_cast<std::ptrdiff_t>(x.index(n, ci, iy, 0)) + kx - pad;
              if (dx) {
                for (int ox = lo; ox < hi; ++ox) {
                  const double g = dy.v[ybase + ox];
                  const std::ptrdiff_t xi = xbase + std::ptrdiff_t{ox} * stride;
                  wgrad += g * x.v[xi];
                  dx->v[xi] += g * wv;
                }
              } else {
                for (int ox = lo; ox < hi; ++ox)
                  wgrad += dy.v[ybase + ox] * x.v[xbase + std::ptrdiff_t{ox} * stride];
              }
            }
            if (dweight) dweight->at(co, ci, ky, kx) += wgrad;
          }
        }
      }
    }
  }
}

NormParams make_norm(int channels) {
  NormParams p;
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.run_mean.assign(channels, 0.0);
  p.run_var.assign(channels, 1.0);
  return p;
}

Tensor norm_forward(const Tensor& x, const NormParams& p, bool train, double eps,
                    double momentum, NormCache* cache) {
  const int C = x.c;
  if (static_cast<int>(p.gamma.size()) != C)
    throw std::invalid_argument("norm_forward: channel mismatch");
  const std::size_t per_channel = static_cast<std::size_t>(x.n) * x.h * x.w;
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (train) {
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < C; ++c) {
        const std::size_t base = x.index(n, c, 0, 0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i)
          mean[c] += x.v[base + i];
      }
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(per_channel);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < C; ++c) {
        const std::size_t base = x.index(n, c, 0, 0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) {
          const double d = x.v[base + i] - mean[c];
          var[c] += d * d;
        }
      }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(per_channel);
  } else {
    mean = p.run_mean;
    var = p.run_var;
  }

  Tensor y(x.n, C, x.h, x.w);
  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor xhat(x.n, C, x.h, x.w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) {
        const double xh = (x.v[base + i] - mean[c]) * inv_std[c];
        xhat.v[base + i] = xh;
        y.v[base + i] = p.gamma[c] * xh + p.beta[c];
      }
    }

  if (cache) {
    cache->train_mode = train;
    cache->inv_std = inv_std;
    cache->xhat = std::move(xhat);
    if (train) {
      cache->new_run_mean.resize(C);
      cache->new_run_var.resize(C);
      for (int c = 0; c < C; ++c) {
        cache->new_run_mean[c] = (1.0 - momentum) * p.run_mean[c] + momentum * mean[c];
        cache->new_run_var[c] = (1.0 - momentum) * p.run_var[c] + momentum * var[c];
      }
    } else {
      cache->new_run_mean.clear();
      cache->new_run_var.clear();
    }
  }
  return y;
}

void norm_backward(const NormParams& p, const NormCache& cache, const Tensor& dy,
                   Tensor* dx, std::vector<double>* dgamma, std::vector<double>* dbeta) {
  const int C = dy.c;
  const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
  const double m = static_cast<double>(dy.n) * static_cast<double>(plane);
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n; ++n) {
      const std::size_t base = dy.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.v[base + i];
        sum_dy_xhat += dy.v[base + i] * cache.xhat.v[base + i];
      }
    }
    if (dgamma) (*dgamma)[c] += sum_dy_xhat;
    if (dbeta) (*dbeta)[c] += sum_dy;
    if (!dx) continue;
    const double g = p.gamma[c];
    const double istd = cache.inv_std[c];
    if (cache.train_mode) {
      // dX = g*istd * (dY - mean(dY) - xhat * mean(dY*xhat)), means over the
      // batch statistics axes.
      const double mean_dy = sum_dy / m;
      const double mean_dy_xhat = sum_dy_xhat / m;
      for (int n = 0; n < dy.n; ++n) {
        const std::size_t base = dy.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i)
          dx->v[base + i] += g * istd *
                             (dy.v[base + i] - mean_dy - cache.xhat.v[base + i] * mean_dy_xhat);
      }
    } else {
      // Running statistics are constants in eval mode.
      for (int n = 0; n < dy.n; ++n) {
        const std::size_t base = dy.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) dx->v[base + i] += g * istd * dy.v[base + i];
      }
    }
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.v)
    if (v < 0.0) v = 0.0;
  return y;
}

void relu_backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  for (std::size_t i = 0; i < x.v.size(); ++i)
    if (x.v[i] > 0.0) dx->v[i] += dy.v[i];
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n, x.c, 1, 1);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += x.v[base + i];
      y.at(n, c, 0, 0) = acc / static_cast<double>(plane);
    }
  return y;
}

void global_avg_pool_backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  const double scale = 1.0 / static_cast<double>(plane);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const double g = dy.at(n, c, 0, 0) * scale;
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dx->v[base + i] += g;
    }
}

Tensor fc_forward(const Tensor& x, const FcParams& p) {
  if (x.c != p.in_dim || x.h != 1 || x.w != 1)
    throw std::invalid_argument("fc_forward: input must be N x in_dim x 1 x 1");
  Tensor y(x.n, p.out_dim, 1, 1);
  for (int n = 0; n < x.n; ++n)
    for (int o = 0; o < p.out_dim; ++o) {
      double acc = p.bias[o];
      for (int i = 0; i < p.in_dim; ++i)
        acc += p.weight[static_cast<std::size_t>(o) * p.in_dim + i] * x.at(n, i, 0, 0);
      y.at(n, o, 0, 0) = acc;
    }
  return y;
}

void fc_backward(const Tensor& x, const FcParams& p, const Tensor& dy, Tensor* dx,
                 std::vector<double>* dweight, std::vector<double>* dbias) {
  for (int n = 0; n < x.n; ++n)
    for (int o = 0; o < p.out_dim; ++o) {
      const double g = dy.at(n, o, 0, 0);
      if (dbias) (*dbias)[o] += g;
      for (int i = 0; i < p.in_dim; ++i) {
        const std::size_t wi = static_cast<std::size_t>(o) * p.in_dim + i;
        if (dweight) (*dweight)[wi] += g * x.at(n, i, 0, 0);
        if (dx) dx->at(n, i, 0, 0) += g * p.weight[wi];
      }
    }
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  for (int n = 0; n < logits.n; ++n) {
    double mx = logits.at(n, 0, 0, 0);
    for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.at(n, c, 0, 0));
    double sum = 0.0;
    for (int c = 0; c < logits.c; ++c) {
      const double e = std::exp(logits.at(n, c, 0, 0) - mx);
      p.at(n, c, 0, 0) = e;
      sum += e;
    }
    for (int c = 0; c < logits.c; ++c) p.at(n, c, 0, 0) /= sum;
  }
  return p;
}

}  // namespace hmadapt
