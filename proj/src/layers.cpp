#include "ratfm/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "detail/gemm.hpp"
#include "ratfm/optim.hpp"

namespace ratfm {

namespace {

struct MapDims {
  std::size_t n, h, w, c;
  std::size_t pixels() const { return n * h * w; }
};

MapDims map_dims(const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError("expected a [H,W,C] or [N,H,W,C] feature map, got " + to_string(s));
}

Shape map_shape(const Tensor& like, std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  if (like.rank() == 3) return {h, w, c};
  return {n, h, w, c};
}

// Rows are pixels (n, y, x); columns are (ky, kx, channel). For a fixed (pixel, ky) the
// in-bounds kx taps read one contiguous run of the input row.
void im2col(const double* x, const MapDims& d, std::size_t k, double* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t cols = k * k * d.c;
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const auto w = static_cast<std::ptrdiff_t>(d.w);
  const auto kk = static_cast<std::ptrdiff_t>(k);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        double* dst = col + ((n * d.h + y) * d.w + xx) * cols;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - xx);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(kk, w + pad - xx);
        for (std::ptrdiff_t ky = 0; ky < kk; ++ky) {
          const std::ptrdiff_t iy = y + ky - pad;
          double* row = dst + ky * kk * static_cast<std::ptrdiff_t>(d.c);
          if (iy < 0 || iy >= h) {
            std::fill_n(row, k * d.c, 0.0);
            continue;
          }
          std::fill_n(row, lo * d.c, 0.0);
          std::copy_n(x + ((n * d.h + iy) * d.w + (xx + lo - pad)) * d.c, (hi - lo) * d.c, row + lo * d.c);
          std::fill_n(row + hi * d.c, (kk - hi) * d.c, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const MapDims& d, std::size_t k, double* gx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t cols = k * k * d.c;
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const auto w = static_cast<std::ptrdiff_t>(d.w);
  const auto kk = static_cast<std::ptrdiff_t>(k);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        const double* src = col + ((n * d.h + y) * d.w + xx) * cols;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - xx);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(kk, w + pad - xx);
        for (std::ptrdiff_t ky = 0; ky < kk; ++ky) {
          const std::ptrdiff_t iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const double* seg = src + (ky * kk + lo) * static_cast<std::ptrdiff_t>(d.c);
          double* dst = gx + ((n * d.h + iy) * d.w + (xx + lo - pad)) * d.c;
          const std::size_t run = static_cast<std::size_t>(hi - lo) * d.c;
          for (std::size_t i = 0; i < run; ++i) dst[i] += seg[i];
        }
      }
    }
  }
}

// Rows are pixels; columns are (channel, tap) so that K_d reshaped to [C_in*(2R+1), C_out/4]
// multiplies directly.
void line_im2col(const double* x, const MapDims& d, std::size_t radius, int dh, int dw, double* col) {
  const std::size_t taps = 2 * radius + 1;
  const std::size_t cols = taps * d.c;
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const auto w = static_cast<std::ptrdiff_t>(d.w);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        double* dst = col + ((n * d.h + y) * d.w + xx) * cols;
        for (std::ptrdiff_t i = -r; i <= r; ++i) {
          const std::ptrdiff_t iy = y + i * dh;
          const std::ptrdiff_t ix = xx + i * dw;
          const auto t = static_cast<std::size_t>(i + r);
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            for (std::size_t j = 0; j < d.c; ++j) dst[j * taps + t] = 0.0;
          } else {
            const double* src = x + ((n * d.h + iy) * d.w + ix) * d.c;
            for (std::size_t j = 0; j < d.c; ++j) dst[j * taps + t] = src[j];
          }
        }
      }
    }
  }
}

void line_col2im_add(const double* col, const MapDims& d, std::size_t radius, int dh, int dw, double* gx) {
  const std::size_t taps = 2 * radius + 1;
  const std::size_t cols = taps * d.c;
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const auto w = static_cast<std::ptrdiff_t>(d.w);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        const double* src = col + ((n * d.h + y) * d.w + xx) * cols;
        for (std::ptrdiff_t i = -r; i <= r; ++i) {
          const std::ptrdiff_t iy = y + i * dh;
          const std::ptrdiff_t ix = xx + i * dw;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
          const auto t = static_cast<std::size_t>(i + r);
          double* dst = gx + ((n * d.h + iy) * d.w + ix) * d.c;
          for (std::size_t j = 0; j < d.c; ++j) dst[j] += src[j * taps + t];
        }
      }
    }
  }
}

// Uninitialized scratch buffer; every element is written before it is read.
std::unique_ptr<double[]> scratch(std::size_t n) { return std::unique_ptr<double[]>(new double[n]); }

void check_map_channels(const MapDims& d, std::size_t expected, const char* what) {
  if (d.c != expected) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(d.c) + " channels, expected " +
                     std::to_string(expected));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const MapDims d = map_dims(x);
  const auto& ks = kernel.shape();
  if (ks.size() != 4 || ks[0] != ks[1] || ks[0] % 2 == 0) {
    throw ShapeError("conv2d kernel must be [k,k,C_in,C_out] with odd k, got " + to_string(ks));
  }
  check_map_channels(d, ks[2], "conv2d");
  const std::size_t k = ks[0];
  const std::size_t cout = ks[3];
  if (bias.shape() != Shape{cout}) throw ShapeError("conv2d bias must be [C_out]");
  const std::size_t rows = d.pixels();
  const std::size_t cols = k * k * d.c;

  std::unique_ptr<double[]> col;
  const double* lhs = x.data().data();
  if (k > 1) {
    col = scratch(rows * cols);
    im2col(x.data().data(), d, k, col.get());
    lhs = col.get();
  }
  std::vector<double> out(rows * cout);
  detail::gemm(false, false, rows, cout, cols, 1.0, lhs, kernel.data().data(), 0.0, out.data());
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cout; ++c) out[r * cout + c] += b[c];
  }
  return make_result(map_shape(x, d.n, d.h, d.w, cout), std::move(out), {x, kernel, bias},
                     [x, kernel, bias, d, k, rows, cols, cout](std::span<const double> g) {
                       if (bias.requires_grad()) {
                         auto gb = bias.mutable_grad();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < cout; ++c) gb[c] += g[r * cout + c];
                         }
                       }
                       if (kernel.requires_grad()) {
                         std::unique_ptr<double[]> col;
                         const double* lhs = x.data().data();
                         if (k > 1) {
                           col = scratch(rows * cols);
                           im2col(x.data().data(), d, k, col.get());
                           lhs = col.get();
                         }
                         detail::gemm(true, false, cols, cout, rows, 1.0, lhs, g.data(), 1.0,
                                      kernel.mutable_grad().data());
                       }
                       if (x.requires_grad()) {
                         auto gx = x.mutable_grad();
                         if (k == 1) {
                           detail::gemm(false, true, rows, cols, cout, 1.0, g.data(), kernel.data().data(), 1.0,
                                        gx.data());
                         } else {
                           auto dcol = scratch(rows * cols);
                           detail::gemm(false, true, rows, cols, cout, 1.0, g.data(), kernel.data().data(), 0.0,
                                        dcol.get());
                           col2im_add(dcol.get(), d, k, gx.data());
                         }
                       }
                     });
}

Tensor mdconv1d(const Tensor& x, const std::array<Tensor, 4>& kernels, std::size_t radius) {
  const MapDims d = map_dims(x);
  const std::size_t taps = 2 * radius + 1;
  const Shape expected = kernels[0].shape();
  if (expected.size() != 3 || expected[1] != taps) {
    throw ShapeError("mdconv1d kernels must be [C_in, 2R+1, C_out/4], got " + to_string(expected));
  }
  for (const auto& kd : kernels) {
    if (kd.shape() != expected) throw ShapeError("mdconv1d direction kernels differ in shape");
  }
  check_map_channels(d, expected[0], "mdconv1d");
  const std::size_t quarter = expected[2];
  const std::size_t cout = 4 * quarter;
  const std::size_t rows = d.pixels();
  const std::size_t cols = taps * d.c;

  std::vector<double> out(rows * cout);
  auto col = scratch(rows * cols);
  auto part = scratch(rows * quarter);
  for (std::size_t dir = 0; dir < 4; ++dir) {
    line_im2col(x.data().data(), d, radius, kDirections[dir][0], kDirections[dir][1], col.get());
    detail::gemm(false, false, rows, quarter, cols, 1.0, col.get(), kernels[dir].data().data(), 0.0, part.get());
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(part.get() + r * quarter, quarter, out.data() + r * cout + dir * quarter);
    }
  }
  std::vector<Tensor> inputs{x, kernels[0], kernels[1], kernels[2], kernels[3]};
  return make_result(map_shape(x, d.n, d.h, d.w, cout), std::move(out), inputs,
                     [x, kernels, d, radius, rows, cols, quarter, cout](std::span<const double> g) {
                       auto col = scratch(rows * cols);
                       auto part = scratch(rows * quarter);
                       for (std::size_t dir = 0; dir < 4; ++dir) {
                         const int dh = kDirections[dir][0];
                         const int dw = kDirections[dir][1];
                         for (std::size_t r = 0; r < rows; ++r) {
                           std::copy_n(g.data() + r * cout + dir * quarter, quarter, part.get() + r * quarter);
                         }
                         auto& kd = kernels[dir];
                         if (kd.requires_grad()) {
                           line_im2col(x.data().data(), d, radius, dh, dw, col.get());
                           detail::gemm(true, false, cols, quarter, rows, 1.0, col.get(), part.get(), 1.0,
                                        kd.mutable_grad().data());
                         }
                         if (x.requires_grad()) {
                           detail::gemm(false, true, rows, cols, quarter, 1.0, part.get(), kd.data().data(), 0.0,
                                        col.get());
                           line_col2im_add(col.get(), d, radius, dh, dw, x.mutable_grad().data());
                         }
                       }
                     });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon,
                        std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  const MapDims d = map_dims(x);
  if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c}) {
    throw ShapeError("batch norm: scale/shift must have one entry per channel");
  }
  const std::size_t rows = d.pixels();
  const std::size_t C = d.c;
  const auto v = x.data();
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) mean[c] += v[r * C + c];
  }
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const double e = v[r * C + c] - mean[c];
      var[c] += e * e;
    }
  }
  for (auto& s : var) s /= static_cast<double>(rows);
  auto inv_std = std::make_shared<std::vector<double>>(C);
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + epsilon);
  auto xhat = std::make_shared<std::vector<double>>(v.size());
  std::vector<double> out(v.size());
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const double n = (v[r * C + c] - mean[c]) * (*inv_std)[c];
      (*xhat)[r * C + c] = n;
      out[r * C + c] = gm[c] * n + bt[c];
    }
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, rows, C](std::span<const double> g) {
                       std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
                       const auto& nh = *xhat;
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < C; ++c) {
                           sum_g[c] += g[r * C + c];
                           sum_gx[c] += g[r * C + c] * nh[r * C + c];
                         }
                       }
                       if (gamma.requires_grad()) {
                         auto gg = gamma.mutable_grad();
                         for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
                       }
                       if (beta.requires_grad()) {
                         auto gb = beta.mutable_grad();
                         for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                       }
                       if (x.requires_grad()) {
                         auto gx = x.mutable_grad();
                         const auto gm = gamma.data();
                         const double inv_rows = 1.0 / static_cast<double>(rows);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < C; ++c) {
                             const std::size_t i = r * C + c;
                             gx[i] += gm[c] * (*inv_std)[c] *
                                      (g[i] - inv_rows * sum_g[c] - nh[i] * inv_rows * sum_gx[c]);
                           }
                         }
                       }
                     });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<const double> mean,
                       std::span<const double> var, double epsilon) {
  const MapDims d = map_dims(x);
  const std::size_t C = d.c;
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || mean.size() != C || var.size() != C) {
    throw ShapeError("batch norm: statistics must have one entry per channel");
  }
  const std::size_t rows = d.pixels();
  auto inv_std = std::make_shared<std::vector<double>>(C);
  for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + epsilon);
  auto centre = std::make_shared<std::vector<double>>(mean.begin(), mean.end());
  const auto v = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      out[r * C + c] = gm[c] * (v[r * C + c] - (*centre)[c]) * (*inv_std)[c] + bt[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, inv_std, centre, rows, C](std::span<const double> g) {
                       const auto v = x.data();
                       if (gamma.requires_grad()) {
                         auto gg = gamma.mutable_grad();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < C; ++c) {
                             gg[c] += g[r * C + c] * (v[r * C + c] - (*centre)[c]) * (*inv_std)[c];
                           }
                         }
                       }
                       if (beta.requires_grad()) {
                         auto gb = beta.mutable_grad();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < C; ++c) gb[c] += g[r * C + c];
                         }
                       }
                       if (x.requires_grad()) {
                         auto gx = x.mutable_grad();
                         const auto gm = gamma.data();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[r * C + c] * gm[c] * (*inv_std)[c];
                         }
                       }
                     });
}

Tensor max_pool2d(const Tensor& x, std::size_t k) {
  const MapDims d = map_dims(x);
  if (k == 0 || d.h % k != 0 || d.w % k != 0) {
    throw ShapeError("max_pool2d: extents " + to_string(x.shape()) + " not divisible by window " + std::to_string(k));
  }
  const std::size_t oh = d.h / k;
  const std::size_t ow = d.w / k;
  const auto v = x.data();
  std::vector<double> out(d.n * oh * ow * d.c);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t c = 0; c < d.c; ++c) {
          std::size_t best = ((n * d.h + oy * k) * d.w + ox * k) * d.c + c;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t i = ((n * d.h + oy * k + ky) * d.w + ox * k + kx) * d.c + c;
              if (v[i] > v[best]) best = i;
            }
          }
          const std::size_t o = ((n * oh + oy) * ow + ox) * d.c + c;
          out[o] = v[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  return make_result(map_shape(x, d.n, oh, ow, d.c), std::move(out), {x}, [x, argmax](std::span<const double> g) {
    auto gx = x.mutable_grad();
    const auto& idx = *argmax;
    for (std::size_t i = 0; i < g.size(); ++i) gx[idx[i]] += g[i];
  });
}

namespace {

struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target extents must be >= 1");
  const MapDims d = map_dims(x);
  auto ty = std::make_shared<Taps>(bilinear_taps(d.h, out_h));
  auto tx = std::make_shared<Taps>(bilinear_taps(d.w, out_w));
  const auto v = x.data();
  std::vector<double> out(d.n * out_h * out_w * d.c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double fy = ty->frac[oy];
      const double* r0 = v.data() + (n * d.h + ty->lo[oy]) * d.w * d.c;
      const double* r1 = v.data() + (n * d.h + ty->hi[oy]) * d.w * d.c;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double fx = tx->frac[ox];
        const std::size_t x0 = tx->lo[ox] * d.c;
        const std::size_t x1 = tx->hi[ox] * d.c;
        double* o = out.data() + ((n * out_h + oy) * out_w + ox) * d.c;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double top = r0[x0 + c] * (1.0 - fx) + r0[x1 + c] * fx;
          const double bottom = r1[x0 + c] * (1.0 - fx) + r1[x1 + c] * fx;
          o[c] = top * (1.0 - fy) + bottom * fy;
        }
      }
    }
  }
  return make_result(map_shape(x, d.n, out_h, out_w, d.c), std::move(out), {x},
                     [x, ty, tx, d, out_h, out_w](std::span<const double> g) {
                       auto gx = x.mutable_grad();
                       for (std::size_t n = 0; n < d.n; ++n) {
                         for (std::size_t oy = 0; oy < out_h; ++oy) {
                           const double fy = ty->frac[oy];
                           double* r0 = gx.data() + (n * d.h + ty->lo[oy]) * d.w * d.c;
                           double* r1 = gx.data() + (n * d.h + ty->hi[oy]) * d.w * d.c;
                           for (std::size_t ox = 0; ox < out_w; ++ox) {
                             const double fx = tx->frac[ox];
                             const std::size_t x0 = tx->lo[ox] * d.c;
                             const std::size_t x1 = tx->hi[ox] * d.c;
                             const double* go = g.data() + ((n * out_h + oy) * out_w + ox) * d.c;
                             for (std::size_t c = 0; c < d.c; ++c) {
                               r0[x0 + c] += go[c] * (1.0 - fy) * (1.0 - fx);
                               r0[x1 + c] += go[c] * (1.0 - fy) * fx;
                               r1[x0 + c] += go[c] * fy * (1.0 - fx);
                               r1[x1 + c] += go[c] * fy * fx;
                             }
                           }
                         }
                       }
                     });
}

Tensor nearest_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("nearest_resize: target extents must be >= 1");
  const MapDims d = map_dims(x);
  auto source = [](std::size_t o, std::size_t in, std::size_t out) {
    const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out);
    return std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
  };
  const auto v = x.data();
  std::vector<double> out(d.n * out_h * out_w * d.c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t sy = source(oy, d.h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t sx = source(ox, d.w, out_w);
        std::copy_n(v.data() + ((n * d.h + sy) * d.w + sx) * d.c, d.c,
                    out.data() + ((n * out_h + oy) * out_w + ox) * d.c);
      }
    }
  }
  return Tensor::from(map_shape(x, d.n, out_h, out_w, d.c), std::move(out));
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2) throw ShapeError("dense expects x: [batch,in], weight: [in,out]");
  const std::size_t out = weight.dim(1);
  if (bias.shape() != Shape{out}) throw ShapeError("dense bias must be [out]");
  const Tensor y = matmul(x, weight);
  return add(y, tile(reshape(bias, {1, out}), {x.dim(0), 1}));
}

// --- layers ------------------------------------------------------------------------------

std::uint64_t next_init_seed(Rng& rng) {
  const std::uint64_t hi = rng.next_u32();
  return (hi << 32) | rng.next_u32();
}

Conv2DLayer::Conv2DLayer(std::size_t kernel_size, std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  if (kernel_size % 2 == 0) throw std::invalid_argument("Conv2DLayer: kernel size must be odd");
  const std::size_t area = kernel_size * kernel_size;
  kernel_ = xavier_uniform({kernel_size, kernel_size, in_channels, out_channels}, area * in_channels,
                           area * out_channels, next_init_seed(rng));
  bias_ = Tensor::zeros({out_channels}, true);
}

Tensor Conv2DLayer::forward(const Tensor& x) const { return conv2d(x, kernel_, bias_); }

void Conv2DLayer::parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".kernel", kernel_});
  out.push_back({prefix + ".bias", bias_});
}

MDConv1DLayer::MDConv1DLayer(std::size_t radius, std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : radius_(radius) {
  if (out_channels % 4 != 0) throw std::invalid_argument("MDConv1DLayer: output channels must be divisible by 4");
  const std::size_t taps = 2 * radius + 1;
  const std::size_t quarter = out_channels / 4;
  for (auto& kd : kernels_) {
    kd = xavier_uniform({in_channels, taps, quarter}, taps * in_channels, taps * quarter, next_init_seed(rng));
  }
}

Tensor MDConv1DLayer::forward(const Tensor& x) const { return mdconv1d(x, kernels_, radius_); }

void MDConv1DLayer::parameters(const std::string& prefix, NamedTensors& out) const {
  static constexpr const char* kNames[] = {"horizontal", "vertical", "forward_diagonal", "backward_diagonal"};
  for (std::size_t d = 0; d < 4; ++d) out.push_back({prefix + "." + kNames[d], kernels_[d]});
}

BatchNormLayer::BatchNormLayer(std::size_t channels, BatchNormOptions options)
    : gamma_(Tensor::full({channels}, 1.0, true)),
      beta_(Tensor::zeros({channels}, true)),
      running_mean_(Tensor::zeros({channels})),
      running_var_(Tensor::full({channels}, 1.0)),
      options_(options) {}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::eval) {
    return batch_norm_eval(x, gamma_, beta_, running_mean_.data(), running_var_.data(), options_.epsilon);
  }
  std::vector<double> mean, var;
  Tensor y = batch_norm_train(x, gamma_, beta_, options_.epsilon, &mean, &var);
  const double count = static_cast<double>(x.size() / gamma_.size());
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  auto rm = running_mean_.mutable_data();
  auto rv = running_var_.mutable_data();
  const double m = options_.momentum;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    rm[c] = m * rm[c] + (1.0 - m) * mean[c];
    rv[c] = m * rv[c] + (1.0 - m) * var[c] * unbias;
  }
  return y;
}

void BatchNormLayer::parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".gamma", gamma_});
  out.push_back({prefix + ".beta", beta_});
}

void BatchNormLayer::buffers(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".running_mean", running_mean_});
  out.push_back({prefix + ".running_var", running_var_});
}

Tensor forward(const SpatialConv& conv, const Tensor& x) {
  return std::visit([&](const auto& layer) { return layer.forward(x); }, conv);
}

void parameters(const SpatialConv& conv, const std::string& prefix, NamedTensors& out) {
  std::visit([&](const auto& layer) { layer.parameters(prefix, out); }, conv);
}

ResidualBlock::ResidualBlock(SpatialConv first, SpatialConv second, std::size_t channels)
    : first_(std::move(first)), second_(std::move(second)), norm1_(channels), norm2_(channels), channels_(channels) {}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
  if (map_dims(x).c != channels_) {
    throw ShapeError("residual block expects " + std::to_string(channels_) + " channels, got " + to_string(x.shape()));
  }
  Tensor h = ratfm::forward(first_, x);
  h = relu(norm1_.forward(h, mode));
  h = norm2_.forward(ratfm::forward(second_, h), mode);
  return add(x, h);
}

void ResidualBlock::parameters(const std::string& prefix, NamedTensors& out) const {
  ratfm::parameters(first_, prefix + ".conv1", out);
  norm1_.parameters(prefix + ".bn1", out);
  ratfm::parameters(second_, prefix + ".conv2", out);
  norm2_.parameters(prefix + ".bn2", out);
}

void ResidualBlock::buffers(const std::string& prefix, NamedTensors& out) const {
  norm1_.buffers(prefix + ".bn1", out);
  norm2_.buffers(prefix + ".bn2", out);
}

ResidualBlock make_residual_block_2d(std::size_t channels, Rng& rng) {
  Conv2DLayer first(3, channels, channels, rng);
  Conv2DLayer second(3, channels, channels, rng);
  return ResidualBlock(std::move(first), std::move(second), channels);
}

ResidualBlock make_residual_block_1d(std::size_t channels, std::size_t radius, Rng& rng) {
  MDConv1DLayer first(radius, channels, channels, rng);
  MDConv1DLayer second(radius, channels, channels, rng);
  return ResidualBlock(std::move(first), std::move(second), channels);
}

DenseLayer::DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight_(xavier_uniform({in_features, out_features}, in_features, out_features, next_init_seed(rng))),
      bias_(Tensor::zeros({out_features}, true)) {}

void DenseLayer::parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

}  // namespace ratfm
