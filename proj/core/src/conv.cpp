#include <Eigen/Core>
#include <algorithm>
#include <utility>
#include <string>

#include "saad/ops.hpp"

namespace saad::ops {

using detail::make_result;

namespace {

thread_local ComputePrecision tls_precision = ComputePrecision::f64;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat<double>>;
using Map = Eigen::Map<RowMat<double>>;

struct ConvGeom {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t oh, ow;
  Conv2dParams p;

  int64_t k() const { return cin * kh * kw; }
  int64_t out_plane() const { return oh * ow; }
  bool identity_cols() const {
    return kh == 1 && kw == 1 && p.stride == 1 && p.padding == 0;
  }
};

void validate_params(const Conv2dParams& p) {
  if (p.stride < 1) throw std::invalid_argument("conv2d stride must be positive");
  if (p.padding < 0) throw std::invalid_argument("conv2d padding must be non-negative");
  if (p.dilation < 1) throw std::invalid_argument("conv2d dilation must be positive");
}

ConvGeom make_geom(int64_t n, int64_t cin, int64_t h, int64_t w, int64_t cout, int64_t kh,
                   int64_t kw, const Conv2dParams& p) {
  validate_params(p);
  ConvGeom g{n, cin, h, w, cout, kh, kw, 0, 0, p};
  g.oh = conv_output_size(h, kh, p);
  g.ow = conv_output_size(w, kw, p);
  return g;
}

using StridedMap = Eigen::Map<RowMat<double>, 0, Eigen::OuterStride<>>;
using StridedMapC = Eigen::Map<const RowMat<double>, 0, Eigen::OuterStride<>>;

// Output columns [lo, hi) whose input column ox*stride + off is in range.
std::pair<int64_t, int64_t> valid_range(int64_t off, int64_t stride, int64_t in, int64_t out) {
  int64_t lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int64_t hi = in - 1 - off < 0 ? 0 : (in - 1 - off) / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

// Output rows are processed in bands so the column buffer stays in L2.
constexpr int64_t kColsBudgetBytes = 512 * 1024;

int64_t band_rows(const ConvGeom& g) {
  const int64_t per_row = g.k() * g.ow * static_cast<int64_t>(sizeof(double));
  return std::clamp<int64_t>(kColsBudgetBytes / std::max<int64_t>(per_row, 1), 1, g.oh);
}

// cols is [cin*kh*kw, (oy1-oy0)*ow] for output rows [oy0, oy1) of one sample.
void im2col(const double* x, const ConvGeom& g, int64_t oy0, int64_t oy1, double* cols) {
  const int64_t width = (oy1 - oy0) * g.ow;
  const int64_t st = g.p.stride;
  for (int64_t i = 0; i < g.kh; ++i) {
    const int64_t yoff = i * g.p.dilation - g.p.padding;
    auto [ylo, yhi] = valid_range(yoff, st, g.h, g.oh);
    ylo = std::clamp(ylo, oy0, oy1);
    yhi = std::clamp(yhi, ylo, oy1);
    for (int64_t j = 0; j < g.kw; ++j) {
      const int64_t xoff = j * g.p.dilation - g.p.padding;
      const auto [xlo, xhi] = valid_range(xoff, st, g.w, g.ow);
      for (int64_t c = 0; c < g.cin; ++c) {
        const double* src = x + c * g.h * g.w;
        double* row = cols + ((c * g.kh + i) * g.kw + j) * width - oy0 * g.ow;
        std::fill(row + oy0 * g.ow, row + ylo * g.ow, 0.0);
        std::fill(row + yhi * g.ow, row + oy1 * g.ow, 0.0);
        for (int64_t oy = ylo; oy < yhi; ++oy) {
          const double* line = src + (oy * st + yoff) * g.w + xoff;
          double* dst = row + oy * g.ow;
          std::fill(dst, dst + xlo, 0.0);
          if (st == 1) {
            std::copy(line + xlo, line + xhi, dst + xlo);
          } else {
            for (int64_t ox = xlo; ox < xhi; ++ox) dst[ox] = line[ox * st];
          }
          std::fill(dst + xhi, dst + g.ow, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeom& g, int64_t oy0, int64_t oy1, double* x) {
  const int64_t width = (oy1 - oy0) * g.ow;
  const int64_t st = g.p.stride;
  for (int64_t i = 0; i < g.kh; ++i) {
    const int64_t yoff = i * g.p.dilation - g.p.padding;
    auto [ylo, yhi] = valid_range(yoff, st, g.h, g.oh);
    ylo = std::clamp(ylo, oy0, oy1);
    yhi = std::clamp(yhi, ylo, oy1);
    for (int64_t j = 0; j < g.kw; ++j) {
      const int64_t xoff = j * g.p.dilation - g.p.padding;
      const auto [xlo, xhi] = valid_range(xoff, st, g.w, g.ow);
      for (int64_t c = 0; c < g.cin; ++c) {
        double* dst = x + c * g.h * g.w;
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * width - oy0 * g.ow;
        for (int64_t oy = ylo; oy < yhi; ++oy) {
          double* line = dst + (oy * st + yoff) * g.w + xoff;
          const double* src = row + oy * g.ow;
          for (int64_t ox = xlo; ox < xhi; ++ox) line[ox * st] += src[ox];
        }
      }
    }
  }
}

// C (+)= op(A) * op(B) in the active precision. Shapes are given after op().
template <class LhsExpr, class RhsExpr, class Dst>
void gemm(const LhsExpr& a, const RhsExpr& b, Dst&& c, bool accumulate) {
  if (tls_precision == ComputePrecision::f32) {
    const RowMat<float> af = a.template cast<float>();
    const RowMat<float> bf = b.template cast<float>();
    RowMat<float> cf = af * bf;
    if (accumulate) {
      c += cf.template cast<double>();
    } else {
      c = cf.template cast<double>();
    }
    return;
  }
  if (accumulate) {
    c.noalias() += a * b;
  } else {
    c.noalias() = a * b;
  }
}

std::vector<double> conv_forward(std::span<const double> x, std::span<const double> w,
                                 const double* bias, const ConvGeom& g) {
  const int64_t plane = g.out_plane();
  const int64_t band = band_rows(g);
  std::vector<double> out(static_cast<size_t>(g.n * g.cout * plane));
  std::vector<double> cols(g.identity_cols() ? 0 : static_cast<size_t>(g.k() * band * g.ow));
  const MapC wm(w.data(), g.cout, g.k());
  for (int64_t s = 0; s < g.n; ++s) {
    const double* xs = x.data() + s * g.cin * g.h * g.w;
    double* os = out.data() + s * g.cout * plane;
    if (g.identity_cols()) {
      gemm(wm, MapC(xs, g.k(), plane), Map(os, g.cout, plane), false);
    } else {
      for (int64_t oy0 = 0; oy0 < g.oh; oy0 += band) {
        const int64_t oy1 = std::min(oy0 + band, g.oh);
        const int64_t width = (oy1 - oy0) * g.ow;
        im2col(xs, g, oy0, oy1, cols.data());
        gemm(wm, MapC(cols.data(), g.k(), width),
             StridedMap(os + oy0 * g.ow, g.cout, width, Eigen::OuterStride<>(plane)), false);
      }
    }
    if (bias) {
      Map om(os, g.cout, plane);
      for (int64_t o = 0; o < g.cout; ++o) om.row(o).array() += bias[o];
    }
  }
  return out;
}

std::vector<double> conv_input_grad(std::span<const double> gy, std::span<const double> w,
                                    const ConvGeom& g) {
  const int64_t plane = g.out_plane();
  const int64_t band = band_rows(g);
  std::vector<double> dx(static_cast<size_t>(g.n * g.cin * g.h * g.w), 0.0);
  std::vector<double> cols(g.identity_cols() ? 0 : static_cast<size_t>(g.k() * band * g.ow));
  const MapC wm(w.data(), g.cout, g.k());
  for (int64_t s = 0; s < g.n; ++s) {
    const double* gs = gy.data() + s * g.cout * plane;
    double* dxs = dx.data() + s * g.cin * g.h * g.w;
    if (g.identity_cols()) {
      gemm(wm.transpose(), MapC(gs, g.cout, plane), Map(dxs, g.k(), plane), false);
      continue;
    }
    for (int64_t oy0 = 0; oy0 < g.oh; oy0 += band) {
      const int64_t oy1 = std::min(oy0 + band, g.oh);
      const int64_t width = (oy1 - oy0) * g.ow;
      gemm(wm.transpose(),
           StridedMapC(gs + oy0 * g.ow, g.cout, width, Eigen::OuterStride<>(plane)),
           Map(cols.data(), g.k(), width), false);
      col2im_add(cols.data(), g, oy0, oy1, dxs);
    }
  }
  return dx;
}

std::vector<double> conv_weight_grad(std::span<const double> x, std::span<const double> gy,
                                     const ConvGeom& g) {
  const int64_t plane = g.out_plane();
  const int64_t band = band_rows(g);
  std::vector<double> dw(static_cast<size_t>(g.cout * g.k()), 0.0);
  std::vector<double> cols(g.identity_cols() ? 0 : static_cast<size_t>(g.k() * band * g.ow));
  Map dwm(dw.data(), g.cout, g.k());
  for (int64_t s = 0; s < g.n; ++s) {
    const double* xs = x.data() + s * g.cin * g.h * g.w;
    const double* gs = gy.data() + s * g.cout * plane;
    if (g.identity_cols()) {
      gemm(MapC(gs, g.cout, plane), MapC(xs, g.k(), plane).transpose(), dwm, true);
      continue;
    }
    for (int64_t oy0 = 0; oy0 < g.oh; oy0 += band) {
      const int64_t oy1 = std::min(oy0 + band, g.oh);
      const int64_t width = (oy1 - oy0) * g.ow;
      im2col(xs, g, oy0, oy1, cols.data());
      gemm(StridedMapC(gs + oy0 * g.ow, g.cout, width, Eigen::OuterStride<>(plane)),
           MapC(cols.data(), g.k(), width).transpose(), dwm, true);
    }
  }
  return dw;
}

void expect_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + " must be rank-4, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

ComputePrecision compute_precision() { return tls_precision; }
void set_compute_precision(ComputePrecision p) { tls_precision = p; }

PrecisionGuard::PrecisionGuard(ComputePrecision p) : previous_(tls_precision) {
  tls_precision = p;
}
PrecisionGuard::~PrecisionGuard() { tls_precision = previous_; }

int64_t conv_output_size(int64_t in, int64_t kernel, const Conv2dParams& p) {
  const int64_t span = p.dilation * (kernel - 1) + 1;
  const int64_t numer = in + 2 * p.padding - span;
  if (numer < 0) {
    throw DimensionError("conv2d output size is non-positive (input " + std::to_string(in) +
                         ", kernel " + std::to_string(kernel) + ", padding " +
                         std::to_string(p.padding) + ", dilation " + std::to_string(p.dilation) +
                         ")");
  }
  return numer / p.stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dParams& p) {
  expect_rank4(input, "conv2d input");
  expect_rank4(weight, "conv2d weight");
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(xs[1]) +
                     " channels, weight expects " + std::to_string(ws[1]));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ws[0])) {
    throw ShapeError("conv2d bias must have shape [" + std::to_string(ws[0]) + "]");
  }
  const ConvGeom g = make_geom(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], p);
  auto out =
      conv_forward(input.data(), weight.data(), bias.defined() ? bias.data().data() : nullptr, g);
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      "conv2d", {g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(inputs),
      [input, weight, g](const Tensor& gy, const std::vector<bool>& needs) {
        std::vector<Tensor> grads(needs.size());
        if (needs[0]) grads[0] = conv2d_input_grad(gy, weight, g.h, g.w, g.p);
        if (needs[1]) grads[1] = conv2d_weight_grad(input, gy, g.kh, g.kw, g.p);
        if (needs.size() > 2 && needs[2]) grads[2] = reduce_to_channels(gy);
        return grads;
      });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, int64_t in_h,
                         int64_t in_w, const Conv2dParams& p) {
  expect_rank4(grad_out, "conv2d_input_grad grad_out");
  expect_rank4(weight, "conv2d_input_grad weight");
  const auto& gs = grad_out.shape();
  const auto& ws = weight.shape();
  const ConvGeom g = make_geom(gs[0], ws[1], in_h, in_w, ws[0], ws[2], ws[3], p);
  if (gs[1] != ws[0] || gs[2] != g.oh || gs[3] != g.ow) {
    throw ShapeError("conv2d_input_grad: grad_out " + shape_to_string(gs) +
                     " inconsistent with weight " + shape_to_string(ws));
  }
  auto dx = conv_input_grad(grad_out.data(), weight.data(), g);
  return make_result(
      "conv2d_input_grad", {g.n, g.cin, g.h, g.w}, std::move(dx), {grad_out, weight},
      [grad_out, weight, g](const Tensor& up, const std::vector<bool>& needs) {
        std::vector<Tensor> grads(2);
        if (needs[0]) grads[0] = conv2d(up, weight, Tensor(), g.p);
        if (needs[1]) grads[1] = conv2d_weight_grad(up, grad_out, g.kh, g.kw, g.p);
        return grads;
      });
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, int64_t kernel_h,
                          int64_t kernel_w, const Conv2dParams& p) {
  expect_rank4(input, "conv2d_weight_grad input");
  expect_rank4(grad_out, "conv2d_weight_grad grad_out");
  const auto& xs = input.shape();
  const auto& gs = grad_out.shape();
  const ConvGeom g = make_geom(xs[0], xs[1], xs[2], xs[3], gs[1], kernel_h, kernel_w, p);
  if (gs[0] != g.n || gs[2] != g.oh || gs[3] != g.ow) {
    throw ShapeError("conv2d_weight_grad: grad_out " + shape_to_string(gs) +
                     " inconsistent with input " + shape_to_string(xs));
  }
  auto dw = conv_weight_grad(input.data(), grad_out.data(), g);
  return make_result(
      "conv2d_weight_grad", {g.cout, g.cin, g.kh, g.kw}, std::move(dw), {input, grad_out},
      [input, grad_out, g](const Tensor& up, const std::vector<bool>& needs) {
        std::vector<Tensor> grads(2);
        if (needs[0]) grads[0] = conv2d_input_grad(grad_out, up, g.h, g.w, g.p);
        if (needs[1]) grads[1] = conv2d(input, up, Tensor(), g.p);
        return grads;
      });
}

}  // namespace saad::ops
