#pragma once

#include <algorithm>
#include <cstring>
#include <string>

#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

// Layout: activations are NHWC (batch, rows, columns, channels); kernels are
// (kernel rows, kernel columns, in channels, out channels). Valid padding.

struct ConvGeometry {
  std::size_t batch, h, w, cin;
  std::size_t kh, kw, cout, stride;
  std::size_t oh, ow;

  std::size_t patch() const { return kh * kw * cin; }
  std::size_t pixels() const { return batch * oh * ow; }
};

/// Validates shapes and derives output extents. A rank-3 input is a batch of one.
inline ConvGeometry conv_geometry(Shape const& in, Shape const& kernel, std::size_t stride) {
  if (in.size() != 3 && in.size() != 4) throw ShapeError("conv input must be HxWxC or NxHxWxC, got " + to_string(in));
  if (kernel.size() != 4) throw ShapeError("conv kernel must be rank 4, got " + to_string(kernel));
  if (stride == 0) throw ShapeError("conv stride must be positive");
  std::size_t const off = in.size() == 4 ? 1 : 0;
  ConvGeometry g{};
  g.batch = off ? in[0] : 1;
  g.h = in[off];
  g.w = in[off + 1];
  g.cin = in[off + 2];
  g.kh = kernel[0];
  g.kw = kernel[1];
  g.cout = kernel[3];
  g.stride = stride;
  if (kernel[2] != g.cin) {
    throw ShapeError("conv kernel expects " + std::to_string(kernel[2]) + " input channels, input " + to_string(in) +
                     " has " + std::to_string(g.cin));
  }
  if (g.kh > g.h || g.kw > g.w) {
    throw ShapeError("conv kernel " + to_string(kernel) + " larger than input " + to_string(in));
  }
  g.oh = (g.h - g.kh) / stride + 1;
  g.ow = (g.w - g.kw) / stride + 1;
  return g;
}

/// Unrolls every receptive patch into one row: (pixels) x (kh * kw * cin).
inline Matrix im2col(Tensor const& x, ConvGeometry const& g) {
  Matrix col(static_cast<Eigen::Index>(g.pixels()), static_cast<Eigen::Index>(g.patch()));
  std::size_t const run = g.kw * g.cin;
  double const* src = x.data();
  double* dst = col.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oi = 0; oi < g.oh; ++oi) {
      for (std::size_t oj = 0; oj < g.ow; ++oj) {
        for (std::size_t di = 0; di < g.kh; ++di) {
          std::size_t const at = ((b * g.h + oi * g.stride + di) * g.w + oj * g.stride) * g.cin;
          std::memcpy(dst, src + at, run * sizeof(double));
          dst += run;
        }
      }
    }
  }
  return col;
}

/// Scatter-adds unrolled patch gradients back onto the input layout.
inline void col2im_add(Matrix const& col, ConvGeometry const& g, Tensor& dx) {
  std::size_t const run = g.kw * g.cin;
  double const* src = col.data();
  double* dst = dx.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oi = 0; oi < g.oh; ++oi) {
      for (std::size_t oj = 0; oj < g.ow; ++oj) {
        for (std::size_t di = 0; di < g.kh; ++di) {
          std::size_t const at = ((b * g.h + oi * g.stride + di) * g.w + oj * g.stride) * g.cin;
          for (std::size_t t = 0; t < run; ++t) dst[at + t] += src[t];
          src += run;
        }
      }
    }
  }
}

inline Shape conv_output_shape(Shape const& in, ConvGeometry const& g) {
  if (in.size() == 3) return {g.oh, g.ow, g.cout};
  return {g.batch, g.oh, g.ow, g.cout};
}

/// Valid cross-correlation plus per-channel bias.
inline Tensor conv2d_forward(Tensor const& x, Tensor const& kernel, Tensor const& bias, std::size_t stride) {
  auto const g = conv_geometry(x.shape(), kernel.shape(), stride);
  if (bias.size() != g.cout) throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries, expected " + std::to_string(g.cout));
  Tensor y(conv_output_shape(x.shape(), g));
  auto out = as_matrix(y, g.pixels(), g.cout);
  out.noalias() = im2col(x, g) * as_matrix(kernel, g.patch(), g.cout);
  out.rowwise() += ConstVectorMap(bias.data(), static_cast<Eigen::Index>(g.cout)).transpose();
  return y;
}

struct ConvGradients {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

inline ConvGradients conv2d_backward(Tensor const& x, Tensor const& kernel, std::size_t stride, Tensor const& dy) {
  auto const g = conv_geometry(x.shape(), kernel.shape(), stride);
  if (dy.shape() != conv_output_shape(x.shape(), g)) throw ShapeError("conv output gradient shape mismatch");
  auto const col = im2col(x, g);
  auto const d = as_matrix(dy, g.pixels(), g.cout);
  ConvGradients out{Tensor(x.shape()), Tensor(kernel.shape()), Tensor({g.cout})};
  as_matrix(out.kernel, g.patch(), g.cout).noalias() = col.transpose() * d;
  VectorMap(out.bias.data(), static_cast<Eigen::Index>(g.cout)) = d.colwise().sum().transpose();
  Matrix dcol = d * as_matrix(kernel, g.patch(), g.cout).transpose();
  col2im_add(dcol, g, out.input);
  return out;
}

/// Convolution layer owning its weights; caches the unrolled input for backward.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string const& name, std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
         std::size_t stride)
      : weight(name + ".weight", {kh, kw, cin, cout}), bias(name + ".bias", {cout}), stride_(stride) {}

  void init(Rng& rng) {
    auto const& s = weight.value.shape();
    he_uniform(weight.value, s[0] * s[1] * s[2], rng);
    bias.value.fill(0.0);
  }

  std::size_t stride() const { return stride_; }

  Tensor forward(Tensor const& x) {
    geom_ = conv_geometry(x.shape(), weight.value.shape(), stride_);
    in_shape_ = x.shape();
    col_ = im2col(x, geom_);
    Tensor y(conv_output_shape(x.shape(), geom_));
    auto out = as_matrix(y, geom_.pixels(), geom_.cout);
    out.noalias() = col_ * as_matrix(weight.value, geom_.patch(), geom_.cout);
    out.rowwise() += ConstVectorMap(bias.value.data(), static_cast<Eigen::Index>(geom_.cout)).transpose();
    return y;
  }

  /// Accumulates parameter gradients; returns the input gradient when requested.
  Tensor backward(Tensor const& dy, bool need_input_grad) {
    auto const d = as_matrix(dy, geom_.pixels(), geom_.cout);
    as_matrix(weight.grad, geom_.patch(), geom_.cout).noalias() += col_.transpose() * d;
    VectorMap(bias.grad.data(), static_cast<Eigen::Index>(geom_.cout)) += d.colwise().sum().transpose();
    if (!need_input_grad) return {};
    Matrix dcol = d * as_matrix(weight.value, geom_.patch(), geom_.cout).transpose();
    Tensor dx(in_shape_);
    col2im_add(dcol, geom_, dx);
    return dx;
  }

  Shape output_shape(Shape const& in) const {
    return conv_output_shape(in, conv_geometry(in, weight.value.shape(), stride_));
  }

  Parameter weight;
  Parameter bias;

 private:
  std::size_t stride_ = 1;
  ConvGeometry geom_{};
  Shape in_shape_;
  Matrix col_;
};

}  // namespace graphcaps::nn
