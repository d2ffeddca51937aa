#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lanepoison/types.hpp"

namespace lanepoison {

using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Channel-planes tensor; the only rank-3 shape the pipeline needs.
struct Tensor3 {
  int ch = 0, h = 0, w = 0;
  std::vector<PlaneD> p;

  static Tensor3 zeros(int ch, int h, int w) {
    Tensor3 t;
    t.ch = ch;
    t.h = h;
    t.w = w;
    t.p.assign(static_cast<std::size_t>(ch), PlaneD::Zero(h, w));
    return t;
  }
  static Tensor3 from_planes(std::vector<PlaneD> planes) {
    Tensor3 t;
    t.ch = static_cast<int>(planes.size());
    t.h = planes.empty() ? 0 : static_cast<int>(planes[0].rows());
    t.w = planes.empty() ? 0 : static_cast<int>(planes[0].cols());
    t.p = std::move(planes);
    return t;
  }
  void set_zero() {
    for (PlaneD& pl : p) pl.setZero();
  }
  bool all_finite() const {
    for (const PlaneD& pl : p)
      if (!pl.isFinite().all()) return false;
    return true;
  }
};

struct ConvSpec {
  int in_ch = 0, out_ch = 0;
  int k = 3, stride = 2, pad = 1;
};

struct ConvParams {
  ConvSpec spec;
  Matrix W;  // out_ch x (in_ch * k * k)
  Vector b;  // out_ch
};

struct DenseParams {
  Matrix W;  // out x in
  Vector b;
};

void conv_out_shape(const ConvSpec& s, int h, int w, int& ho, int& wo);

// Patch matrix: (in_ch*k*k) x (ho*wo); column index = out_row * wo + out_col.
void im2col(const Tensor3& in, const ConvSpec& s, Matrix& cols);
// Scatter-add transpose of im2col; grad_in must be pre-sized (it is zeroed).
void col2im(const Matrix& cols, const ConvSpec& s, Tensor3& grad_in);

void conv_forward(const ConvParams& p, const Tensor3& in, Tensor3& out, Matrix& cols);
// cols is the patch matrix saved by the forward pass.  Any output may be null.
void conv_backward(const ConvParams& p, const Matrix& cols, const Tensor3& grad_out,
                   Matrix* grad_W, Vector* grad_b, Tensor3* grad_in);

inline void relu(const Tensor3& z, Tensor3& a) {
  a = z;
  for (PlaneD& pl : a.p) pl = pl.max(0.0);
}
inline void relu_backward(const Tensor3& z, Tensor3& grad) {
  for (int c = 0; c < z.ch; ++c)
    grad.p[static_cast<std::size_t>(c)] *=
        (z.p[static_cast<std::size_t>(c)] > 0.0).cast<Scalar>();
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow; bce(x, y) = softplus(x) - y*x.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double smooth_l1(double d) {
  double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}
inline double smooth_l1_grad(double d) { return std::clamp(d, -1.0, 1.0); }

Vector flatten(const Tensor3& t);
void unflatten(const Vector& v, Tensor3& t);

}  // namespace lanepoison
