#include "lanepoison/nn.hpp"

#include <string>

#include "lanepoison/error.hpp"

namespace lanepoison {

void conv_out_shape(const ConvSpec& s, int h, int w, int& ho, int& wo) {
  ho = (h + 2 * s.pad - s.k) / s.stride + 1;
  wo = (w + 2 * s.pad - s.k) / s.stride + 1;
  if (ho <= 0 || wo <= 0)
    throw ShapeError("conv output would be empty for input " + std::to_string(h) + "x" +
                     std::to_string(w));
}

void im2col(const Tensor3& in, const ConvSpec& s, Matrix& cols) {
  int ho, wo;
  conv_out_shape(s, in.h, in.w, ho, wo);
  const int K = s.in_ch * s.k * s.k;
  cols.resize(K, static_cast<Eigen::Index>(ho) * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      Eigen::Index col = static_cast<Eigen::Index>(oy) * wo + ox;
      int base_r = oy * s.stride - s.pad;
      int base_c = ox * s.stride - s.pad;
      Scalar* dst = cols.data() + col * K;  // column-major: contiguous column
      int idx = 0;
      for (int c = 0; c < s.in_ch; ++c) {
        const PlaneD& pl = in.p[static_cast<std::size_t>(c)];
        for (int ky = 0; ky < s.k; ++ky) {
          int r = base_r + ky;
          for (int kx = 0; kx < s.k; ++kx, ++idx) {
            int cc = base_c + kx;
            dst[idx] =
                (r >= 0 && r < in.h && cc >= 0 && cc < in.w) ? pl(r, cc) : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const Matrix& cols, const ConvSpec& s, Tensor3& grad_in) {
  int ho, wo;
  conv_out_shape(s, grad_in.h, grad_in.w, ho, wo);
  grad_in.set_zero();
  const int K = s.in_ch * s.k * s.k;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      Eigen::Index col = static_cast<Eigen::Index>(oy) * wo + ox;
      int base_r = oy * s.stride - s.pad;
      int base_c = ox * s.stride - s.pad;
      const Scalar* src = cols.data() + col * K;
      int idx = 0;
      for (int c = 0; c < s.in_ch; ++c) {
        PlaneD& pl = grad_in.p[static_cast<std::size_t>(c)];
        for (int ky = 0; ky < s.k; ++ky) {
          int r = base_r + ky;
          for (int kx = 0; kx < s.k; ++kx, ++idx) {
            int cc = base_c + kx;
            if (r >= 0 && r < grad_in.h && cc >= 0 && cc < grad_in.w)
              pl(r, cc) += src[idx];
          }
        }
      }
    }
  }
}

void conv_forward(const ConvParams& p, const Tensor3& in, Tensor3& out, Matrix& cols) {
  if (in.ch != p.spec.in_ch) throw ShapeError("conv_forward: channel mismatch");
  int ho, wo;
  conv_out_shape(p.spec, in.h, in.w, ho, wo);
  im2col(in, p.spec, cols);
  Matrix res = p.W * cols;                       // out_ch x (ho*wo)
  res.colwise() += p.b;
  out = Tensor3::zeros(p.spec.out_ch, ho, wo);
  for (int c = 0; c < p.spec.out_ch; ++c) {
    PlaneD& pl = out.p[static_cast<std::size_t>(c)];
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        pl(oy, ox) = res(c, static_cast<Eigen::Index>(oy) * wo + ox);
  }
}

void conv_backward(const ConvParams& p, const Matrix& cols, const Tensor3& grad_out,
                   Matrix* grad_W, Vector* grad_b, Tensor3* grad_in) {
  const int ho = grad_out.h, wo = grad_out.w;
  Matrix g(p.spec.out_ch, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < p.spec.out_ch; ++c) {
    const PlaneD& pl = grad_out.p[static_cast<std::size_t>(c)];
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        g(c, static_cast<Eigen::Index>(oy) * wo + ox) = pl(oy, ox);
  }
  if (grad_W) grad_W->noalias() += g * cols.transpose();
  if (grad_b) *grad_b += g.rowwise().sum();
  if (grad_in) {
    Matrix dcols = p.W.transpose() * g;
    col2im(dcols, p.spec, *grad_in);
  }
}

Vector flatten(const Tensor3& t) {
  Vector v(static_cast<Eigen::Index>(t.ch) * t.h * t.w);
  Eigen::Index i = 0;
  for (int c = 0; c < t.ch; ++c) {
    const PlaneD& pl = t.p[static_cast<std::size_t>(c)];
    for (int r = 0; r < t.h; ++r)
      for (int cc = 0; cc < t.w; ++cc) v[i++] = pl(r, cc);
  }
  return v;
}

void unflatten(const Vector& v, Tensor3& t) {
  if (v.size() != static_cast<Eigen::Index>(t.ch) * t.h * t.w)
    throw ShapeError("unflatten: size mismatch");
  Eigen::Index i = 0;
  for (int c = 0; c < t.ch; ++c) {
    PlaneD& pl = t.p[static_cast<std::size_t>(c)];
    for (int r = 0; r < t.h; ++r)
      for (int cc = 0; cc < t.w; ++cc) pl(r, cc) = v[i++];
  }
}

}  // namespace lanepoison
