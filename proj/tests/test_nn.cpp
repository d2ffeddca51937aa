#include <doctest.h>

#include <cmath>
#include <vector>

#include "lanepoison/nn.hpp"
#include "lanepoison/rng.hpp"
#include "test_util.hpp"

using namespace lanepoison;

namespace {

Tensor3 random_tensor(Rng& rng, int ch, int h, int w) {
  Tensor3 t = Tensor3::zeros(ch, h, w);
  for (auto& p : t.p)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) p(r, c) = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct convolution from the definition: zero padding, stride, dot product.
Tensor3 naive_conv(const ConvParams& p, const Tensor3& in) {
  int ho = 0, wo = 0;
  conv_out_shape(p.spec, in.h, in.w, ho, wo);
  Tensor3 out = Tensor3::zeros(p.spec.out_ch, ho, wo);
  for (int oc = 0; oc < p.spec.out_ch; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = p.b(oc);
        for (int ic = 0; ic < p.spec.in_ch; ++ic)
          for (int ky = 0; ky < p.spec.k; ++ky)
            for (int kx = 0; kx < p.spec.k; ++kx) {
              int iy = oy * p.spec.stride - p.spec.pad + ky;
              int ix = ox * p.spec.stride - p.spec.pad + kx;
              if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
              double wgt = p.W(oc, (ic * p.spec.k + ky) * p.spec.k + kx);
              acc += wgt * in.p[static_cast<std::size_t>(ic)](iy, ix);
            }
        out.p[static_cast<std::size_t>(oc)](oy, ox) = acc;
      }
  return out;
}

ConvParams random_conv(Rng& rng, int in_ch, int out_ch, int stride) {
  ConvParams p;
  p.spec = {in_ch, out_ch, 3, stride, 1};
  p.W.resize(out_ch, in_ch * 9);
  p.b.resize(out_ch);
  for (int i = 0; i < p.W.rows(); ++i)
    for (int j = 0; j < p.W.cols(); ++j) p.W(i, j) = rng.uniform(-0.5, 0.5);
  for (int i = 0; i < out_ch; ++i) p.b(i) = rng.uniform(-0.2, 0.2);
  return p;
}

double dot(const Tensor3& a, const Tensor3& b) {
  double s = 0.0;
  for (int c = 0; c < a.ch; ++c)
    s += (a.p[static_cast<std::size_t>(c)] * b.p[static_cast<std::size_t>(c)]).sum();
  return s;
}

}  // namespace

TEST_CASE("conv output shape follows the padded stride formula") {
  ConvSpec s{3, 8, 3, 2, 1};
  int ho = 0, wo = 0;
  conv_out_shape(s, 96, 160, ho, wo);
  CHECK(ho == 48);
  CHECK(wo == 80);
  conv_out_shape(s, 7, 9, ho, wo);
  CHECK(ho == 4);
  CHECK(wo == 5);
  ConvSpec unit{3, 8, 3, 1, 1};
  conv_out_shape(unit, 13, 17, ho, wo);
  CHECK(ho == 13);  // stride-1 pad-1 3x3 preserves shape
  CHECK(wo == 17);
  CHECK_THROWS_AS(conv_out_shape(ConvSpec{1, 1, 3, 2, 0}, 1, 1, ho, wo), ShapeError);
}

TEST_CASE("conv_forward equals the direct definition") {
  Rng rng(10);
  for (int trial = 0; trial < 4; ++trial) {
    int stride = trial % 2 ? 1 : 2;
    Tensor3 in = random_tensor(rng, 3, 9, 11);
    ConvParams p = random_conv(rng, 3, 5, stride);
    Tensor3 out, expect = naive_conv(p, in);
    Matrix cols;
    conv_forward(p, in, out, cols);
    REQUIRE(out.ch == expect.ch);
    REQUIRE(out.h == expect.h);
    REQUIRE(out.w == expect.w);
    for (int c = 0; c < out.ch; ++c)
      for (int r = 0; r < out.h; ++r)
        for (int cc = 0; cc < out.w; ++cc)
          CHECK(out.p[static_cast<std::size_t>(c)](r, cc) ==
                doctest::Approx(expect.p[static_cast<std::size_t>(c)](r, cc))
                    .epsilon(1e-12));
  }
}

TEST_CASE("im2col column layout matches the output pixel order") {
  Rng rng(11);
  Tensor3 in = random_tensor(rng, 2, 6, 8);
  ConvSpec s{2, 1, 3, 2, 1};
  Matrix cols;
  im2col(in, s, cols);
  int ho = 0, wo = 0;
  conv_out_shape(s, in.h, in.w, ho, wo);
  REQUIRE(cols.rows() == 2 * 9);
  REQUIRE(cols.cols() == ho * wo);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int ic = 0; ic < 2; ++ic)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int iy = oy * 2 - 1 + ky;
            int ix = ox * 2 - 1 + kx;
            double expect = (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w)
                                ? 0.0
                                : in.p[static_cast<std::size_t>(ic)](iy, ix);
            CHECK(cols((ic * 3 + ky) * 3 + kx, oy * wo + ox) == expect);
          }
}

TEST_CASE("col2im is the adjoint of im2col") {
  Rng rng(12);
  ConvSpec s{3, 1, 3, 2, 1};
  Tensor3 x = random_tensor(rng, 3, 7, 9);
  Matrix cols;
  im2col(x, s, cols);
  Matrix C(cols.rows(), cols.cols());
  for (int i = 0; i < C.rows(); ++i)
    for (int j = 0; j < C.cols(); ++j) C(i, j) = rng.uniform(-1.0, 1.0);
  Tensor3 xt = Tensor3::zeros(3, 7, 9);
  col2im(C, s, xt);
  double lhs = (cols.array() * C.array()).sum();
  CHECK(lhs == doctest::Approx(dot(x, xt)).epsilon(1e-12));
}

TEST_CASE("conv_backward matches finite differences") {
  Rng rng(13);
  Tensor3 in = random_tensor(rng, 2, 6, 7);
  ConvParams p = random_conv(rng, 2, 3, 2);
  Tensor3 out;
  Matrix cols;
  conv_forward(p, in, out, cols);
  Tensor3 G = random_tensor(rng, out.ch, out.h, out.w);  // dL/dout for L = <out, G>

  Matrix gW = Matrix::Zero(p.W.rows(), p.W.cols());
  Vector gb = Vector::Zero(p.b.size());
  Tensor3 gx = Tensor3::zeros(in.ch, in.h, in.w);
  conv_backward(p, cols, G, &gW, &gb, &gx);

  const double h = 1e-6;
  auto loss_with = [&](const ConvParams& pp, const Tensor3& xx) {
    return dot(naive_conv(pp, xx), G);
  };
  for (int i = 0; i < 10; ++i) {
    int r = rng.uniform_int(0, static_cast<int>(p.W.rows()) - 1);
    int c = rng.uniform_int(0, static_cast<int>(p.W.cols()) - 1);
    ConvParams pp = p;
    pp.W(r, c) += h;
    double up = loss_with(pp, in);
    pp.W(r, c) -= 2 * h;
    double dn = loss_with(pp, in);
    CHECK(gW(r, c) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
  for (int i = 0; i < static_cast<int>(p.b.size()); ++i) {
    ConvParams pp = p;
    pp.b(i) += h;
    double up = loss_with(pp, in);
    pp.b(i) -= 2 * h;
    double dn = loss_with(pp, in);
    CHECK(gb(i) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
  for (int i = 0; i < 10; ++i) {
    int ch = rng.uniform_int(0, in.ch - 1);
    int r = rng.uniform_int(0, in.h - 1);
    int c = rng.uniform_int(0, in.w - 1);
    Tensor3 xx = in;
    xx.p[static_cast<std::size_t>(ch)](r, c) += h;
    double up = loss_with(p, xx);
    xx.p[static_cast<std::size_t>(ch)](r, c) -= 2 * h;
    double dn = loss_with(p, xx);
    CHECK(gx.p[static_cast<std::size_t>(ch)](r, c) ==
          doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("relu and its mask") {
  Tensor3 z = Tensor3::zeros(1, 1, 4);
  z.p[0] << -1.0, 0.0, 2.0, -0.5;
  Tensor3 a;
  relu(z, a);
  CHECK(a.p[0](0, 0) == 0.0);
  CHECK(a.p[0](0, 2) == 2.0);
  Tensor3 g = Tensor3::zeros(1, 1, 4);
  g.p[0] << 1.0, 1.0, 1.0, 1.0;
  relu_backward(z, g);
  CHECK(g.p[0](0, 0) == 0.0);
  CHECK(g.p[0](0, 1) == 0.0);  // gradient at exactly zero is zero
  CHECK(g.p[0](0, 2) == 1.0);
}

TEST_CASE("scalar nonlinearities are stable and consistent") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(700.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-700.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(softplus(700.0)));
  CHECK(softplus(700.0) == doctest::Approx(700.0));
  CHECK(softplus(-700.0) == doctest::Approx(0.0));
  // softplus(x) - softplus(-x) == x
  for (double x : {-3.0, -0.4, 0.0, 1.7, 12.0})
    CHECK(softplus(x) - softplus(-x) == doctest::Approx(x).epsilon(1e-12));
  // d/dx softplus = sigmoid
  const double h = 1e-6;
  for (double x : {-2.0, 0.3, 4.0})
    CHECK(sigmoid(x) ==
          doctest::Approx((softplus(x + h) - softplus(x - h)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("smooth L1 value and slope") {
  CHECK(smooth_l1(0.5) == doctest::Approx(0.125));
  CHECK(smooth_l1(-2.0) == doctest::Approx(1.5));
  CHECK(smooth_l1_grad(0.5) == doctest::Approx(0.5));
  CHECK(smooth_l1_grad(3.0) == 1.0);
  CHECK(smooth_l1_grad(-3.0) == -1.0);
  const double h = 1e-7;
  for (double d : {-1.7, -0.3, 0.2, 0.99, 1.5})
    CHECK(smooth_l1_grad(d) ==
          doctest::Approx((smooth_l1(d + h) - smooth_l1(d - h)) / (2 * h)).epsilon(1e-5));
}

TEST_CASE("flatten orders channel, then row, then column") {
  Tensor3 t = Tensor3::zeros(2, 2, 3);
  t.p[0] << 1, 2, 3, 4, 5, 6;
  t.p[1] << 7, 8, 9, 10, 11, 12;
  Vector v = flatten(t);
  REQUIRE(v.size() == 12);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 2; ++r)
      for (int cc = 0; cc < 3; ++cc)
        CHECK(v(c * 6 + r * 3 + cc) == t.p[static_cast<std::size_t>(c)](r, cc));
  Tensor3 back = Tensor3::zeros(2, 2, 3);
  unflatten(v, back);
  CHECK(dot(t, back) == doctest::Approx(dot(t, t)));
}
