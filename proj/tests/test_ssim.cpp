#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "lanepoison/error.hpp"
#include "lanepoison/rng.hpp"
#include "lanepoison/ssim.hpp"
#include "test_util.hpp"

using namespace lanepoison;

namespace {

std::vector<PlaneD> random_planes(Rng& rng, int ch, int h, int w) {
  std::vector<PlaneD> out;
  for (int i = 0; i < ch; ++i) out.push_back(lptest::random_plane(rng, h, w, 0.0, 1.0));
  return out;
}

// Direct per-window recomputation: loops over the pixels of every window whose
// center lies in the mask, no integral images.
double naive_ssim(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                  const MaskPlane& mask, const SsimOptions& opt) {
  const int H = static_cast<int>(a[0].rows()), W = static_cast<int>(a[0].cols());
  const int k = opt.window;
  const double n = static_cast<double>(k) * k;
  double acc = 0.0;
  long used = 0;
  for (std::size_t ch = 0; ch < a.size(); ++ch)
    for (int r = 0; r + k <= H; ++r)
      for (int c = 0; c + k <= W; ++c) {
        if (!mask(r + k / 2, c + k / 2)) continue;
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            double x = a[ch](r + i, c + j), y = b[ch](r + i, c + j);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
          }
        double mx = sx / n, my = sy / n;
        double vx = sxx / n - mx * mx, vy = syy / n - my * my;
        double cxy = sxy / n - mx * my;
        acc += (2 * mx * my + opt.c1) * (2 * cxy + opt.c2) /
               ((mx * mx + my * my + opt.c1) * (vx + vy + opt.c2));
        ++used;
      }
  return acc / static_cast<double>(used);
}

}  // namespace

TEST_CASE("identical images score exactly one") {
  Rng rng(11);
  auto a = random_planes(rng, 3, 17, 23);
  CHECK(ssim_global(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  MaskPlane half = MaskPlane::Zero(17, 23);
  half.block(5, 5, 6, 9).setOnes();
  CHECK(ssim_masked_mean(a, a, half) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("integral-image value matches a direct per-window recomputation") {
  Rng rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    int h = 14 + rng.uniform_int(0, 6), w = 16 + rng.uniform_int(0, 6);
    auto a = random_planes(rng, 2, h, w);
    auto b = random_planes(rng, 2, h, w);
    MaskPlane full = lptest::full_mask(h, w);
    CHECK(ssim_global(a, b) ==
          doctest::Approx(naive_ssim(a, b, full, {})).epsilon(1e-12));

    MaskPlane sparse = MaskPlane::Zero(h, w);
    for (int i = 0; i < 30; ++i)
      sparse(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1;
    // make sure at least one valid center exists
    sparse(h / 2, w / 2) = 1;
    CHECK(ssim_masked_mean(a, b, sparse) ==
          doctest::Approx(naive_ssim(a, b, sparse, {})).epsilon(1e-12));
  }
}

TEST_CASE("only windows with masked centers participate") {
  Rng rng(13);
  int h = 20, w = 24;
  auto a = random_planes(rng, 1, h, w);
  auto b = random_planes(rng, 1, h, w);
  MaskPlane one = MaskPlane::Zero(h, w);
  one(6, 7) = 1;  // window top-left (2, 3), footprint rows 2..9, cols 3..10
  double before = ssim_masked_mean(a, b, one);

  auto a2 = a;
  a2[0](15, 20) = 1.0 - a2[0](15, 20);  // far outside the only footprint
  CHECK(ssim_masked_mean(a2, b, one) == before);

  auto a3 = a;
  a3[0](2, 3) = 1.0 - a3[0](2, 3);  // inside it
  CHECK(ssim_masked_mean(a3, b, one) != before);
}

TEST_CASE("analytic ssim gradient matches finite differences") {
  Rng rng(14);
  int h = 13, w = 15;
  auto a = random_planes(rng, 2, h, w);
  auto b = random_planes(rng, 2, h, w);
  MaskPlane mask = MaskPlane::Zero(h, w);
  mask(5, 6) = 1;
  mask(7, 5) = 1;
  mask(8, 9) = 1;

  std::vector<PlaneD> grad;
  double val = ssim_masked_mean_grad(a, b, mask, grad);
  CHECK(val == doctest::Approx(ssim_masked_mean(a, b, mask)).epsilon(1e-14));
  REQUIRE(grad.size() == 2);

  for (int probe = 0; probe < 24; ++probe) {
    std::size_t ch = static_cast<std::size_t>(rng.uniform_int(0, 1));
    int r = rng.uniform_int(0, h - 1), c = rng.uniform_int(0, w - 1);
    double fdv = lptest::fd(
        [&](double x) {
          auto mod = a;
          mod[ch](r, c) = x;
          return ssim_masked_mean(mod, b, mask);
        },
        a[ch](r, c), 1e-6);
    CHECK(grad[ch](r, c) == doctest::Approx(fdv).epsilon(1e-5));
  }
}

TEST_CASE("lane consistency is per-pixel mse over the mask") {
  Rng rng(15);
  int h = 9, w = 11;
  auto g = random_planes(rng, 3, h, w);
  auto c = random_planes(rng, 3, h, w);
  MaskPlane mask = MaskPlane::Zero(h, w);
  long count = 0;
  for (int r = 0; r < h; ++r)
    for (int cc = 0; cc < w; ++cc)
      if (rng.uniform() < 0.3) {
        mask(r, cc) = 1;
        ++count;
      }
  REQUIRE(count > 0);

  double want = 0.0;
  for (int r = 0; r < h; ++r)
    for (int cc = 0; cc < w; ++cc) {
      if (!mask(r, cc)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        double d = g[static_cast<std::size_t>(ch)](r, cc) -
                   c[static_cast<std::size_t>(ch)](r, cc);
        want += d * d;
      }
    }
  want /= static_cast<double>(count) * 3.0;
  CHECK(lane_consistency_loss(g, c, mask) == doctest::Approx(want).epsilon(1e-13));

  std::vector<PlaneD> grad;
  double val = lane_consistency_grad(g, c, mask, grad);
  CHECK(val == doctest::Approx(want).epsilon(1e-13));
  for (int probe = 0; probe < 16; ++probe) {
    std::size_t ch = static_cast<std::size_t>(rng.uniform_int(0, 2));
    int r = rng.uniform_int(0, h - 1), cc = rng.uniform_int(0, w - 1);
    double fdv = lptest::fd(
        [&](double x) {
          auto mod = g;
          mod[ch](r, cc) = x;
          return lane_consistency_loss(mod, c, mask);
        },
        g[ch](r, cc), 1e-6);
    CHECK(grad[ch](r, cc) == doctest::Approx(fdv).epsilon(1e-6));
  }

  MaskPlane empty = MaskPlane::Zero(h, w);
  CHECK(lane_consistency_loss(g, c, empty) == 0.0);
  CHECK(lane_consistency_grad(g, c, empty, grad) == 0.0);
  for (const PlaneD& p : grad) CHECK(p.matrix().lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("degenerate ssim inputs are rejected") {
  Rng rng(16);
  auto a = random_planes(rng, 1, 12, 12);
  CHECK_THROWS_AS(ssim_masked_mean(a, a, MaskPlane::Zero(12, 12)), SsimWindowError);

  auto tiny = random_planes(rng, 1, 6, 6);
  CHECK_THROWS_AS(ssim_global(tiny, tiny), SsimWindowError);

  auto b = random_planes(rng, 2, 12, 12);
  CHECK_THROWS_AS(ssim_masked_mean(a, b, lptest::full_mask(12, 12)), ShapeError);
  auto c = random_planes(rng, 1, 12, 13);
  CHECK_THROWS_AS(ssim_masked_mean(a, c, lptest::full_mask(12, 12)), ShapeError);
  CHECK_THROWS_AS(ssim_masked_mean(a, a, lptest::full_mask(12, 13)), ShapeError);
}

TEST_CASE("env consistency is masked ssim by another name") {
  Rng rng(17);
  auto a = random_planes(rng, 3, 16, 16);
  auto b = random_planes(rng, 3, 16, 16);
  MaskPlane env = MaskPlane::Zero(16, 16);
  env.block(4, 4, 4, 8).setOnes();
  CHECK(env_consistency_score(a, b, env) == ssim_masked_mean(a, b, env));
  CHECK(env_consistency_score(a, a, env) == doctest::Approx(1.0).epsilon(1e-14));
}
