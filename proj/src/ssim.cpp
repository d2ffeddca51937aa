#include "lanepoison/ssim.hpp"

#include <cmath>

#include "lanepoison/error.hpp"

namespace lanepoison {

namespace {

// Summed-area table with a zero row/col border: S(r, c) = sum of p[0..r) x [0..c).
PlaneD integral(const PlaneD& p) {
  PlaneD s = PlaneD::Zero(p.rows() + 1, p.cols() + 1);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double rowsum = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      rowsum += p(r, c);
      s(r + 1, c + 1) = s(r, c + 1) + rowsum;
    }
  }
  return s;
}

double window_sum(const PlaneD& s, int r, int c, int h, int w) {
  return s(r + h, c + w) - s(r, c + w) - s(r + h, c) + s(r, c);
}

struct WindowSet {
  std::vector<std::pair<int, int>> topleft;
  int win = 8;
};

WindowSet select_windows(int H, int W, const MaskPlane& center_mask, int win) {
  if (H < win || W < win)
    throw SsimWindowError("image smaller than SSIM window");
  if (center_mask.rows() != H || center_mask.cols() != W)
    throw ShapeError("ssim: mask shape mismatch");
  WindowSet ws;
  ws.win = win;
  int half = win / 2;
  for (int r = 0; r + win <= H; ++r)
    for (int c = 0; c + win <= W; ++c)
      if (center_mask(r + half, c + half)) ws.topleft.push_back({r, c});
  if (ws.topleft.empty())
    throw SsimWindowError("no SSIM window center inside mask");
  return ws;
}

void check_pair(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b) {
  if (a.empty() || a.size() != b.size())
    throw ShapeError("ssim: channel count mismatch");
  for (std::size_t c = 0; c < a.size(); ++c)
    if (a[c].rows() != b[c].rows() || a[c].cols() != b[c].cols() ||
        a[c].rows() != a[0].rows() || a[c].cols() != a[0].cols())
      throw ShapeError("ssim: plane shape mismatch");
}

}  // namespace

double ssim_masked_mean(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                        const MaskPlane& center_mask, const SsimOptions& opt) {
  check_pair(a, b);
  const int H = static_cast<int>(a[0].rows()), W = static_cast<int>(a[0].cols());
  WindowSet ws = select_windows(H, W, center_mask, opt.window);
  const double n = static_cast<double>(opt.window) * opt.window;

  double acc = 0.0;
  for (std::size_t ch = 0; ch < a.size(); ++ch) {
    PlaneD sa = integral(a[ch]);
    PlaneD sb = integral(b[ch]);
    PlaneD saa = integral(a[ch] * a[ch]);
    PlaneD sbb = integral(b[ch] * b[ch]);
    PlaneD sab = integral(a[ch] * b[ch]);
    for (auto [r, c] : ws.topleft) {
      double mx = window_sum(sa, r, c, opt.window, opt.window) / n;
      double my = window_sum(sb, r, c, opt.window, opt.window) / n;
      double vx = window_sum(saa, r, c, opt.window, opt.window) / n - mx * mx;
      double vy = window_sum(sbb, r, c, opt.window, opt.window) / n - my * my;
      double cxy = window_sum(sab, r, c, opt.window, opt.window) / n - mx * my;
      double num = (2.0 * mx * my + opt.c1) * (2.0 * cxy + opt.c2);
      double den = (mx * mx + my * my + opt.c1) * (vx + vy + opt.c2);
      acc += num / den;
    }
  }
  return acc / (static_cast<double>(ws.topleft.size()) * static_cast<double>(a.size()));
}

double ssim_masked_mean_grad(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                             const MaskPlane& center_mask, std::vector<PlaneD>& grad,
                             const SsimOptions& opt) {
  check_pair(a, b);
  const int H = static_cast<int>(a[0].rows()), W = static_cast<int>(a[0].cols());
  WindowSet ws = select_windows(H, W, center_mask, opt.window);
  const double n = static_cast<double>(opt.window) * opt.window;
  const double denom_windows =
      static_cast<double>(ws.topleft.size()) * static_cast<double>(a.size());

  grad.assign(a.size(), PlaneD::Zero(H, W));
  double acc = 0.0;
  for (std::size_t ch = 0; ch < a.size(); ++ch) {
    const PlaneD& x = a[ch];
    const PlaneD& y = b[ch];
    PlaneD sa = integral(x), sb = integral(y);
    PlaneD saa = integral(x * x), sbb = integral(y * y), sab = integral(x * y);
    for (auto [r, c] : ws.topleft) {
      double mx = window_sum(sa, r, c, opt.window, opt.window) / n;
      double my = window_sum(sb, r, c, opt.window, opt.window) / n;
      double vx = window_sum(saa, r, c, opt.window, opt.window) / n - mx * mx;
      double vy = window_sum(sbb, r, c, opt.window, opt.window) / n - my * my;
      double cxy = window_sum(sab, r, c, opt.window, opt.window) / n - mx * my;
      double a1 = 2.0 * mx * my + opt.c1, a2 = 2.0 * cxy + opt.c2;
      double b1 = mx * mx + my * my + opt.c1, b2 = vx + vy + opt.c2;
      double s = (a1 * a2) / (b1 * b2);
      acc += s;
      // dS/dx_i assembled from the window statistics' derivatives:
      //   dmx = 1/n, dvx = 2(x_i - mx)/n, dcxy = (y_i - my)/n.
      double inv = 1.0 / (b1 * b2);
      double k_const = 2.0 / n * inv * (my * a2 - mx * s * b2);   // from mx terms
      double k_y = 2.0 / n * inv * a1;                            // times (y_i - my)
      double k_x = -2.0 / n * inv * (a1 * a2 / b2);               // times (x_i - mx)
      for (int wr = 0; wr < opt.window; ++wr)
        for (int wc = 0; wc < opt.window; ++wc) {
          double xi = x(r + wr, c + wc), yi = y(r + wr, c + wc);
          grad[ch](r + wr, c + wc) +=
              (k_const + k_y * (yi - my) + k_x * (xi - mx)) / denom_windows;
        }
    }
  }
  return acc / denom_windows;
}

double ssim_global(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                   const SsimOptions& opt) {
  if (a.empty()) throw ShapeError("ssim: no channels");
  MaskPlane all = MaskPlane::Ones(a[0].rows(), a[0].cols());
  return ssim_masked_mean(a, b, all, opt);
}

double env_consistency_score(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& env_mask,
                             const SsimOptions& opt) {
  return ssim_masked_mean(generated, clean, env_mask, opt);
}

double lane_consistency_loss(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& lane_mask) {
  check_pair(generated, clean);
  if (lane_mask.rows() != generated[0].rows() || lane_mask.cols() != generated[0].cols())
    throw ShapeError("lane_consistency_loss: mask shape mismatch");
  long count = 0;
  double acc = 0.0;
  for (Eigen::Index r = 0; r < lane_mask.rows(); ++r)
    for (Eigen::Index c = 0; c < lane_mask.cols(); ++c) {
      if (!lane_mask(r, c)) continue;
      for (std::size_t ch = 0; ch < generated.size(); ++ch) {
        double d = generated[ch](r, c) - clean[ch](r, c);
        acc += d * d;
      }
      ++count;
    }
  if (count == 0) return 0.0;  // no lane pixels: nothing to preserve
  return acc / (static_cast<double>(count) * static_cast<double>(generated.size()));
}

double lane_consistency_grad(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& lane_mask,
                             std::vector<PlaneD>& grad) {
  check_pair(generated, clean);
  grad.assign(generated.size(),
              PlaneD::Zero(generated[0].rows(), generated[0].cols()));
  long count = 0;
  for (Eigen::Index r = 0; r < lane_mask.rows(); ++r)
    for (Eigen::Index c = 0; c < lane_mask.cols(); ++c)
      if (lane_mask(r, c)) ++count;
  if (count == 0) return 0.0;
  double scale = 2.0 / (static_cast<double>(count) * static_cast<double>(generated.size()));
  double acc = 0.0;
  for (std::size_t ch = 0; ch < generated.size(); ++ch)
    for (Eigen::Index r = 0; r < lane_mask.rows(); ++r)
      for (Eigen::Index c = 0; c < lane_mask.cols(); ++c) {
        if (!lane_mask(r, c)) continue;
        double d = generated[ch](r, c) - clean[ch](r, c);
        acc += d * d;
        grad[ch](r, c) = scale * d;
      }
  return acc / (static_cast<double>(count) * static_cast<double>(generated.size()));
}

}  // namespace lanepoison
