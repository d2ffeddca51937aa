#include "lanepoison/trigger.hpp"

#include <algorithm>
#include <cmath>

#include "lanepoison/error.hpp"
#include "lanepoison/rng.hpp"

namespace lanepoison {

void TriggerRegion::validate(int image_h, int image_w) const {
  if (height <= 0 || width <= 0) throw DegenerateInputError("trigger region is empty");
  if (row < 0 || col < 0 || row + height > image_h || col + width > image_w)
    throw ConfigError("trigger region leaves the image");
}

std::string to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::Mud: return "mud";
    case TriggerKind::Cone: return "cone";
    case TriggerKind::Square: return "square";
    case TriggerKind::Blended: return "blended";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(const std::string& s) {
  if (s == "mud") return TriggerKind::Mud;
  if (s == "cone") return TriggerKind::Cone;
  if (s == "square") return TriggerKind::Square;
  if (s == "blended") return TriggerKind::Blended;
  throw ConfigError("unknown trigger kind: " + s);
}

MaskPlane region_mask(const TriggerRegion& r, int image_h, int image_w) {
  r.validate(image_h, image_w);
  MaskPlane m = MaskPlane::Zero(image_h, image_w);
  for (int rr = r.row; rr < r.row + r.height; ++rr)
    for (int cc = r.col; cc < r.col + r.width; ++cc) m(rr, cc) = 1;
  return m;
}

namespace {

template <std::size_t N>
double blotch_alpha(const std::array<std::array<double, 4>, N>& lobes, int r, int c) {
  // union of elliptical lobes in region-local coordinates; the quartic
  // exponent gives each lobe a flat opaque core with a fast shoulder, like a
  // thresholded blob rather than a translucent gaussian smudge
  double best = 0.0;
  for (const auto& L : lobes) {
    double dy = (r - L[0]) / L[2];
    double dx = (c - L[1]) / L[3];
    double d2 = dx * dx + dy * dy;
    best = std::max(best, std::exp(-1.8 * d2 * d2));
  }
  return best;
}

}  // namespace

Image make_composite(const Image& clean, const TriggerSpec& spec, std::uint64_t seed) {
  spec.region.validate(clean.height, clean.width);
  if (spec.kind == TriggerKind::Square) return inject_badnets(clean, spec.region);
  if (spec.kind == TriggerKind::Blended)
    throw ConfigError("blended baseline has no regional composite");

  const TriggerRegion& R = spec.region;
  Rng rng = Rng(seed).derive("composite");
  std::vector<PlaneD> planes = clean.planes();

  if (spec.kind == TriggerKind::Mud) {
    // One canonical splat shared by every injection: a flat blotch of dried
    // ochre mud.  The seed only jitters overall brightness a touch.  Keeping
    // the shape and color fixed across samples is what makes the trigger
    // learnable at low poisoning rates, and a single flat warm tone is the
    // cheapest possible feature for the victim, so the backdoor rule claims
    // the least capacity away from the lane-fitting task.  The bright ochre
    // also keeps its red-blue spread under the generator's night and shadow
    // lighting modes, where a dark mud patch would vanish into the road.
    const double kLobe[3][4] = {{0.40, 0.36, 0.46, 0.52},
                                {0.60, 0.62, 0.42, 0.50},
                                {0.34, 0.68, 0.34, 0.40}};
    std::array<std::array<double, 4>, 3> lobes{};
    for (int i = 0; i < 3; ++i) {
      lobes[i][0] = kLobe[i][0] * R.height;
      lobes[i][1] = kLobe[i][1] * R.width;
      lobes[i][2] = kLobe[i][2] * R.height;
      lobes[i][3] = kLobe[i][3] * R.width;
    }
    const double mud[3] = {0.72, 0.48, 0.20};
    const double gain = rng.uniform(0.97, 1.03);
    for (int r = 0; r < R.height; ++r)
      for (int c = 0; c < R.width; ++c) {
        double a = blotch_alpha(lobes, r, c);
        if (a < 0.08) continue;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = planes[static_cast<std::size_t>(ch)](R.row + r, R.col + c);
          v = v * (1.0 - a) + gain * mud[ch] * a;
        }
      }
  } else {  // cone
    const double orange[3] = {0.95, 0.45, 0.10};
    const double band[3] = {0.93, 0.93, 0.93};
    double mid = 0.5 * (R.width - 1);
    for (int r = 0; r < R.height; ++r) {
      double frac = static_cast<double>(r) / std::max(1, R.height - 1);  // 0 top
      double half = 0.08 * R.width + frac * 0.42 * R.width;
      bool white = frac > 0.40 && frac < 0.62;
      bool base = frac > 0.88;
      for (int c = 0; c < R.width; ++c) {
        double d = std::abs(c - mid);
        double a = std::clamp(half + 0.5 - d, 0.0, 1.0);
        if (base) a = std::clamp(0.56 * R.width + 0.5 - d, 0.0, 1.0);
        if (a <= 0.0) continue;
        const double* col = white && !base ? band : orange;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = planes[static_cast<std::size_t>(ch)](R.row + r, R.col + c);
          v = v * (1.0 - a) + col[ch] * a;
        }
      }
    }
  }
  return Image::from_planes(planes);
}

Image inject_badnets(const Image& clean, const TriggerRegion& region) {
  region.validate(clean.height, clean.width);
  Image out = clean;
  for (int r = 0; r < region.height; ++r)
    for (int c = 0; c < region.width; ++c) {
      bool on = ((r / 2) + (c / 2)) % 2 == 0;
      double v = on ? 1.0 : 0.0;
      for (int ch = 0; ch < 3; ++ch)
        out.set(ch, region.row + r, region.col + c, v);
    }
  return out;
}

Image make_blended_pattern(int h, int w, std::uint64_t seed) {
  Rng rng = Rng(seed).derive("blend-pattern");
  double ph1 = rng.uniform(0.0, 6.28), ph2 = rng.uniform(0.0, 6.28);
  std::vector<PlaneD> planes(3, PlaneD::Zero(h, w));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = 0.5 + 0.5 * std::sin(0.35 * c + ph1) * std::cos(0.22 * r + ph2);
      planes[0](r, c) = v;
      planes[1](r, c) = 1.0 - v;
      planes[2](r, c) = 0.5 + 0.5 * std::sin(0.18 * (r + c) + ph1);
    }
  return Image::from_planes(planes);
}

Image inject_blended(const Image& clean, const Image& pattern, double ratio) {
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("blend ratio must lie in [0, 1]");
  if (pattern.height != clean.height || pattern.width != clean.width ||
      pattern.channel_count() != clean.channel_count())
    throw ShapeError("blend pattern shape mismatch");
  std::vector<PlaneD> a = clean.planes();
  std::vector<PlaneD> b = pattern.planes();
  for (std::size_t ch = 0; ch < a.size(); ++ch)
    a[ch] = a[ch] * (1.0 - ratio) + b[ch] * ratio;
  return Image::from_planes(a);
}

}  // namespace lanepoison
