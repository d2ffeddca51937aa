#include "lanepoison/scene.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "lanepoison/rng.hpp"

namespace lanepoison {

using nlohmann::json;

void GeneratorConfig::validate() const {
  if (height < 32 || width < 32) throw ConfigError("scene size must be >= 32x32");
  if (anchor_count < 2) throw ConfigError("anchor_count must be >= 2");
  if (lanes_min < 0 || lanes_max > 4 || lanes_min > lanes_max)
    throw ConfigError("lane count range must satisfy 0 <= min <= max <= 4");
  if (horizon_frac < 0.2 || horizon_frac > 0.5)
    throw ConfigError("horizon_frac must lie in [0.2, 0.5]");
  if (anchor_top_frac <= horizon_frac + 0.02 || anchor_top_frac >= 0.9)
    throw ConfigError("anchor_top_frac must lie above the horizon");
  if (max_sprites < 0 || max_sprites > 4)
    throw ConfigError("max_sprites must lie in [0, 4]");
  static const char* kModes[] = {"auto", "normal", "shadow", "highlight", "night"};
  if (std::find_if(std::begin(kModes), std::end(kModes),
                   [&](const char* m) { return lighting == m; }) == std::end(kModes))
    throw ConfigError("unknown lighting mode: " + lighting);
  int top = static_cast<int>(std::ceil(anchor_top_frac * height));
  if (height - top < anchor_count)
    throw ConfigError("anchor_count too large for anchor span");
}

std::vector<int> GeneratorConfig::row_anchors() const {
  int top = static_cast<int>(std::ceil(anchor_top_frac * height));
  int bottom = height - 1;
  std::vector<int> anchors(static_cast<std::size_t>(anchor_count));
  for (int k = 0; k < anchor_count; ++k)
    anchors[static_cast<std::size_t>(k)] = static_cast<int>(
        std::lround(bottom - static_cast<double>(k) * (bottom - top) / (anchor_count - 1)));
  return anchors;
}

std::string generator_config_to_json(const GeneratorConfig& c) {
  json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["anchor_count"] = c.anchor_count;
  j["anchor_top_frac"] = c.anchor_top_frac;
  j["lanes_min"] = c.lanes_min;
  j["lanes_max"] = c.lanes_max;
  j["lighting"] = c.lighting;
  j["max_sprites"] = c.max_sprites;
  j["horizon_frac"] = c.horizon_frac;
  return j.dump();
}

GeneratorConfig generator_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config is not valid JSON: ") + e.what());
  }
  GeneratorConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "height") c.height = it->get<int>();
      else if (k == "width") c.width = it->get<int>();
      else if (k == "anchor_count") c.anchor_count = it->get<int>();
      else if (k == "anchor_top_frac") c.anchor_top_frac = it->get<double>();
      else if (k == "lanes_min") c.lanes_min = it->get<int>();
      else if (k == "lanes_max") c.lanes_max = it->get<int>();
      else if (k == "lighting") c.lighting = it->get<std::string>();
      else if (k == "max_sprites") c.max_sprites = it->get<int>();
      else if (k == "horizon_frac") c.horizon_frac = it->get<double>();
      else throw ConfigError("unknown generator config key: " + k);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for generator config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

namespace {

// Stateless per-pixel noise so rendering order never changes results.
double hash_noise(std::uint64_t seed, std::uint64_t tag, int r, int c) {
  std::uint64_t z = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
  z ^= (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) << 32) |
       static_cast<std::uint32_t>(c);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;  // [0, 1)
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

struct RoadGeometry {
  int h0 = 0;           // first road row
  double center_top = 0, center_bottom = 0, bow = 0;
  double w_top = 0, w_bottom = 0;
  int height = 0;

  double t_of(double r) const {
    return (r - h0) / (static_cast<double>(height - 1) - h0);
  }
  double center(double r) const {
    double t = t_of(r);
    return lerp(center_top, center_bottom, t) + bow * t * (1.0 - t);
  }
  double half_width(double r) const {
    return lerp(w_top, w_bottom, t_of(r));
  }
};

struct LaneShape {
  double u = 0;                 // lateral slot in road coordinates
  double a1 = 0, a2 = 0, a3 = 0;  // cubic perturbation coefficients
  bool white = true;

  double col(const RoadGeometry& g, double r) const {
    double t = g.t_of(r);
    double uu = u + t * (a1 + t * (a2 + t * a3));
    return g.center(r) + uu * g.half_width(r);
  }
};

double marking_half_width(const RoadGeometry& g, double r) {
  return lerp(1.1, 1.6, g.t_of(r));
}

struct SpriteBox {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // inclusive pixel bounds
  int kind = 0;                        // 0 car, 1 cone
  std::array<double, 3> body{};
};

}  // namespace

Scene generate_scene(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  const int H = cfg.height, W = cfg.width;
  Rng root(seed);
  Rng geo = root.derive("geometry");
  Rng light = root.derive("lighting");
  Rng spr = root.derive("sprites");

  RoadGeometry g;
  g.height = H;
  g.h0 = static_cast<int>(std::lround(cfg.horizon_frac * H));
  g.center_bottom = 0.5 * W + geo.uniform(-0.05, 0.05) * W;
  g.center_top = 0.5 * W + geo.uniform(-0.09, 0.09) * W;
  g.bow = geo.uniform(-0.05, 0.05) * W;
  g.w_top = 0.055 * W;
  g.w_bottom = geo.uniform(0.40, 0.47) * W;

  // Lane slots: which of the four lateral positions exist in this scene.
  static const double kSlots[4] = {-0.78, -0.27, 0.27, 0.78};
  int lane_count = geo.uniform_int(cfg.lanes_min, cfg.lanes_max);
  std::vector<int> slot_order = {0, 1, 2, 3};
  geo.shuffle(slot_order);
  std::vector<bool> used(4, false);
  for (int i = 0; i < lane_count; ++i) used[static_cast<std::size_t>(slot_order[i])] = true;

  std::vector<LaneShape> lanes(4);
  for (int i = 0; i < 4; ++i) {
    LaneShape& L = lanes[static_cast<std::size_t>(i)];
    L.u = kSlots[i];
    L.a1 = geo.uniform(-0.04, 0.04);
    L.a2 = geo.uniform(-0.03, 0.03);
    L.a3 = geo.uniform(-0.02, 0.02);
    L.white = geo.uniform() < 0.8;
  }

  std::string mode = cfg.lighting;
  if (mode == "auto") {
    double u = light.uniform();
    mode = u < 0.50 ? "normal" : u < 0.65 ? "highlight" : u < 0.85 ? "shadow" : "night";
  }

  // --- paint in double precision, quantize once at the end ---
  std::vector<PlaneD> img(3, PlaneD::Zero(H, W));
  MaskPlane road = MaskPlane::Zero(H, W);
  MaskPlane lane_mask = MaskPlane::Zero(H, W);
  MaskPlane env = MaskPlane::Zero(H, W);

  const double sky[3] = {0.55, 0.63, 0.74};
  const double ground[3] = {0.34, 0.38, 0.30};
  const double asphalt[3] = {0.30, 0.31, 0.33};

  for (int r = 0; r < H; ++r) {
    double center = r >= g.h0 ? g.center(r) : 0.0;
    double hw = r >= g.h0 ? g.half_width(r) : 0.0;
    for (int c = 0; c < W; ++c) {
      if (r < g.h0) {
        double grad = 0.06 * (static_cast<double>(r) / std::max(1, g.h0));
        double n = (hash_noise(seed, 11, r, c) - 0.5) * 0.016;
        for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>(ch)](r, c) = sky[ch] + grad + n;
        continue;
      }
      bool on_road = std::abs(c - center) <= hw;
      // low-frequency mottling shared by road and ground
      double mot = 0.03 * std::sin(0.11 * r + 0.07 * c + 0.9 * static_cast<double>(seed % 97));
      double n = (hash_noise(seed, on_road ? 13 : 17, r, c) - 0.5) * 0.02;
      const double* base = on_road ? asphalt : ground;
      for (int ch = 0; ch < 3; ++ch)
        img[static_cast<std::size_t>(ch)](r, c) = base[ch] + mot + n;
      if (on_road) road(r, c) = 1;
    }
  }

  // Lane markings: linear-coverage profile centered on the analytic lane
  // curve, so the painted centroid matches the label at every row.
  const double white_col[3] = {0.92, 0.92, 0.88};
  const double yellow_col[3] = {0.85, 0.73, 0.30};
  for (int i = 0; i < 4; ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    const LaneShape& L = lanes[static_cast<std::size_t>(i)];
    const double* paint = L.white ? white_col : yellow_col;
    for (int r = g.h0 + 1; r < H; ++r) {
      double col = L.col(g, r);
      double hw = marking_half_width(g, r);
      int c_lo = static_cast<int>(std::floor(col - hw - 1.0));
      int c_hi = static_cast<int>(std::ceil(col + hw + 1.0));
      for (int c = std::max(0, c_lo); c <= std::min(W - 1, c_hi); ++c) {
        double cov = std::clamp(hw + 0.5 - std::abs(c - col), 0.0, 1.0);
        if (cov <= 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = img[static_cast<std::size_t>(ch)](r, c);
          v = lerp(v, paint[ch], cov);
        }
        if (cov >= 0.5 && road(r, c)) lane_mask(r, c) = 1;
      }
    }
  }

  // Sprites on the road surface, never touching lane markings.
  std::vector<SpriteBox> boxes;
  int want = spr.uniform_int(0, cfg.max_sprites);
  static const double kSpriteSlots[3] = {-0.52, 0.0, 0.52};
  for (int s = 0; s < want; ++s) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      int kind = spr.uniform_int(0, 1);
      double us = kSpriteSlots[spr.uniform_int(0, 2)] + spr.uniform(-0.04, 0.04);
      double ts = spr.uniform(0.35, 0.75);
      double r_base = g.h0 + ts * (H - 1 - g.h0);
      double hw_r = g.half_width(r_base);
      double cc = g.center(r_base) + us * hw_r;
      int w2 = std::max(2, static_cast<int>(std::lround((kind == 0 ? 0.11 : 0.05) * hw_r)));
      int hgt = std::max(3, static_cast<int>(std::lround((kind == 0 ? 0.18 : 0.12) * hw_r)));
      SpriteBox b;
      b.kind = kind;
      b.r1 = static_cast<int>(std::lround(r_base));
      b.r0 = b.r1 - hgt + 1;
      b.c0 = static_cast<int>(std::lround(cc)) - w2;
      b.c1 = static_cast<int>(std::lround(cc)) + w2;
      if (b.r0 <= g.h0 || b.r1 >= H || b.c0 < 0 || b.c1 >= W) continue;
      bool clear = true;
      for (int r = b.r0 - 1; r <= b.r1 + 1 && clear; ++r)
        for (int c = b.c0 - 2; c <= b.c1 + 2 && clear; ++c) {
          if (r < 0 || r >= H || c < 0 || c >= W) continue;
          if (!road(r, c) || lane_mask(r, c)) clear = false;
        }
      for (const SpriteBox& o : boxes)
        if (!(b.r1 < o.r0 - 2 || o.r1 < b.r0 - 2 || b.c1 < o.c0 - 2 || o.c1 < b.c0 - 2))
          clear = false;
      if (!clear) continue;
      if (kind == 0) {
        double pick = spr.uniform();
        b.body = pick < 0.4 ? std::array<double, 3>{0.55, 0.12, 0.12}
                 : pick < 0.7 ? std::array<double, 3>{0.14, 0.20, 0.48}
                              : std::array<double, 3>{0.65, 0.66, 0.68};
      } else {
        b.body = {0.95, 0.45, 0.10};
      }
      boxes.push_back(b);
      break;
    }
  }
  for (const SpriteBox& b : boxes) {
    for (int r = b.r0; r <= b.r1; ++r)
      for (int c = b.c0; c <= b.c1; ++c) {
        double frac_h = static_cast<double>(b.r1 - r) / std::max(1, b.r1 - b.r0);
        std::array<double, 3> col = b.body;
        if (b.kind == 0) {
          if (frac_h > 0.65) col = {0.18, 0.20, 0.24};       // window strip
          else if (frac_h < 0.18) col = {0.08, 0.08, 0.09};  // wheels / shadow line
        } else {
          // cone: triangular silhouette with a white band
          double half = (1.0 - frac_h) * 0.5 * (b.c1 - b.c0);
          double mid = 0.5 * (b.c0 + b.c1);
          if (std::abs(c - mid) > half + 0.51) continue;
          if (frac_h > 0.35 && frac_h < 0.6) col = {0.93, 0.93, 0.93};
        }
        for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>(ch)](r, c) = col[ch];
        env(r, c) = 1;
      }
  }
  // Skyline band: guaranteed non-empty environment region away from the road.
  for (int r = std::max(0, g.h0 - 3); r < g.h0; ++r)
    for (int c = 0; c < W; ++c) env(r, c) = 1;

  // Lighting: global gamma+gain, plus horizontal shadow bands (uniform within
  // a row, so per-row marking centroids stay unbiased).
  double gain = 1.0, gamma = 1.0;
  if (mode == "highlight") { gain = 1.22; gamma = 0.90; }
  if (mode == "night") { gain = 0.45; gamma = 1.15; }
  for (int ch = 0; ch < 3; ++ch) {
    PlaneD& p = img[static_cast<std::size_t>(ch)];
    p = p.max(0.0).pow(gamma) * gain;
  }
  if (mode == "shadow") {
    int bands = light.uniform_int(1, 2);
    for (int b = 0; b < bands; ++b) {
      int r_mid = light.uniform_int(g.h0 + 4, H - 8);
      int half = light.uniform_int(4, 10);
      double depth = light.uniform(0.12, 0.20);
      for (int r = std::max(g.h0, r_mid - half); r <= std::min(H - 1, r_mid + half); ++r) {
        double edge = 1.0;
        int d_edge = std::min(r - (r_mid - half), (r_mid + half) - r);
        if (d_edge == 0) edge = 0.5;  // soft 1-row transition
        for (int ch = 0; ch < 3; ++ch)
          img[static_cast<std::size_t>(ch)].row(r) =
              (img[static_cast<std::size_t>(ch)].row(r) - depth * edge).max(0.0);
      }
    }
  }

  Scene scene;
  scene.seed = seed;
  scene.image = Image::from_planes(img);
  scene.road_mask = std::move(road);
  scene.lane_mask = std::move(lane_mask);
  scene.env_mask = std::move(env);

  LaneLabel label;
  label.row_anchors = cfg.row_anchors();
  label.lanes.assign(4, std::vector<double>(label.row_anchors.size(), kMissing));
  label.exist.assign(4, 0);
  for (int i = 0; i < 4; ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    label.exist[static_cast<std::size_t>(i)] = 1;
    for (std::size_t k = 0; k < label.row_anchors.size(); ++k) {
      double col = lanes[static_cast<std::size_t>(i)].col(g, label.row_anchors[k]);
      if (col >= 0.0 && col < static_cast<double>(W))
        label.lanes[static_cast<std::size_t>(i)][k] = col;
    }
    // A lane clipped down to nothing does not exist.
    int valid = 0;
    for (double c : label.lanes[static_cast<std::size_t>(i)])
      if (c != kMissing) ++valid;
    if (valid == 0) label.exist[static_cast<std::size_t>(i)] = 0;
  }
  label.validate(W, H);
  scene.label = std::move(label);
  return scene;
}

std::vector<Scene> generate_dataset(std::uint64_t seed, int count,
                                    const GeneratorConfig& cfg) {
  if (count < 0) throw ConfigError("dataset count must be >= 0");
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng root(seed);
  for (int i = 0; i < count; ++i)
    out.push_back(generate_scene(root.derive("scene", static_cast<std::uint64_t>(i)).seed(), cfg));
  return out;
}

}  // namespace lanepoison
