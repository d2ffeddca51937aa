#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lanepoison/types.hpp"

namespace lanepoison {

struct TriggerRegion {
  int row = 0, col = 0;  // top-left corner
  int height = 0, width = 0;

  void validate(int image_h, int image_w) const;
  long pixel_count() const { return static_cast<long>(height) * width; }
  bool contains(int r, int c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
};

enum class TriggerKind { Mud, Cone, Square, Blended };
std::string to_string(TriggerKind k);
TriggerKind trigger_kind_from_string(const std::string& s);

struct TriggerSpec {
  TriggerRegion region;
  TriggerKind kind = TriggerKind::Mud;
};

MaskPlane region_mask(const TriggerRegion& r, int image_h, int image_w);

// Paste-style composite: the intended trigger appearance inside the region
// (diffusion is trained to reproduce these, the victim never sees them raw).
Image make_composite(const Image& clean, const TriggerSpec& spec, std::uint64_t seed);

// Classic baselines.  BadNets: opaque checker square at the region.  Blended:
// whole-image alpha blend with a fixed pattern.
Image inject_badnets(const Image& clean, const TriggerRegion& region);
Image make_blended_pattern(int h, int w, std::uint64_t seed);
Image inject_blended(const Image& clean, const Image& pattern, double ratio);

}  // namespace lanepoison
