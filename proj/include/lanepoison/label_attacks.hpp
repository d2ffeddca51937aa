#pragma once

#include <optional>
#include <string>

#include "lanepoison/types.hpp"

namespace lanepoison {

enum class AttackKind { LDA, LOA, LRA };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

// Parameters for the three label attacks.
//  - LOA shifts every lane point horizontally by beta pixels.
//  - LDA erases all lanes (targets the existence head).
//  - LRA rotates the part of each lane above a pivot row anchor by alpha_deg
//    around the lane's point at that anchor.  rotation_anchor_index is
//    0-based from the bottom anchor and must leave at least one anchor above.
struct AttackStrategy {
  AttackKind kind = AttackKind::LDA;
  double beta = 60.0;
  double alpha_deg = 9.0;
  int rotation_anchor_index = 0;
  std::optional<int> lane_index;  // LRA only: restrict to one lane
};

// Horizontal shift; columns leaving [0, width) become missing.  With
// |beta| < width, applying +beta then -beta restores every unclipped column.
LaneLabel apply_loa(const LaneLabel& label, double beta, int image_width);

// Erase every lane: all coordinates missing, all exist flags 0.  Idempotent.
LaneLabel apply_lda(const LaneLabel& label);

// Rotate the above-pivot lane segment rigidly by alpha_deg (positive turns
// the top of the lane toward larger columns), then resample at the original
// row anchors.  Anchors 0..pivot inclusive are untouched; rows the rotated
// curve no longer covers become missing.  Requires |alpha_deg| < 90.
//
// Fitting uses a natural cubic spline through the lane's valid points; the
// rotated curve is represented as a dense polyline (>= 256 samples, plus the
// original anchor rows so alpha == 0 is an exact identity) and resampled by
// monotone linear interpolation.  Throws RotationDegenerateError when the
// rotated polyline folds past horizontal over a row that must be resampled,
// InsufficientPointsError when a targeted lane has < 2 valid points.
LaneLabel apply_lra(const LaneLabel& label, double alpha_deg, int rotation_anchor_index,
                    int image_width, std::optional<int> lane_index = std::nullopt);

LaneLabel apply_attack(const LaneLabel& label, const AttackStrategy& strategy,
                       int image_width);

}  // namespace lanepoison
