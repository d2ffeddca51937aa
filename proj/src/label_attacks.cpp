#include "lanepoison/label_attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "lanepoison/spline.hpp"

namespace lanepoison {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::LDA: return "lda";
    case AttackKind::LOA: return "loa";
    case AttackKind::LRA: return "lra";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "lda") return AttackKind::LDA;
  if (s == "loa") return AttackKind::LOA;
  if (s == "lra") return AttackKind::LRA;
  throw ConfigError("unknown attack kind: " + s);
}

LaneLabel apply_loa(const LaneLabel& label, double beta, int image_width) {
  LaneLabel out = label;
  for (auto& lane : out.lanes)
    for (double& c : lane) {
      if (c == kMissing) continue;
      double shifted = c + beta;
      c = (shifted < 0.0 || shifted >= static_cast<double>(image_width)) ? kMissing
                                                                         : shifted;
    }
  return out;
}

LaneLabel apply_lda(const LaneLabel& label) {
  LaneLabel out = label;
  for (auto& lane : out.lanes) std::fill(lane.begin(), lane.end(), kMissing);
  std::fill(out.exist.begin(), out.exist.end(), 0);
  return out;
}

namespace {

// Rotates one lane's above-pivot segment; returns the new column vector.
std::vector<double> rotate_lane(const std::vector<int>& anchors,
                                const std::vector<double>& cols, double alpha_rad,
                                int pivot_index, int image_width, bool strict) {
  std::vector<std::array<double, 2>> valid;
  for (std::size_t k = 0; k < cols.size(); ++k)
    if (cols[k] != kMissing)
      valid.push_back({static_cast<double>(anchors[k]), cols[k]});
  if (valid.size() < 2) {
    if (strict)
      throw InsufficientPointsError("lane rotation needs >= 2 valid points");
    return cols;
  }

  NaturalCubicSpline s = NaturalCubicSpline::fit(valid);
  const double pivot_row = static_cast<double>(anchors[static_cast<std::size_t>(pivot_index)]);
  // Nothing above the pivot on this lane: identity.
  if (s.min_row() >= pivot_row) return cols;
  const double pivot_col = s.eval(pivot_row);

  // Dense sample rows from the pivot up to the topmost valid row.  The anchor
  // rows themselves are included so that rotation by zero reproduces the
  // original columns exactly.
  const int kDense = 256;
  std::vector<double> sample_rows;
  sample_rows.reserve(kDense + cols.size());
  const double top_row = s.min_row();
  for (int i = 0; i < kDense; ++i)
    sample_rows.push_back(pivot_row + (top_row - pivot_row) * i / (kDense - 1));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    double r = static_cast<double>(anchors[k]);
    if (r < pivot_row && r > top_row) sample_rows.push_back(r);
  }
  std::sort(sample_rows.begin(), sample_rows.end(),
            [](double a, double b) { return a > b; });  // descending: pivot first
  // the dense grid can land exactly on an inserted anchor row
  sample_rows.erase(
      std::unique(sample_rows.begin(), sample_rows.end(),
                  [](double a, double b) { return std::abs(a - b) < 1e-9; }),
      sample_rows.end());

  const double ca = std::cos(alpha_rad);
  const double sa = std::sin(alpha_rad);
  // Rotated polyline (row, col), walking upward from the pivot (the first
  // sample row is the pivot itself, which rotation leaves fixed).
  std::vector<std::array<double, 2>> poly;
  poly.reserve(sample_rows.size());
  for (double r : sample_rows) {
    double d_row = r - pivot_row;  // <= 0 above the pivot
    double d_col = s.eval(r) - pivot_col;
    // Positive alpha moves points above the pivot toward larger columns.
    double rr = pivot_row + d_row * ca + d_col * sa;
    double rc = pivot_col + d_col * ca - d_row * sa;
    poly.push_back({rr, rc});
  }

  // The resampler assumes rows strictly decrease along the polyline; a fold
  // means the rotation pushed some tangent past horizontal.
  bool monotone = true;
  for (std::size_t i = 1; i < poly.size(); ++i)
    if (!(poly[i][0] < poly[i - 1][0] - 1e-12)) {
      monotone = false;
      break;
    }

  const double reach_row = poly.back()[0];  // topmost row still covered
  std::vector<double> out = cols;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (static_cast<int>(k) <= pivot_index) continue;  // at/below pivot: untouched
    double r = static_cast<double>(anchors[k]);
    if (r >= pivot_row) continue;
    if (!monotone)
      throw RotationDegenerateError("rotated lane folds past horizontal at row " +
                                    std::to_string(r));
    if (r < reach_row - 1e-9) {
      out[k] = kMissing;  // rotated curve no longer reaches this row
      continue;
    }
    // Linear interpolation on the unique bracketing segment.
    double col = kMissing;
    for (std::size_t i = 1; i < poly.size(); ++i) {
      if (poly[i][0] <= r + 1e-12 && r <= poly[i - 1][0] + 1e-12) {
        double span = poly[i - 1][0] - poly[i][0];
        double t = span > 0.0 ? (poly[i - 1][0] - r) / span : 0.0;
        col = poly[i - 1][1] + t * (poly[i][1] - poly[i - 1][1]);
        break;
      }
    }
    if (col == kMissing) {
      out[k] = kMissing;
      continue;
    }
    out[k] = (col < 0.0 || col >= static_cast<double>(image_width)) ? kMissing : col;
  }
  return out;
}

}  // namespace

LaneLabel apply_lra(const LaneLabel& label, double alpha_deg, int rotation_anchor_index,
                    int image_width, std::optional<int> lane_index) {
  if (std::abs(alpha_deg) >= 90.0)
    throw ConfigError("lra rotation angle must satisfy |alpha| < 90");
  if (rotation_anchor_index < 0 || rotation_anchor_index > label.anchor_count() - 2)
    throw ConfigError("lra pivot anchor index out of range");
  if (lane_index && (*lane_index < 0 || *lane_index >= label.lane_count()))
    throw ConfigError("lra lane index out of range");

  const double alpha_rad = alpha_deg * 3.14159265358979323846 / 180.0;
  LaneLabel out = label;
  for (int i = 0; i < label.lane_count(); ++i) {
    if (lane_index && *lane_index != i) continue;
    bool strict = lane_index.has_value();
    if (!strict && label.valid_point_count(i) < 2) continue;
    out.lanes[static_cast<std::size_t>(i)] =
        rotate_lane(label.row_anchors, label.lanes[static_cast<std::size_t>(i)],
                    alpha_rad, rotation_anchor_index, image_width, strict);
  }
  return out;
}

LaneLabel apply_attack(const LaneLabel& label, const AttackStrategy& strategy,
                       int image_width) {
  switch (strategy.kind) {
    case AttackKind::LOA: return apply_loa(label, strategy.beta, image_width);
    case AttackKind::LDA: return apply_lda(label);
    case AttackKind::LRA:
      return apply_lra(label, strategy.alpha_deg, strategy.rotation_anchor_index,
                       image_width, strategy.lane_index);
  }
  throw ConfigError("unknown attack kind");
}

}  // namespace lanepoison
