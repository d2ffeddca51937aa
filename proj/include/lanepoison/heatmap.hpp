#pragma once

#include <filesystem>

#include "lanepoison/detector.hpp"
#include "lanepoison/label_attacks.hpp"

namespace lanepoison {

// Gradient attention map: per-pixel sum over channels of |dL/dpixel|, where L
// is the classification loss when the attack targets lane existence (LDA) and
// the regression loss otherwise (LOA / LRA).
struct HeatMap {
  PlaneD values;
  LossSelector source = LossSelector::Total;
};

LossSelector selector_for(AttackKind kind);

HeatMap compute_heatmap(const DetectorState& s, const Image& image, const LaneLabel& label,
                        const AttackStrategy& strategy, double blur_sigma = 0.0,
                        double loss_scale = 1.0);

HeatMap compute_heatmap(const DetectorState& s, const Image& image, const LaneLabel& label,
                        LossSelector sel, double blur_sigma = 0.0,
                        double loss_scale = 1.0);

// Shannon entropy (natural log) of the heat map normalized to a distribution.
// Throws UndefinedMetricError when the map has no mass.
double attention_entropy(const HeatMap& h);

// Fraction of total attention mass inside the mask.
double attention_on_region(const HeatMap& h, const MaskPlane& mask);

// Separable Gaussian blur, kernel truncated at 3 sigma and renormalized at
// the borders; sigma <= 0 is the identity.
PlaneD gaussian_blur(const PlaneD& p, double sigma);

// 16-bit PGM plus a JSON sidecar (<path>.json) recording min/max/source so
// the map reloads with its original scale.
void write_heatmap(const std::filesystem::path& path, const HeatMap& h);
HeatMap read_heatmap(const std::filesystem::path& path);

// Red-tinted visualization on top of the input image.
Image heatmap_overlay(const Image& base, const HeatMap& h);

}  // namespace lanepoison
