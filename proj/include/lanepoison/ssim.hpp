#pragma once

#include <vector>

#include "lanepoison/types.hpp"

namespace lanepoison {

// Windowed SSIM over unit-range planes: uniform 8x8 windows, biased moments,
// C1 = (0.01)^2 and C2 = (0.03)^2 for dynamic range 1.  A window participates
// when its center pixel lies in the given mask (all-ones mask = global SSIM).
struct SsimOptions {
  int window = 8;
  double c1 = 1e-4;
  double c2 = 9e-4;
};

// Mean SSIM over selected windows and all channels.  Throws SsimWindowError
// when no whole window has its center inside the mask.
double ssim_masked_mean(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                        const MaskPlane& center_mask, const SsimOptions& opt = {});

// d(mean SSIM)/d(a); grad is resized and overwritten.  Returns the value.
double ssim_masked_mean_grad(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                             const MaskPlane& center_mask, std::vector<PlaneD>& grad,
                             const SsimOptions& opt = {});

double ssim_global(const std::vector<PlaneD>& a, const std::vector<PlaneD>& b,
                   const SsimOptions& opt = {});

// Structural agreement between generated and clean content over the
// environment region (higher is better, <= 1).
double env_consistency_score(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& env_mask,
                             const SsimOptions& opt = {});

// Mean squared error over lane-marking pixels (all channels).
double lane_consistency_loss(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& lane_mask);

// Gradient of lane_consistency_loss w.r.t. generated; returns the value.
double lane_consistency_grad(const std::vector<PlaneD>& generated,
                             const std::vector<PlaneD>& clean, const MaskPlane& lane_mask,
                             std::vector<PlaneD>& grad);

}  // namespace lanepoison
