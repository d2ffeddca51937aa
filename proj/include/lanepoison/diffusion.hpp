#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lanepoison/trigger.hpp"
#include "lanepoison/types.hpp"

namespace lanepoison {

// Low-noise editing schedule.  Step index t runs from `steps` down to 2; the
// per-step noise std grows linearly from noise_min (t = 1) to noise_max
// (t = steps).  `steps` must be even so the final applied step re-anchors the
// off-mask region to the noised source encoding.
struct DiffusionSchedule {
  int steps = 12;
  double noise_min = 5e-4;
  double noise_max = 4e-3;
  double lambda_lane = 1.0;
  double lambda_env = 0.5;
  double guidance_step_size = 0.1;
  int guide_every_odd = 1;  // apply guidance after every k-th odd step; 0 = off

  void validate() const;
  double noise_std(int t) const;
};

// Denoiser callback: maps the current latent (3 channels) plus conditioning
// (region mask, trigger kind, step index) to the predicted clean composite.
using DenoiseFn = std::function<void(const std::vector<PlaneD>& z, int t,
                                     const MaskPlane& region, TriggerKind kind,
                                     std::vector<PlaneD>& out)>;

// Consistency objective steered during editing:
//   lambda_lane * MSE(z, clean | lane pixels)
//   + lambda_env * (1 - SSIM(z, clean | env-centered windows)).
// When env_mask selects no whole window the env term is skipped.
double guidance_objective(const std::vector<PlaneD>& z, const std::vector<PlaneD>& clean,
                          const MaskPlane& lane_mask, const MaskPlane& env_mask,
                          double lambda_lane, double lambda_env);

// One projected gradient step on the objective; returns the updated latent.
std::vector<PlaneD> guidance_step(const std::vector<PlaneD>& z,
                                  const std::vector<PlaneD>& clean,
                                  const MaskPlane& lane_mask, const MaskPlane& env_mask,
                                  double lambda_lane, double lambda_env,
                                  double step_size);

struct EditObserver {
  // called after each applied step with the step index t that produced z
  std::function<void(int t, const std::vector<PlaneD>& z)> after_step;
};

// Mask-anchored diffusion edit: z_steps is the noised clean image; on even t
// the off-region pixels are reset to z_steps (bitwise), odd steps keep the
// full denoiser output and then receive guidance.  Returns the synthesized
// image; final_latent (optional) receives the unclamped latent.
Image masked_diffusion_edit(const Image& clean, const TriggerSpec& spec,
                            const DiffusionSchedule& sched, const DenoiseFn& denoise,
                            const MaskPlane& lane_mask, const MaskPlane& env_mask,
                            std::uint64_t seed, const EditObserver* observer = nullptr,
                            std::vector<PlaneD>* final_latent = nullptr);

}  // namespace lanepoison
