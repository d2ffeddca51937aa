#include "lanepoison/diffusion.hpp"

#include <cmath>

#include "lanepoison/error.hpp"
#include "lanepoison/rng.hpp"
#include "lanepoison/ssim.hpp"

namespace lanepoison {

void DiffusionSchedule::validate() const {
  if (steps < 2 || steps % 2 != 0)
    throw ConfigError("diffusion steps must be even and >= 2");
  if (!(noise_min > 0.0) || noise_max < noise_min || noise_max >= 0.5)
    throw ConfigError("diffusion noise levels must satisfy 0 < min <= max < 0.5");
  if (lambda_lane < 0.0 || lambda_env < 0.0 || guidance_step_size < 0.0)
    throw ConfigError("guidance weights must be non-negative");
  if (guide_every_odd < 0) throw ConfigError("guide_every_odd must be >= 0");
}

double DiffusionSchedule::noise_std(int t) const {
  if (t < 1 || t > steps) throw ConfigError("diffusion step index out of range");
  if (steps == 1) return noise_max;
  return noise_min + (noise_max - noise_min) * static_cast<double>(t - 1) /
                         static_cast<double>(steps - 1);
}

double guidance_objective(const std::vector<PlaneD>& z, const std::vector<PlaneD>& clean,
                          const MaskPlane& lane_mask, const MaskPlane& env_mask,
                          double lambda_lane, double lambda_env) {
  double obj = lambda_lane * lane_consistency_loss(z, clean, lane_mask);
  if (lambda_env > 0.0 && env_mask.any()) {
    try {
      obj += lambda_env * (1.0 - env_consistency_score(z, clean, env_mask));
    } catch (const SsimWindowError&) {
      // no full window centered in the env region: term contributes nothing
    }
  }
  return obj;
}

std::vector<PlaneD> guidance_step(const std::vector<PlaneD>& z,
                                  const std::vector<PlaneD>& clean,
                                  const MaskPlane& lane_mask, const MaskPlane& env_mask,
                                  double lambda_lane, double lambda_env,
                                  double step_size) {
  std::vector<PlaneD> grad(z.size(), PlaneD::Zero(z[0].rows(), z[0].cols()));
  std::vector<PlaneD> tmp;
  lane_consistency_grad(z, clean, lane_mask, tmp);
  for (std::size_t c = 0; c < z.size(); ++c) grad[c] = lambda_lane * tmp[c];
  if (lambda_env > 0.0 && env_mask.any()) {
    try {
      std::vector<PlaneD> ssim_grad;
      ssim_masked_mean_grad(z, clean, env_mask, ssim_grad, {});
      // d(1 - ssim)/dz = -d(ssim)/dz
      for (std::size_t c = 0; c < z.size(); ++c) grad[c] -= lambda_env * ssim_grad[c];
    } catch (const SsimWindowError&) {
    }
  }
  std::vector<PlaneD> out = z;
  for (std::size_t c = 0; c < z.size(); ++c) out[c] -= step_size * grad[c];
  return out;
}

Image masked_diffusion_edit(const Image& clean, const TriggerSpec& spec,
                            const DiffusionSchedule& sched, const DenoiseFn& denoise,
                            const MaskPlane& lane_mask, const MaskPlane& env_mask,
                            std::uint64_t seed, const EditObserver* observer,
                            std::vector<PlaneD>* final_latent) {
  sched.validate();
  spec.region.validate(clean.height, clean.width);
  if (!denoise) throw ConfigError("masked_diffusion_edit: missing denoiser");
  if (spec.kind == TriggerKind::Square || spec.kind == TriggerKind::Blended)
    throw ConfigError("baseline triggers are injected directly, not diffused");

  MaskPlane region = region_mask(spec.region, clean.height, clean.width);
  Rng rng = Rng(seed).derive("edit-noise");

  // Noised encoding of the source image; the anchor for off-region content.
  std::vector<PlaneD> z_src = clean.planes();
  const double sigma_t = sched.noise_std(sched.steps);
  for (PlaneD& pl : z_src)
    for (Eigen::Index r = 0; r < pl.rows(); ++r)
      for (Eigen::Index c = 0; c < pl.cols(); ++c) pl(r, c) += sigma_t * rng.normal();

  const std::vector<PlaneD> clean_planes = clean.planes();
  std::vector<PlaneD> z = z_src;
  std::vector<PlaneD> den;
  int odd_count = 0;
  for (int t = sched.steps; t >= 2; --t) {
    denoise(z, t, region, spec.kind, den);
    if (den.size() != z.size())
      throw ShapeError("denoiser returned wrong channel count");
    if (t % 2 == 0) {
      // anchor: off-region pixels return to the source encoding bit-for-bit
      for (std::size_t ch = 0; ch < z.size(); ++ch) {
        PlaneD next = z_src[ch];
        for (Eigen::Index r = 0; r < next.rows(); ++r)
          for (Eigen::Index c = 0; c < next.cols(); ++c)
            if (region(r, c)) next(r, c) = den[ch](r, c);
        z[ch] = std::move(next);
      }
    } else {
      for (std::size_t ch = 0; ch < z.size(); ++ch) z[ch] = den[ch];
      ++odd_count;
      if (sched.guide_every_odd > 0 && odd_count % sched.guide_every_odd == 0)
        z = guidance_step(z, clean_planes, lane_mask, env_mask, sched.lambda_lane,
                          sched.lambda_env, sched.guidance_step_size);
    }
    for (const PlaneD& pl : z)
      if (!pl.isFinite().all())
        throw DivergenceError("diffusion latent diverged at step " + std::to_string(t));
    if (observer && observer->after_step) observer->after_step(t, z);
  }

  if (final_latent) *final_latent = z;
  return Image::from_planes(z);
}

}  // namespace lanepoison
