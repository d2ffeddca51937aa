#pragma once

#include <cstdint>
#include <vector>

#include "lanepoison/diffusion.hpp"
#include "lanepoison/nn.hpp"

namespace lanepoison {

struct Scene;

// Small convolutional denoiser: three stride-1 3x3 convs over 9 input planes
// (latent RGB, region mask, trigger-kind one-hot, normalized step index, and
// region-local row/col coordinates) with a residual connection to the latent,
// predicting the clean composite.
inline constexpr int kDenoiserInPlanes = 9;

struct DenoiserDescriptor {
  int hidden = 12;
  bool operator==(const DenoiserDescriptor& o) const = default;
};

struct ToyDenoiser {
  DenoiserDescriptor desc;
  ConvParams l1, l2, l3;
  std::uint64_t init_seed = 0;

  void apply(const std::vector<PlaneD>& z, int t, int steps, const MaskPlane& region,
             TriggerKind kind, std::vector<PlaneD>& out) const;
};

ToyDenoiser init_denoiser(std::uint64_t seed, const DenoiserDescriptor& desc = {});

struct DenoiserTrainOptions {
  int iters = 500;
  int batch = 2;
  double lr = 0.06;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double region_weight = 8.0;  // loss weight of in-region pixels vs elsewhere
  int window = 16;             // trigger window sampled during training
  int placement_stride = 4;
};

// Self-supervised on composites: the input is the clean scene (or its
// composite) plus noise, the target the composite; half the time the region
// content starts from the clean image so the model learns to introduce the
// trigger, not just to keep it.
struct DenoiserTrainStats {
  std::vector<double> loss;  // per logged interval
};

ToyDenoiser train_denoiser(const std::vector<Scene>& scenes,
                           const DiffusionSchedule& sched,
                           const DenoiserTrainOptions& opts,
                           DenoiserTrainStats* stats = nullptr);

DenoiseFn make_denoise_fn(const ToyDenoiser& d, const DiffusionSchedule& sched);

}  // namespace lanepoison
