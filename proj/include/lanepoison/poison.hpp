#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lanepoison/denoiser.hpp"
#include "lanepoison/detector.hpp"
#include "lanepoison/diffusion.hpp"
#include "lanepoison/label_attacks.hpp"
#include "lanepoison/placement.hpp"
#include "lanepoison/scene.hpp"

namespace lanepoison {

enum class PlacementMode { Heatmap, Random, Fixed };
std::string to_string(PlacementMode m);
PlacementMode placement_mode_from_string(const std::string& s);

struct PoisonConfig {
  double rate = 0.10;
  AttackStrategy strategy;
  TriggerKind trigger = TriggerKind::Mud;
  PlacementMode placement = PlacementMode::Heatmap;
  int fixed_row = 0, fixed_col = 0;
  PlacementConfig window;         // 16x16, stride 4, full road coverage
  double blend_ratio = 0.15;      // Blended baseline only
  double heatmap_blur_sigma = 0.0;
  DiffusionSchedule schedule;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string poison_config_to_json(const PoisonConfig& cfg);
PoisonConfig poison_config_from_json(const std::string& text);

struct PoisonRecord {
  int source_index = 0;
  TriggerRegion region;
  TriggerKind trigger = TriggerKind::Mud;
  double heatmap_score = 0.0;  // 0 for random/fixed placement
  std::uint64_t sample_seed = 0;
};

struct SkipRecord {
  int source_index = 0;
  std::string reason;
};

struct PoisonSummary {
  std::uint64_t seed = 0;
  std::string config_json;
  std::vector<PoisonRecord> records;  // sorted by source index
  std::vector<SkipRecord> skipped;
};

struct PoisonOutput {
  std::vector<Scene> scenes;  // same order as input; selected entries replaced
  PoisonSummary summary;
};

// Poison ceil(rate*N) samples: heatmap-guided (or random/fixed) placement,
// trigger synthesis, label attack.  A sample whose synthesis fails with an
// empty candidate set or a degenerate rotation is skipped-and-logged and the
// next shuffled sample takes its place.  Heatmap placement reads the
// surrogate; mud/cone triggers need the denoiser.
PoisonOutput poison_dataset(const std::vector<Scene>& scenes, const PoisonConfig& cfg,
                            const DetectorState* surrogate, const ToyDenoiser* denoiser);

// Per-sample building block shared by training-time poisoning and test-time
// trigger injection.
Image synthesize_trigger_image(const Scene& scene, const TriggerRegion& region,
                               TriggerKind kind, const DiffusionSchedule& sched,
                               const ToyDenoiser* denoiser, double blend_ratio,
                               std::uint64_t sample_seed);

struct TriggeredTestset {
  std::vector<Scene> scenes;              // triggered images with attacked labels
  std::vector<LaneLabel> original_labels; // clean ground truth, same order
  PoisonSummary summary;
};

// Applies the trigger to every scene (rate is ignored); failures propagate.
TriggeredTestset build_triggered_testset(const std::vector<Scene>& scenes,
                                         const PoisonConfig& cfg,
                                         const DetectorState* surrogate,
                                         const ToyDenoiser* denoiser);

// Dataset layout plus poison_manifest.json (and anno_original.jsonl for
// triggered test sets).
void write_poisoned_dataset(const std::filesystem::path& root, const PoisonOutput& out,
                            const WriteMeta& meta);
void write_triggered_testset(const std::filesystem::path& root,
                             const TriggeredTestset& set, const WriteMeta& meta);

PoisonSummary read_poison_summary(const std::filesystem::path& root);

}  // namespace lanepoison
