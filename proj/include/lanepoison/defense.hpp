#pragma once

#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "lanepoison/detector.hpp"

namespace lanepoison {

// Attack-success evaluator supplied by the caller (it owns the triggered
// evaluation set); defenses stay independent of how ASR is measured.
using AsrEval = std::function<double(const DetectorState&)>;
// (accuracy, attack success) pair evaluator for the pruning sweep.
using AccAsrEval = std::function<std::pair<double, double>(const DetectorState&)>;

struct FinetuneResult {
  DetectorState state;
  double asr_before = 0.0;
  double asr_after = 0.0;
};

// Continue SGD on clean data only.
FinetuneResult finetune_defense(const DetectorState& victim,
                                const std::vector<Scene>& clean_data,
                                const TrainOptions& opts, const AsrEval& eval_asr);

struct PruneOptions {
  int channels_per_step = 4;
  int max_channels = 32;  // up to the final conv stage's full width
};

struct PruneStep {
  int pruned = 0;
  double acc = 0.0;
  double asr = 0.0;
};

struct PruneReport {
  std::vector<PruneStep> steps;  // first row: 0 channels pruned
};

// Ranks the final conv stage's channels by mean activation on the clean probe
// set (ascending) and zeroes them cumulatively, recording accuracy and attack
// success after each step.
PruneReport prune_defense(const DetectorState& victim, const std::vector<Scene>& probe,
                          const PruneOptions& opts, const AccAsrEval& eval);

// The victim with the given final-stage channels zeroed out.
DetectorState prune_channels(const DetectorState& victim, const std::vector<int>& channels);

// Mean post-ReLU activation per final-stage channel over the probe set.
std::vector<double> mean_channel_activation(const DetectorState& s,
                                            const std::vector<Scene>& probe);

void write_prune_csv(const std::filesystem::path& path, const PruneReport& report);

}  // namespace lanepoison
