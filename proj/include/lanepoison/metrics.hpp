#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lanepoison/detector.hpp"
#include "lanepoison/ssim.hpp"
#include "lanepoison/trigger.hpp"

namespace lanepoison {

struct ScoreOptions {
  double threshold_px = 2.5;   // 20 px at TuSimple's 1280 width, scaled to 160
  double exist_threshold = 0.5;
};

struct PointScore {
  long correct = 0;  // sum of per-image correct points C_i
  long total = 0;    // sum of per-image scoreable points S_i

  double value() const;
};

// Shared scoring kernel: a labelled point counts when its lane is predicted
// to exist and the predicted column is within threshold_px.  Accuracy scores
// predictions against clean labels; attack success scores them against
// attacked labels — same kernel, different targets.
PointScore score_points(const std::vector<Prediction>& preds,
                        const std::vector<LaneLabel>& targets, int image_width,
                        const ScoreOptions& opt = {});

// LDA success: fraction of originally-existing lanes the model no longer
// reports.  Throws UndefinedMetricError when no lane exists in the targets.
double score_missing_rate(const std::vector<Prediction>& preds,
                          const std::vector<LaneLabel>& original_labels,
                          double exist_threshold = 0.5);

struct MetricsRow {
  std::string model;
  std::string attack;    // trigger kind
  std::string strategy;  // label attack
  double acc_clean = 0.0;
  double asr = 0.0;
};

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows);
void write_metrics_json(const std::filesystem::path& path,
                        const std::vector<MetricsRow>& rows,
                        const std::string& config_hash);

// Stealth: SSIM between poisoned and clean images over windows that do not
// touch the trigger region.
double stealth_ssim(const Image& poisoned, const Image& clean, const TriggerRegion& region,
                    const SsimOptions& opt = {});

struct StealthReport {
  double mean = 0.0;
  std::vector<double> per_sample;
};

StealthReport stealth_report(const std::vector<Image>& poisoned,
                             const std::vector<Image>& clean,
                             const std::vector<TriggerRegion>& regions);

// FNV-1a of a config snapshot, for keying result rows.
std::string config_hash(const std::string& text);

}  // namespace lanepoison
