#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lanepoison/heatmap.hpp"
#include "lanepoison/trigger.hpp"
#include "lanepoison/types.hpp"

namespace lanepoison {

struct CandidateWindow {
  int row = 0, col = 0, height = 0, width = 0;
  double inside_fraction = 0.0;
  double score = 0.0;

  TriggerRegion region() const { return {row, col, height, width}; }
};

struct PlacementConfig {
  int window_h = 16, window_w = 16;
  int stride = 4;
  double min_inside = 1.0;  // required road-mask coverage fraction

  void validate() const;
};

// Sliding-window grid; keeps windows whose road coverage is >= min_inside.
std::vector<CandidateWindow> enumerate_candidates(const MaskPlane& road_mask,
                                                  const PlacementConfig& cfg);

using IntegralPlane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>;
IntegralPlane integral_plane(const PlaneD& p);
double integral_window_sum(const IntegralPlane& s, int row, int col, int h, int w);

// Fills each candidate's score with its attention mass and returns the best
// one (ties break toward smaller row, then smaller column).  Throws
// EmptyCandidateError when the candidate list is empty.
CandidateWindow score_and_select(std::vector<CandidateWindow>& candidates,
                                 const HeatMap& heat);

// enumerate + score in one call.
CandidateWindow select_trigger_window(const MaskPlane& road_mask, const HeatMap& heat,
                                      const PlacementConfig& cfg);

// Uniform pick among the candidates (random-placement ablation).
CandidateWindow pick_random_candidate(const std::vector<CandidateWindow>& candidates,
                                      std::uint64_t seed);

void write_candidates_csv(const std::filesystem::path& path,
                          const std::vector<CandidateWindow>& candidates);

}  // namespace lanepoison
