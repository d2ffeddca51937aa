#include "lanepoison/placement.hpp"

#include <fstream>

#include "lanepoison/rng.hpp"

namespace lanepoison {

void PlacementConfig::validate() const {
  if (window_h <= 0 || window_w <= 0) throw ConfigError("placement window must be positive");
  if (stride <= 0) throw ConfigError("placement stride must be positive");
  if (min_inside < 0.0 || min_inside > 1.0)
    throw ConfigError("min_inside must lie in [0, 1]");
}

IntegralPlane integral_plane(const PlaneD& p) {
  IntegralPlane s = IntegralPlane::Zero(p.rows() + 1, p.cols() + 1);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double rowsum = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      rowsum += p(r, c);
      s(r + 1, c + 1) = s(r, c + 1) + rowsum;
    }
  }
  return s;
}

double integral_window_sum(const IntegralPlane& s, int row, int col, int h, int w) {
  return s(row + h, col + w) - s(row, col + w) - s(row + h, col) + s(row, col);
}

std::vector<CandidateWindow> enumerate_candidates(const MaskPlane& road_mask,
                                                  const PlacementConfig& cfg) {
  cfg.validate();
  const int H = static_cast<int>(road_mask.rows());
  const int W = static_cast<int>(road_mask.cols());
  if (cfg.window_h > H || cfg.window_w > W)
    throw ConfigError("placement window larger than image");

  // Exact integer coverage counts; the fraction comparison stays exact for
  // min_inside = 1 (full coverage) because it reduces to count == area.
  Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic> sat(H + 1, W + 1);
  sat.setZero();
  for (int r = 0; r < H; ++r) {
    long rowsum = 0;
    for (int c = 0; c < W; ++c) {
      rowsum += road_mask(r, c) ? 1 : 0;
      sat(r + 1, c + 1) = sat(r, c + 1) + rowsum;
    }
  }

  const long area = static_cast<long>(cfg.window_h) * cfg.window_w;
  const long need = static_cast<long>(std::ceil(cfg.min_inside * static_cast<double>(area) -
                                                1e-9));
  std::vector<CandidateWindow> out;
  for (int r = 0; r + cfg.window_h <= H; r += cfg.stride)
    for (int c = 0; c + cfg.window_w <= W; c += cfg.stride) {
      long inside = sat(r + cfg.window_h, c + cfg.window_w) - sat(r, c + cfg.window_w) -
                    sat(r + cfg.window_h, c) + sat(r, c);
      if (inside < need) continue;
      CandidateWindow w;
      w.row = r;
      w.col = c;
      w.height = cfg.window_h;
      w.width = cfg.window_w;
      w.inside_fraction = static_cast<double>(inside) / static_cast<double>(area);
      out.push_back(w);
    }
  return out;
}

CandidateWindow score_and_select(std::vector<CandidateWindow>& candidates,
                                 const HeatMap& heat) {
  if (candidates.empty())
    throw EmptyCandidateError("no placement window satisfies the road constraint");
  IntegralPlane s = integral_plane(heat.values);
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateWindow& w = candidates[i];
    if (w.row + w.height > heat.values.rows() || w.col + w.width > heat.values.cols())
      throw ShapeError("candidate window outside heat map");
    w.score = integral_window_sum(s, w.row, w.col, w.height, w.width);
    const CandidateWindow& b = candidates[best];
    if (w.score > b.score ||
        (w.score == b.score && (w.row < b.row || (w.row == b.row && w.col < b.col))))
      best = i;
  }
  return candidates[best];
}

CandidateWindow select_trigger_window(const MaskPlane& road_mask, const HeatMap& heat,
                                      const PlacementConfig& cfg) {
  std::vector<CandidateWindow> cands = enumerate_candidates(road_mask, cfg);
  return score_and_select(cands, heat);
}

CandidateWindow pick_random_candidate(const std::vector<CandidateWindow>& candidates,
                                      std::uint64_t seed) {
  if (candidates.empty())
    throw EmptyCandidateError("no placement window satisfies the road constraint");
  Rng rng = Rng(seed).derive("random-placement");
  return candidates[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
}

void write_candidates_csv(const std::filesystem::path& path,
                          const std::vector<CandidateWindow>& candidates) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "row,col,height,width,inside_fraction,score\n";
  for (const CandidateWindow& w : candidates)
    out << w.row << "," << w.col << "," << w.height << "," << w.width << ","
        << w.inside_fraction << "," << w.score << "\n";
}

}  // namespace lanepoison
