#include "lanepoison/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace lanepoison {

double PointScore::value() const {
  if (total == 0) throw UndefinedMetricError("no scoreable lane points");
  return static_cast<double>(correct) / static_cast<double>(total);
}

PointScore score_points(const std::vector<Prediction>& preds,
                        const std::vector<LaneLabel>& targets, int image_width,
                        const ScoreOptions& opt) {
  if (preds.size() != targets.size())
    throw ShapeError("score_points: prediction/label count mismatch");
  (void)image_width;
  PointScore score;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const Prediction& p = preds[s];
    const LaneLabel& t = targets[s];
    if (p.coords.size() != t.lanes.size())
      throw ShapeError("score_points: lane count mismatch at sample " + std::to_string(s));
    for (std::size_t i = 0; i < t.lanes.size(); ++i) {
      if (!t.exist[i]) continue;
      bool predicted = p.exist_prob[i] >= opt.exist_threshold;
      for (std::size_t k = 0; k < t.lanes[i].size(); ++k) {
        double col = t.lanes[i][k];
        if (col == kMissing) continue;
        ++score.total;
        if (predicted && std::abs(p.coords[i][k] - col) <= opt.threshold_px)
          ++score.correct;
      }
    }
  }
  return score;
}

double score_missing_rate(const std::vector<Prediction>& preds,
                          const std::vector<LaneLabel>& original_labels,
                          double exist_threshold) {
  if (preds.size() != original_labels.size())
    throw ShapeError("score_missing_rate: prediction/label count mismatch");
  long existing = 0, dropped = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const LaneLabel& t = original_labels[s];
    for (std::size_t i = 0; i < t.exist.size(); ++i) {
      if (!t.exist[i]) continue;
      ++existing;
      if (preds[s].exist_prob[i] < exist_threshold) ++dropped;
    }
  }
  if (existing == 0) throw UndefinedMetricError("no existing lanes to drop");
  return static_cast<double>(dropped) / static_cast<double>(existing);
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "model,attack,strategy,acc_clean,asr\n";
  for (const MetricsRow& r : rows)
    out << r.model << "," << r.attack << "," << r.strategy << "," << r.acc_clean << ","
        << r.asr << "\n";
}

void write_metrics_json(const std::filesystem::path& path,
                        const std::vector<MetricsRow>& rows,
                        const std::string& hash) {
  nlohmann::json j;
  j["config_hash"] = hash;
  nlohmann::json arr = nlohmann::json::array();
  for (const MetricsRow& r : rows)
    arr.push_back({{"model", r.model},
                   {"attack", r.attack},
                   {"strategy", r.strategy},
                   {"acc_clean", r.acc_clean},
                   {"asr", r.asr}});
  j["rows"] = arr;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

double stealth_ssim(const Image& poisoned, const Image& clean, const TriggerRegion& region,
                    const SsimOptions& opt) {
  if (poisoned.height != clean.height || poisoned.width != clean.width)
    throw ShapeError("stealth_ssim: image shape mismatch");
  const int H = clean.height, W = clean.width;
  const int half = opt.window / 2;
  MaskPlane centers = MaskPlane::Zero(H, W);
  int count = 0;
  for (int r = 0; r + opt.window <= H; ++r)
    for (int c = 0; c + opt.window <= W; ++c) {
      bool overlaps = r < region.row + region.height && r + opt.window > region.row &&
                      c < region.col + region.width && c + opt.window > region.col;
      if (overlaps) continue;
      centers(r + half, c + half) = 1;
      ++count;
    }
  if (count == 0) throw SsimWindowError("trigger region covers the whole image");
  return ssim_masked_mean(poisoned.planes(), clean.planes(), centers, opt);
}

StealthReport stealth_report(const std::vector<Image>& poisoned,
                             const std::vector<Image>& clean,
                             const std::vector<TriggerRegion>& regions) {
  if (poisoned.size() != clean.size() || poisoned.size() != regions.size())
    throw ShapeError("stealth_report: size mismatch");
  StealthReport rep;
  double acc = 0.0;
  for (std::size_t i = 0; i < poisoned.size(); ++i) {
    double s = stealth_ssim(poisoned[i], clean[i], regions[i]);
    rep.per_sample.push_back(s);
    acc += s;
  }
  rep.mean = poisoned.empty() ? 0.0 : acc / static_cast<double>(poisoned.size());
  return rep;
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lanepoison
