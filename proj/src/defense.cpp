#include "lanepoison/defense.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "lanepoison/scene.hpp"

namespace lanepoison {

FinetuneResult finetune_defense(const DetectorState& victim,
                                const std::vector<Scene>& clean_data,
                                const TrainOptions& opts, const AsrEval& eval_asr) {
  if (!eval_asr) throw ConfigError("finetune_defense: missing ASR evaluator");
  FinetuneResult res;
  res.state = victim;
  res.asr_before = eval_asr(res.state);
  train_detector(res.state, clean_data, opts, nullptr);
  res.asr_after = eval_asr(res.state);
  return res;
}

std::vector<double> mean_channel_activation(const DetectorState& s,
                                            const std::vector<Scene>& probe) {
  if (probe.empty()) throw ConfigError("mean_channel_activation: empty probe set");
  std::vector<double> acc(static_cast<std::size_t>(s.c3.spec.out_ch), 0.0);
  DetectorWorkspace ws;
  for (const Scene& sc : probe) {
    forward(s, sc.image, ws);
    for (int c = 0; c < ws.a3.ch; ++c)
      acc[static_cast<std::size_t>(c)] += ws.a3.p[static_cast<std::size_t>(c)].mean();
  }
  for (double& v : acc) v /= static_cast<double>(probe.size());
  return acc;
}

DetectorState prune_channels(const DetectorState& victim, const std::vector<int>& channels) {
  DetectorState out = victim;
  for (int c : channels) {
    if (c < 0 || c >= out.c3.spec.out_ch)
      throw ConfigError("prune_channels: channel index out of range");
    out.c3.W.row(c).setZero();
    out.c3.b[c] = 0.0;
  }
  return out;
}

PruneReport prune_defense(const DetectorState& victim, const std::vector<Scene>& probe,
                          const PruneOptions& opts, const AccAsrEval& eval) {
  if (!eval) throw ConfigError("prune_defense: missing evaluator");
  if (opts.channels_per_step <= 0) throw ConfigError("channels_per_step must be positive");
  int max_ch = std::min(opts.max_channels, victim.c3.spec.out_ch);

  std::vector<double> act = mean_channel_activation(victim, probe);
  std::vector<int> rank(act.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](int a, int b) {
    return act[static_cast<std::size_t>(a)] != act[static_cast<std::size_t>(b)]
               ? act[static_cast<std::size_t>(a)] < act[static_cast<std::size_t>(b)]
               : a < b;  // stable under activation ties
  });

  PruneReport report;
  for (int n = 0; n <= max_ch; n += opts.channels_per_step) {
    std::vector<int> kill(rank.begin(), rank.begin() + n);
    DetectorState pruned = n == 0 ? victim : prune_channels(victim, kill);
    auto [acc, asr] = eval(pruned);
    report.steps.push_back({n, acc, asr});
    if (n + opts.channels_per_step > max_ch && n < max_ch) {
      // final partial step so the sweep always ends at max_ch
      std::vector<int> all(rank.begin(), rank.begin() + max_ch);
      auto [acc2, asr2] = eval(prune_channels(victim, all));
      report.steps.push_back({max_ch, acc2, asr2});
      break;
    }
  }
  return report;
}

void write_prune_csv(const std::filesystem::path& path, const PruneReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "pruned,acc,asr\n";
  for (const PruneStep& s : report.steps)
    out << s.pruned << "," << s.acc << "," << s.asr << "\n";
}

}  // namespace lanepoison
