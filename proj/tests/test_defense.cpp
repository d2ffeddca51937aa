#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "lanepoison/defense.hpp"
#include "lanepoison/scene.hpp"
#include "test_util.hpp"

using namespace lanepoison;

namespace {

GeneratorConfig tiny_cfg() {
  GeneratorConfig cfg;
  cfg.height = 32;
  cfg.width = 48;
  cfg.anchor_count = 6;
  return cfg;
}

DetectorState tiny_victim(std::uint64_t seed = 23) {
  DetectorDescriptor d;
  d.in_h = 32;
  d.in_w = 48;
  d.n_lanes = 4;
  d.m_anchors = 6;
  d.conv_channels = {4, 8, 8};
  d.hidden = 16;
  d.row_anchors = tiny_cfg().row_anchors();
  return init_detector(seed, d);
}

std::vector<Scene> probe_scenes(int count) {
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i)
    out.push_back(generate_scene(static_cast<std::uint64_t>(400 + i), tiny_cfg()));
  return out;
}

std::vector<int> zeroed_final_rows(const DetectorState& s) {
  std::vector<int> rows;
  for (Eigen::Index r = 0; r < s.c3.W.rows(); ++r)
    if (s.c3.W.row(r).isZero(0.0) && s.c3.b[r] == 0.0) rows.push_back(static_cast<int>(r));
  return rows;
}

}  // namespace

TEST_CASE("pruning zeroes exactly the requested final-stage channels") {
  DetectorState v = tiny_victim();
  DetectorState pruned = prune_channels(v, {1, 6});
  CHECK(zeroed_final_rows(pruned) == std::vector<int>{1, 6});
  CHECK(zeroed_final_rows(v).empty());  // the victim is untouched
  CHECK((pruned.c2.W.array() == v.c2.W.array()).all());
  CHECK((pruned.fc.W.array() == v.fc.W.array()).all());

  DetectorState same = prune_channels(v, {});
  CHECK((same.c3.W.array() == v.c3.W.array()).all());

  CHECK_THROWS_AS(prune_channels(v, {8}), ConfigError);
  CHECK_THROWS_AS(prune_channels(v, {-1}), ConfigError);
}

TEST_CASE("mean activation is zero exactly for silenced channels") {
  DetectorState v = tiny_victim();
  std::vector<Scene> probe = probe_scenes(3);

  std::vector<double> base = mean_channel_activation(v, probe);
  REQUIRE(base.size() == 8);
  for (double a : base) CHECK(a >= 0.0);  // post-relu means

  DetectorState cut = prune_channels(v, {2, 5});
  std::vector<double> after = mean_channel_activation(cut, probe);
  CHECK(after[2] == 0.0);
  CHECK(after[5] == 0.0);
  for (std::size_t c : {0u, 1u, 3u, 4u, 6u, 7u})
    CHECK(after[c] == base[c]);  // other channels are independent of the cut rows

  CHECK_THROWS_AS(mean_channel_activation(v, {}), ConfigError);
}

TEST_CASE("the prune sweep removes channels in ascending activation order") {
  DetectorState v = prune_channels(tiny_victim(), {2, 5});  // two known-dead channels
  std::vector<Scene> probe = probe_scenes(3);

  std::vector<double> act = mean_channel_activation(v, probe);
  std::vector<int> rank(act.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](int a, int b) {
    return act[static_cast<std::size_t>(a)] != act[static_cast<std::size_t>(b)]
               ? act[static_cast<std::size_t>(a)] < act[static_cast<std::size_t>(b)]
               : a < b;
  });
  CHECK(rank[0] == 2);  // dead channels rank first, index-ordered
  CHECK(rank[1] == 5);

  std::vector<std::vector<int>> observed;
  AccAsrEval eval = [&](const DetectorState& s) {
    observed.push_back(zeroed_final_rows(s));
    return std::make_pair(0.5, 0.5);
  };
  PruneOptions opts;
  opts.channels_per_step = 3;
  opts.max_channels = 8;
  PruneReport rep = prune_defense(v, probe, opts, eval);

  REQUIRE(rep.steps.size() == 4);
  CHECK(rep.steps[0].pruned == 0);
  CHECK(rep.steps[1].pruned == 3);
  CHECK(rep.steps[2].pruned == 6);
  CHECK(rep.steps[3].pruned == 8);  // final partial step completes the sweep
  REQUIRE(observed.size() == 4);
  CHECK(observed[0] == std::vector<int>{2, 5});  // the victim's own dead rows
  for (std::size_t step = 1; step < 4; ++step) {
    std::vector<int> want(rank.begin(),
                          rank.begin() + rep.steps[step].pruned);
    for (int dead : {2, 5})
      if (std::find(want.begin(), want.end(), dead) == want.end()) want.push_back(dead);
    std::sort(want.begin(), want.end());
    CHECK(observed[step] == want);
  }
  for (const PruneStep& s : rep.steps) {
    CHECK(s.acc == 0.5);
    CHECK(s.asr == 0.5);
  }

  CHECK_THROWS_AS(prune_defense(v, probe, opts, AccAsrEval{}), ConfigError);
  PruneOptions bad;
  bad.channels_per_step = 0;
  CHECK_THROWS_AS(prune_defense(v, probe, bad, eval), ConfigError);
  CHECK_THROWS_AS(prune_defense(v, {}, opts, eval), ConfigError);
}

TEST_CASE("fine-tuning reports attack success before and after") {
  DetectorState victim = tiny_victim();
  std::vector<Scene> clean = probe_scenes(4);
  TrainOptions opts;
  opts.epochs = 1;
  opts.lr = 0.01;
  opts.batch = 2;
  opts.seed = 3;

  int calls = 0;
  AsrEval eval = [&](const DetectorState&) {
    ++calls;
    return calls == 1 ? 0.8 : 0.3;
  };
  FinetuneResult res = finetune_defense(victim, clean, opts, eval);
  CHECK(calls == 2);
  CHECK(res.asr_before == 0.8);
  CHECK(res.asr_after == 0.3);
  CHECK(!(res.state.fc.W.array() == victim.fc.W.array()).all());  // training happened
  CHECK((victim.fc.W.array() == tiny_victim().fc.W.array()).all());  // input untouched

  CHECK_THROWS_AS(finetune_defense(victim, clean, opts, AsrEval{}), ConfigError);
}

TEST_CASE("prune csv lists one row per sweep step") {
  PruneReport rep;
  rep.steps = {{0, 0.9, 0.8}, {4, 0.85, 0.1}};
  auto dir = lptest::tmp_dir("prune_csv");
  write_prune_csv(dir / "p.csv", rep);
  std::ifstream in(dir / "p.csv", std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "pruned,acc,asr\n0,0.9,0.8\n4,0.85,0.1\n");
  CHECK_THROWS_AS(write_prune_csv(dir / "no" / "p.csv", rep), IoError);
}
