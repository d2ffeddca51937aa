#include <doctest.h>

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "lanepoison/placement.hpp"
#include "lanepoison/rng.hpp"
#include "test_util.hpp"

using namespace lanepoison;

namespace {

MaskPlane random_mask(Rng& rng, int h, int w, double p) {
  MaskPlane m = MaskPlane::Zero(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m(r, c) = rng.uniform() < p ? 1 : 0;
  return m;
}

// Quadruple loop over grid positions and window pixels; no integral images.
std::vector<CandidateWindow> naive_enumerate(const MaskPlane& mask,
                                             const PlacementConfig& cfg) {
  std::vector<CandidateWindow> out;
  const int H = static_cast<int>(mask.rows()), W = static_cast<int>(mask.cols());
  const double area = static_cast<double>(cfg.window_h) * cfg.window_w;
  for (int r = 0; r + cfg.window_h <= H; r += cfg.stride)
    for (int c = 0; c + cfg.window_w <= W; c += cfg.stride) {
      long count = 0;
      for (int i = 0; i < cfg.window_h; ++i)
        for (int j = 0; j < cfg.window_w; ++j)
          if (mask(r + i, c + j)) ++count;
      if (static_cast<double>(count) / area + 1e-12 < cfg.min_inside) continue;
      CandidateWindow w;
      w.row = r;
      w.col = c;
      w.height = cfg.window_h;
      w.width = cfg.window_w;
      w.inside_fraction = static_cast<double>(count) / area;
      out.push_back(w);
    }
  return out;
}

}  // namespace

TEST_CASE("candidate enumeration matches a quadruple-loop recount") {
  Rng rng(41);
  PlacementConfig cfg;
  cfg.window_h = 6;
  cfg.window_w = 5;
  cfg.stride = 3;
  cfg.min_inside = 0.63;  // 0.63 * 30 = 18.9, so the cut sits between counts
  for (int trial = 0; trial < 5; ++trial) {
    MaskPlane mask = random_mask(rng, 26, 31, 0.7);
    auto got = enumerate_candidates(mask, cfg);
    auto want = naive_enumerate(mask, cfg);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].row == want[i].row);
      CHECK(got[i].col == want[i].col);
      CHECK(got[i].height == cfg.window_h);
      CHECK(got[i].width == cfg.window_w);
      CHECK(got[i].inside_fraction ==
            doctest::Approx(want[i].inside_fraction).epsilon(1e-15));
    }
  }
}

TEST_CASE("full coverage requirement is exact") {
  MaskPlane mask = lptest::full_mask(20, 20);
  mask(9, 9) = 0;  // single hole
  PlacementConfig cfg;
  cfg.window_h = 4;
  cfg.window_w = 4;
  cfg.stride = 1;
  cfg.min_inside = 1.0;
  auto cands = enumerate_candidates(mask, cfg);
  CHECK(!cands.empty());
  for (const CandidateWindow& w : cands) {
    CHECK(w.inside_fraction == 1.0);
    bool covers_hole = 9 >= w.row && 9 < w.row + w.height && 9 >= w.col &&
                       9 < w.col + w.width;
    CHECK(!covers_hole);
  }
  // 17x17 grid positions minus the 4x4 block of windows containing the hole
  CHECK(cands.size() == 17 * 17 - 16);
}

TEST_CASE("default-scale grid produces the expected candidate count") {
  MaskPlane mask = lptest::full_mask(96, 160);
  PlacementConfig cfg;
  cfg.window_h = 16;
  cfg.window_w = 16;
  cfg.stride = 8;
  cfg.min_inside = 1.0;
  auto cands = enumerate_candidates(mask, cfg);
  CHECK(cands.size() == 11 * 19);
  CHECK(cands.front().row == 0);
  CHECK(cands.front().col == 0);
  CHECK(cands.back().row == 80);
  CHECK(cands.back().col == 144);
}

TEST_CASE("integral plane reproduces direct window sums") {
  Rng rng(42);
  PlaneD p = lptest::random_plane(rng, 19, 23, -1.0, 2.0);
  IntegralPlane s = integral_plane(p);
  REQUIRE(s.rows() == 20);
  REQUIRE(s.cols() == 24);
  CHECK(s(0, 0) == 0.0);
  for (int trial = 0; trial < 40; ++trial) {
    int h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6);
    int r = rng.uniform_int(0, 19 - h), c = rng.uniform_int(0, 23 - w);
    double want = 0.0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) want += p(r + i, c + j);
    CHECK(integral_window_sum(s, r, c, h, w) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("selection picks the highest attention mass") {
  Rng rng(43);
  MaskPlane mask = random_mask(rng, 32, 40, 0.85);
  PlacementConfig cfg;
  cfg.window_h = 8;
  cfg.window_w = 8;
  cfg.stride = 4;
  cfg.min_inside = 0.8;
  auto cands = enumerate_candidates(mask, cfg);
  REQUIRE(!cands.empty());

  HeatMap heat;
  heat.values = lptest::random_plane(rng, 32, 40, 0.0, 1.0);

  std::size_t want_idx = 0;
  double want_score = -1.0;
  std::vector<double> naive_scores(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double acc = 0.0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        acc += heat.values(cands[i].row + r, cands[i].col + c);
    naive_scores[i] = acc;
    if (acc > want_score + 1e-12) {
      want_idx = i;
      want_score = acc;
    }
  }
  CandidateWindow got = score_and_select(cands, heat);
  CHECK(got.row == cands[want_idx].row);
  CHECK(got.col == cands[want_idx].col);
  CHECK(got.score == doctest::Approx(want_score).epsilon(1e-12));
  for (std::size_t i = 0; i < cands.size(); ++i)
    CHECK(cands[i].score == doctest::Approx(naive_scores[i]).epsilon(1e-12));

  SUBCASE("exact ties break toward the top-left") {
    HeatMap flat;
    flat.values = PlaneD::Constant(32, 40, 1.0);
    CandidateWindow first = score_and_select(cands, flat);
    CHECK(first.row == cands.front().row);
    CHECK(first.col == cands.front().col);
  }
}

TEST_CASE("empty candidate lists are an error") {
  MaskPlane empty_mask = MaskPlane::Zero(24, 24);
  PlacementConfig cfg;
  cfg.window_h = 8;
  cfg.window_w = 8;
  cfg.stride = 4;
  cfg.min_inside = 1.0;
  auto cands = enumerate_candidates(empty_mask, cfg);
  CHECK(cands.empty());

  HeatMap heat;
  heat.values = PlaneD::Constant(24, 24, 1.0);
  CHECK_THROWS_AS(score_and_select(cands, heat), EmptyCandidateError);
  CHECK_THROWS_AS(pick_random_candidate(cands, 7), EmptyCandidateError);
  CHECK_THROWS_AS(select_trigger_window(empty_mask, heat, cfg), EmptyCandidateError);
}

TEST_CASE("random placement is seeded and in-range") {
  MaskPlane mask = lptest::full_mask(40, 40);
  PlacementConfig cfg;
  cfg.window_h = 8;
  cfg.window_w = 8;
  cfg.stride = 4;
  auto cands = enumerate_candidates(mask, cfg);

  CandidateWindow a = pick_random_candidate(cands, 5);
  CandidateWindow b = pick_random_candidate(cands, 5);
  CHECK(a.row == b.row);
  CHECK(a.col == b.col);

  std::set<std::pair<int, int>> seen;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    CandidateWindow w = pick_random_candidate(cands, seed);
    bool member = false;
    for (const CandidateWindow& c : cands)
      if (c.row == w.row && c.col == w.col) member = true;
    CHECK(member);
    seen.insert({w.row, w.col});
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("placement configs are validated") {
  MaskPlane mask = lptest::full_mask(20, 20);
  PlacementConfig cfg;
  cfg.stride = 0;
  CHECK_THROWS_AS(enumerate_candidates(mask, cfg), ConfigError);
  cfg = {};
  cfg.window_h = 0;
  CHECK_THROWS_AS(enumerate_candidates(mask, cfg), ConfigError);
  cfg = {};
  cfg.min_inside = 1.5;
  CHECK_THROWS_AS(enumerate_candidates(mask, cfg), ConfigError);
  cfg = {};
  cfg.min_inside = -0.1;
  CHECK_THROWS_AS(enumerate_candidates(mask, cfg), ConfigError);
  cfg = {};
  cfg.window_h = 32;  // larger than the image
  CHECK_THROWS_AS(enumerate_candidates(mask, cfg), ConfigError);
}

TEST_CASE("candidate csv has the documented header") {
  MaskPlane mask = lptest::full_mask(24, 24);
  PlacementConfig cfg;
  cfg.window_h = 8;
  cfg.window_w = 8;
  cfg.stride = 8;
  auto cands = enumerate_candidates(mask, cfg);
  HeatMap heat;
  heat.values = PlaneD::Constant(24, 24, 0.5);
  score_and_select(cands, heat);

  auto dir = lptest::tmp_dir("placement_csv");
  write_candidates_csv(dir / "cands.csv", cands);
  std::ifstream in(dir / "cands.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "row,col,height,width,inside_fraction,score");
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == cands.size());
  CHECK_THROWS_AS(write_candidates_csv(dir / "nope" / "cands.csv", cands), IoError);
}
