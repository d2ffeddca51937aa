#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lanepoison/checkpoint.hpp"
#include "lanepoison/denoiser.hpp"
#include "lanepoison/detector.hpp"
#include "test_util.hpp"

using namespace lanepoison;
namespace fs = std::filesystem;

namespace {

DetectorDescriptor small_desc() {
  DetectorDescriptor d;
  d.in_h = 32;
  d.in_w = 40;
  d.n_lanes = 2;
  d.m_anchors = 4;
  d.conv_channels = {2, 3, 4};
  d.hidden = 8;
  d.row_anchors = {31, 26, 21, 16};
  return d;
}

}  // namespace

TEST_CASE("detector checkpoints round-trip bit-exactly") {
  fs::path dir = lptest::tmp_dir("ckpt_det");
  DetectorState s = init_detector(77, small_desc());
  s.norm_mean = 0.4;
  s.norm_std = 0.3;
  save_detector(dir / "d.ckpt", s);
  DetectorState b = load_detector(dir / "d.ckpt");
  CHECK(b.desc == s.desc);
  CHECK(b.init_seed == 77);
  CHECK(b.norm_mean == 0.4);
  CHECK(b.norm_std == 0.3);
  CHECK((b.c1.W.array() == s.c1.W.array()).all());
  CHECK((b.c2.W.array() == s.c2.W.array()).all());
  CHECK((b.c3.W.array() == s.c3.W.array()).all());
  CHECK((b.fc.W.array() == s.fc.W.array()).all());
  CHECK((b.exist_head.W.array() == s.exist_head.W.array()).all());
  CHECK((b.coord_head.W.array() == s.coord_head.W.array()).all());
  CHECK((b.fc.b.array() == s.fc.b.array()).all());
  CHECK(b.c1.spec.stride == 2);
  CHECK(checkpoint_kind(dir / "d.ckpt") == kKindDetector);
}

TEST_CASE("denoiser checkpoints round-trip bit-exactly") {
  fs::path dir = lptest::tmp_dir("ckpt_den");
  ToyDenoiser d = init_denoiser(5);
  save_denoiser(dir / "n.ckpt", d);
  ToyDenoiser b = load_denoiser(dir / "n.ckpt");
  CHECK(b.desc == d.desc);
  CHECK(b.init_seed == 5);
  CHECK((b.l1.W.array() == d.l1.W.array()).all());
  CHECK((b.l2.W.array() == d.l2.W.array()).all());
  CHECK((b.l3.W.array() == d.l3.W.array()).all());
  CHECK((b.l3.b.array() == d.l3.b.array()).all());
  CHECK(checkpoint_kind(dir / "n.ckpt") == kKindDenoiser);
}

TEST_CASE("kind mismatch is rejected") {
  fs::path dir = lptest::tmp_dir("ckpt_kind");
  ToyDenoiser d = init_denoiser(5);
  save_denoiser(dir / "n.ckpt", d);
  CHECK_THROWS_AS(load_detector(dir / "n.ckpt"), CheckpointError);
  DetectorState s = init_detector(1, small_desc());
  save_detector(dir / "d.ckpt", s);
  CHECK_THROWS_AS(load_denoiser(dir / "d.ckpt"), CheckpointError);
}

TEST_CASE("corrupt files are rejected with CheckpointError") {
  fs::path dir = lptest::tmp_dir("ckpt_corrupt");
  DetectorState s = init_detector(3, small_desc());
  fs::path path = dir / "d.ckpt";
  save_detector(path, s);

  SUBCASE("wrong magic") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_AS(load_detector(path), CheckpointError);
    CHECK_THROWS_AS(checkpoint_kind(path), CheckpointError);
  }
  SUBCASE("future version") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const unsigned char v2[4] = {9, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(v2), 4);
    f.close();
    CHECK_THROWS_AS(load_detector(path), CheckpointError);
  }
  SUBCASE("truncated tensor payload") {
    fs::resize_file(path, fs::file_size(path) - 64);
    CHECK_THROWS_AS(load_detector(path), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_detector(dir / "nope.ckpt"), IoError);
  }
}
