#include <doctest.h>

#include "lanepoison/rng.hpp"
#include "lanepoison/types.hpp"
#include "test_util.hpp"

using namespace lanepoison;

TEST_CASE("quantize rounds and clamps to the byte range") {
  CHECK(Image::quantize(0.0) == 0);
  CHECK(Image::quantize(1.0) == 255);
  CHECK(Image::quantize(-0.5) == 0);
  CHECK(Image::quantize(2.0) == 255);
  CHECK(Image::quantize(0.5) == 128);           // round(127.5) away from zero
  CHECK(Image::quantize(127.4 / 255.0) == 127);
}

TEST_CASE("image get/set round-trips through bytes") {
  Image im = Image::zeros(4, 5);
  im.set(1, 2, 3, 200.0 / 255.0);
  CHECK(im.at(1, 2, 3) == doctest::Approx(200.0 / 255.0));
  CHECK(im.channels[1](2, 3) == 200);
  CHECK(im.channel_count() == 3);
}

TEST_CASE("planes round-trip exactly for byte-representable values") {
  Rng rng(1);
  Image im = lptest::random_image(rng, 6, 7);
  Image back = Image::from_planes(im.planes());
  CHECK(im == back);
}

TEST_CASE("from_planes rejects mismatched channel shapes") {
  std::vector<PlaneD> planes;
  planes.push_back(PlaneD::Zero(4, 4));
  planes.push_back(PlaneD::Zero(4, 5));
  CHECK_THROWS_AS(Image::from_planes(planes), ShapeError);
  CHECK_THROWS_AS(Image::from_planes({}), ShapeError);
}

static LaneLabel good_label() {
  LaneLabel lab;
  lab.row_anchors = {95, 80, 65, 50};
  lab.lanes = {{10.0, 20.0, 30.0, kMissing}, {kMissing, kMissing, kMissing, kMissing}};
  lab.exist = {1, 0};
  return lab;
}

TEST_CASE("a well-formed label validates") {
  CHECK_NOTHROW(good_label().validate(160, 96));
  CHECK(good_label().valid_point_count(0) == 3);
  CHECK(good_label().valid_point_count(1) == 0);
}

TEST_CASE("label validation rejects each malformation") {
  {
    LaneLabel l = good_label();
    l.exist.pop_back();
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.row_anchors = {95, 95, 65, 50};  // not strictly descending
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.row_anchors = {96, 80, 65, 50};  // outside image
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.lanes[0][0] = 160.0;  // out of [0, width)
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.lanes[0][0] = -1.0;  // negative but not the missing sentinel
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.exist[0] = 2;
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.exist[0] = 0;  // now has coordinates but claims absence
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
  {
    LaneLabel l = good_label();
    l.lanes[0].pop_back();
    CHECK_THROWS_AS(l.validate(160, 96), ShapeError);
  }
}
