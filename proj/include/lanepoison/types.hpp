#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lanepoison/error.hpp"

namespace lanepoison {

using Scalar = double;

// Dense per-channel planes.  Row index = image row, col index = image column.
using PlaneD = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using PlaneU8 = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using MaskPlane = PlaneU8;  // entries 0 or 1

// Sentinel for "lane has no point at this row anchor".
inline constexpr double kMissing = -2.0;

// 8-bit multi-channel raster.  Values are exposed as doubles in [0, 1];
// storage stays uint8 so datasets round-trip through PPM byte-exactly.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<PlaneU8> channels;

  static Image zeros(int h, int w, int ch = 3) {
    Image im;
    im.height = h;
    im.width = w;
    im.channels.assign(static_cast<std::size_t>(ch), PlaneU8::Zero(h, w));
    return im;
  }

  int channel_count() const { return static_cast<int>(channels.size()); }

  double at(int c, int r, int col) const {
    return static_cast<double>(channels[static_cast<std::size_t>(c)](r, col)) / 255.0;
  }

  void set(int c, int r, int col, double v) {
    channels[static_cast<std::size_t>(c)](r, col) = quantize(v);
  }

  static std::uint8_t quantize(double v) {
    double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(q);
  }

  PlaneD plane(int c) const {
    return channels[static_cast<std::size_t>(c)].cast<Scalar>() / 255.0;
  }

  std::vector<PlaneD> planes() const {
    std::vector<PlaneD> out;
    out.reserve(channels.size());
    for (int c = 0; c < channel_count(); ++c) out.push_back(plane(c));
    return out;
  }

  static Image from_planes(const std::vector<PlaneD>& planes) {
    if (planes.empty()) throw ShapeError("Image::from_planes: no channels");
    Image im;
    im.height = static_cast<int>(planes[0].rows());
    im.width = static_cast<int>(planes[0].cols());
    for (const PlaneD& p : planes) {
      if (p.rows() != planes[0].rows() || p.cols() != planes[0].cols())
        throw ShapeError("Image::from_planes: channel shape mismatch");
      PlaneU8 q(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r)
        for (Eigen::Index c = 0; c < p.cols(); ++c) q(r, c) = quantize(p(r, c));
      im.channels.push_back(std::move(q));
    }
    return im;
  }

  bool operator==(const Image& o) const {
    if (height != o.height || width != o.width || channels.size() != o.channels.size())
      return false;
    for (std::size_t c = 0; c < channels.size(); ++c)
      if (!(channels[c] == o.channels[c]).all()) return false;
    return true;
  }
};

// Row-anchor lane annotation, TuSimple-style: for each lane a column per row
// anchor (kMissing where the lane does not cross that row) plus an existence
// flag.  Anchors are stored bottom-up (descending pixel row).
struct LaneLabel {
  std::vector<int> row_anchors;
  std::vector<std::vector<double>> lanes;
  std::vector<int> exist;

  int anchor_count() const { return static_cast<int>(row_anchors.size()); }
  int lane_count() const { return static_cast<int>(lanes.size()); }

  void validate(int image_width, int image_height) const {
    if (lanes.size() != exist.size())
      throw ShapeError("LaneLabel: lanes/exist size mismatch");
    for (std::size_t k = 1; k < row_anchors.size(); ++k)
      if (row_anchors[k] >= row_anchors[k - 1])
        throw ShapeError("LaneLabel: row anchors must strictly descend");
    for (int a : row_anchors)
      if (a < 0 || a >= image_height)
        throw ShapeError("LaneLabel: row anchor outside image");
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      if (lanes[i].size() != row_anchors.size())
        throw ShapeError("LaneLabel: lane " + std::to_string(i) + " length mismatch");
      for (double c : lanes[i]) {
        bool miss = c == kMissing;
        if (!miss && (c < 0.0 || c >= static_cast<double>(image_width)))
          throw ShapeError("LaneLabel: coordinate outside [0, width)");
      }
      if (exist[i] != 0 && exist[i] != 1)
        throw ShapeError("LaneLabel: exist flag must be 0/1");
      if (exist[i] == 0) {
        for (double c : lanes[i])
          if (c != kMissing)
            throw ShapeError("LaneLabel: non-existing lane has coordinates");
      }
    }
  }

  int valid_point_count(int lane) const {
    int n = 0;
    for (double c : lanes[static_cast<std::size_t>(lane)])
      if (c != kMissing) ++n;
    return n;
  }

  bool operator==(const LaneLabel& o) const {
    return row_anchors == o.row_anchors && lanes == o.lanes && exist == o.exist;
  }
};

// A synthetic scene: raster plus ground-truth label and the three masks the
// pipeline consumes (drivable road, lane markings, salient environment).
struct Scene {
  Image image;
  LaneLabel label;
  MaskPlane road_mask;
  MaskPlane lane_mask;
  MaskPlane env_mask;
  std::uint64_t seed = 0;
};

inline bool scenes_equal(const Scene& a, const Scene& b) {
  return a.image == b.image && a.label == b.label && (a.road_mask == b.road_mask).all() &&
         (a.lane_mask == b.lane_mask).all() && (a.env_mask == b.env_mask).all();
}

struct DatasetEntry {
  std::string raw_file;   // image path relative to dataset root
  int anno_index = 0;     // line number in anno.jsonl
};

struct DatasetManifest {
  int version = 1;
  std::string split;
  std::uint64_t seed = 0;
  std::string config_json;  // resolved generator/pipeline config snapshot
  std::vector<DatasetEntry> entries;
};

}  // namespace lanepoison
