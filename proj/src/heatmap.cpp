#include "lanepoison/heatmap.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lanepoison/image_io.hpp"

namespace lanepoison {

using nlohmann::json;

LossSelector selector_for(AttackKind kind) {
  return kind == AttackKind::LDA ? LossSelector::Cls : LossSelector::Reg;
}

HeatMap compute_heatmap(const DetectorState& s, const Image& image, const LaneLabel& label,
                        LossSelector sel, double blur_sigma, double loss_scale) {
  LossWeights w;
  w.scale = loss_scale;
  Tensor3 g = input_gradient(s, image, label, sel, w);
  PlaneD acc = PlaneD::Zero(g.h, g.w);
  for (const PlaneD& pl : g.p) acc += pl.abs();
  HeatMap h;
  h.source = sel;
  h.values = blur_sigma > 0.0 ? gaussian_blur(acc, blur_sigma) : std::move(acc);
  return h;
}

HeatMap compute_heatmap(const DetectorState& s, const Image& image, const LaneLabel& label,
                        const AttackStrategy& strategy, double blur_sigma,
                        double loss_scale) {
  return compute_heatmap(s, image, label, selector_for(strategy.kind), blur_sigma,
                         loss_scale);
}

double attention_entropy(const HeatMap& h) {
  double total = h.values.sum();
  if (!(total > 0.0)) throw UndefinedMetricError("attention map has no mass");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < h.values.rows(); ++r)
    for (Eigen::Index c = 0; c < h.values.cols(); ++c) {
      double p = h.values(r, c) / total;
      if (p > 0.0) acc -= p * std::log(p);
    }
  return acc;
}

double attention_on_region(const HeatMap& h, const MaskPlane& mask) {
  if (mask.rows() != h.values.rows() || mask.cols() != h.values.cols())
    throw ShapeError("attention_on_region: mask shape mismatch");
  double total = h.values.sum();
  if (!(total > 0.0)) throw UndefinedMetricError("attention map has no mass");
  double inside = 0.0;
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) inside += h.values(r, c);
  return inside / total;
}

PlaneD gaussian_blur(const PlaneD& p, double sigma) {
  if (sigma <= 0.0) return p;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));

  auto pass = [&](const PlaneD& in, bool horizontal) {
    PlaneD out = PlaneD::Zero(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r)
      for (Eigen::Index c = 0; c < in.cols(); ++c) {
        double acc = 0.0, wsum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          Eigen::Index rr = horizontal ? r : r + i;
          Eigen::Index cc = horizontal ? c + i : c;
          if (rr < 0 || rr >= in.rows() || cc < 0 || cc >= in.cols()) continue;
          double kw = k[static_cast<std::size_t>(i + radius)];
          acc += kw * in(rr, cc);
          wsum += kw;
        }
        out(r, c) = acc / wsum;
      }
    return out;
  };
  return pass(pass(p, true), false);
}

namespace {

std::string selector_name(LossSelector s) {
  switch (s) {
    case LossSelector::Cls: return "cls";
    case LossSelector::Reg: return "reg";
    case LossSelector::Total: return "total";
  }
  return "?";
}

LossSelector selector_from_name(const std::string& s) {
  if (s == "cls") return LossSelector::Cls;
  if (s == "reg") return LossSelector::Reg;
  if (s == "total") return LossSelector::Total;
  throw ParseError("unknown loss selector: " + s);
}

}  // namespace

void write_heatmap(const std::filesystem::path& path, const HeatMap& h) {
  double lo = h.values.minCoeff();
  double hi = h.values.maxCoeff();
  double span = hi > lo ? hi - lo : 1.0;
  PlaneU16 q(h.values.rows(), h.values.cols());
  for (Eigen::Index r = 0; r < h.values.rows(); ++r)
    for (Eigen::Index c = 0; c < h.values.cols(); ++c)
      q(r, c) = static_cast<std::uint16_t>(
          std::lround((h.values(r, c) - lo) / span * 65535.0));
  write_pgm16(path, q);

  json j;
  j["min"] = lo;
  j["max"] = hi;
  j["source"] = selector_name(h.source);
  std::ofstream side(path.string() + ".json", std::ios::binary);
  if (!side) throw IoError("cannot open for writing: " + path.string() + ".json");
  side << j.dump(2) << "\n";
}

HeatMap read_heatmap(const std::filesystem::path& path) {
  PlaneU16 q = read_pgm16(path);
  std::ifstream side(path.string() + ".json", std::ios::binary);
  if (!side) throw IoError("cannot open for reading: " + path.string() + ".json");
  json j;
  try {
    j = json::parse(side);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ".json: " + e.what());
  }
  double lo = j.at("min").get<double>();
  double hi = j.at("max").get<double>();
  HeatMap h;
  h.source = selector_from_name(j.at("source").get<std::string>());
  h.values = PlaneD::Zero(q.rows(), q.cols());
  for (Eigen::Index r = 0; r < q.rows(); ++r)
    for (Eigen::Index c = 0; c < q.cols(); ++c)
      h.values(r, c) = lo + (hi - lo) * (static_cast<double>(q(r, c)) / 65535.0);
  return h;
}

Image heatmap_overlay(const Image& base, const HeatMap& h) {
  if (base.height != h.values.rows() || base.width != h.values.cols())
    throw ShapeError("heatmap_overlay: shape mismatch");
  double hi = h.values.maxCoeff();
  std::vector<PlaneD> planes = base.planes();
  if (hi > 0.0) {
    PlaneD norm = h.values / hi;
    planes[0] = planes[0] * (1.0 - 0.55 * norm) + 0.95 * 0.55 * norm;
    planes[1] *= (1.0 - 0.45 * norm);
    planes[2] *= (1.0 - 0.45 * norm);
  }
  return Image::from_planes(planes);
}

}  // namespace lanepoison
