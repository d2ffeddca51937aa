#include <doctest.h>

#include <cmath>
#include <vector>

#include "lanepoison/detector.hpp"
#include "lanepoison/rng.hpp"
#include "lanepoison/scene.hpp"
#include "test_util.hpp"

using namespace lanepoison;

namespace {

DetectorDescriptor tiny_descriptor() {
  DetectorDescriptor d;
  d.in_ch = 3;
  d.in_h = 16;
  d.in_w = 24;
  d.n_lanes = 2;
  d.m_anchors = 3;
  d.conv_channels = {2, 3, 4};
  d.hidden = 8;
  d.row_anchors = {15, 10, 5};
  return d;
}

LaneLabel tiny_label() {
  LaneLabel lab;
  lab.row_anchors = {15, 10, 5};
  lab.lanes = {{10.0, 12.0, kMissing}, {kMissing, kMissing, kMissing}};
  lab.exist = {1, 0};
  return lab;
}

double selected(const LossBreakdown& b, LossSelector sel) {
  switch (sel) {
    case LossSelector::Cls: return b.cls;
    case LossSelector::Reg: return b.reg;
    case LossSelector::Total: return b.total;
  }
  return b.total;
}

bool close(double got, double want, double rel, double abs_floor) {
  return std::abs(got - want) <= abs_floor + rel * std::abs(want);
}

}  // namespace

TEST_CASE("parameter count matches the closed-form tally") {
  DetectorDescriptor d;  // 96x160 inputs, 4 lanes, 12 anchors
  d.row_anchors = GeneratorConfig{}.row_anchors();
  DetectorState s = init_detector(1, d);
  // convs: 8*(3*9)+8, 16*(8*9)+16, 32*(16*9)+32; feature map 32*12*20 = 7680;
  // dense 128*7680+128; heads 4*128+4 and 48*128+48
  std::size_t expect = (8 * 27 + 8) + (16 * 72 + 16) + (32 * 144 + 32) +
                       (128 * 7680 + 128) + (4 * 128 + 4) + (48 * 128 + 48);
  CHECK(expect == 995908);
  CHECK(s.param_count() == expect);
}

TEST_CASE("initialization is deterministic and seed-sensitive") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState a = init_detector(7, d);
  DetectorState b = init_detector(7, d);
  DetectorState c = init_detector(8, d);
  CHECK((a.c1.W.array() == b.c1.W.array()).all());
  CHECK((a.fc.W.array() == b.fc.W.array()).all());
  CHECK((a.coord_head.W.array() == b.coord_head.W.array()).all());
  CHECK(!(a.c1.W.array() == c.c1.W.array()).all());
  CHECK(a.all_finite());
  CHECK((a.c1.b.array() == 0.0).all());
}

TEST_CASE("forward emits probabilities and in-image coordinates") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState s = init_detector(3, d);
  Rng rng(4);
  Image im = lptest::random_image(rng, d.in_h, d.in_w);
  Prediction p = forward(s, im);
  REQUIRE(p.exist_prob.size() == 2);
  REQUIRE(p.coords.size() == 2);
  REQUIRE(p.coords[0].size() == 3);
  for (double q : p.exist_prob) {
    CHECK(q > 0.0);
    CHECK(q < 1.0);
  }
  for (const auto& lane : p.coords)
    for (double c : lane) {
      CHECK(c > 0.0);
      CHECK(c < d.in_w);
    }
  Prediction p2 = forward(s, im);
  CHECK(p.exist_prob == p2.exist_prob);
  CHECK(p.coords == p2.coords);

  Image wrong = Image::zeros(8, 8);
  CHECK_THROWS_AS(forward(s, wrong), ShapeError);
}

TEST_CASE("loss agrees with an independent recomputation") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState s = init_detector(5, d);
  Rng rng(6);
  Image im = lptest::random_image(rng, d.in_h, d.in_w);
  DetectorWorkspace ws;
  forward(s, im, ws);
  LaneLabel lab = tiny_label();
  LossWeights w;
  w.lambda_reg = 5.0;
  LossBreakdown b = compute_loss(s, ws, lab, w);

  double cls = 0.0;
  for (int i = 0; i < d.n_lanes; ++i) {
    double logit = ws.exist_logits[i];
    double y = lab.exist[static_cast<std::size_t>(i)];
    cls += std::log1p(std::exp(-std::abs(logit))) + std::max(logit, 0.0) - y * logit;
  }
  cls /= d.n_lanes;

  double reg = 0.0;
  int valid = 0;
  for (int i = 0; i < d.n_lanes; ++i) {
    if (!lab.exist[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < d.m_anchors; ++k) {
      double t = lab.lanes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (t == kMissing) continue;
      double diff = ws.coord[i * d.m_anchors + k] - t / d.in_w;
      double a = std::abs(diff);
      reg += a < 1.0 ? 0.5 * diff * diff : a - 0.5;
      ++valid;
    }
  }
  reg /= valid;

  CHECK(b.valid_points == 2);
  CHECK(b.cls == doctest::Approx(cls).epsilon(1e-12));
  CHECK(b.reg == doctest::Approx(reg).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(cls + 5.0 * reg).epsilon(1e-12));
}

TEST_CASE("backward matches finite differences for every tensor") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState s = init_detector(11, d);
  Rng rng(12);
  Image im = lptest::random_image(rng, d.in_h, d.in_w);
  LaneLabel lab = tiny_label();
  LossWeights w;
  w.lambda_reg = 5.0;

  auto loss_of = [&](const DetectorState& st, LossSelector sel) {
    DetectorWorkspace ws;
    forward(st, im, ws);
    return selected(compute_loss(st, ws, lab, w), sel);
  };

  for (LossSelector sel : {LossSelector::Cls, LossSelector::Reg, LossSelector::Total}) {
    DetectorWorkspace ws;
    forward(s, im, ws);
    DetectorGrads g = DetectorGrads::zeros_like(s);
    backward(s, ws, lab, sel, w, &g, nullptr);

    const double h = 1e-5;
    auto check_matrix = [&](Matrix& param, const Matrix& grad, const char* name) {
      Rng pick(101);
      int samples = std::min<int>(8, static_cast<int>(param.size()));
      for (int q = 0; q < samples; ++q) {
        int r = pick.uniform_int(0, static_cast<int>(param.rows()) - 1);
        int c = pick.uniform_int(0, static_cast<int>(param.cols()) - 1);
        double keep = param(r, c);
        param(r, c) = keep + h;
        double up = loss_of(s, sel);
        param(r, c) = keep - h;
        double dn = loss_of(s, sel);
        param(r, c) = keep;
        double fdv = (up - dn) / (2 * h);
        INFO(name << "(" << r << "," << c << ") sel=" << static_cast<int>(sel));
        CHECK(close(grad(r, c), fdv, 2e-4, 1e-7));
      }
    };
    auto check_vector = [&](Vector& param, const Vector& grad, const char* name) {
      int n = static_cast<int>(param.size());
      for (int i = 0; i < n; ++i) {
        double keep = param(i);
        param(i) = keep + h;
        double up = loss_of(s, sel);
        param(i) = keep - h;
        double dn = loss_of(s, sel);
        param(i) = keep;
        double fdv = (up - dn) / (2 * h);
        INFO(name << "(" << i << ") sel=" << static_cast<int>(sel));
        CHECK(close(grad(i), fdv, 2e-4, 1e-7));
      }
    };
    check_matrix(s.c1.W, g.W1, "c1.W");
    check_matrix(s.c2.W, g.W2, "c2.W");
    check_matrix(s.c3.W, g.W3, "c3.W");
    check_matrix(s.fc.W, g.Wfc, "fc.W");
    check_matrix(s.exist_head.W, g.We, "exist.W");
    check_matrix(s.coord_head.W, g.Wc, "coord.W");
    check_vector(s.c1.b, g.b1, "c1.b");
    check_vector(s.c2.b, g.b2, "c2.b");
    check_vector(s.c3.b, g.b3, "c3.b");
    check_vector(s.fc.b, g.bfc, "fc.b");
    check_vector(s.exist_head.b, g.be, "exist.b");
    check_vector(s.coord_head.b, g.bc, "coord.b");
  }
}

TEST_CASE("loss scale multiplies gradients linearly") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState s = init_detector(13, d);
  Rng rng(14);
  Image im = lptest::random_image(rng, d.in_h, d.in_w);
  LaneLabel lab = tiny_label();
  DetectorWorkspace ws;
  forward(s, im, ws);

  LossWeights w1, w9;
  w9.scale = 9.0;
  DetectorGrads g1 = DetectorGrads::zeros_like(s);
  DetectorGrads g9 = DetectorGrads::zeros_like(s);
  backward(s, ws, lab, LossSelector::Total, w1, &g1, nullptr);
  backward(s, ws, lab, LossSelector::Total, w9, &g9, nullptr);
  g1.scale(9.0);
  g1.axpy(-1.0, g9);
  CHECK(std::sqrt(g1.squared_norm()) < 1e-9 * std::sqrt(g9.squared_norm()) + 1e-15);

  Tensor3 i1 = input_gradient(s, im, lab, LossSelector::Total, w1);
  Tensor3 i9 = input_gradient(s, im, lab, LossSelector::Total, w9);
  for (int c = 0; c < 3; ++c)
    CHECK(((i1.p[static_cast<std::size_t>(c)] * 9.0) -
           i9.p[static_cast<std::size_t>(c)])
              .abs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("input gradient matches one-byte finite differences") {
  DetectorDescriptor d = tiny_descriptor();
  DetectorState s = init_detector(15, d);
  Rng rng(16);
  Image im = lptest::random_image(rng, d.in_h, d.in_w);
  LaneLabel lab = tiny_label();
  LossWeights w;
  Tensor3 g = input_gradient(s, im, lab, LossSelector::Total, w);

  // Raw pixels only take byte steps, so probe with h = 1/255 and require a
  // strong majority (a probe straddling a ReLU kink may disagree).
  const double h = 1.0 / 255.0;
  int agree = 0, tried = 0;
  Rng pick(17);
  while (tried < 12) {
    int ch = pick.uniform_int(0, 2);
    int r = pick.uniform_int(0, d.in_h - 1);
    int c = pick.uniform_int(0, d.in_w - 1);
    int byte = im.channels[static_cast<std::size_t>(ch)](r, c);
    if (byte == 0 || byte == 255) continue;
    ++tried;
    Image up = im, dn = im;
    up.channels[static_cast<std::size_t>(ch)](r, c) = static_cast<std::uint8_t>(byte + 1);
    dn.channels[static_cast<std::size_t>(ch)](r, c) = static_cast<std::uint8_t>(byte - 1);
    auto loss = [&](const Image& i2) {
      DetectorWorkspace ws;
      forward(s, i2, ws);
      return compute_loss(s, ws, lab, w).total;
    };
    double fdv = (loss(up) - loss(dn)) / (2 * h);
    if (close(g.p[static_cast<std::size_t>(ch)](r, c), fdv, 5e-2, 1e-7)) ++agree;
  }
  CHECK(agree >= 10);
}

TEST_CASE("prediction_to_label thresholds existence and clamps columns") {
  DetectorDescriptor d = tiny_descriptor();
  Prediction p;
  p.exist_prob = {0.9, 0.2};
  p.coords = {{5.0, 30.0, -2.0}, {7.0, 8.0, 9.0}};
  LaneLabel lab = prediction_to_label(p, d, 0.5);
  CHECK(lab.exist == std::vector<int>{1, 0});
  CHECK(lab.lanes[0][0] == 5.0);
  CHECK(lab.lanes[0][1] < d.in_w);   // clamped below width
  CHECK(lab.lanes[0][2] == 0.0);     // clamped at zero
  CHECK(lab.lanes[1][0] == kMissing);
  CHECK_NOTHROW(lab.validate(d.in_w, d.in_h));
}

TEST_CASE("training reduces the loss and is reproducible") {
  GeneratorConfig cfg;
  cfg.height = 48;
  cfg.width = 64;
  cfg.anchor_count = 6;
  std::vector<Scene> data = generate_dataset(31, 10, cfg);

  DetectorDescriptor d;
  d.in_h = 48;
  d.in_w = 64;
  d.conv_channels = {4, 8, 8};
  d.hidden = 24;
  d.m_anchors = 6;
  d.row_anchors = cfg.row_anchors();

  TrainOptions opts;
  opts.epochs = 4;
  opts.lr = 0.05;
  opts.batch = 4;
  opts.seed = 9;

  DetectorState s = init_detector(1, d);
  TrainTrace trace;
  train_detector(s, data, opts, &trace);
  REQUIRE(trace.epochs.size() == 4);
  CHECK(trace.epochs.back().total < trace.epochs.front().total);
  CHECK(s.all_finite());

  DetectorState s2 = init_detector(1, d);
  train_detector(s2, data, opts);
  CHECK((s.c1.W.array() == s2.c1.W.array()).all());
  CHECK((s.fc.W.array() == s2.fc.W.array()).all());
  CHECK((s.coord_head.b.array() == s2.coord_head.b.array()).all());

  std::vector<Prediction> preds = predict_dataset(s, data);
  CHECK(preds.size() == data.size());
}

TEST_CASE("absurd learning rates raise DivergenceError") {
  GeneratorConfig cfg;
  cfg.height = 48;
  cfg.width = 64;
  cfg.anchor_count = 6;
  std::vector<Scene> data = generate_dataset(32, 4, cfg);
  DetectorDescriptor d;
  d.in_h = 48;
  d.in_w = 64;
  d.conv_channels = {4, 8, 8};
  d.hidden = 24;
  d.m_anchors = 6;
  d.row_anchors = cfg.row_anchors();
  DetectorState s = init_detector(2, d);
  TrainOptions opts;
  opts.epochs = 8;
  opts.lr = 1e30;
  opts.batch = 2;
  CHECK_THROWS_AS(train_detector(s, data, opts), DivergenceError);
}
