#include "lanepoison/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lanepoison/rng.hpp"
#include "lanepoison/scene.hpp"

namespace lanepoison {

void DetectorDescriptor::validate() const {
  if (in_ch <= 0 || in_h < 4 || in_w < 4) throw ShapeError("detector input too small");
  if (n_lanes <= 0 || m_anchors <= 0) throw ShapeError("detector heads need n, m > 0");
  if (!row_anchors.empty() && static_cast<int>(row_anchors.size()) != m_anchors)
    throw ShapeError("row_anchors length must equal m_anchors");
  for (int c : conv_channels)
    if (c <= 0) throw ShapeError("conv channel counts must be positive");
  if (hidden <= 0) throw ShapeError("hidden width must be positive");
}

void DetectorDescriptor::feature_shape(int& ch, int& h, int& w) const {
  ConvSpec s{in_ch, conv_channels[0]};
  int h1, w1, h2, w2;
  conv_out_shape(s, in_h, in_w, h1, w1);
  conv_out_shape(s, h1, w1, h2, w2);
  conv_out_shape(s, h2, w2, h, w);
  ch = conv_channels[2];
}

std::size_t DetectorState::param_count() const {
  auto msize = [](const Matrix& m) { return static_cast<std::size_t>(m.size()); };
  auto vsize = [](const Vector& v) { return static_cast<std::size_t>(v.size()); };
  return msize(c1.W) + vsize(c1.b) + msize(c2.W) + vsize(c2.b) + msize(c3.W) +
         vsize(c3.b) + msize(fc.W) + vsize(fc.b) + msize(exist_head.W) +
         vsize(exist_head.b) + msize(coord_head.W) + vsize(coord_head.b);
}

bool DetectorState::all_finite() const {
  auto ok_m = [](const Matrix& m) { return m.allFinite(); };
  auto ok_v = [](const Vector& v) { return v.allFinite(); };
  return ok_m(c1.W) && ok_v(c1.b) && ok_m(c2.W) && ok_v(c2.b) && ok_m(c3.W) &&
         ok_v(c3.b) && ok_m(fc.W) && ok_v(fc.b) && ok_m(exist_head.W) &&
         ok_v(exist_head.b) && ok_m(coord_head.W) && ok_v(coord_head.b);
}

namespace {

void init_matrix(Matrix& m, Eigen::Index rows, Eigen::Index cols, Rng rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  m.resize(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
}

}  // namespace

DetectorState init_detector(std::uint64_t seed, const DetectorDescriptor& desc) {
  desc.validate();
  DetectorState s;
  s.desc = desc;
  s.init_seed = seed;
  Rng root(seed);

  s.c1.spec = {desc.in_ch, desc.conv_channels[0]};
  s.c2.spec = {desc.conv_channels[0], desc.conv_channels[1]};
  s.c3.spec = {desc.conv_channels[1], desc.conv_channels[2]};
  init_matrix(s.c1.W, s.c1.spec.out_ch, s.c1.spec.in_ch * 9, root.derive("c1.W"));
  init_matrix(s.c2.W, s.c2.spec.out_ch, s.c2.spec.in_ch * 9, root.derive("c2.W"));
  init_matrix(s.c3.W, s.c3.spec.out_ch, s.c3.spec.in_ch * 9, root.derive("c3.W"));
  s.c1.b = Vector::Zero(s.c1.spec.out_ch);
  s.c2.b = Vector::Zero(s.c2.spec.out_ch);
  s.c3.b = Vector::Zero(s.c3.spec.out_ch);

  int fch, fh, fw;
  desc.feature_shape(fch, fh, fw);
  Eigen::Index feat = static_cast<Eigen::Index>(fch) * fh * fw;
  init_matrix(s.fc.W, desc.hidden, feat, root.derive("fc.W"));
  s.fc.b = Vector::Zero(desc.hidden);
  init_matrix(s.exist_head.W, desc.n_lanes, desc.hidden, root.derive("exist.W"));
  s.exist_head.b = Vector::Zero(desc.n_lanes);
  init_matrix(s.coord_head.W, static_cast<Eigen::Index>(desc.n_lanes) * desc.m_anchors,
              desc.hidden, root.derive("coord.W"));
  s.coord_head.b = Vector::Zero(static_cast<Eigen::Index>(desc.n_lanes) * desc.m_anchors);
  return s;
}

Prediction forward(const DetectorState& s, const Image& image, DetectorWorkspace& ws) {
  const DetectorDescriptor& d = s.desc;
  if (image.height != d.in_h || image.width != d.in_w || image.channel_count() != d.in_ch)
    throw ShapeError("forward: image shape does not match detector descriptor");

  ws.x = Tensor3::zeros(d.in_ch, d.in_h, d.in_w);
  for (int c = 0; c < d.in_ch; ++c)
    ws.x.p[static_cast<std::size_t>(c)] =
        (image.channels[static_cast<std::size_t>(c)].cast<Scalar>() / 255.0 - s.norm_mean) /
        s.norm_std;

  conv_forward(s.c1, ws.x, ws.z1, ws.cols1);
  relu(ws.z1, ws.a1);
  conv_forward(s.c2, ws.a1, ws.z2, ws.cols2);
  relu(ws.z2, ws.a2);
  conv_forward(s.c3, ws.a2, ws.z3, ws.cols3);
  relu(ws.z3, ws.a3);

  ws.f = flatten(ws.a3);
  ws.h_pre = s.fc.W * ws.f + s.fc.b;
  ws.h = ws.h_pre.cwiseMax(0.0);
  ws.exist_logits = s.exist_head.W * ws.h + s.exist_head.b;
  ws.coord_raw = s.coord_head.W * ws.h + s.coord_head.b;
  ws.coord.resize(ws.coord_raw.size());
  for (Eigen::Index i = 0; i < ws.coord_raw.size(); ++i)
    ws.coord[i] = sigmoid(ws.coord_raw[i]);

  Prediction pred;
  pred.exist_prob.resize(static_cast<std::size_t>(d.n_lanes));
  for (int i = 0; i < d.n_lanes; ++i)
    pred.exist_prob[static_cast<std::size_t>(i)] = sigmoid(ws.exist_logits[i]);
  pred.coords.assign(static_cast<std::size_t>(d.n_lanes),
                     std::vector<double>(static_cast<std::size_t>(d.m_anchors)));
  for (int i = 0; i < d.n_lanes; ++i)
    for (int k = 0; k < d.m_anchors; ++k)
      pred.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          ws.coord[static_cast<Eigen::Index>(i) * d.m_anchors + k] * d.in_w;
  return pred;
}

Prediction forward(const DetectorState& s, const Image& image) {
  DetectorWorkspace ws;
  return forward(s, image, ws);
}

LaneLabel prediction_to_label(const Prediction& pred, const DetectorDescriptor& desc,
                              double exist_threshold) {
  LaneLabel label;
  label.row_anchors = desc.row_anchors;
  label.lanes.assign(pred.coords.size(),
                     std::vector<double>(static_cast<std::size_t>(desc.m_anchors), kMissing));
  label.exist.assign(pred.exist_prob.size(), 0);
  for (std::size_t i = 0; i < pred.coords.size(); ++i) {
    if (pred.exist_prob[i] < exist_threshold) continue;
    label.exist[i] = 1;
    for (std::size_t k = 0; k < pred.coords[i].size(); ++k)
      label.lanes[i][k] = std::clamp(pred.coords[i][k], 0.0,
                                     static_cast<double>(desc.in_w) - 1e-9);
  }
  return label;
}

namespace {

void check_label_for_loss(const DetectorDescriptor& d, const LaneLabel& label) {
  if (label.lane_count() != d.n_lanes || label.anchor_count() != d.m_anchors)
    throw ShapeError("label shape does not match detector heads");
}

}  // namespace

LossBreakdown compute_loss(const DetectorState& s, const DetectorWorkspace& ws,
                           const LaneLabel& label, const LossWeights& w) {
  const DetectorDescriptor& d = s.desc;
  check_label_for_loss(d, label);
  LossBreakdown out;
  for (int i = 0; i < d.n_lanes; ++i) {
    double y = static_cast<double>(label.exist[static_cast<std::size_t>(i)]);
    out.cls += softplus(ws.exist_logits[i]) - y * ws.exist_logits[i];
  }
  out.cls /= d.n_lanes;

  double reg = 0.0;
  int valid = 0;
  for (int i = 0; i < d.n_lanes; ++i) {
    if (!label.exist[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < d.m_anchors; ++k) {
      double t = label.lanes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (t == kMissing) continue;
      double pred = ws.coord[static_cast<Eigen::Index>(i) * d.m_anchors + k];
      reg += smooth_l1(pred - t / d.in_w);
      ++valid;
    }
  }
  out.valid_points = valid;
  out.reg = valid > 0 ? reg / valid : 0.0;
  out.cls *= w.scale;
  out.reg *= w.scale;
  out.total = out.cls + w.lambda_reg * out.reg;
  return out;
}

DetectorGrads DetectorGrads::zeros_like(const DetectorState& s) {
  DetectorGrads g;
  g.W1 = Matrix::Zero(s.c1.W.rows(), s.c1.W.cols());
  g.W2 = Matrix::Zero(s.c2.W.rows(), s.c2.W.cols());
  g.W3 = Matrix::Zero(s.c3.W.rows(), s.c3.W.cols());
  g.Wfc = Matrix::Zero(s.fc.W.rows(), s.fc.W.cols());
  g.We = Matrix::Zero(s.exist_head.W.rows(), s.exist_head.W.cols());
  g.Wc = Matrix::Zero(s.coord_head.W.rows(), s.coord_head.W.cols());
  g.b1 = Vector::Zero(s.c1.b.size());
  g.b2 = Vector::Zero(s.c2.b.size());
  g.b3 = Vector::Zero(s.c3.b.size());
  g.bfc = Vector::Zero(s.fc.b.size());
  g.be = Vector::Zero(s.exist_head.b.size());
  g.bc = Vector::Zero(s.coord_head.b.size());
  return g;
}

void DetectorGrads::set_zero() {
  W1.setZero(); W2.setZero(); W3.setZero(); Wfc.setZero(); We.setZero(); Wc.setZero();
  b1.setZero(); b2.setZero(); b3.setZero(); bfc.setZero(); be.setZero(); bc.setZero();
}

void DetectorGrads::axpy(double a, const DetectorGrads& g) {
  W1 += a * g.W1; W2 += a * g.W2; W3 += a * g.W3;
  Wfc += a * g.Wfc; We += a * g.We; Wc += a * g.Wc;
  b1 += a * g.b1; b2 += a * g.b2; b3 += a * g.b3;
  bfc += a * g.bfc; be += a * g.be; bc += a * g.bc;
}

void DetectorGrads::scale(double a) {
  W1 *= a; W2 *= a; W3 *= a; Wfc *= a; We *= a; Wc *= a;
  b1 *= a; b2 *= a; b3 *= a; bfc *= a; be *= a; bc *= a;
}

double DetectorGrads::squared_norm() const {
  return W1.squaredNorm() + W2.squaredNorm() + W3.squaredNorm() + Wfc.squaredNorm() +
         We.squaredNorm() + Wc.squaredNorm() + b1.squaredNorm() + b2.squaredNorm() +
         b3.squaredNorm() + bfc.squaredNorm() + be.squaredNorm() + bc.squaredNorm();
}

void backward(const DetectorState& s, const DetectorWorkspace& ws, const LaneLabel& label,
              LossSelector sel, const LossWeights& w, DetectorGrads* grads,
              Tensor3* input_grad) {
  const DetectorDescriptor& d = s.desc;
  check_label_for_loss(d, label);

  // Head gradients for the selected loss.
  Vector d_exist = Vector::Zero(d.n_lanes);
  if (sel != LossSelector::Reg) {
    for (int i = 0; i < d.n_lanes; ++i) {
      double y = static_cast<double>(label.exist[static_cast<std::size_t>(i)]);
      d_exist[i] = w.scale * (sigmoid(ws.exist_logits[i]) - y) / d.n_lanes;
    }
  }

  Vector d_coord_raw = Vector::Zero(ws.coord_raw.size());
  if (sel != LossSelector::Cls) {
    int valid = 0;
    for (int i = 0; i < d.n_lanes; ++i) {
      if (!label.exist[static_cast<std::size_t>(i)]) continue;
      for (int k = 0; k < d.m_anchors; ++k)
        if (label.lanes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] != kMissing)
          ++valid;
    }
    if (valid > 0) {
      double lam = sel == LossSelector::Total ? w.lambda_reg : 1.0;
      for (int i = 0; i < d.n_lanes; ++i) {
        if (!label.exist[static_cast<std::size_t>(i)]) continue;
        for (int k = 0; k < d.m_anchors; ++k) {
          double t = label.lanes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
          if (t == kMissing) continue;
          Eigen::Index idx = static_cast<Eigen::Index>(i) * d.m_anchors + k;
          double sig = ws.coord[idx];
          double dd = smooth_l1_grad(sig - t / d.in_w);
          d_coord_raw[idx] = w.scale * lam * dd * sig * (1.0 - sig) / valid;
        }
      }
    }
  }

  // Shared trunk.
  Vector dh = s.exist_head.W.transpose() * d_exist +
              s.coord_head.W.transpose() * d_coord_raw;
  for (Eigen::Index i = 0; i < dh.size(); ++i)
    if (ws.h_pre[i] <= 0.0) dh[i] = 0.0;
  Vector df = s.fc.W.transpose() * dh;

  if (grads) {
    grads->We.noalias() += d_exist * ws.h.transpose();
    grads->be += d_exist;
    grads->Wc.noalias() += d_coord_raw * ws.h.transpose();
    grads->bc += d_coord_raw;
    grads->Wfc.noalias() += dh * ws.f.transpose();
    grads->bfc += dh;
  }

  Tensor3 da3 = Tensor3::zeros(ws.a3.ch, ws.a3.h, ws.a3.w);
  unflatten(df, da3);
  relu_backward(ws.z3, da3);

  bool need_input = input_grad != nullptr;
  Tensor3 da2 = Tensor3::zeros(ws.a2.ch, ws.a2.h, ws.a2.w);
  conv_backward(s.c3, ws.cols3, da3, grads ? &grads->W3 : nullptr,
                grads ? &grads->b3 : nullptr, &da2);
  relu_backward(ws.z2, da2);

  Tensor3 da1 = Tensor3::zeros(ws.a1.ch, ws.a1.h, ws.a1.w);
  conv_backward(s.c2, ws.cols2, da2, grads ? &grads->W2 : nullptr,
                grads ? &grads->b2 : nullptr, &da1);
  relu_backward(ws.z1, da1);

  Tensor3 dx;
  if (need_input) dx = Tensor3::zeros(ws.x.ch, ws.x.h, ws.x.w);
  conv_backward(s.c1, ws.cols1, da1, grads ? &grads->W1 : nullptr,
                grads ? &grads->b1 : nullptr, need_input ? &dx : nullptr);

  if (need_input) {
    // chain through input normalization: x_norm = (v - mean) / std
    for (PlaneD& pl : dx.p) pl /= s.norm_std;
    *input_grad = std::move(dx);
  }
}

Tensor3 input_gradient(const DetectorState& s, const Image& image, const LaneLabel& label,
                       LossSelector sel, const LossWeights& w) {
  DetectorWorkspace ws;
  forward(s, image, ws);
  Tensor3 g;
  backward(s, ws, label, sel, w, nullptr, &g);
  return g;
}

void train_detector(DetectorState& s, const std::vector<Scene>& data,
                    const TrainOptions& opts, TrainTrace* trace) {
  if (data.empty()) throw ConfigError("train_detector: empty dataset");
  if (opts.epochs < 0 || opts.lr <= 0.0 || opts.batch <= 0)
    throw ConfigError("train_detector: bad options");

  Rng root(opts.seed);
  DetectorGrads g = DetectorGrads::zeros_like(s);
  DetectorGrads vel = DetectorGrads::zeros_like(s);
  DetectorWorkspace ws;
  LossWeights lw{opts.lambda_reg, 1.0};
  double lr = opts.lr;

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng erng = root.derive("epoch", static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    if (opts.lr_decay_every > 0 && epoch > 0 && epoch % opts.lr_decay_every == 0)
      lr *= opts.lr_decay;

    double sum_total = 0, sum_cls = 0, sum_reg = 0;
    long acc_hit = 0, acc_all = 0;

    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t stop = std::min(order.size(), i + static_cast<std::size_t>(opts.batch));
      g.set_zero();
      int bsz = static_cast<int>(stop - i);
      for (; i < stop; ++i) {
        const Scene& sc = data[static_cast<std::size_t>(order[i])];
        Prediction pred = forward(s, sc.image, ws);
        LossBreakdown lb = compute_loss(s, ws, sc.label, lw);
        if (!std::isfinite(lb.total))
          throw DivergenceError("training loss is not finite at epoch " +
                                std::to_string(epoch));
        sum_total += lb.total;
        sum_cls += lb.cls;
        sum_reg += lb.reg;
        backward(s, ws, sc.label, LossSelector::Total, lw, &g, nullptr);
        for (int li = 0; li < s.desc.n_lanes; ++li) {
          if (!sc.label.exist[static_cast<std::size_t>(li)]) continue;
          for (int k = 0; k < s.desc.m_anchors; ++k) {
            double t = sc.label.lanes[static_cast<std::size_t>(li)][static_cast<std::size_t>(k)];
            if (t == kMissing) continue;
            ++acc_all;
            if (std::abs(pred.coords[static_cast<std::size_t>(li)][static_cast<std::size_t>(k)] -
                         t) <= opts.acc_threshold_px)
              ++acc_hit;
          }
        }
      }
      g.scale(1.0 / bsz);
      vel.scale(opts.momentum);
      vel.axpy(-lr, g);
      s.c1.W += vel.W1; s.c1.b += vel.b1;
      s.c2.W += vel.W2; s.c2.b += vel.b2;
      s.c3.W += vel.W3; s.c3.b += vel.b3;
      s.fc.W += vel.Wfc; s.fc.b += vel.bfc;
      s.exist_head.W += vel.We; s.exist_head.b += vel.be;
      s.coord_head.W += vel.Wc; s.coord_head.b += vel.bc;
    }
    if (!s.all_finite())
      throw DivergenceError("parameters diverged at epoch " + std::to_string(epoch));
    if (trace) {
      EpochStats es;
      es.epoch = epoch;
      es.total = sum_total / static_cast<double>(data.size());
      es.cls = sum_cls / static_cast<double>(data.size());
      es.reg = sum_reg / static_cast<double>(data.size());
      es.point_acc = acc_all > 0 ? static_cast<double>(acc_hit) / acc_all : 0.0;
      trace->epochs.push_back(es);
    }
  }
}

std::vector<Prediction> predict_dataset(const DetectorState& s,
                                        const std::vector<Scene>& data) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  DetectorWorkspace ws;
  for (const Scene& sc : data) out.push_back(forward(s, sc.image, ws));
  return out;
}

}  // namespace lanepoison
