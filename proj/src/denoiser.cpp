#include "lanepoison/denoiser.hpp"

#include <cmath>

#include "lanepoison/placement.hpp"
#include "lanepoison/rng.hpp"
#include "lanepoison/scene.hpp"

namespace lanepoison {

namespace {

constexpr int kInPlanes = kDenoiserInPlanes;  // see the header for the layout

Tensor3 assemble_input(const std::vector<PlaneD>& z, int t, int steps,
                       const MaskPlane& region, TriggerKind kind) {
  if (z.size() != 3) throw ShapeError("denoiser expects a 3-channel latent");
  const int H = static_cast<int>(z[0].rows()), W = static_cast<int>(z[0].cols());
  Tensor3 in = Tensor3::zeros(kInPlanes, H, W);
  for (int c = 0; c < 3; ++c) in.p[static_cast<std::size_t>(c)] = z[static_cast<std::size_t>(c)];
  in.p[3] = region.cast<Scalar>();
  if (kind == TriggerKind::Mud) in.p[4].setConstant(1.0);
  else if (kind == TriggerKind::Cone) in.p[5].setConstant(1.0);
  else throw ConfigError("denoiser conditions only on mud/cone triggers");
  in.p[6].setConstant(static_cast<double>(t) / static_cast<double>(steps));
  // Region-local coordinates over the mask's bounding box.  The mask plane is
  // flat inside the region, so without these the interior of the synthesis
  // window would be positionless and the net could only paint a constant.
  int r0 = H, r1 = -1, c0 = W, c1 = -1;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (region(r, c)) {
        r0 = std::min(r0, r); r1 = std::max(r1, r);
        c0 = std::min(c0, c); c1 = std::max(c1, c);
      }
  if (r1 >= r0) {
    const double rh = std::max(1, r1 - r0), cw = std::max(1, c1 - c0);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (region(r, c)) {
          in.p[7](r, c) = (r - r0) / rh;
          in.p[8](r, c) = (c - c0) / cw;
        }
  }
  return in;
}

void init_conv(ConvParams& p, int in_ch, int out_ch, Rng rng, double scale) {
  p.spec = ConvSpec{in_ch, out_ch, 3, 1, 1};
  double bound = scale / std::sqrt(static_cast<double>(in_ch * 9));
  p.W.resize(out_ch, in_ch * 9);
  for (Eigen::Index c = 0; c < p.W.cols(); ++c)
    for (Eigen::Index r = 0; r < p.W.rows(); ++r) p.W(r, c) = rng.uniform(-bound, bound);
  p.b = Vector::Zero(out_ch);
}

}  // namespace

ToyDenoiser init_denoiser(std::uint64_t seed, const DenoiserDescriptor& desc) {
  if (desc.hidden <= 0) throw ConfigError("denoiser hidden width must be positive");
  ToyDenoiser d;
  d.desc = desc;
  d.init_seed = seed;
  Rng root(seed);
  init_conv(d.l1, kInPlanes, desc.hidden, root.derive("l1"), 1.0);
  init_conv(d.l2, desc.hidden, desc.hidden, root.derive("l2"), 1.0);
  // near-zero final layer: the network starts close to the identity map
  init_conv(d.l3, desc.hidden, 3, root.derive("l3"), 0.1);
  return d;
}

void ToyDenoiser::apply(const std::vector<PlaneD>& z, int t, int steps,
                        const MaskPlane& region, TriggerKind kind,
                        std::vector<PlaneD>& out) const {
  Tensor3 in = assemble_input(z, t, steps, region, kind);
  Tensor3 z1, a1, z2, a2, z3;
  Matrix cols;
  conv_forward(l1, in, z1, cols);
  relu(z1, a1);
  conv_forward(l2, a1, z2, cols);
  relu(z2, a2);
  conv_forward(l3, a2, z3, cols);
  out.assign(3, PlaneD());
  for (int c = 0; c < 3; ++c)
    out[static_cast<std::size_t>(c)] =
        z[static_cast<std::size_t>(c)] + z3.p[static_cast<std::size_t>(c)];
}

ToyDenoiser train_denoiser(const std::vector<Scene>& scenes,
                           const DiffusionSchedule& sched,
                           const DenoiserTrainOptions& opts, DenoiserTrainStats* stats) {
  if (scenes.empty()) throw ConfigError("train_denoiser: empty dataset");
  sched.validate();
  ToyDenoiser d = init_denoiser(Rng(opts.seed).derive("denoiser-init").seed());

  struct Grads {
    Matrix W1, W2, W3;
    Vector b1, b2, b3;
  };
  auto zeros = [&] {
    Grads g;
    g.W1 = Matrix::Zero(d.l1.W.rows(), d.l1.W.cols());
    g.W2 = Matrix::Zero(d.l2.W.rows(), d.l2.W.cols());
    g.W3 = Matrix::Zero(d.l3.W.rows(), d.l3.W.cols());
    g.b1 = Vector::Zero(d.l1.b.size());
    g.b2 = Vector::Zero(d.l2.b.size());
    g.b3 = Vector::Zero(d.l3.b.size());
    return g;
  };
  Grads g = zeros(), vel = zeros();

  Rng root(opts.seed);
  const int H = scenes[0].image.height, W = scenes[0].image.width;
  PlacementConfig pcfg{opts.window, opts.window, opts.placement_stride, 1.0};

  double running = 0.0;
  int logged = 0;
  for (int iter = 0; iter < opts.iters; ++iter) {
    Rng it_rng = root.derive("iter", static_cast<std::uint64_t>(iter));
    g.W1.setZero(); g.W2.setZero(); g.W3.setZero();
    g.b1.setZero(); g.b2.setZero(); g.b3.setZero();
    double batch_loss = 0.0;

    for (int b = 0; b < opts.batch; ++b) {
      Rng srng = it_rng.derive("sample", static_cast<std::uint64_t>(b));
      const Scene& sc = scenes[static_cast<std::size_t>(
          srng.uniform_int(0, static_cast<int>(scenes.size()) - 1))];
      std::vector<CandidateWindow> cands = enumerate_candidates(sc.road_mask, pcfg);
      if (cands.empty()) continue;
      CandidateWindow win = cands[static_cast<std::size_t>(
          srng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
      TriggerKind kind = srng.uniform() < 0.5 ? TriggerKind::Mud : TriggerKind::Cone;
      TriggerSpec spec{win.region(), kind};
      Image composite = make_composite(sc.image, spec, srng.derive("tex").seed());
      MaskPlane region = region_mask(spec.region, H, W);

      int t = srng.uniform_int(1, sched.steps);
      double sigma = sched.noise_std(t);
      bool from_clean = srng.uniform() < 0.5;

      std::vector<PlaneD> target = composite.planes();
      std::vector<PlaneD> z = sc.image.planes();
      for (std::size_t ch = 0; ch < z.size(); ++ch)
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            // region content starts from the composite half the time
            if (!from_clean && region(r, c)) z[ch](r, c) = target[ch](r, c);
            z[ch](r, c) += sigma * srng.normal();
          }

      // forward
      Tensor3 in = assemble_input(z, t, sched.steps, region, kind);
      Tensor3 z1, a1, z2, a2, z3;
      Matrix cols1, cols2, cols3;
      conv_forward(d.l1, in, z1, cols1);
      relu(z1, a1);
      conv_forward(d.l2, a1, z2, cols2);
      relu(z2, a2);
      conv_forward(d.l3, a2, z3, cols3);

      // weighted MSE on (z + residual) vs target
      Tensor3 dout = Tensor3::zeros(3, H, W);
      double wsum = 0.0;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
          wsum += region(r, c) ? opts.region_weight : 1.0;
      double loss = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const PlaneD& res = z3.p[static_cast<std::size_t>(ch)];
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            double wgt = region(r, c) ? opts.region_weight : 1.0;
            double diff = z[static_cast<std::size_t>(ch)](r, c) + res(r, c) -
                          target[static_cast<std::size_t>(ch)](r, c);
            loss += wgt * diff * diff;
            dout.p[static_cast<std::size_t>(ch)](r, c) = 2.0 * wgt * diff / (3.0 * wsum);
          }
      }
      loss /= 3.0 * wsum;
      if (!std::isfinite(loss)) throw DivergenceError("denoiser loss is not finite");
      batch_loss += loss;

      // backward
      Tensor3 da2 = Tensor3::zeros(a2.ch, a2.h, a2.w);
      conv_backward(d.l3, cols3, dout, &g.W3, &g.b3, &da2);
      relu_backward(z2, da2);
      Tensor3 da1 = Tensor3::zeros(a1.ch, a1.h, a1.w);
      conv_backward(d.l2, cols2, da2, &g.W2, &g.b2, &da1);
      relu_backward(z1, da1);
      conv_backward(d.l1, cols1, da1, &g.W1, &g.b1, nullptr);
    }

    double inv = 1.0 / opts.batch;
    vel.W1 = opts.momentum * vel.W1 - opts.lr * inv * g.W1;
    vel.W2 = opts.momentum * vel.W2 - opts.lr * inv * g.W2;
    vel.W3 = opts.momentum * vel.W3 - opts.lr * inv * g.W3;
    vel.b1 = opts.momentum * vel.b1 - opts.lr * inv * g.b1;
    vel.b2 = opts.momentum * vel.b2 - opts.lr * inv * g.b2;
    vel.b3 = opts.momentum * vel.b3 - opts.lr * inv * g.b3;
    d.l1.W += vel.W1; d.l1.b += vel.b1;
    d.l2.W += vel.W2; d.l2.b += vel.b2;
    d.l3.W += vel.W3; d.l3.b += vel.b3;

    running += batch_loss / opts.batch;
    ++logged;
    if (stats && (iter + 1) % 50 == 0) {
      stats->loss.push_back(running / logged);
      running = 0.0;
      logged = 0;
    }
  }
  if (!d.l1.W.allFinite() || !d.l2.W.allFinite() || !d.l3.W.allFinite())
    throw DivergenceError("denoiser parameters diverged");
  return d;
}

DenoiseFn make_denoise_fn(const ToyDenoiser& d, const DiffusionSchedule& sched) {
  int steps = sched.steps;
  return [&d, steps](const std::vector<PlaneD>& z, int t, const MaskPlane& region,
                     TriggerKind kind, std::vector<PlaneD>& out) {
    d.apply(z, t, steps, region, kind, out);
  };
}

}  // namespace lanepoison
