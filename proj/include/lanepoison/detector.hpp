#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lanepoison/nn.hpp"
#include "lanepoison/types.hpp"

namespace lanepoison {

struct Scene;

// Row-anchor lane detector: three stride-2 3x3 conv+ReLU stages, a shared
// dense layer, then an existence head (one logit per lane slot) and a
// coordinate head (one sigmoid-normalized column per slot and row anchor).
struct DetectorDescriptor {
  int in_ch = 3, in_h = 96, in_w = 160;
  int n_lanes = 4, m_anchors = 12;
  std::array<int, 3> conv_channels{8, 16, 32};
  int hidden = 128;
  std::vector<int> row_anchors;  // pixel rows, descending

  void validate() const;
  void feature_shape(int& ch, int& h, int& w) const;
  bool operator==(const DetectorDescriptor& o) const = default;
};

struct DetectorState {
  DetectorDescriptor desc;
  ConvParams c1, c2, c3;
  DenseParams fc, exist_head, coord_head;
  double norm_mean = 0.5, norm_std = 0.25;
  std::uint64_t init_seed = 0;

  std::size_t param_count() const;
  bool all_finite() const;
};

DetectorState init_detector(std::uint64_t seed, const DetectorDescriptor& desc);

struct Prediction {
  std::vector<double> exist_prob;            // per lane slot
  std::vector<std::vector<double>> coords;   // pixels, n_lanes x m_anchors
};

LaneLabel prediction_to_label(const Prediction& pred, const DetectorDescriptor& desc,
                              double exist_threshold = 0.5);

// Saved forward activations; reused across samples to avoid reallocation.
struct DetectorWorkspace {
  Tensor3 x, z1, a1, z2, a2, z3, a3;
  Matrix cols1, cols2, cols3;
  Vector f, h_pre, h, exist_logits, coord_raw, coord;
};

Prediction forward(const DetectorState& s, const Image& image, DetectorWorkspace& ws);
Prediction forward(const DetectorState& s, const Image& image);

enum class LossSelector { Cls, Reg, Total };

struct LossWeights {
  double lambda_reg = 5.0;
  double scale = 1.0;  // multiplies the selected loss (and its gradients)
};

struct LossBreakdown {
  double total = 0, cls = 0, reg = 0;
  int valid_points = 0;
};

// Loss on the activations already present in the workspace.
LossBreakdown compute_loss(const DetectorState& s, const DetectorWorkspace& ws,
                           const LaneLabel& label, const LossWeights& w);

struct DetectorGrads {
  Matrix W1, W2, W3, Wfc, We, Wc;
  Vector b1, b2, b3, bfc, be, bc;

  static DetectorGrads zeros_like(const DetectorState& s);
  void set_zero();
  void axpy(double a, const DetectorGrads& g);  // this += a*g
  void scale(double a);
  double squared_norm() const;
};

// Exact reverse-mode gradients of the selected loss.  grads and input_grad
// may each be null; input_grad is w.r.t. raw pixel values in [0, 1].
void backward(const DetectorState& s, const DetectorWorkspace& ws, const LaneLabel& label,
              LossSelector sel, const LossWeights& w, DetectorGrads* grads,
              Tensor3* input_grad);

Tensor3 input_gradient(const DetectorState& s, const Image& image, const LaneLabel& label,
                       LossSelector sel, const LossWeights& w = {});

struct TrainOptions {
  int epochs = 30;
  double lr = 0.02;
  double momentum = 0.9;
  int batch = 8;
  double lambda_reg = 5.0;
  std::uint64_t seed = 0;
  int lr_decay_every = 0;   // epochs between lr *= lr_decay (0: never)
  double lr_decay = 0.5;
  double acc_threshold_px = 2.5;  // for the trace only
};

struct EpochStats {
  int epoch = 0;
  double total = 0, cls = 0, reg = 0;
  double point_acc = 0;  // fraction of valid points within acc_threshold_px
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
};

// Deterministic SGD with momentum.  Throws DivergenceError on non-finite
// loss or parameters.
void train_detector(DetectorState& s, const std::vector<Scene>& data,
                    const TrainOptions& opts, TrainTrace* trace = nullptr);

std::vector<Prediction> predict_dataset(const DetectorState& s,
                                        const std::vector<Scene>& data);

}  // namespace lanepoison
