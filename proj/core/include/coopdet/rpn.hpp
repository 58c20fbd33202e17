#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coopdet/geometry.hpp"
#include "coopdet/pillars.hpp"
#include "coopdet/tensor.hpp"
#include "coopdet/types.hpp"

namespace coopdet {

enum class LayerKind { Conv, TransposedConv };

// Input source of a layer within the detection head graph.
inline constexpr int kFromNetworkInput = -1;
inline constexpr int kFromConcat = -2;

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::string name;       // e.g. "backbone1.0", "up2", "head.cls"
  int out_channels = 0;
  int filter = 3;         // square kernel edge
  int stride = 1;
  int padding = 0;
  int input = 0;          // layer index, kFromNetworkInput, or kFromConcat
  bool batch_norm = true; // BN + ReLU after the layer; heads run bare
};

// Three downsampling blocks (4 + 6 + 6 conv layers), one upsampling branch
// per block, channel concatenation of the three branches, then a 1x1
// regression head and a 1x1 score head: 21 layers total.
struct RpnGraph {
  int input_channels = 128;
  std::vector<LayerSpec> layers;

  // Indices of interesting taps.
  int block1_out = 0, block2_out = 0, block3_out = 0;
  int up1 = 0, up2 = 0, up3 = 0;
  int regression_head = 0, score_head = 0;
};

RpnGraph build_rpn_graph(int input_channels = 128);

struct LayerShape {
  int channels = 0, height = 0, width = 0;
  bool operator==(const LayerShape&) const = default;
};

struct ShapeTrace {
  std::vector<LayerShape> layers;  // one per graph layer
  LayerShape concat;               // input to the heads
};

// Walks the graph symbolically. Throws std::invalid_argument, naming the
// offending layer, if shapes stop matching (input height/width must be
// divisible by 8 so the three branches align).
ShapeTrace forward_shapes(const RpnGraph& graph, const LayerShape& input);

// Fixed-width text table of the layer graph (one row per layer).
std::string format_graph_table(const RpnGraph& graph);

struct ConvWeights {
  std::vector<float> kernel;  // out x in x k x k
  std::vector<float> bias;    // out
  std::vector<float> bn_scale, bn_shift, bn_mean, bn_var;  // out each, if BN
};

struct RpnWeights {
  std::vector<ConvWeights> layers;  // parallel to graph.layers
};

RpnWeights seeded_rpn_weights(const RpnGraph& graph, uint64_t seed);

struct RpnOutput {
  PseudoImage regression;  // 14 channels: 7 box deltas x 2 anchors per cell
  PseudoImage score;       // 2 channels: 1 objectness per anchor orientation
};

// Straightforward dense forward pass (no autograd; training of this stage is
// out of scope, inference and the loss stack are not).
RpnOutput rpn_forward(const RpnGraph& graph, const RpnWeights& weights,
                      const PseudoImage& input);

// ---- anchors and target assignment ----

struct AnchorClassSpec {
  ObjectClass cls = ObjectClass::Car;
  double width = 1.6, length = 3.9, height = 1.56;
  double z_center = -1.78;
};

// Car and truck priors at their nominal ground heights.
std::vector<AnchorClassSpec> default_anchor_specs();

struct Anchor {
  Box3D box;
  ObjectClass cls = ObjectClass::Car;
  int orientation_deg = 0;  // 0 or 90
};

// One anchor per (cell, class, orientation) on the half-resolution head grid
// (grid.rows()/2 x grid.cols()/2), ordered cell-major, then class, then
// orientation.
std::vector<Anchor> generate_anchors(const PillarGrid& grid,
                                     const std::vector<AnchorClassSpec>& specs);

enum class AnchorLabel { Negative, Positive, Ignored };

struct GtBox {
  Box3D box;
  ObjectClass cls = ObjectClass::Car;
};

// BEV-IoU assignment against same-class ground truth: positive at IoU >= 0.6
// or as the best overlapping anchor of some ground truth, negative below
// 0.45, ignored between.
std::vector<AnchorLabel> match_anchors(const std::vector<Anchor>& anchors,
                                       const std::vector<GtBox>& gts,
                                       double positive_iou = 0.6,
                                       double negative_iou = 0.45);

// ---- box residuals and losses ----

struct BoxDelta {
  double x = 0, y = 0, z = 0;
  double w = 0, l = 0, h = 0;
  double theta = 0;
};

// Residual of a ground-truth box relative to an anchor: planar offsets
// normalized by the anchor diagonal, height offset by anchor height, log
// size ratios, and the sine of the yaw difference.
BoxDelta encode_box_delta(const Box3D& gt, const Box3D& anchor);
// Inverse of encode_box_delta given the same anchor. The yaw component only
// carries sin(dyaw), so decoding uses asin and the separate direction bit
// resolves the remaining ambiguity.
Box3D decode_box_delta(const BoxDelta& delta, const Box3D& anchor,
                       bool flip_direction = false);

// Focal binary classification term, -eta * (1 - p)^gamma * log(p) on the
// probability assigned to the true label.
double focal_loss(double p, double eta = 0.25, double gamma = 2.0);
// Piecewise smooth L1: 0.5 x^2 for |x| < 1, |x| - 0.5 beyond.
double smooth_l1(double x);
// Sum of smooth L1 over the seven delta components.
double localization_loss(const BoxDelta& predicted, const BoxDelta& target);
// Binary cross entropy on the heading direction probability.
double direction_loss(double p_forward, bool forward);

struct LossWeights {
  double classification = 1.0;
  double localization = 2.0;
  double direction = 0.2;
};

// (beta_c * L_cls + beta_l * L_loc + beta_d * L_dir) / max(1, n_positive).
double total_loss(double cls, double loc, double dir, int n_positive,
                  const LossWeights& betas = {});

// One scored box out of the detector (or the measurement oracle).
struct Detection {
  Box3D box;
  ObjectClass cls = ObjectClass::Car;
  double score = 0.0;
};

}  // namespace coopdet
