#include "coopdet/rpn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "coopdet/rng.hpp"

namespace coopdet {

RpnGraph build_rpn_graph(int input_channels) {
  if (input_channels < 1)
    throw std::invalid_argument("input channel count must be positive");
  RpnGraph g;
  g.input_channels = input_channels;

  auto add_block = [&g](const std::string& base, int layers, int channels,
                        int first_input) {
    int prev = first_input;
    for (int i = 0; i < layers; ++i) {
      LayerSpec spec;
      spec.kind = LayerKind::Conv;
      spec.name = base + "." + std::to_string(i);
      spec.out_channels = channels;
      spec.filter = 3;
      spec.stride = i == 0 ? 2 : 1;
      spec.padding = 1;
      spec.input = prev;
      spec.batch_norm = true;
      g.layers.push_back(spec);
      prev = static_cast<int>(g.layers.size()) - 1;
    }
    return prev;
  };

  g.block1_out = add_block("backbone1", 4, 128, kFromNetworkInput);
  g.block2_out = add_block("backbone2", 6, 256, g.block1_out);
  g.block3_out = add_block("backbone3", 6, 512, g.block2_out);

  auto add_up = [&g](const std::string& name, int from, int filter, int stride) {
    LayerSpec spec;
    spec.kind = LayerKind::TransposedConv;
    spec.name = name;
    spec.out_channels = 256;
    spec.filter = filter;
    spec.stride = stride;
    spec.padding = 0;
    spec.input = from;
    spec.batch_norm = true;
    g.layers.push_back(spec);
    return static_cast<int>(g.layers.size()) - 1;
  };

  g.up1 = add_up("up1", g.block1_out, 1, 1);
  g.up2 = add_up("up2", g.block2_out, 2, 2);
  g.up3 = add_up("up3", g.block3_out, 4, 4);

  auto add_head = [&g](const std::string& name, int channels) {
    LayerSpec spec;
    spec.kind = LayerKind::Conv;
    spec.name = name;
    spec.out_channels = channels;
    spec.filter = 1;
    spec.stride = 1;
    spec.padding = 0;
    spec.input = kFromConcat;
    spec.batch_norm = false;
    g.layers.push_back(spec);
    return static_cast<int>(g.layers.size()) - 1;
  };

  g.regression_head = add_head("head.reg", 14);
  g.score_head = add_head("head.cls", 2);
  return g;
}

namespace {

LayerShape conv_shape(const LayerSpec& s, const LayerShape& in) {
  const int h = (in.height + 2 * s.padding - s.filter) / s.stride + 1;
  const int w = (in.width + 2 * s.padding - s.filter) / s.stride + 1;
  return {s.out_channels, h, w};
}

LayerShape deconv_shape(const LayerSpec& s, const LayerShape& in) {
  const int h = (in.height - 1) * s.stride - 2 * s.padding + s.filter;
  const int w = (in.width - 1) * s.stride - 2 * s.padding + s.filter;
  return {s.out_channels, h, w};
}

}  // namespace

ShapeTrace forward_shapes(const RpnGraph& graph, const LayerShape& input) {
  if (input.channels != graph.input_channels)
    throw std::invalid_argument("input has " + std::to_string(input.channels) +
                                " channels, graph expects " +
                                std::to_string(graph.input_channels));
  if (input.height < 8 || input.width < 8 || input.height % 8 != 0 ||
      input.width % 8 != 0)
    throw std::invalid_argument(
        "input height and width must be positive multiples of 8");

  ShapeTrace trace;
  trace.layers.resize(graph.layers.size());
  LayerShape concat{0, 0, 0};

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    LayerShape in;
    if (spec.input == kFromNetworkInput) {
      in = input;
    } else if (spec.input == kFromConcat) {
      if (concat.channels == 0)
        throw std::invalid_argument("layer " + spec.name +
                                    " reads the concat before it exists");
      in = concat;
    } else {
      in = trace.layers[static_cast<size_t>(spec.input)];
    }
    const LayerShape out =
        spec.kind == LayerKind::Conv ? conv_shape(spec, in) : deconv_shape(spec, in);
    if (out.height < 1 || out.width < 1)
      throw std::invalid_argument("layer " + spec.name + " collapses to " +
                                  std::to_string(out.height) + "x" +
                                  std::to_string(out.width));
    trace.layers[i] = out;

    if (static_cast<int>(i) == graph.up3) {
      const LayerShape& a = trace.layers[static_cast<size_t>(graph.up1)];
      const LayerShape& b = trace.layers[static_cast<size_t>(graph.up2)];
      const LayerShape& c = out;
      if (a.height != b.height || a.height != c.height || a.width != b.width ||
          a.width != c.width)
        throw std::invalid_argument("upsampled branches disagree at layer " +
                                    graph.layers[i].name);
      concat = {a.channels + b.channels + c.channels, a.height, a.width};
    }
  }
  trace.concat = concat;
  return trace;
}

std::string format_graph_table(const RpnGraph& graph) {
  std::ostringstream os;
  auto row = [&os](const std::string& a, const std::string& b, const std::string& c,
                   const std::string& d, const std::string& e, const std::string& f) {
    os << "  ";
    os.width(14); os << std::left << a;
    os.width(8);  os << std::left << b;
    os.width(8);  os << std::left << c;
    os.width(10); os << std::left << d;
    os.width(8);  os << std::left << e;
    os << f << "\n";
  };
  row("layer", "kind", "filter", "channels", "stride", "padding");
  for (const auto& s : graph.layers) {
    row(s.name, s.kind == LayerKind::Conv ? "conv" : "deconv",
        std::to_string(s.filter) + "x" + std::to_string(s.filter),
        std::to_string(s.out_channels), std::to_string(s.stride),
        std::to_string(s.padding));
  }
  return os.str();
}

namespace {

int input_channels_of(const RpnGraph& graph, const LayerSpec& spec) {
  if (spec.input == kFromNetworkInput) return graph.input_channels;
  if (spec.input == kFromConcat) {
    return graph.layers[static_cast<size_t>(graph.up1)].out_channels +
           graph.layers[static_cast<size_t>(graph.up2)].out_channels +
           graph.layers[static_cast<size_t>(graph.up3)].out_channels;
  }
  return graph.layers[static_cast<size_t>(spec.input)].out_channels;
}

}  // namespace

RpnWeights seeded_rpn_weights(const RpnGraph& graph, uint64_t seed) {
  RpnWeights weights;
  weights.layers.resize(graph.layers.size());
  SplitMix64 root(seed);
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    const int in_ch = input_channels_of(graph, spec);
    const size_t fan_in = static_cast<size_t>(in_ch) * spec.filter * spec.filter;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    SplitMix64 rng = root.fork(i);
    ConvWeights& w = weights.layers[i];
    w.kernel.resize(static_cast<size_t>(spec.out_channels) * fan_in);
    for (auto& v : w.kernel) v = static_cast<float>(rng.uniform(-bound, bound));
    w.bias.resize(static_cast<size_t>(spec.out_channels));
    for (auto& v : w.bias) v = static_cast<float>(rng.uniform(-bound, bound));
    if (spec.batch_norm) {
      w.bn_scale.assign(spec.out_channels, 1.0f);
      w.bn_shift.assign(spec.out_channels, 0.0f);
      w.bn_mean.assign(spec.out_channels, 0.0f);
      w.bn_var.assign(spec.out_channels, 1.0f);
    }
  }
  return weights;
}

namespace {

PseudoImage run_conv(const LayerSpec& spec, const ConvWeights& w, int in_ch,
                     const PseudoImage& in) {
  const int oh = (in.height + 2 * spec.padding - spec.filter) / spec.stride + 1;
  const int ow = (in.width + 2 * spec.padding - spec.filter) / spec.stride + 1;
  PseudoImage out(spec.out_channels, oh, ow);
  const int k = spec.filter;
  for (int oc = 0; oc < spec.out_channels; ++oc) {
    const float* kbase = &w.kernel[static_cast<size_t>(oc) * in_ch * k * k];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float acc = w.bias[static_cast<size_t>(oc)];
        for (int ic = 0; ic < in_ch; ++ic) {
          const float* kp = kbase + static_cast<size_t>(ic) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * spec.stride - spec.padding + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * spec.stride - spec.padding + kx;
              if (ix < 0 || ix >= in.width) continue;
              acc += kp[ky * k + kx] * in.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return out;
}

PseudoImage run_deconv(const LayerSpec& spec, const ConvWeights& w, int in_ch,
                       const PseudoImage& in) {
  const int oh = (in.height - 1) * spec.stride - 2 * spec.padding + spec.filter;
  const int ow = (in.width - 1) * spec.stride - 2 * spec.padding + spec.filter;
  PseudoImage out(spec.out_channels, oh, ow);
  const int k = spec.filter;
  for (int oc = 0; oc < spec.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) out.at(oc, oy, ox) = w.bias[oc];
  // Scatter each input pixel through the kernel.
  for (int oc = 0; oc < spec.out_channels; ++oc) {
    const float* kbase = &w.kernel[static_cast<size_t>(oc) * in_ch * k * k];
    for (int ic = 0; ic < in_ch; ++ic) {
      const float* kp = kbase + static_cast<size_t>(ic) * k * k;
      for (int iy = 0; iy < in.height; ++iy) {
        for (int ix = 0; ix < in.width; ++ix) {
          const float v = in.at(ic, iy, ix);
          for (int ky = 0; ky < k; ++ky) {
            const int oy = iy * spec.stride - spec.padding + ky;
            if (oy < 0 || oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = ix * spec.stride - spec.padding + kx;
              if (ox < 0 || ox >= ow) continue;
              out.at(oc, oy, ox) += kp[ky * k + kx] * v;
            }
          }
        }
      }
    }
  }
  return out;
}

void apply_bn_relu(const ConvWeights& w, PseudoImage& img) {
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    const float scale = w.bn_scale[c] / std::sqrt(w.bn_var[c]);
    const float shift = w.bn_shift[c] - w.bn_mean[c] * scale;
    float* p = &img.data[c * plane];
    for (size_t i = 0; i < plane; ++i) {
      const float v = p[i] * scale + shift;
      p[i] = v > 0.0f ? v : 0.0f;
    }
  }
}

}  // namespace

RpnOutput rpn_forward(const RpnGraph& graph, const RpnWeights& weights,
                      const PseudoImage& input) {
  if (weights.layers.size() != graph.layers.size())
    throw std::invalid_argument("weight count does not match graph layers");
  // Validates shapes up front so failures name the layer.
  forward_shapes(graph, {input.channels, input.height, input.width});

  std::vector<PseudoImage> outputs(graph.layers.size());
  PseudoImage concat;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    const PseudoImage* in = nullptr;
    if (spec.input == kFromNetworkInput) in = &input;
    else if (spec.input == kFromConcat) in = &concat;
    else in = &outputs[static_cast<size_t>(spec.input)];

    const int in_ch = input_channels_of(graph, spec);
    PseudoImage out = spec.kind == LayerKind::Conv
                          ? run_conv(spec, weights.layers[i], in_ch, *in)
                          : run_deconv(spec, weights.layers[i], in_ch, *in);
    if (spec.batch_norm) apply_bn_relu(weights.layers[i], out);
    outputs[i] = std::move(out);

    if (static_cast<int>(i) == graph.up3) {
      const PseudoImage& a = outputs[static_cast<size_t>(graph.up1)];
      const PseudoImage& b = outputs[static_cast<size_t>(graph.up2)];
      const PseudoImage& c = outputs[i];
      concat = PseudoImage(a.channels + b.channels + c.channels, a.height, a.width);
      std::copy(a.data.begin(), a.data.end(), concat.data.begin());
      std::copy(b.data.begin(), b.data.end(), concat.data.begin() + a.data.size());
      std::copy(c.data.begin(), c.data.end(),
                concat.data.begin() + a.data.size() + b.data.size());
    }
  }

  RpnOutput result;
  result.regression = std::move(outputs[static_cast<size_t>(graph.regression_head)]);
  result.score = std::move(outputs[static_cast<size_t>(graph.score_head)]);
  return result;
}

std::vector<AnchorClassSpec> default_anchor_specs() {
  return {
      {ObjectClass::Car, 1.6, 3.9, 1.56, -1.78},
      {ObjectClass::Truck, 1.9, 4.9, 2.05, -1.5},
  };
}

std::vector<Anchor> generate_anchors(const PillarGrid& grid,
                                     const std::vector<AnchorClassSpec>& specs) {
  grid.validate();
  const int rows = grid.rows(), cols = grid.cols();
  if (rows % 2 != 0 || cols % 2 != 0)
    throw std::invalid_argument("grid must halve cleanly onto the head grid");
  const int hr = rows / 2, hc = cols / 2;
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<size_t>(hr) * hc * specs.size() * 2);
  for (int r = 0; r < hr; ++r) {
    for (int c = 0; c < hc; ++c) {
      const double x = grid.x_min + (c + 0.5) * grid.cell_x * 2.0;
      const double y = grid.y_min + (r + 0.5) * grid.cell_y * 2.0;
      for (const auto& spec : specs) {
        for (int orient = 0; orient < 2; ++orient) {
          Anchor a;
          a.box.center = {x, y, spec.z_center};
          a.box.width = spec.width;
          a.box.length = spec.length;
          a.box.height = spec.height;
          a.box.yaw = orient == 0 ? 0.0 : kPi / 2.0;
          a.cls = spec.cls;
          a.orientation_deg = orient == 0 ? 0 : 90;
          anchors.push_back(a);
        }
      }
    }
  }
  return anchors;
}

std::vector<AnchorLabel> match_anchors(const std::vector<Anchor>& anchors,
                                       const std::vector<GtBox>& gts,
                                       double positive_iou, double negative_iou) {
  std::vector<double> best_iou(anchors.size(), 0.0);
  std::vector<char> forced(anchors.size(), 0);

  for (const auto& gt : gts) {
    validate_box(gt.box);
    const double reach =
        0.5 * (std::hypot(gt.box.width, gt.box.length) + 8.0);  // prune radius
    double gt_best = 0.0;
    ptrdiff_t gt_best_idx = -1;
    for (size_t i = 0; i < anchors.size(); ++i) {
      const Anchor& a = anchors[i];
      if (a.cls != gt.cls) continue;
      if (std::fabs(a.box.center[0] - gt.box.center[0]) > reach ||
          std::fabs(a.box.center[1] - gt.box.center[1]) > reach)
        continue;
      const double iou = bev_iou(a.box, gt.box);
      if (iou > best_iou[i]) best_iou[i] = iou;
      if (iou > gt_best) {
        gt_best = iou;
        gt_best_idx = static_cast<ptrdiff_t>(i);
      }
    }
    if (gt_best_idx >= 0) forced[static_cast<size_t>(gt_best_idx)] = 1;
  }

  std::vector<AnchorLabel> labels(anchors.size(), AnchorLabel::Negative);
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (forced[i] || best_iou[i] >= positive_iou)
      labels[i] = AnchorLabel::Positive;
    else if (best_iou[i] < negative_iou)
      labels[i] = AnchorLabel::Negative;
    else
      labels[i] = AnchorLabel::Ignored;
  }
  return labels;
}

BoxDelta encode_box_delta(const Box3D& gt, const Box3D& anchor) {
  validate_box(gt);
  validate_box(anchor);
  const double diag = std::hypot(anchor.width, anchor.length);
  BoxDelta d;
  d.x = (gt.center[0] - anchor.center[0]) / diag;
  d.y = (gt.center[1] - anchor.center[1]) / diag;
  d.z = (gt.center[2] - anchor.center[2]) / anchor.height;
  d.w = std::log(gt.width / anchor.width);
  d.l = std::log(gt.length / anchor.length);
  d.h = std::log(gt.height / anchor.height);
  d.theta = std::sin(gt.yaw - anchor.yaw);
  return d;
}

Box3D decode_box_delta(const BoxDelta& delta, const Box3D& anchor,
                       bool flip_direction) {
  validate_box(anchor);
  const double diag = std::hypot(anchor.width, anchor.length);
  Box3D box;
  box.center[0] = anchor.center[0] + delta.x * diag;
  box.center[1] = anchor.center[1] + delta.y * diag;
  box.center[2] = anchor.center[2] + delta.z * anchor.height;
  box.width = anchor.width * std::exp(delta.w);
  box.length = anchor.length * std::exp(delta.l);
  box.height = anchor.height * std::exp(delta.h);
  const double s = std::clamp(delta.theta, -1.0, 1.0);
  double yaw = anchor.yaw + std::asin(s);
  if (flip_direction) yaw += kPi;
  box.yaw = normalize_yaw(yaw);
  return box;
}

double focal_loss(double p, double eta, double gamma) {
  if (!(p > 0.0) || p > 1.0)
    throw std::invalid_argument("focal loss needs a probability in (0, 1]");
  return -eta * std::pow(1.0 - p, gamma) * std::log(p);
}

double smooth_l1(double x) {
  const double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double localization_loss(const BoxDelta& predicted, const BoxDelta& target) {
  return smooth_l1(predicted.x - target.x) + smooth_l1(predicted.y - target.y) +
         smooth_l1(predicted.z - target.z) + smooth_l1(predicted.w - target.w) +
         smooth_l1(predicted.l - target.l) + smooth_l1(predicted.h - target.h) +
         smooth_l1(predicted.theta - target.theta);
}

double direction_loss(double p_forward, bool forward) {
  if (!(p_forward > 0.0) || !(p_forward < 1.0))
    throw std::invalid_argument("direction loss needs a probability in (0, 1)");
  return forward ? -std::log(p_forward) : -std::log(1.0 - p_forward);
}

double total_loss(double cls, double loc, double dir, int n_positive,
                  const LossWeights& betas) {
  if (n_positive < 0) throw std::invalid_argument("negative positive count");
  const double denom = std::max(1, n_positive);
  return (betas.classification * cls + betas.localization * loc +
          betas.direction * dir) /
         denom;
}

}  // namespace coopdet
