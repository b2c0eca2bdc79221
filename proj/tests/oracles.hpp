#pragma once

// Straight-line reference implementations. Nothing here calls into the
// library's kernels; only the Tensor container is shared.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "cci/cgd.hpp"
#include "cci/detect.hpp"
#include "cci/tensor.hpp"

namespace oracle {

using cci::BoundingBox;
using cci::Tensor;
namespace cgd = cci::cgd;
using Images = std::vector<std::vector<BoundingBox>>;

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad, int dil,
                     int groups) {
  const int cout = w.n();
  const int cin_g = w.c();
  const int k = w.h();
  const int oh = (x.h() + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const int ow = (x.w() + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const int cout_g = cout / groups;
  Tensor out({x.n(), cout, oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < cout; ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
          const int g = co / cout_g;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int y = i * stride - pad + u * dil;
                const int xx = j * stride - pad + v * dil;
                if (y < 0 || y >= x.h() || xx < 0 || xx >= x.w()) continue;
                acc += static_cast<double>(w.at(co, ci, u, v)) * x.at(n, g * cin_g + ci, y, xx);
              }
          out.at(n, co, i, j) = static_cast<float>(acc);
        }
  return out;
}

/// Train-mode batch norm with biased batch variance.
inline Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               double eps = 1e-5) {
  Tensor out(x.shape());
  const double count = static_cast<double>(x.n()) * x.h() * x.w();
  for (int c = 0; c < x.c(); ++c) {
    double mean = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) mean += x.at(n, c, i, j);
    mean /= count;
    double var = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) var += (x.at(n, c, i, j) - mean) * (x.at(n, c, i, j) - mean);
    var /= count;
    for (int n = 0; n < x.n(); ++n)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j)
          out.at(n, c, i, j) = static_cast<float>(gamma[static_cast<std::size_t>(c)] *
                                                      (x.at(n, c, i, j) - mean) / std::sqrt(var + eps) +
                                                  beta[static_cast<std::size_t>(c)]);
  }
  return out;
}

inline Tensor map(const Tensor& x, const std::function<double(double)>& f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = static_cast<float>(f(x[i]));
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Straight softmax over groups of `g` channels at every pixel.
inline Tensor softmax_groups(const Tensor& x, int g) {
  Tensor out(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c0 = 0; c0 < x.c(); c0 += g)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) {
          double z = 0.0;
          for (int c = c0; c < c0 + g; ++c) z += std::exp(static_cast<double>(x.at(n, c, i, j)));
          for (int c = c0; c < c0 + g; ++c)
            out.at(n, c, i, j) = static_cast<float>(std::exp(static_cast<double>(x.at(n, c, i, j))) / z);
        }
  return out;
}

/// CARAFE reassembly by direct enumeration of every output position and tap.
inline Tensor reassemble(const Tensor& x, const Tensor& kernels, int k_up, int sigma) {
  Tensor out({x.n(), x.c(), x.h() * sigma, x.w() * sigma});
  const int r = k_up / 2;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < x.h() * sigma; ++i)
        for (int j = 0; j < x.w() * sigma; ++j) {
          double acc = 0.0;
          for (int u = -r; u <= r; ++u)
            for (int v = -r; v <= r; ++v) {
              const int y = i / sigma + u;
              const int xx = j / sigma + v;
              if (y < 0 || y >= x.h() || xx < 0 || xx >= x.w()) continue;
              const int tap = (u + r) * k_up + (v + r);
              acc += static_cast<double>(x.at(n, c, y, xx)) * kernels.at(n, tap, i, j);
            }
          out.at(n, c, i, j) = static_cast<float>(acc);
        }
  return out;
}

inline Tensor nearest_upsample(const Tensor& x, int r) {
  Tensor out({x.n(), x.c(), x.h() * r, x.w() * r});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < x.h() * r; ++i)
        for (int j = 0; j < x.w() * r; ++j) out.at(n, c, i, j) = x.at(n, c, i / r, j / r);
  return out;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ax0 = a.cx - a.w / 2.0, ax1 = a.cx + a.w / 2.0, ay0 = a.cy - a.h / 2.0,
               ay1 = a.cy + a.h / 2.0;
  const double bx0 = b.cx - b.w / 2.0, bx1 = b.cx + b.w / 2.0, by0 = b.cy - b.h / 2.0,
               by1 = b.cy + b.h / 2.0;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// AP from (confidence, is_tp) pairs already in rank order: precision at every
/// recall step, envelope taken as the maximum precision at any later rank.
inline double average_precision(const std::vector<bool>& tp, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> prec, rec;
  int hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]) ++hits;
    prec.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(hits) / num_gt);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    double best = 0.0;
    for (std::size_t j = i; j < tp.size(); ++j) best = std::max(best, prec[j]);
    ap += (rec[i] - prev_recall) * best;
    prev_recall = rec[i];
  }
  return ap;
}

/// Multi-head attention over every token of each image, queries and keys
/// both taken from `x`, values from `v`: softmax(x_h^T x_h / sqrt(d)) v_h.
inline Tensor global_attention(const Tensor& x, const Tensor& v, int heads) {
  const int d = x.c() / heads;
  const int dv = v.c() / heads;
  const int tokens = x.h() * x.w();
  Tensor out(v.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < tokens; ++t) {
        std::vector<double> logit(static_cast<std::size_t>(tokens));
        double mx = -1e300;
        for (int s = 0; s < tokens; ++s) {
          double dot = 0.0;
          for (int k = 0; k < d; ++k)
            dot += static_cast<double>(x.at(n, h * d + k, t / x.w(), t % x.w())) * x.at(n, h * d + k, s / x.w(), s % x.w());
          logit[static_cast<std::size_t>(s)] = dot / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, logit[static_cast<std::size_t>(s)]);
        }
        double z = 0.0;
        for (double& l : logit) z += (l = std::exp(l - mx));
        for (int c = 0; c < dv; ++c) {
          double acc = 0.0;
          for (int s = 0; s < tokens; ++s)
            acc += logit[static_cast<std::size_t>(s)] * v.at(n, h * dv + c, s / x.w(), s % x.w());
          out.at(n, h * dv + c, t / x.w(), t % x.w()) = static_cast<float>(acc / z);
        }
      }
  return out;
}

inline Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out({a.n(), a.c() + b.c(), a.h(), a.w()});
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < out.c(); ++c)
      for (int i = 0; i < a.h(); ++i)
        for (int j = 0; j < a.w(); ++j)
          out.at(n, c, i, j) = c < a.c() ? a.at(n, c, i, j) : b.at(n, c - a.c(), i, j);
  return out;
}

/// The whole block written out from oracle pieces.
inline Tensor cgd_block(const Tensor& x, const cgd::Config& cfg, const cgd::Params& p) {
  const Tensor none;
  const int k = cfg.reduce_kernel;
  const Tensor reduced = relu(batch_norm_train(
      conv2d(x, p.reduce_weight, none, 2, (k - 1) / 2, 1, 1), p.reduce_bn.gamma, p.reduce_bn.beta));
  const Tensor local = conv2d(reduced, p.local_weight, none, 1, 1, 1, 1);
  const Tensor surround =
      conv2d(reduced, p.surround_weight, none, 1, cfg.dilation, cfg.dilation, 1);
  const Tensor joint =
      relu(batch_norm_train(concat(local, surround), p.joint_bn.gamma, p.joint_bn.beta));
  Tensor out(joint.shape());
  const int channels = joint.c();
  for (int n = 0; n < joint.n(); ++n) {
    std::vector<double> pooled(static_cast<std::size_t>(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < joint.h(); ++i)
        for (int j = 0; j < joint.w(); ++j) pooled[static_cast<std::size_t>(c)] += joint.at(n, c, i, j);
      pooled[static_cast<std::size_t>(c)] /= joint.h() * joint.w();
    }
    const int hidden = p.fc1_weight.n();
    std::vector<double> h(static_cast<std::size_t>(hidden));
    for (int o = 0; o < hidden; ++o) {
      double s = p.fc1_bias[static_cast<std::size_t>(o)];
      for (int c = 0; c < channels; ++c) s += p.fc1_weight.at(o, c, 0, 0) * pooled[static_cast<std::size_t>(c)];
      h[static_cast<std::size_t>(o)] = std::max(0.0, s);
    }
    for (int c = 0; c < channels; ++c) {
      double s = p.fc2_bias[static_cast<std::size_t>(c)];
      for (int o = 0; o < hidden; ++o) s += p.fc2_weight.at(c, o, 0, 0) * h[static_cast<std::size_t>(o)];
      const double gate = sigmoid(s);
      for (int i = 0; i < joint.h(); ++i)
        for (int j = 0; j < joint.w(); ++j) out.at(n, c, i, j) = static_cast<float>(joint.at(n, c, i, j) * gate);
    }
  }
  return out;
}

struct MapCurve {
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::vector<double> per_threshold;  // class-mean AP at each threshold
};

/// Walks every prediction of a class in global confidence order, claiming
/// the best unmatched ground truth in its own image, then reads AP off the
/// resulting precision/recall curve.
inline MapCurve detection_map(const Images& preds, const Images& gts) {
  std::map<int, int> num_gt;
  for (const auto& im : gts)
    for (const auto& b : im) ++num_gt[b.class_id];
  MapCurve out;
  for (int t = 0; t < 10; ++t) {
    const double thr = 0.5 + 0.05 * t;
    double sum = 0.0;
    for (const auto& [cls, count] : num_gt) {
      std::vector<std::pair<BoundingBox, std::size_t>> all;
      for (std::size_t im = 0; im < preds.size(); ++im)
        for (const auto& b : preds[im])
          if (b.class_id == cls) all.push_back({b, im});
      std::sort(all.begin(), all.end(),
                [](const auto& a, const auto& b) { return a.first.confidence > b.first.confidence; });
      std::vector<std::vector<bool>> taken(gts.size());
      for (std::size_t im = 0; im < gts.size(); ++im) taken[im].assign(gts[im].size(), false);
      std::vector<bool> tp;
      for (const auto& [p, im] : all) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t j = 0; j < gts[im].size(); ++j) {
          if (taken[im][j] || gts[im][j].class_id != cls) continue;
          const double v = oracle::iou(p, gts[im][j]);
          if (v >= thr && v > best_iou) {
            best = static_cast<int>(j);
            best_iou = v;
          }
        }
        if (best >= 0) taken[im][static_cast<std::size_t>(best)] = true;
        tp.push_back(best >= 0);
      }
      sum += average_precision(tp, count);
    }
    const double mean = num_gt.empty() ? 0.0 : sum / static_cast<double>(num_gt.size());
    out.per_threshold.push_back(mean);
    if (t == 0) out.map50 = mean;
    out.map50_95 += mean / 10.0;
  }
  return out;
}

}  // namespace oracle
