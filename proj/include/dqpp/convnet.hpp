#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dqpp/config.hpp"
#include "dqpp/core.hpp"
#include "dqpp/error.hpp"
#include "dqpp/reshape.hpp"

namespace dqpp {

// ---------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------

struct ConvLayerParams {
  std::size_t out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  std::vector<double> w;  // ((o * in_ch + i) * kh + dy) * kw + dx
  std::vector<double> b;  // one per output channel

  double weight(std::size_t o, std::size_t i, std::size_t dy,
                std::size_t dx) const {
    return w[((o * in_ch + i) * kh + dy) * kw + dx];
  }
};

struct DenseLayerParams {
  std::size_t out = 0, in = 0;
  std::vector<double> w;  // w[o * in + i]
  std::vector<double> b;
};

// All learnable weights. conv1/conv2 are shared across both branches and all
// slices; exactly one head is active depending on the objective (the other
// is empty).
struct ModelParams {
  ConvLayerParams conv1, conv2;
  DenseLayerParams fc;
  DenseLayerParams sigmoid_head;  // pairwise: over the merged pair vector
  DenseLayerParams linear_head;   // pointwise: over a single branch vector
};

template <typename F>
void for_each_array(ModelParams& p, F&& f) {
  f(p.conv1.w); f(p.conv1.b);
  f(p.conv2.w); f(p.conv2.b);
  f(p.fc.w); f(p.fc.b);
  f(p.sigmoid_head.w); f(p.sigmoid_head.b);
  f(p.linear_head.w); f(p.linear_head.b);
}

template <typename F>
void for_each_array(const ModelParams& p, F&& f) {
  f(p.conv1.w); f(p.conv1.b);
  f(p.conv2.w); f(p.conv2.b);
  f(p.fc.w); f(p.fc.b);
  f(p.sigmoid_head.w); f(p.sigmoid_head.b);
  f(p.linear_head.w); f(p.linear_head.b);
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_array(z, [](std::vector<double>& a) {
    std::fill(a.begin(), a.end(), 0.0);
  });
  return z;
}

// ---------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------

inline std::size_t pooled_dim(std::size_t d) { return (d + 1) / 2; }

// Static shape algebra for the conv stack: SAME convolutions keep spatial
// dims, each 2x2/stride-2 pool halves them with ceil rounding.
struct NetGeometry {
  std::size_t n_slices = 0, slice_h = 0, slice_w = 0;
  std::size_t c1 = 0, c2 = 0, hidden = 0;
  std::size_t k1h = 0, k1w = 0, k2h = 0, k2w = 0;
  std::size_t pool1_h = 0, pool1_w = 0, pool2_h = 0, pool2_w = 0;
  std::size_t slice_features = 0;   // c2 * pool2_h * pool2_w
  std::size_t branch_features = 0;  // n_slices * slice_features
  std::size_t fc_in = 0;            // 2 * branch_features (pairwise) or 1x
  Objective objective = Objective::pairwise;
};

inline NetGeometry net_geometry(ReshapeMode mode, std::size_t m, std::size_t k,
                                std::size_t p, std::size_t c1, std::size_t c2,
                                std::size_t hidden, Objective objective) {
  if (m == 0 || k == 0 || p == 0)
    throw DataError("net_geometry: degenerate tensor shape");
  NetGeometry g;
  g.objective = objective;
  g.n_slices = slice_count(mode, m, k);
  std::tie(g.slice_h, g.slice_w) = slice_shape(mode, m, k, p);
  g.c1 = c1;
  g.c2 = c2;
  g.hidden = hidden;
  // height-1 inputs use 1x5 / 1x3 kernels, everything else 5x5 / 3x3
  g.k1h = g.slice_h == 1 ? 1 : 5;
  g.k1w = 5;
  g.k2h = g.slice_h == 1 ? 1 : 3;
  g.k2w = 3;
  g.pool1_h = pooled_dim(g.slice_h);
  g.pool1_w = pooled_dim(g.slice_w);
  g.pool2_h = pooled_dim(g.pool1_h);
  g.pool2_w = pooled_dim(g.pool1_w);
  g.slice_features = c2 * g.pool2_h * g.pool2_w;
  g.branch_features = g.n_slices * g.slice_features;
  g.fc_in = objective == Objective::pairwise ? 2 * g.branch_features
                                             : g.branch_features;
  return g;
}

inline NetGeometry net_geometry(const TrainConfig& cfg) {
  std::size_t m = cfg.interaction.t + cfg.interaction.b;
  if (m == 0) m = 1;  // query-pair ablation tensors have a single slab
  return net_geometry(cfg.mode, m, static_cast<std::size_t>(cfg.interaction.k),
                      static_cast<std::size_t>(cfg.interaction.p),
                      static_cast<std::size_t>(cfg.conv1_channels),
                      static_cast<std::size_t>(cfg.conv2_channels),
                      static_cast<std::size_t>(cfg.hidden), cfg.objective);
}

// ---------------------------------------------------------------------
// Initialization and optimizer
// ---------------------------------------------------------------------

namespace detail {

inline void he_uniform_fill(std::vector<double>& w, std::size_t fan_in,
                            Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& x : w) x = (2.0 * next_uniform(rng) - 1.0) * limit;
}

inline ConvLayerParams make_conv(std::size_t out_ch, std::size_t in_ch,
                                 std::size_t kh, std::size_t kw) {
  if (kh % 2 == 0 || kw % 2 == 0)
    throw DataError("conv kernel dims must be odd");
  ConvLayerParams l;
  l.out_ch = out_ch;
  l.in_ch = in_ch;
  l.kh = kh;
  l.kw = kw;
  l.w.assign(out_ch * in_ch * kh * kw, 0.0);
  l.b.assign(out_ch, 0.0);
  return l;
}

inline DenseLayerParams make_dense(std::size_t out, std::size_t in) {
  DenseLayerParams l;
  l.out = out;
  l.in = in;
  l.w.assign(out * in, 0.0);
  l.b.assign(out, 0.0);
  return l;
}

}  // namespace detail

// He-uniform weights, zero biases. Draw order: conv1, conv2, fc, head.
inline ModelParams init_params(const NetGeometry& g, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.conv1 = detail::make_conv(g.c1, 1, g.k1h, g.k1w);
  detail::he_uniform_fill(p.conv1.w, 1 * g.k1h * g.k1w, rng);
  p.conv2 = detail::make_conv(g.c2, g.c1, g.k2h, g.k2w);
  detail::he_uniform_fill(p.conv2.w, g.c1 * g.k2h * g.k2w, rng);
  p.fc = detail::make_dense(g.hidden, g.fc_in);
  detail::he_uniform_fill(p.fc.w, g.fc_in, rng);
  if (g.objective == Objective::pairwise) {
    p.sigmoid_head = detail::make_dense(1, g.hidden);
    detail::he_uniform_fill(p.sigmoid_head.w, g.hidden, rng);
  } else {
    p.linear_head = detail::make_dense(1, g.hidden);
    detail::he_uniform_fill(p.linear_head.w, g.hidden, rng);
  }
  return p;
}

struct AdamState {
  ModelParams m, v;
  long step = 0;
};

inline AdamState make_adam_state(const ModelParams& params) {
  return AdamState{zeros_like(params), zeros_like(params), 0};
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

inline void optimizer_step(ModelParams& params, const ModelParams& grads,
                           AdamState& state, double lr) {
  if (lr < 0) throw DataError("optimizer_step: negative learning rate");
  for_each_array(grads, [](const std::vector<double>& g) {
    for (double x : g)
      if (!std::isfinite(x))
        throw NumericError("non-finite gradient encountered");
  });
  ++state.step;
  double bc1 = 1.0 - std::pow(kAdamBeta1, state.step);
  double bc2 = 1.0 - std::pow(kAdamBeta2, state.step);
  std::vector<std::vector<double>*> ps, ms, vs;
  std::vector<const std::vector<double>*> gs;
  for_each_array(params, [&](std::vector<double>& a) { ps.push_back(&a); });
  for_each_array(grads, [&](const std::vector<double>& a) { gs.push_back(&a); });
  for_each_array(state.m, [&](std::vector<double>& a) { ms.push_back(&a); });
  for_each_array(state.v, [&](std::vector<double>& a) { vs.push_back(&a); });
  for (std::size_t a = 0; a < ps.size(); ++a) {
    auto& p = *ps[a];
    const auto& g = *gs[a];
    auto& m = *ms[a];
    auto& v = *vs[a];
    if (p.size() != g.size())
      throw DataError("optimizer_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
    }
  }
}

// ---------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------

struct FeatureMap {
  std::size_t ch = 0, h = 0, w = 0;
  std::vector<double> v;  // (channel, row, col) row-major

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t hh, std::size_t ww)
      : ch(c), h(hh), w(ww), v(c * hh * ww, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return v[(c * h + y) * w + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return v[(c * h + y) * w + x];
  }
};

// SAME zero-padded convolution, stride 1, followed by ReLU.
inline FeatureMap conv2d_forward(const FeatureMap& in,
                                 const ConvLayerParams& layer) {
  if (in.ch != layer.in_ch)
    throw DataError("conv2d_forward: input has " + std::to_string(in.ch) +
                    " channels, layer expects " + std::to_string(layer.in_ch));
  const long ph = static_cast<long>(layer.kh - 1) / 2;
  const long pw = static_cast<long>(layer.kw - 1) / 2;
  FeatureMap out(layer.out_ch, in.h, in.w);
  for (std::size_t o = 0; o < layer.out_ch; ++o)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x) {
        double acc = layer.b[o];
        for (std::size_t i = 0; i < layer.in_ch; ++i)
          for (std::size_t dy = 0; dy < layer.kh; ++dy) {
            long sy = static_cast<long>(y) + static_cast<long>(dy) - ph;
            if (sy < 0 || sy >= static_cast<long>(in.h)) continue;
            for (std::size_t dx = 0; dx < layer.kw; ++dx) {
              long sx = static_cast<long>(x) + static_cast<long>(dx) - pw;
              if (sx < 0 || sx >= static_cast<long>(in.w)) continue;
              acc += layer.weight(o, i, dy, dx) *
                     in.at(i, static_cast<std::size_t>(sy),
                           static_cast<std::size_t>(sx));
            }
          }
        out.at(o, y, x) = acc > 0.0 ? acc : 0.0;
      }
  return out;
}

// 2x2 max pooling, stride 2, ceil mode; records the flat input index of each
// window maximum for backprop.
inline FeatureMap maxpool(const FeatureMap& in, std::vector<std::size_t>& argmax) {
  FeatureMap out(in.ch, pooled_dim(in.h), pooled_dim(in.w));
  argmax.assign(out.v.size(), 0);
  std::size_t cell = 0;
  for (std::size_t c = 0; c < in.ch; ++c)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x, ++cell) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t yy = 2 * y; yy < std::min(2 * y + 2, in.h); ++yy)
          for (std::size_t xx = 2 * x; xx < std::min(2 * x + 2, in.w); ++xx) {
            std::size_t idx = (c * in.h + yy) * in.w + xx;
            if (in.v[idx] > best) {
              best = in.v[idx];
              best_idx = idx;
            }
          }
        out.v[cell] = best;
        argmax[cell] = best_idx;
      }
  return out;
}

struct SliceTrace {
  FeatureMap input;      // 1 x h x w
  FeatureMap conv1_out;  // post-ReLU
  FeatureMap pool1_out;
  std::vector<std::size_t> argmax1;
  FeatureMap conv2_out;  // post-ReLU
  std::size_t pool2_h = 0, pool2_w = 0;
  std::vector<std::size_t> argmax2;
};

struct BranchTrace {
  std::vector<SliceTrace> slices;
  std::vector<double> merged;         // concatenated slice features
  std::vector<std::uint8_t> keep;     // dropout mask; empty when not applied
  double keep_prob = 1.0;
  std::vector<double> features;       // post-dropout branch output
};

// Conv/pool feature extraction per slice with shared kernels, flattened and
// concatenated in slice order; inverted dropout on the merged vector in
// train mode.
inline std::vector<double> branch_forward(const SliceSet& slices,
                                          const ModelParams& params,
                                          double dropout_rate, bool train_mode,
                                          Rng* rng, BranchTrace* trace) {
  if (slices.slices.empty()) throw DataError("branch_forward: empty slice set");
  const std::size_t h = slices.slices[0].rows, w = slices.slices[0].cols;
  std::vector<double> merged;
  if (trace) trace->slices.clear();
  for (const Matrix& slice : slices.slices) {
    if (slice.rows != h || slice.cols != w)
      throw DataError("branch_forward: inconsistent slice shapes");
    FeatureMap in(1, h, w);
    in.v = slice.v;
    SliceTrace st;
    st.conv1_out = conv2d_forward(in, params.conv1);
    st.pool1_out = maxpool(st.conv1_out, st.argmax1);
    st.conv2_out = conv2d_forward(st.pool1_out, params.conv2);
    std::vector<std::size_t> argmax2;
    FeatureMap pool2 = maxpool(st.conv2_out, argmax2);
    merged.insert(merged.end(), pool2.v.begin(), pool2.v.end());
    if (trace) {
      st.input = std::move(in);
      st.pool2_h = pool2.h;
      st.pool2_w = pool2.w;
      st.argmax2 = std::move(argmax2);
      trace->slices.push_back(std::move(st));
    }
  }
  std::vector<double> features;
  std::vector<std::uint8_t> keep;
  double keep_prob = 1.0;
  if (train_mode && dropout_rate > 0.0) {
    if (!rng) throw DataError("branch_forward: dropout requires an rng");
    keep_prob = 1.0 - dropout_rate;
    keep.resize(merged.size());
    features.resize(merged.size());
    for (std::size_t i = 0; i < merged.size(); ++i) {
      keep[i] = next_uniform(*rng) >= dropout_rate ? 1 : 0;
      features[i] = keep[i] ? merged[i] / keep_prob : 0.0;
    }
  } else {
    features = merged;
  }
  if (trace) {
    trace->merged = std::move(merged);
    trace->keep = std::move(keep);
    trace->keep_prob = keep_prob;
    trace->features = features;
  }
  return features;
}

namespace detail {

// y = W x + b
inline std::vector<double> dense_forward(const std::vector<double>& x,
                                         const DenseLayerParams& l) {
  if (x.size() != l.in)
    throw DataError("dense layer expects " + std::to_string(l.in) +
                    " inputs, got " + std::to_string(x.size()));
  std::vector<double> y(l.out);
  for (std::size_t o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    const double* row = &l.w[o * l.in];
    for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  return y;
}

inline double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

struct PairTrace {
  BranchTrace a, b;
  std::vector<double> fc_in;   // concat(features_a, features_b)
  std::vector<double> fc_out;  // post-ReLU
  double yhat = 0.0;
};

struct PointTrace {
  BranchTrace branch;
  std::vector<double> fc_in;
  std::vector<double> fc_out;
  double score = 0.0;
};

inline double pair_forward(const SliceSet& slices_a, const SliceSet& slices_b,
                           const ModelParams& params, double dropout_rate,
                           bool train_mode, Rng* rng, PairTrace* trace) {
  if (params.sigmoid_head.out != 1)
    throw DataError("pair_forward: model has no sigmoid head");
  if (slices_a.slices.empty() || slices_b.slices.empty())
    throw DataError("pair_forward: empty slice set");
  if (slices_a.slices.size() != slices_b.slices.size() ||
      slices_a.slices[0].rows != slices_b.slices[0].rows ||
      slices_a.slices[0].cols != slices_b.slices[0].cols)
    throw DataError("pair_forward: branch inputs have different shapes");
  BranchTrace ta, tb;
  std::vector<double> fa = branch_forward(slices_a, params, dropout_rate,
                                          train_mode, rng, trace ? &ta : nullptr);
  std::vector<double> fb = branch_forward(slices_b, params, dropout_rate,
                                          train_mode, rng, trace ? &tb : nullptr);
  std::vector<double> fc_in = fa;
  fc_in.insert(fc_in.end(), fb.begin(), fb.end());
  std::vector<double> fc_out = detail::dense_forward(fc_in, params.fc);
  for (double& x : fc_out) x = x > 0.0 ? x : 0.0;
  double z = detail::dense_forward(fc_out, params.sigmoid_head)[0];
  double yhat = detail::stable_sigmoid(z);
  if (trace) {
    trace->a = std::move(ta);
    trace->b = std::move(tb);
    trace->fc_in = std::move(fc_in);
    trace->fc_out = std::move(fc_out);
    trace->yhat = yhat;
  }
  return yhat;
}

inline double point_forward(const SliceSet& slices, const ModelParams& params,
                            double dropout_rate, bool train_mode, Rng* rng,
                            PointTrace* trace) {
  if (params.linear_head.out != 1)
    throw DataError("point_forward: model has no linear head");
  BranchTrace tb;
  std::vector<double> f = branch_forward(slices, params, dropout_rate,
                                         train_mode, rng, trace ? &tb : nullptr);
  std::vector<double> fc_out = detail::dense_forward(f, params.fc);
  for (double& x : fc_out) x = x > 0.0 ? x : 0.0;
  double score = detail::dense_forward(fc_out, params.linear_head)[0];
  if (trace) {
    trace->branch = std::move(tb);
    trace->fc_in = std::move(f);
    trace->fc_out = std::move(fc_out);
    trace->score = score;
  }
  return score;
}

// ---------------------------------------------------------------------
// Backward pass (exact analytic gradients of the forward composition)
// ---------------------------------------------------------------------

namespace detail {

// Backward through ReLU(conv(in)). `out` is the stored post-ReLU output,
// `d_out` the gradient w.r.t. it. Accumulates kernel/bias gradients and,
// when d_in is non-null, the gradient w.r.t. the layer input.
inline void conv2d_backward(const FeatureMap& in, const FeatureMap& out,
                            const FeatureMap& d_out, const ConvLayerParams& layer,
                            ConvLayerParams& grad, FeatureMap* d_in) {
  const long ph = static_cast<long>(layer.kh - 1) / 2;
  const long pw = static_cast<long>(layer.kw - 1) / 2;
  for (std::size_t o = 0; o < layer.out_ch; ++o)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x) {
        if (out.at(o, y, x) <= 0.0) continue;  // ReLU subgradient
        double g = d_out.at(o, y, x);
        if (g == 0.0) continue;
        grad.b[o] += g;
        for (std::size_t i = 0; i < layer.in_ch; ++i)
          for (std::size_t dy = 0; dy < layer.kh; ++dy) {
            long sy = static_cast<long>(y) + static_cast<long>(dy) - ph;
            if (sy < 0 || sy >= static_cast<long>(in.h)) continue;
            for (std::size_t dx = 0; dx < layer.kw; ++dx) {
              long sx = static_cast<long>(x) + static_cast<long>(dx) - pw;
              if (sx < 0 || sx >= static_cast<long>(in.w)) continue;
              double xin = in.at(i, static_cast<std::size_t>(sy),
                                 static_cast<std::size_t>(sx));
              grad.w[((o * layer.in_ch + i) * layer.kh + dy) * layer.kw + dx] +=
                  g * xin;
              if (d_in)
                d_in->at(i, static_cast<std::size_t>(sy),
                         static_cast<std::size_t>(sx)) +=
                    g * layer.weight(o, i, dy, dx);
            }
          }
      }
}

// Routes each pooled cell's gradient to its recorded argmax position.
inline FeatureMap maxpool_backward(const std::vector<std::size_t>& argmax,
                                   const std::vector<double>& d_out,
                                   std::size_t ch, std::size_t in_h,
                                   std::size_t in_w) {
  FeatureMap d_in(ch, in_h, in_w);
  for (std::size_t cell = 0; cell < d_out.size(); ++cell)
    d_in.v[argmax[cell]] += d_out[cell];
  return d_in;
}

// dense backward: accumulates dW, db; returns gradient w.r.t. the input.
inline std::vector<double> dense_backward(const std::vector<double>& x,
                                          const std::vector<double>& d_y,
                                          const DenseLayerParams& layer,
                                          DenseLayerParams& grad) {
  if (x.size() != layer.in || d_y.size() != layer.out)
    throw DataError("dense_backward: trace does not match layer shape");
  std::vector<double> d_x(layer.in, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    double g = d_y[o];
    if (g == 0.0) continue;
    grad.b[o] += g;
    const double* row = &layer.w[o * layer.in];
    double* grow = &grad.w[o * layer.in];
    for (std::size_t i = 0; i < layer.in; ++i) {
      grow[i] += g * x[i];
      d_x[i] += g * row[i];
    }
  }
  return d_x;
}

inline void branch_backward(const BranchTrace& trace, const ModelParams& params,
                            const std::vector<double>& d_features,
                            ModelParams& grads) {
  std::vector<double> d_merged;
  if (!trace.keep.empty()) {
    d_merged.resize(d_features.size());
    for (std::size_t i = 0; i < d_features.size(); ++i)
      d_merged[i] = trace.keep[i] ? d_features[i] / trace.keep_prob : 0.0;
  } else {
    d_merged = d_features;
  }
  std::size_t offset = 0;
  for (const SliceTrace& st : trace.slices) {
    std::size_t n = st.argmax2.size();
    std::vector<double> d_pool2(d_merged.begin() + offset,
                                d_merged.begin() + offset + n);
    offset += n;
    FeatureMap d_conv2 = maxpool_backward(st.argmax2, d_pool2, st.conv2_out.ch,
                                          st.conv2_out.h, st.conv2_out.w);
    FeatureMap d_pool1(st.pool1_out.ch, st.pool1_out.h, st.pool1_out.w);
    conv2d_backward(st.pool1_out, st.conv2_out, d_conv2, params.conv2,
                    grads.conv2, &d_pool1);
    FeatureMap d_conv1 = maxpool_backward(st.argmax1, d_pool1.v, st.conv1_out.ch,
                                          st.conv1_out.h, st.conv1_out.w);
    conv2d_backward(st.input, st.conv1_out, d_conv1, params.conv1, grads.conv1,
                    nullptr);
  }
}

}  // namespace detail

// Gradients of the pairwise forward pass w.r.t. every parameter, given
// dL/dyhat. Shared weights accumulate contributions from both branches.
inline void pair_backward(const PairTrace& trace, const ModelParams& params,
                          double d_yhat, ModelParams& grads) {
  double dz = d_yhat * trace.yhat * (1.0 - trace.yhat);  // sigmoid'
  std::vector<double> d_fc_out = detail::dense_backward(
      trace.fc_out, {dz}, params.sigmoid_head, grads.sigmoid_head);
  for (std::size_t i = 0; i < d_fc_out.size(); ++i)
    if (trace.fc_out[i] <= 0.0) d_fc_out[i] = 0.0;
  std::vector<double> d_fc_in =
      detail::dense_backward(trace.fc_in, d_fc_out, params.fc, grads.fc);
  std::size_t half = trace.a.features.size();
  std::vector<double> da(d_fc_in.begin(), d_fc_in.begin() + half);
  std::vector<double> db(d_fc_in.begin() + half, d_fc_in.end());
  detail::branch_backward(trace.a, params, da, grads);
  detail::branch_backward(trace.b, params, db, grads);
}

// Gradients of the pointwise forward pass given dL/dscore.
inline void point_backward(const PointTrace& trace, const ModelParams& params,
                           double d_score, ModelParams& grads) {
  std::vector<double> d_fc_out = detail::dense_backward(
      trace.fc_out, {d_score}, params.linear_head, grads.linear_head);
  for (std::size_t i = 0; i < d_fc_out.size(); ++i)
    if (trace.fc_out[i] <= 0.0) d_fc_out[i] = 0.0;
  std::vector<double> d_fc_in =
      detail::dense_backward(trace.fc_in, d_fc_out, params.fc, grads.fc);
  detail::branch_backward(trace.branch, params, d_fc_in, grads);
}

// ---------------------------------------------------------------------
// Checkpoint format: magic "DQPPMODL", version u32, config, then every
// parameter array (u32 length + float32 values) in declaration order.
// A JSON sidecar with the same config is written next to the file.
// ---------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'D', 'Q', 'P', 'P', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

struct TrainedModel {
  TrainConfig config;
  ModelParams params;
};

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{
      {"t", cfg.interaction.t},
      {"b", cfg.interaction.b},
      {"n_limit", cfg.interaction.n_limit},
      {"p", cfg.interaction.p},
      {"k", cfg.interaction.k},
      {"idf", cfg.interaction.idf_on},
      {"reshape", to_string(cfg.mode)},
      {"objective", to_string(cfg.objective)},
      {"metric", to_string(cfg.metric)},
      {"epochs", cfg.epochs},
      {"lr", cfg.lr},
      {"batch", cfg.batch_size},
      {"dropout", cfg.dropout},
      {"seed", cfg.seed},
      {"conv1_channels", cfg.conv1_channels},
      {"conv2_channels", cfg.conv2_channels},
      {"hidden", cfg.hidden},
      {"filter_ties", cfg.filter_ties},
  };
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.interaction.t = j.at("t").get<int>();
  cfg.interaction.b = j.at("b").get<int>();
  cfg.interaction.n_limit = j.at("n_limit").get<int>();
  cfg.interaction.p = j.at("p").get<int>();
  cfg.interaction.k = j.at("k").get<int>();
  cfg.interaction.idf_on = j.at("idf").get<bool>();
  cfg.mode = parse_reshape_mode(j.at("reshape").get<std::string>());
  cfg.objective = parse_objective(j.at("objective").get<std::string>());
  cfg.metric = parse_target_metric(j.at("metric").get<std::string>());
  cfg.epochs = j.at("epochs").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.batch_size = j.at("batch").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.conv1_channels = j.at("conv1_channels").get<int>();
  cfg.conv2_channels = j.at("conv2_channels").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.filter_ties = j.at("filter_ties").get<bool>();
  return cfg;
}

namespace detail {

inline void write_f64_le(std::ostream& os, double d) {
  std::uint64_t x;
  std::memcpy(&x, &d, 8);
  write_u64_le(os, x);
}

inline double read_f64_le(std::istream& is) {
  std::uint64_t x = read_u64_le(is);
  double d;
  std::memcpy(&d, &x, 8);
  return d;
}

}  // namespace detail

inline void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write file: " + path);
  const TrainConfig& c = model.config;
  os.write(kModelMagic, 8);
  write_u32_le(os, kModelVersion);
  write_u32_le(os, static_cast<std::uint32_t>(c.mode));
  write_u32_le(os, static_cast<std::uint32_t>(c.objective));
  write_u32_le(os, static_cast<std::uint32_t>(c.metric));
  write_u32_le(os, static_cast<std::uint32_t>(c.interaction.t));
  write_u32_le(os, static_cast<std::uint32_t>(c.interaction.b));
  write_u32_le(os, static_cast<std::uint32_t>(c.interaction.n_limit));
  write_u32_le(os, static_cast<std::uint32_t>(c.interaction.p));
  write_u32_le(os, static_cast<std::uint32_t>(c.interaction.k));
  write_u32_le(os, c.interaction.idf_on ? 1 : 0);
  write_u32_le(os, static_cast<std::uint32_t>(c.conv1_channels));
  write_u32_le(os, static_cast<std::uint32_t>(c.conv2_channels));
  write_u32_le(os, static_cast<std::uint32_t>(c.hidden));
  write_u32_le(os, static_cast<std::uint32_t>(c.epochs));
  write_u32_le(os, static_cast<std::uint32_t>(c.batch_size));
  write_u32_le(os, c.filter_ties ? 1 : 0);
  detail::write_f64_le(os, c.lr);
  detail::write_f64_le(os, c.dropout);
  write_u64_le(os, c.seed);
  for_each_array(model.params, [&](const std::vector<double>& a) {
    write_u32_le(os, static_cast<std::uint32_t>(a.size()));
    for (double x : a) write_f32_le(os, static_cast<float>(x));
  });
  if (!os) throw UsageError("write failed: " + path);
  std::ofstream js(path + ".json");
  if (!js) throw UsageError("cannot write file: " + path + ".json");
  js << config_to_json(c).dump(2) << '\n';
}

inline TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kModelMagic, 8) != 0)
    throw ParseError(path + ": not a model checkpoint (bad magic)");
  std::uint32_t version = read_u32_le(is);
  if (version != kModelVersion)
    throw ParseError(path + ": unsupported checkpoint version " +
                     std::to_string(version));
  TrainConfig c;
  c.mode = static_cast<ReshapeMode>(read_u32_le(is));
  c.objective = static_cast<Objective>(read_u32_le(is));
  c.metric = static_cast<TargetMetric>(read_u32_le(is));
  c.interaction.t = static_cast<int>(read_u32_le(is));
  c.interaction.b = static_cast<int>(read_u32_le(is));
  c.interaction.n_limit = static_cast<int>(read_u32_le(is));
  c.interaction.p = static_cast<int>(read_u32_le(is));
  c.interaction.k = static_cast<int>(read_u32_le(is));
  c.interaction.idf_on = read_u32_le(is) != 0;
  c.conv1_channels = static_cast<int>(read_u32_le(is));
  c.conv2_channels = static_cast<int>(read_u32_le(is));
  c.hidden = static_cast<int>(read_u32_le(is));
  c.epochs = static_cast<int>(read_u32_le(is));
  c.batch_size = static_cast<int>(read_u32_le(is));
  c.filter_ties = read_u32_le(is) != 0;
  c.lr = detail::read_f64_le(is);
  c.dropout = detail::read_f64_le(is);
  c.seed = read_u64_le(is);
  TrainedModel model;
  model.config = c;
  model.params = init_params(net_geometry(c), 0);
  for_each_array(model.params, [&](std::vector<double>& a) {
    std::uint32_t n = read_u32_le(is);
    if (n != a.size())
      throw ParseError(path + ": parameter array length " + std::to_string(n) +
                       " does not match config-derived shape " +
                       std::to_string(a.size()));
    for (double& x : a) x = read_f32_le(is);
  });
  return model;
}

}  // namespace dqpp
