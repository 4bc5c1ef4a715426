#pragma once

#include "mvu/camera.hpp"
#include "mvu/gmm.hpp"
#include "mvu/image.hpp"
#include "mvu/nn.hpp"
#include "mvu/rng.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

// The feed-forward renderer: shared source encoder, view-attention aggregator
// with color/variance heads, ray-level render-weight attention, and the
// target-view uncertainty branch (training only).

namespace mvu {

constexpr int kHidden = 64;   // width of every hidden layer
constexpr int kFeatC = 32;    // source feature channels
constexpr int kPeBands = 4;   // sin/cos frequency bands
constexpr int kQueryDim = kPeBands * 6 + 3;  // encoded position + raw direction
constexpr int kDepthPeDim = kPeBands * 2;
constexpr double kSigmaMin = 1e-3;
constexpr double kBetaMin = 1e-3;  // floor of the target-uncertainty decoder

struct ModelDims {
  int tu_c1 = 16, tu_c2 = 24, tu_c3 = 32;  // target encoder channels (stride-8 stack)
  int tu_dec = 32;                          // decoder conv/MLP width
};

template <typename S>
struct ModelParams {
  ModelDims dims;

  Tensor<S> se_conv1_w, se_conv1_b;  // 3x3 stride 2
  Tensor<S> se_conv2_w, se_conv2_b;  // 1x1

  Tensor<S> ag_key_w, ag_key_b;      // concat(f, c) -> key
  Tensor<S> ag_val_w, ag_val_b;      // concat(f, c) -> value
  Tensor<S> ag_query_w, ag_query_b;  // posenc(x), d -> query
  Tensor<S> ag_null;                 // token for points seen by no view
  Tensor<S> ag_out_w, ag_out_b;      // pooled -> token
  Tensor<S> ag_hid_w, ag_hid_b;      // shared hidden layer of the heads
  Tensor<S> ag_color_w, ag_color_b;
  Tensor<S> ag_sigma_w, ag_sigma_b;
  Tensor<S> ag_rkey_w, ag_rkey_b;    // concat(token, depth pe) -> render key
  Tensor<S> ag_rquery;               // learned ray-level query

  Tensor<S> tu_enc1_w, tu_enc1_b;  // target-uncertainty branch
  Tensor<S> tu_enc2_w, tu_enc2_b;
  Tensor<S> tu_enc3_w, tu_enc3_b;
  Tensor<S> tu_dec1_w, tu_dec1_b;
  Tensor<S> tu_dec2_w, tu_dec2_b;
  Tensor<S> tu_mlp1_w, tu_mlp1_b;
  Tensor<S> tu_mlp2_w, tu_mlp2_b;

  // Visits every tensor in a fixed order shared by init, checkpointing and
  // the optimizer.
  template <typename F>
  void visit(F&& f) {
    f("se.conv1.w", se_conv1_w); f("se.conv1.b", se_conv1_b);
    f("se.conv2.w", se_conv2_w); f("se.conv2.b", se_conv2_b);
    f("ag.key.w", ag_key_w); f("ag.key.b", ag_key_b);
    f("ag.val.w", ag_val_w); f("ag.val.b", ag_val_b);
    f("ag.query.w", ag_query_w); f("ag.query.b", ag_query_b);
    f("ag.null", ag_null);
    f("ag.out.w", ag_out_w); f("ag.out.b", ag_out_b);
    f("ag.hid.w", ag_hid_w); f("ag.hid.b", ag_hid_b);
    f("ag.color.w", ag_color_w); f("ag.color.b", ag_color_b);
    f("ag.sigma.w", ag_sigma_w); f("ag.sigma.b", ag_sigma_b);
    f("ag.rkey.w", ag_rkey_w); f("ag.rkey.b", ag_rkey_b);
    f("ag.rquery", ag_rquery);
    f("tu.enc1.w", tu_enc1_w); f("tu.enc1.b", tu_enc1_b);
    f("tu.enc2.w", tu_enc2_w); f("tu.enc2.b", tu_enc2_b);
    f("tu.enc3.w", tu_enc3_w); f("tu.enc3.b", tu_enc3_b);
    f("tu.dec1.w", tu_dec1_w); f("tu.dec1.b", tu_dec1_b);
    f("tu.dec2.w", tu_dec2_w); f("tu.dec2.b", tu_dec2_b);
    f("tu.mlp1.w", tu_mlp1_w); f("tu.mlp1.b", tu_mlp1_b);
    f("tu.mlp2.w", tu_mlp2_w); f("tu.mlp2.b", tu_mlp2_b);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&f](const char* name, Tensor<S>& t) { f(name, static_cast<const Tensor<S>&>(t)); });
  }

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    out.dims = dims;
    std::vector<const Tensor<S>*> src;
    visit([&src](const char*, const Tensor<S>& t) { src.push_back(&t); });
    size_t i = 0;
    out.visit([&](const char*, Tensor<T>& t) { t = src[i++]->template cast<T>(); });
    return out;
  }

  size_t count() const {
    size_t n = 0;
    visit([&n](const char*, const Tensor<S>& t) { n += size_t(t.numel()); });
    return n;
  }
};

// He-style uniform init on weights, zero biases; the null token and ray query
// start small. Fully determined by the seed.
template <typename S>
ModelParams<S> init_params(uint64_t seed, const ModelDims& dims = {}) {
  ModelParams<S> p;
  p.dims = dims;
  const int in_cat = kFeatC + 3;
  p.se_conv1_w = Tensor<S>({kFeatC, 27});
  p.se_conv1_b = Tensor<S>::zeros({kFeatC});
  p.se_conv2_w = Tensor<S>({kFeatC, kFeatC});
  p.se_conv2_b = Tensor<S>::zeros({kFeatC});
  p.ag_key_w = Tensor<S>({kHidden, in_cat});
  p.ag_key_b = Tensor<S>::zeros({kHidden});
  p.ag_val_w = Tensor<S>({kHidden, in_cat});
  p.ag_val_b = Tensor<S>::zeros({kHidden});
  p.ag_query_w = Tensor<S>({kHidden, kQueryDim});
  p.ag_query_b = Tensor<S>::zeros({kHidden});
  p.ag_null = Tensor<S>({kHidden});
  p.ag_out_w = Tensor<S>({kHidden, kHidden});
  p.ag_out_b = Tensor<S>::zeros({kHidden});
  p.ag_hid_w = Tensor<S>({kHidden, kHidden});
  p.ag_hid_b = Tensor<S>::zeros({kHidden});
  p.ag_color_w = Tensor<S>({3, kHidden});
  p.ag_color_b = Tensor<S>::zeros({3});
  p.ag_sigma_w = Tensor<S>({1, kHidden});
  p.ag_sigma_b = Tensor<S>::zeros({1});
  p.ag_rkey_w = Tensor<S>({kHidden, kHidden + kDepthPeDim});
  p.ag_rkey_b = Tensor<S>::zeros({kHidden});
  p.ag_rquery = Tensor<S>({kHidden});
  p.tu_enc1_w = Tensor<S>({dims.tu_c1, 27});
  p.tu_enc1_b = Tensor<S>::zeros({dims.tu_c1});
  p.tu_enc2_w = Tensor<S>({dims.tu_c2, dims.tu_c1 * 9});
  p.tu_enc2_b = Tensor<S>::zeros({dims.tu_c2});
  p.tu_enc3_w = Tensor<S>({dims.tu_c3, dims.tu_c2 * 9});
  p.tu_enc3_b = Tensor<S>::zeros({dims.tu_c3});
  p.tu_dec1_w = Tensor<S>({dims.tu_dec, dims.tu_c3 * 9});
  p.tu_dec1_b = Tensor<S>::zeros({dims.tu_dec});
  p.tu_dec2_w = Tensor<S>({dims.tu_dec, dims.tu_dec * 9});
  p.tu_dec2_b = Tensor<S>::zeros({dims.tu_dec});
  p.tu_mlp1_w = Tensor<S>({dims.tu_dec, dims.tu_dec});
  p.tu_mlp1_b = Tensor<S>::zeros({dims.tu_dec});
  p.tu_mlp2_w = Tensor<S>({1, dims.tu_dec});
  p.tu_mlp2_b = Tensor<S>::zeros({1});

  Rng rng(seed, 0x90DE1ull);
  p.visit([&rng](const char* name, Tensor<S>& t) {
    const std::string n(name);
    const bool is_bias = n.size() > 2 && n.compare(n.size() - 2, 2, ".b") == 0;
    if (is_bias) return;  // biases stay zero
    if (n == "ag.null" || n == "ag.rquery") {
      for (int i = 0; i < t.numel(); ++i) t[i] = S(rng.uniform(-0.1, 0.1));
      return;
    }
    const int fan_in = t.cols();
    const double lim = std::sqrt(6.0 / fan_in);
    for (int i = 0; i < t.numel(); ++i) t[i] = S(rng.uniform(-lim, lim));
  });
  return p;
}

// Tape leaves for one training step, in visit order.
template <typename S>
struct ParamNodes {
  std::vector<int> all;  // visit order
  int se_conv1_w, se_conv1_b, se_conv2_w, se_conv2_b;
  int ag_key_w, ag_key_b, ag_val_w, ag_val_b, ag_query_w, ag_query_b, ag_null;
  int ag_out_w, ag_out_b, ag_hid_w, ag_hid_b, ag_color_w, ag_color_b, ag_sigma_w, ag_sigma_b;
  int ag_rkey_w, ag_rkey_b, ag_rquery;
  int tu_enc1_w, tu_enc1_b, tu_enc2_w, tu_enc2_b, tu_enc3_w, tu_enc3_b;
  int tu_dec1_w, tu_dec1_b, tu_dec2_w, tu_dec2_b, tu_mlp1_w, tu_mlp1_b, tu_mlp2_w, tu_mlp2_b;
};

template <typename S>
ParamNodes<S> lift_params(Graph<S>& g, const ModelParams<S>& p) {
  ParamNodes<S> pn;
  std::vector<int*> slots = {
      &pn.se_conv1_w, &pn.se_conv1_b, &pn.se_conv2_w, &pn.se_conv2_b,
      &pn.ag_key_w, &pn.ag_key_b, &pn.ag_val_w, &pn.ag_val_b,
      &pn.ag_query_w, &pn.ag_query_b, &pn.ag_null,
      &pn.ag_out_w, &pn.ag_out_b, &pn.ag_hid_w, &pn.ag_hid_b,
      &pn.ag_color_w, &pn.ag_color_b, &pn.ag_sigma_w, &pn.ag_sigma_b,
      &pn.ag_rkey_w, &pn.ag_rkey_b, &pn.ag_rquery,
      &pn.tu_enc1_w, &pn.tu_enc1_b, &pn.tu_enc2_w, &pn.tu_enc2_b,
      &pn.tu_enc3_w, &pn.tu_enc3_b, &pn.tu_dec1_w, &pn.tu_dec1_b,
      &pn.tu_dec2_w, &pn.tu_dec2_b, &pn.tu_mlp1_w, &pn.tu_mlp1_b,
      &pn.tu_mlp2_w, &pn.tu_mlp2_b};
  size_t i = 0;
  p.visit([&](const char*, const Tensor<S>& t) {
    const int id = g.leaf(t);
    *slots[i++] = id;
    pn.all.push_back(id);
  });
  return pn;
}

// Shared source encoder: 3x3 stride-2 conv + ReLU + 1x1 conv, CHW in [0,1].
template <typename S>
int encode_source(Graph<S>& g, const ParamNodes<S>& pn, int image) {
  const Tensor<S>& img = g.val(image);
  for (int i = 0; i < img.numel(); ++i)
    if (!std::isfinite(double(img[i])))
      throw std::invalid_argument("encode_source: non-finite input");
  const int h = relu(g, conv2d(g, image, pn.se_conv1_w, pn.se_conv1_b, 3, 3, 2, 1));
  return conv2d(g, h, pn.se_conv2_w, pn.se_conv2_b, 1, 1, 1, 0);
}

// Positional encodings (graph constants).
template <typename S>
Tensor<S> posenc_points(const std::vector<Vec3>& points, const std::vector<Vec3>& dirs,
                        const Vec3& center, double radius) {
  const int M = int(points.size());
  Tensor<S> pe({M, kQueryDim});
  for (int m = 0; m < M; ++m) {
    const Vec3 xn = (points[size_t(m)] - center) / radius;
    int j = 0;
    for (int b = 0; b < kPeBands; ++b) {
      const double f = double(1 << b) * M_PI;
      for (int a = 0; a < 3; ++a) pe[m * kQueryDim + j++] = S(std::sin(f * xn[a]));
      for (int a = 0; a < 3; ++a) pe[m * kQueryDim + j++] = S(std::cos(f * xn[a]));
    }
    for (int a = 0; a < 3; ++a) pe[m * kQueryDim + j++] = S(dirs[size_t(m)][a]);
  }
  return pe;
}

template <typename S>
Tensor<S> posenc_depths(const std::vector<double>& depths, double near, double far) {
  const int M = int(depths.size());
  Tensor<S> pe({M, kDepthPeDim});
  for (int m = 0; m < M; ++m) {
    const double tn = (depths[size_t(m)] - near) / (far - near);
    int j = 0;
    for (int b = 0; b < kPeBands; ++b) {
      const double f = double(1 << b) * M_PI;
      pe[m * kDepthPeDim + j++] = S(std::sin(f * tn));
      pe[m * kDepthPeDim + j++] = S(std::cos(f * tn));
    }
  }
  return pe;
}

struct PointForward {
  int mu = -1;      // [M,3]
  int sigma2 = -1;  // [M,1]
  int token = -1;   // [M,hidden]
};

// Per-point aggregation and heads. feats: per-view encoded maps; uv/valid/
// colors from the projection plan; query_pe: [M,27] constant node.
template <typename S>
PointForward aggregate_points(Graph<S>& g, const ParamNodes<S>& pn, const std::vector<int>& feats,
                              const std::vector<std::vector<S>>& uv_feat,
                              const std::vector<std::vector<uint8_t>>& valid,
                              const std::vector<int>& color_nodes, int query_pe) {
  const int N = int(feats.size());
  std::vector<int> keys(static_cast<size_t>(N)), vals(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const int samp = bilinear_sample_map(g, feats[size_t(n)], uv_feat[size_t(n)],
                                         valid[size_t(n)]);
    const int in = concat_cols(g, samp, color_nodes[size_t(n)]);
    keys[size_t(n)] = linear(g, in, pn.ag_key_w, pn.ag_key_b);
    vals[size_t(n)] = linear(g, in, pn.ag_val_w, pn.ag_val_b);
  }
  const int q = linear(g, query_pe, pn.ag_query_w, pn.ag_query_b);
  const int pooled = view_attn_pool(g, q, keys, vals, valid, pn.ag_null);

  PointForward out;
  out.token = linear(g, pooled, pn.ag_out_w, pn.ag_out_b);
  const int h = relu(g, linear(g, out.token, pn.ag_hid_w, pn.ag_hid_b));
  out.mu = sigmoid(g, linear(g, h, pn.ag_color_w, pn.ag_color_b));
  out.sigma2 = add_scalar(g, softplus(g, linear(g, h, pn.ag_sigma_w, pn.ag_sigma_b)), S(kSigmaMin));
  return out;
}

// Ray-level render weights: a learned query against per-sample keys built from
// tokens and depth encodings. tokens: [R*K,hidden]; depth_pe: [R*K,8] constant.
template <typename S>
int render_weights(Graph<S>& g, const ParamNodes<S>& pn, int tokens, int depth_pe, int R, int K) {
  const int rk = linear(g, concat_cols(g, tokens, depth_pe), pn.ag_rkey_w, pn.ag_rkey_b);
  const int logits = scale(g, matvec(g, rk, pn.ag_rquery), S(1.0 / std::sqrt(double(kHidden))));
  return softmax_rows(g, reshape(g, logits, {R, K}));
}

// Stride-8 target features. image: [3,H,W] with dims divisible by 8.
template <typename S>
int encode_target(Graph<S>& g, const ParamNodes<S>& pn, int image) {
  const Tensor<S>& img = g.val(image);
  if (img.dim(1) % 8 != 0 || img.dim(2) % 8 != 0)
    throw std::invalid_argument("encode_target: dims must be divisible by 8");
  const int e1 = relu(g, conv2d(g, image, pn.tu_enc1_w, pn.tu_enc1_b, 3, 3, 2, 1));
  const int e2 = relu(g, conv2d(g, e1, pn.tu_enc2_w, pn.tu_enc2_b, 3, 3, 2, 1));
  return relu(g, conv2d(g, e2, pn.tu_enc3_w, pn.tu_enc3_b, 3, 3, 2, 1));
}

// Low-res uncertainty from target features: two 3x3 convs, a per-pixel MLP,
// softplus with a positive floor.
template <typename S>
int decode_uncertainty(Graph<S>& g, const ParamNodes<S>& pn, int feats) {
  const int d1 = relu(g, conv2d(g, feats, pn.tu_dec1_w, pn.tu_dec1_b, 3, 3, 1, 1));
  const int d2 = relu(g, conv2d(g, d1, pn.tu_dec2_w, pn.tu_dec2_b, 3, 3, 1, 1));
  const int m1 = relu(g, conv2d(g, d2, pn.tu_mlp1_w, pn.tu_mlp1_b, 1, 1, 1, 0));
  const int m2 = conv2d(g, m1, pn.tu_mlp2_w, pn.tu_mlp2_b, 1, 1, 1, 0);
  return add_scalar(g, softplus(g, m2), S(kBetaMin));
}

// Full-resolution target-view uncertainty map (training only).
template <typename S>
int beta_t_map(Graph<S>& g, const ParamNodes<S>& pn, int image) {
  const Tensor<S>& img = g.val(image);
  const int H = img.dim(1), W = img.dim(2);
  return bilinear_upsample(g, decode_uncertainty(g, pn, encode_target(g, pn, image)), H, W);
}

// Exact per-pixel lookup into a full-resolution uncertainty map at integer
// pixel coordinates. The training tape uses an equivalent gather; this is the
// plain, bounds-checked form.
template <typename S>
std::vector<S> sample_beta_t(const Tensor<S>& map, const std::vector<std::pair<int, int>>& xy) {
  if (map.ndim() != 3 || map.dim(0) != 1)
    throw std::invalid_argument("sample_beta_t: expected a [1,H,W] map");
  const int H = map.dim(1), W = map.dim(2);
  std::vector<S> out;
  out.reserve(xy.size());
  for (const auto& [x, y] : xy) {
    if (x < 0 || x >= W || y < 0 || y >= H)
      throw std::out_of_range("sample_beta_t: pixel outside map");
    out.push_back(map[y * W + x]);
  }
  return out;
}

// HWC image to CHW tensor.
template <typename S>
Tensor<S> image_to_chw(const ImageF& img) {
  Tensor<S> t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = S(img.at(y, x, c));
  return t;
}

}  // namespace mvu
