#pragma once

#include "mvu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

// Structured tape ops: convolution, bilinear sampling/upsampling, and masked
// attention pooling over source views. Images and feature maps are CHW.

namespace mvu {

// y = w * im2col(x) + b. x:[Cin,H,W], w:[Cout,Cin*kh*kw], b:[Cout] -> [Cout,Ho,Wo]
template <typename S>
int conv2d(Graph<S>& g, int x, int w, int b, int kh, int kw, int stride, int pad) {
  const Tensor<S>& X = g.val(x);
  const int Cin = X.dim(0), H = X.dim(1), W = X.dim(2);
  const int Cout = g.val(w).rows();
  const int CK = Cin * kh * kw;
  if (g.val(w).cols() != CK || g.val(b).numel() != Cout)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const int P = Ho * Wo;

  auto cols = std::make_shared<Tensor<S>>(std::vector<int>{CK, P});
  for (int c = 0; c < Cin; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        const int row = (c * kh + dy) * kw + dx;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + dy;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + dx;
            S v = S(0);
            if (iy >= 0 && iy < H && ix >= 0 && ix < W) v = X[(c * H + iy) * W + ix];
            (*cols)[row * P + oy * Wo + ox] = v;
          }
        }
      }

  Tensor<S> out({Cout, Ho, Wo});
  out.mat(Cout, P).noalias() = g.val(w).mat(Cout, CK) * cols->mat(CK, P);
  const Tensor<S>& B = g.val(b);
  for (int c = 0; c < Cout; ++c)
    for (int p = 0; p < P; ++p) out[c * P + p] += B[c];

  return g.emplace(std::move(out), {x, w, b},
                   [x, w, b, Cin, H, W, Cout, CK, Ho, Wo, P, kh, kw, stride, pad,
                    cols](Graph<S>& gr, int self) {
    auto d = gr.grad(self).mat(Cout, P);
    gr.grad(w).mat(Cout, CK).noalias() += d * cols->mat(CK, P).transpose();
    Tensor<S>& db = gr.grad(b);
    const Tensor<S>& dt = gr.grad(self);
    for (int c = 0; c < Cout; ++c)
      for (int p = 0; p < P; ++p) db[c] += dt[c * P + p];
    // dcols = w^T d, scattered back to the input (col2im)
    Tensor<S> dcols({CK, P});
    dcols.mat(CK, P).noalias() = gr.val(w).mat(Cout, CK).transpose() * d;
    Tensor<S>& dx = gr.grad(x);
    for (int c = 0; c < Cin; ++c)
      for (int dy = 0; dy < kh; ++dy)
        for (int dxk = 0; dxk < kw; ++dxk) {
          const int row = (c * kh + dy) * kw + dxk;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride - pad + dy;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride - pad + dxk;
              if (ix < 0 || ix >= W) continue;
              dx[(c * H + iy) * W + ix] += dcols[row * P + oy * Wo + ox];
            }
          }
        }
  });
}

// Samples a CHW map at M (u,v) positions (u along width). Coordinates are
// clamped to the valid range first; rows with valid=false come out zero and
// receive no gradient. Gradient flows into the map only.
template <typename S>
int bilinear_sample_map(Graph<S>& g, int feat, const std::vector<S>& uv,
                        const std::vector<uint8_t>& valid) {
  const Tensor<S>& F = g.val(feat);
  const int C = F.dim(0), H = F.dim(1), W = F.dim(2);
  const int M = static_cast<int>(valid.size());
  if (static_cast<int>(uv.size()) != 2 * M)
    throw std::invalid_argument("bilinear_sample_map: uv size");

  struct Tap {
    int i0, j0;
    S fu, fv;
  };
  auto taps = std::make_shared<std::vector<Tap>>(M);
  auto vmask = std::make_shared<std::vector<uint8_t>>(valid);
  Tensor<S> out = Tensor<S>::zeros({M, C});
  for (int m = 0; m < M; ++m) {
    if (!valid[m]) continue;
    S u = std::min(std::max(uv[2 * m + 0], S(0)), S(W - 1));
    S v = std::min(std::max(uv[2 * m + 1], S(0)), S(H - 1));
    int i0 = std::min(static_cast<int>(std::floor(u)), W - 2);
    int j0 = std::min(static_cast<int>(std::floor(v)), H - 2);
    i0 = std::max(i0, 0);
    j0 = std::max(j0, 0);
    const S fu = u - S(i0), fv = v - S(j0);
    (*taps)[m] = {i0, j0, fu, fv};
    for (int c = 0; c < C; ++c) {
      const S* p = &F[c * H * W];
      const S a = p[j0 * W + i0], b = p[j0 * W + i0 + 1];
      const S cc = p[(j0 + 1) * W + i0], dd = p[(j0 + 1) * W + i0 + 1];
      out[m * C + c] =
          (S(1) - fv) * ((S(1) - fu) * a + fu * b) + fv * ((S(1) - fu) * cc + fu * dd);
    }
  }
  return g.emplace(std::move(out), {feat}, [feat, C, H, W, M, taps, vmask](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& df = gr.grad(feat);
    for (int m = 0; m < M; ++m) {
      if (!(*vmask)[m]) continue;
      const auto& t = (*taps)[m];
      for (int c = 0; c < C; ++c) {
        const S dm = d[m * C + c];
        S* p = &df[c * H * W];
        p[t.j0 * W + t.i0] += (S(1) - t.fv) * (S(1) - t.fu) * dm;
        p[t.j0 * W + t.i0 + 1] += (S(1) - t.fv) * t.fu * dm;
        p[(t.j0 + 1) * W + t.i0] += t.fv * (S(1) - t.fu) * dm;
        p[(t.j0 + 1) * W + t.i0 + 1] += t.fv * t.fu * dm;
      }
    }
  });
}

// Corner-aligned bilinear upsampling of a CHW map to HxW.
template <typename S>
int bilinear_upsample(Graph<S>& g, int x, int H, int W) {
  const Tensor<S>& X = g.val(x);
  const int C = X.dim(0), Hs = X.dim(1), Ws = X.dim(2);
  const S sy = H > 1 ? S(Hs - 1) / S(H - 1) : S(0);
  const S sx = W > 1 ? S(Ws - 1) / S(W - 1) : S(0);
  Tensor<S> out({C, H, W});
  for (int y = 0; y < H; ++y) {
    const S v = S(y) * sy;
    const int j0 = std::min(static_cast<int>(std::floor(v)), Hs - 2 < 0 ? 0 : Hs - 2);
    const S fv = v - S(j0);
    for (int xo = 0; xo < W; ++xo) {
      const S u = S(xo) * sx;
      const int i0 = std::min(static_cast<int>(std::floor(u)), Ws - 2 < 0 ? 0 : Ws - 2);
      const S fu = u - S(i0);
      for (int c = 0; c < C; ++c) {
        const S* p = &X[c * Hs * Ws];
        const S a = p[j0 * Ws + i0];
        const S b = (i0 + 1 < Ws) ? p[j0 * Ws + i0 + 1] : a;
        const S cc = (j0 + 1 < Hs) ? p[(j0 + 1) * Ws + i0] : a;
        const S dd = (i0 + 1 < Ws && j0 + 1 < Hs) ? p[(j0 + 1) * Ws + i0 + 1] : b;
        out[(c * H + y) * W + xo] =
            (S(1) - fv) * ((S(1) - fu) * a + fu * b) + fv * ((S(1) - fu) * cc + fu * dd);
      }
    }
  }
  return g.emplace(std::move(out), {x}, [x, C, H, W, Hs, Ws, sy, sx](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& dx = gr.grad(x);
    for (int y = 0; y < H; ++y) {
      const S v = S(y) * sy;
      const int j0 = std::min(static_cast<int>(std::floor(v)), Hs - 2 < 0 ? 0 : Hs - 2);
      const S fv = v - S(j0);
      for (int xo = 0; xo < W; ++xo) {
        const S u = S(xo) * sx;
        const int i0 = std::min(static_cast<int>(std::floor(u)), Ws - 2 < 0 ? 0 : Ws - 2);
        const S fu = u - S(i0);
        for (int c = 0; c < C; ++c) {
          const S dm = d[(c * H + y) * W + xo];
          S* p = &dx[c * Hs * Ws];
          p[j0 * Ws + i0] += (S(1) - fv) * (S(1) - fu) * dm;
          if (i0 + 1 < Ws) p[j0 * Ws + i0 + 1] += (S(1) - fv) * fu * dm;
          if (j0 + 1 < Hs) p[(j0 + 1) * Ws + i0] += fv * (S(1) - fu) * dm;
          if (i0 + 1 < Ws && j0 + 1 < Hs) p[(j0 + 1) * Ws + i0 + 1] += fv * fu * dm;
        }
      }
    }
  });
}

// Single-head attention pooling over N source views. q:[M,D]; keys/vals: N
// nodes of [M,D]; valid[n][m] masks views per point. Invalid views are skipped
// outright (identical to -inf logits), and summations over views run in sorted
// order so the result is bit-identical under any view permutation. Points with
// no valid view take the learned null token.
template <typename S>
int view_attn_pool(Graph<S>& g, int q, const std::vector<int>& keys,
                   const std::vector<int>& vals,
                   const std::vector<std::vector<uint8_t>>& valid, int null_token) {
  const int N = static_cast<int>(keys.size());
  const int M = g.val(q).rows(), D = g.val(q).cols();
  if (static_cast<int>(vals.size()) != N || static_cast<int>(valid.size()) != N)
    throw std::invalid_argument("view_attn_pool: view count mismatch");
  if (g.val(null_token).numel() != D)
    throw std::invalid_argument("view_attn_pool: null token size");
  const S inv_sqrt_d = S(1) / std::sqrt(S(D));

  auto probs = std::make_shared<Tensor<S>>(Tensor<S>::zeros({N, M}));
  auto vmask = std::make_shared<std::vector<std::vector<uint8_t>>>(valid);
  Tensor<S> out({M, D});
  std::vector<S> buf(static_cast<size_t>(N));
  std::vector<S> logit(static_cast<size_t>(N));
  for (int m = 0; m < M; ++m) {
    int nv = 0;
    S mx = S(0);
    for (int n = 0; n < N; ++n) {
      if (!valid[n][m]) continue;
      const S* qp = &g.val(q)[m * D];
      const S* kp = &g.val(keys[n])[m * D];
      S s = S(0);
      for (int c = 0; c < D; ++c) s += qp[c] * kp[c];
      s *= inv_sqrt_d;
      logit[n] = s;
      mx = nv == 0 ? s : std::max(mx, s);
      ++nv;
    }
    if (nv == 0) {
      const Tensor<S>& nt = g.val(null_token);
      for (int c = 0; c < D; ++c) out[m * D + c] = nt[c];
      continue;
    }
    int bi = 0;
    for (int n = 0; n < N; ++n)
      if (valid[n][m]) buf[bi++] = std::exp(logit[n] - mx);
    S den;
    {
      std::vector<S> tmp(buf.begin(), buf.begin() + nv);
      den = sorted_sum(tmp.data(), nv);
    }
    for (int n = 0; n < N; ++n)
      if (valid[n][m]) (*probs)[n * M + m] = std::exp(logit[n] - mx) / den;
    for (int c = 0; c < D; ++c) {
      bi = 0;
      for (int n = 0; n < N; ++n) {
        if (!valid[n][m]) continue;
        buf[bi++] = (*probs)[n * M + m] * g.val(vals[n])[m * D + c];
      }
      out[m * D + c] = sorted_sum(buf.data(), nv);
    }
  }

  std::vector<int> parents = {q, null_token};
  parents.insert(parents.end(), keys.begin(), keys.end());
  parents.insert(parents.end(), vals.begin(), vals.end());
  auto kid = std::make_shared<std::vector<int>>(keys);
  auto vid = std::make_shared<std::vector<int>>(vals);
  return g.emplace(std::move(out), std::move(parents),
                   [q, null_token, kid, vid, vmask, probs, N, M, D,
                    inv_sqrt_d](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    std::vector<S> dp(static_cast<size_t>(N));
    for (int m = 0; m < M; ++m) {
      int nv = 0;
      for (int n = 0; n < N; ++n)
        if ((*vmask)[n][m]) ++nv;
      if (nv == 0) {
        Tensor<S>& dn = gr.grad(null_token);
        for (int c = 0; c < D; ++c) dn[c] += d[m * D + c];
        continue;
      }
      S pdp = S(0);
      for (int n = 0; n < N; ++n) {
        if (!(*vmask)[n][m]) continue;
        const S* vp = &gr.val((*vid)[n])[m * D];
        S s = S(0);
        for (int c = 0; c < D; ++c) s += d[m * D + c] * vp[c];
        dp[n] = s;
        pdp += (*probs)[n * M + m] * s;
      }
      for (int n = 0; n < N; ++n) {
        if (!(*vmask)[n][m]) continue;
        const S p = (*probs)[n * M + m];
        const S dl = p * (dp[n] - pdp) * inv_sqrt_d;
        S* dv = &gr.grad((*vid)[n])[m * D];
        S* dk = &gr.grad((*kid)[n])[m * D];
        S* dq = &gr.grad(q)[m * D];
        const S* qp = &gr.val(q)[m * D];
        const S* kp = &gr.val((*kid)[n])[m * D];
        for (int c = 0; c < D; ++c) {
          dv[c] += p * d[m * D + c];
          dk[c] += dl * qp[c];
          dq[c] += dl * kp[c];
        }
      }
    }
  });
}

}  // namespace mvu
