#pragma once

#include "mvu/image.hpp"
#include "mvu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

// Patch losses and the fused heteroscedastic objective, plus the reporting
// metrics (PSNR, Gaussian-window SSIM, AUROC). Patch layout convention: a
// patch is a 3x3 ray grid with dilation 2; per-patch rows of 9 positions are
// grouped (patch, channel) so SSIM/MSE statistics run over spatial positions.

namespace mvu {

constexpr double kSsimC1 = 0.01 * 0.01;  // (k1 L)^2 with L = 1
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kBetaFloor = 1e-3;  // sigma_min and beta_min share this floor
constexpr double kPsnrCap = 99.0;

enum class LossMode { Full, NoBeta, BetaSOnly, BetaTOnly, MseOnly, SsimOnly };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::Full: return "full";
    case LossMode::NoBeta: return "no_beta";
    case LossMode::BetaSOnly: return "beta_s_only";
    case LossMode::BetaTOnly: return "beta_t_only";
    case LossMode::MseOnly: return "mse_only";
    case LossMode::SsimOnly: return "ssim_only";
  }
  return "full";
}

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "full") return LossMode::Full;
  if (s == "no_beta") return LossMode::NoBeta;
  if (s == "beta_s_only") return LossMode::BetaSOnly;
  if (s == "beta_t_only") return LossMode::BetaTOnly;
  if (s == "mse_only") return LossMode::MseOnly;
  if (s == "ssim_only") return LossMode::SsimOnly;
  throw std::invalid_argument("unknown loss mode: " + s);
}

struct LossConfig {
  double lambda = 0.1;
  double omega = 0.5;
  double w_mse = 0.8;
  double w_ssim = 0.2;
  LossMode mode = LossMode::Full;

  void validate() const {
    if (!(lambda > 0)) throw std::invalid_argument("loss: lambda must be positive");
    if (omega < 0 || omega > 1) throw std::invalid_argument("loss: omega must be in [0,1]");
    if (std::abs(w_mse + w_ssim - 1.0) > 1e-9)
      throw std::invalid_argument("loss: w_mse + w_ssim must equal 1");
  }
};

// ---------- plain per-patch forms (position-major storage: 9 x 3) ----------

template <typename S>
S mse_patch(const S* gt, const S* pred, int n = 27) {
  S acc = S(0);
  for (int i = 0; i < n; ++i) {
    const S d = pred[i] - gt[i];
    acc += d * d;
  }
  return acc / S(n);
}

// SSIM over 9 spatial positions of one channel, population statistics.
template <typename S>
S ssim_channel(const S* x, const S* y, int n, int stride) {
  S mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i * stride];
    my += y[i * stride];
  }
  mx /= S(n);
  my /= S(n);
  S vx = 0, vy = 0, cxy = 0;
  for (int i = 0; i < n; ++i) {
    const S dx = x[i * stride] - mx, dy = y[i * stride] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  vx /= S(n);
  vy /= S(n);
  cxy /= S(n);
  const S c1 = S(kSsimC1), c2 = S(kSsimC2);
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// Channel-averaged SSIM of a 3x3x3 patch (values position-major, 9 x 3).
template <typename S>
S ssim_patch(const S* gt, const S* pred) {
  S acc = S(0);
  for (int c = 0; c < 3; ++c) acc += ssim_channel(pred + c, gt + c, 9, 3);
  return acc / S(3);
}

template <typename S>
S fuse_uncertainty(S beta_t, S beta_s, S omega) {
  if (!(beta_t > S(0)) || !(beta_s > S(0)))
    throw std::invalid_argument("fuse_uncertainty: betas must be positive");
  return omega * beta_t + (S(1) - omega) * beta_s;
}

// Eq.-3-style single-uncertainty objective over an arbitrary value array.
template <typename S>
S uncer_loss_single(const S* c, const S* c_hat, int n, S beta, S lambda) {
  if (!(beta > S(0))) throw std::invalid_argument("uncer_loss_single: beta must be positive");
  S mse = S(0);
  for (int i = 0; i < n; ++i) {
    const S d = c_hat[i] - c[i];
    mse += d * d;
  }
  mse /= S(n);
  return mse / (S(2) * beta * beta) + lambda * std::log(beta);
}

// ---------- tape versions ----------

// Per-row SSIM for (patch,channel) rows of 9 positions. pred and tgt are
// [R,9] nodes (tgt typically a constant leaf).
template <typename S>
int ssim_rows(Graph<S>& g, int pred, int tgt) {
  const int R = g.val(pred).rows();
  if (g.val(pred).cols() != g.val(tgt).cols() || g.val(tgt).rows() != R)
    throw std::invalid_argument("ssim_rows: shape mismatch");
  const int mx = row_mean(g, pred);
  const int my = row_mean(g, tgt);
  const int xc = sub_colvec(g, pred, mx);
  const int yc = sub_colvec(g, tgt, my);
  const int vx = row_mean(g, square(g, xc));
  const int vy = row_mean(g, square(g, yc));
  const int cxy = row_mean(g, mul(g, xc, yc));
  const int num = mul(g, add_scalar(g, scale(g, mul(g, mx, my), S(2)), S(kSsimC1)),
                      add_scalar(g, scale(g, cxy, S(2)), S(kSsimC2)));
  const int den = mul(g, add_scalar(g, add(g, square(g, mx), square(g, my)), S(kSsimC1)),
                      add_scalar(g, add(g, vx, vy), S(kSsimC2)));
  return div(g, num, den);
}

template <typename S>
struct PatchLossNodes {
  int loss = -1;       // scalar
  int data_term = -1;  // [P,1] weighted residual per patch
  int mse = -1;        // [P,1]
  int ssim = -1;       // [P,1]
  int beta_ts = -1;    // [P,1], -1 in no_beta mode
};

// pred_rows/tgt_rows: [3P,9] with rows grouped (patch, channel); beta_s/beta_t:
// [P,1] per-patch uncertainties. Returns the scalar objective per the active
// mode plus per-patch diagnostics.
template <typename S>
PatchLossNodes<S> multi_uncer_loss(Graph<S>& g, int pred_rows, int tgt_rows, int beta_s,
                                   int beta_t, const LossConfig& cfg) {
  cfg.validate();
  const int R3 = g.val(pred_rows).rows();
  if (R3 % 3 != 0) throw std::invalid_argument("multi_uncer_loss: rows must group 3 channels");
  const int P = R3 / 3;

  PatchLossNodes<S> out;
  const int diff = sub(g, pred_rows, tgt_rows);
  const int mse_rows = row_mean(g, square(g, diff));                 // [3P,1]
  out.mse = row_mean(g, reshape(g, mse_rows, {P, 3}));               // [P,1]
  const int ssim_r = ssim_rows(g, pred_rows, tgt_rows);              // [3P,1]
  out.ssim = row_mean(g, reshape(g, ssim_r, {P, 3}));                // [P,1]
  const int ssim_loss = add_scalar(g, neg(g, out.ssim), S(1));       // 1 - SSIM

  const S wm = S(cfg.w_mse), ws = S(cfg.w_ssim);
  switch (cfg.mode) {
    case LossMode::MseOnly:
      out.data_term = scale(g, out.mse, wm);
      break;
    case LossMode::SsimOnly:
      out.data_term = scale(g, ssim_loss, ws);
      break;
    default:
      out.data_term = add(g, scale(g, out.mse, wm), scale(g, ssim_loss, ws));
  }

  if (cfg.mode == LossMode::NoBeta) {
    out.loss = mean_all(g, out.data_term);
    return out;
  }

  S omega = S(cfg.omega);
  if (cfg.mode == LossMode::BetaSOnly) omega = S(0);
  if (cfg.mode == LossMode::BetaTOnly) omega = S(1);
  out.beta_ts = add(g, scale(g, beta_t, omega), scale(g, beta_s, S(1) - omega));
  const int denom = scale(g, square(g, out.beta_ts), S(2));
  const int data = div(g, out.data_term, denom);
  const int logterm = scale(g, log_(g, out.beta_ts), S(cfg.lambda));
  out.loss = mean_all(g, add(g, data, logterm));
  return out;
}

// ---------- reporting metrics ----------

inline double image_mse(const ImageF& a, const ImageF& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("image_mse: dimension mismatch");
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  return acc / double(a.data.size());
}

inline double psnr_from_mse(double mse, double cap = kPsnrCap) {
  if (mse <= 0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

inline double image_psnr(const ImageF& a, const ImageF& b, double cap = kPsnrCap) {
  return psnr_from_mse(image_mse(a, b), cap);
}

// Full-image SSIM with the standard 11x11 Gaussian window (sigma 1.5),
// valid-region convolution, channels averaged. Reporting only; the training
// loss uses the 9-position patch form above.
inline double image_ssim(const ImageF& a, const ImageF& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("image_ssim: dimension mismatch");
  constexpr int kWin = 11;
  const int H = a.height, W = a.width, C = a.channels;
  if (H < kWin || W < kWin) throw std::invalid_argument("image_ssim: image smaller than window");
  double win[kWin];
  {
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      win[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
      s += win[i];
    }
    for (double& w : win) w /= s;
  }
  double acc = 0;
  int count = 0;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y + kWin <= H; ++y)
      for (int x = 0; x + kWin <= W; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int j = 0; j < kWin; ++j)
          for (int i = 0; i < kWin; ++i) {
            const double w = win[j] * win[i];
            const double pa = a.at(y + j, x + i, c), pb = b.at(y + j, x + i, c);
            mx += w * pa;
            my += w * pb;
            xx += w * pa * pa;
            yy += w * pb * pb;
            xy += w * pa * pb;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        acc += ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
               ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
        ++count;
      }
  return acc / count;
}

// Rank-based AUROC of scores against binary labels, ties by midrank.
// Degenerate label sets (all 0 or all 1) return 0.5.
inline double auroc(const std::vector<float>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(),
            [&](size_t i, size_t j) { return scores[i] < scores[j]; });
  size_t npos = 0;
  for (uint8_t l : labels) npos += l ? 1 : 0;
  const size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return 0.5;
  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (double(i + 1) + double(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - double(npos) * (double(npos) + 1) / 2.0;
  return u / (double(npos) * double(nneg));
}

}  // namespace mvu
