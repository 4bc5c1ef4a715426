#pragma once

#include "mvu/ops.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

// Per-ray compositing of the K Gaussian components: the rendered color is the
// weight-mixed mean and the source-view uncertainty is sum alpha^2 sigma^2,
// taken verbatim (deliberately not the mixture variance).

namespace mvu {

template <typename S>
struct PixelRender {
  std::array<S, 3> color;
  S beta_s;
};

// alpha: K weights summing to 1 (checked), mu: K RGB rows, sigma2: K positive.
template <typename S>
PixelRender<S> composite(const std::vector<S>& alpha, const std::vector<std::array<S, 3>>& mu,
                         const std::vector<S>& sigma2) {
  const size_t K = alpha.size();
  if (mu.size() != K || sigma2.size() != K || K == 0)
    throw std::invalid_argument("composite: size mismatch");
  S asum = S(0);
  for (S a : alpha) asum += a;
  if (std::abs(asum - S(1)) > S(1e-6)) throw std::invalid_argument("composite: weights must sum to 1");
  for (S s : sigma2)
    if (!(s > S(0))) throw std::invalid_argument("composite: sigma2 must be positive");
  PixelRender<S> out{{S(0), S(0), S(0)}, S(0)};
  for (size_t k = 0; k < K; ++k) {
    for (int c = 0; c < 3; ++c) out.color[c] += alpha[k] * mu[k][c];
    out.beta_s += alpha[k] * alpha[k] * sigma2[k];
  }
  return out;
}

// Isotropic Gaussian mixture density at z (test support, double only).
inline double mixture_pdf(const std::vector<double>& alpha,
                          const std::vector<std::array<double, 3>>& mu,
                          const std::vector<double>& sigma2, const std::array<double, 3>& z) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double p = 0.0;
  for (size_t k = 0; k < alpha.size(); ++k) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = z[c] - mu[k][c];
      d2 += d * d;
    }
    p += alpha[k] * std::pow(kTwoPi * sigma2[k], -1.5) * std::exp(-0.5 * d2 / sigma2[k]);
  }
  return p;
}

// Tape version over a ray batch. alpha:[R,K], mu:[R*K,3] -> color [R,3].
template <typename S>
int mix_rows(Graph<S>& g, int alpha, int mu) {
  const int R = g.val(alpha).rows(), K = g.val(alpha).cols();
  const int C = g.val(mu).cols();
  if (g.val(mu).rows() != R * K) throw std::invalid_argument("mix_rows: shape mismatch");
  Tensor<S> out = Tensor<S>::zeros({R, C});
  const Tensor<S>& A = g.val(alpha);
  const Tensor<S>& M = g.val(mu);
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < C; ++c) out[r * C + c] += A[r * K + k] * M[(r * K + k) * C + c];
  return g.emplace(std::move(out), {alpha, mu}, [alpha, mu, R, K, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& A2 = gr.val(alpha);
    const Tensor<S>& M2 = gr.val(mu);
    Tensor<S>& da = gr.grad(alpha);
    Tensor<S>& dm = gr.grad(mu);
    for (int r = 0; r < R; ++r)
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < C; ++c) {
          da[r * K + k] += d[r * C + c] * M2[(r * K + k) * C + c];
          dm[(r * K + k) * C + c] += d[r * C + c] * A2[r * K + k];
        }
  });
}

// beta_s per ray: alpha:[R,K], sigma2:[R*K,1] -> [R,1] of sum_k alpha^2 sigma2.
template <typename S>
int mix_sq_rows(Graph<S>& g, int alpha, int sigma2) {
  const int R = g.val(alpha).rows(), K = g.val(alpha).cols();
  if (g.val(sigma2).numel() != R * K) throw std::invalid_argument("mix_sq_rows: shape mismatch");
  Tensor<S> out = Tensor<S>::zeros({R, 1});
  const Tensor<S>& A = g.val(alpha);
  const Tensor<S>& V = g.val(sigma2);
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < K; ++k) out[r] += A[r * K + k] * A[r * K + k] * V[r * K + k];
  return g.emplace(std::move(out), {alpha, sigma2}, [alpha, sigma2, R, K](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& A2 = gr.val(alpha);
    const Tensor<S>& V2 = gr.val(sigma2);
    Tensor<S>& da = gr.grad(alpha);
    Tensor<S>& dv = gr.grad(sigma2);
    for (int r = 0; r < R; ++r)
      for (int k = 0; k < K; ++k) {
        da[r * K + k] += S(2) * A2[r * K + k] * V2[r * K + k] * d[r];
        dv[r * K + k] += A2[r * K + k] * A2[r * K + k] * d[r];
      }
  });
}

}  // namespace mvu
