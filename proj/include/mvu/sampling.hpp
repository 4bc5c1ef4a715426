#pragma once

#include "mvu/camera.hpp"
#include "mvu/image.hpp"
#include "mvu/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mvu {

// 4-neighbor bilinear blend on an interleaved image. Caller guarantees
// 0 <= u <= W-1, 0 <= v <= H-1; edge taps are clamped so exact-edge
// coordinates stay in bounds.
inline void bilinear_sample(const ImageF& img, double u, double v, float* out) {
  if (u < 0 || u > img.width - 1 || v < 0 || v > img.height - 1)
    throw std::out_of_range("bilinear_sample: coordinate outside image");
  int i0 = std::min(int(std::floor(u)), img.width - 2);
  int j0 = std::min(int(std::floor(v)), img.height - 2);
  i0 = std::max(i0, 0);
  j0 = std::max(j0, 0);
  const double fu = u - i0, fv = v - j0;
  for (int c = 0; c < img.channels; ++c) {
    const double a = img.at(j0, i0, c), b = img.at(j0, std::min(i0 + 1, img.width - 1), c);
    const double cc = img.at(std::min(j0 + 1, img.height - 1), i0, c);
    const double dd = img.at(std::min(j0 + 1, img.height - 1), std::min(i0 + 1, img.width - 1), c);
    out[c] = float((1 - fv) * ((1 - fu) * a + fu * b) + fv * ((1 - fu) * cc + fu * dd));
  }
}

// K depths in [near, far]: bin midpoints, or one uniform draw per bin when
// stratified. Strictly increasing either way.
inline std::vector<double> sample_along_ray(double near, double far, int K, bool stratified,
                                            Rng& rng) {
  if (K < 1) throw std::invalid_argument("sample_along_ray: K must be >= 1");
  if (!(near < far)) throw std::invalid_argument("sample_along_ray: need near < far");
  std::vector<double> t(static_cast<size_t>(K));
  const double w = (far - near) / K;
  for (int k = 0; k < K; ++k) {
    const double off = stratified ? rng.uniform() : 0.5;
    t[size_t(k)] = near + (k + off) * w;
  }
  return t;
}

// Per-view projection plan for a batch of M points: feature-grid coordinates,
// validity (positive depth and inside the source image), and bilinearly
// sampled source colors. Invalid entries are zero-filled.
struct ViewSamplePlan {
  std::vector<float> uv_feat;   // 2M, feature-map pixel coordinates
  std::vector<uint8_t> valid;   // M
  std::vector<float> colors;    // 3M
};

inline ViewSamplePlan plan_view_samples(const std::vector<Vec3>& points, const Intrinsics& intr,
                                        const Pose& pose, const ImageF& image, int feat_w,
                                        int feat_h) {
  const size_t M = points.size();
  ViewSamplePlan plan;
  plan.uv_feat.assign(2 * M, 0.f);
  plan.valid.assign(M, 0);
  plan.colors.assign(3 * M, 0.f);
  const double su = double(feat_w) / intr.width;
  const double sv = double(feat_h) / intr.height;
  for (size_t m = 0; m < M; ++m) {
    const Projection p = project(points[m], intr, pose);
    if (!(p.depth > 0) || p.u < 0 || p.u > intr.width - 1 || p.v < 0 || p.v > intr.height - 1)
      continue;
    plan.valid[m] = 1;
    plan.uv_feat[2 * m + 0] = float(p.u * su);
    plan.uv_feat[2 * m + 1] = float(p.v * sv);
    bilinear_sample(image, p.u, p.v, &plan.colors[3 * m]);
  }
  return plan;
}

}  // namespace mvu
