#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvu/losses.hpp"
#include "mvu/rng.hpp"

#include <cmath>
#include <vector>

using namespace mvu;
using TD = Tensor<double>;

namespace {

// Independent SSIM (population statistics over n values).
double ssim_direct(const double* x, const double* y, int n) {
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (int i = 0; i < n; ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
         ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
}

TD rand_rows(int R, int C, Rng& rng, double lo = 0.0, double hi = 1.0) {
  TD t({R, C});
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct LossInputs {
  int P;
  TD pred, tgt, beta_s, beta_t;
};

LossInputs make_inputs(Rng& rng, int P) {
  LossInputs in;
  in.P = P;
  in.pred = rand_rows(3 * P, 9, rng);
  in.tgt = rand_rows(3 * P, 9, rng);
  in.beta_s = rand_rows(P, 1, rng, 0.3, 1.5);
  in.beta_t = rand_rows(P, 1, rng, 0.3, 1.5);
  return in;
}

// Scalar oracle mirroring the documented objective.
double loss_oracle(const LossInputs& in, const LossConfig& cfg) {
  double total = 0;
  for (int p = 0; p < in.P; ++p) {
    double mse = 0, ssim = 0;
    for (int c = 0; c < 3; ++c) {
      const double* pr = &in.pred[(p * 3 + c) * 9];
      const double* tr = &in.tgt[(p * 3 + c) * 9];
      for (int i = 0; i < 9; ++i) mse += (pr[i] - tr[i]) * (pr[i] - tr[i]);
      ssim += ssim_direct(pr, tr, 9);
    }
    mse /= 27.0;
    ssim /= 3.0;
    double data;
    if (cfg.mode == LossMode::MseOnly)
      data = cfg.w_mse * mse;
    else if (cfg.mode == LossMode::SsimOnly)
      data = cfg.w_ssim * (1 - ssim);
    else
      data = cfg.w_mse * mse + cfg.w_ssim * (1 - ssim);
    if (cfg.mode == LossMode::NoBeta) {
      total += data;
      continue;
    }
    double omega = cfg.omega;
    if (cfg.mode == LossMode::BetaSOnly) omega = 0;
    if (cfg.mode == LossMode::BetaTOnly) omega = 1;
    const double b = omega * in.beta_t[p] + (1 - omega) * in.beta_s[p];
    total += data / (2 * b * b) + cfg.lambda * std::log(b);
  }
  return total / in.P;
}

double run_loss(const LossInputs& in, const LossConfig& cfg, Graph<double>* keep = nullptr,
                PatchLossNodes<double>* nodes = nullptr, std::vector<int>* leaves = nullptr) {
  Graph<double> local;
  Graph<double>& g = keep ? *keep : local;
  const int pred = g.leaf(in.pred);
  const int tgt = g.constant(in.tgt);
  const int bs = g.leaf(in.beta_s);
  const int bt = cfg.mode == LossMode::NoBeta ? -1 : g.leaf(in.beta_t);
  const PatchLossNodes<double> out = multi_uncer_loss(g, pred, tgt, bs, bt, cfg);
  if (nodes) *nodes = out;
  if (leaves) *leaves = {pred, bs, bt};
  return g.val(out.loss)[0];
}

}  // namespace

TEST_CASE("patch mse: zero at identity, exact on a constant offset") {
  double a[27], b[27];
  Rng rng(71);
  for (int i = 0; i < 27; ++i) {
    a[i] = rng.uniform(0, 1);
    b[i] = a[i] + 0.5;
  }
  CHECK(mse_patch(a, a) == 0.0);
  CHECK(mse_patch(a, b) == doctest::Approx(0.25).epsilon(1e-12));

  for (int i = 0; i < 27; ++i) b[i] = rng.uniform(0, 1);
  double want = 0;
  for (int i = 0; i < 27; ++i) want += (b[i] - a[i]) * (b[i] - a[i]);
  want /= 27;
  CHECK(mse_patch(a, b) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("patch ssim: identity, symmetry, range, direct oracle") {
  Rng rng(72);
  double x[27], y[27];
  for (int i = 0; i < 27; ++i) x[i] = rng.uniform(0, 1);
  CHECK(std::abs(ssim_patch(x, x) - 1.0) < 1e-9);

  for (int trial = 0; trial < 100; ++trial) {
    for (int i = 0; i < 27; ++i) {
      x[i] = rng.uniform(0, 1);
      y[i] = rng.uniform(0, 1);
    }
    const double s = ssim_patch(x, y);
    // fp contraction keeps this symmetric only to rounding, not bitwise
    CHECK(std::abs(s - ssim_patch(y, x)) < 1e-12);
    CHECK(s > -1.0);
    CHECK(s <= 1.0);
    // channel-by-channel against the plain formula
    double want = 0;
    for (int c = 0; c < 3; ++c) {
      double xc[9], yc[9];
      for (int i = 0; i < 9; ++i) {
        xc[i] = x[i * 3 + c];
        yc[i] = y[i * 3 + c];
      }
      want += ssim_direct(yc, xc, 9);
    }
    CHECK(std::abs(s - want / 3) < 1e-7);
  }
}

TEST_CASE("tape ssim matches the scalar form row by row") {
  Rng rng(73);
  const int R = 12;
  const TD pred = rand_rows(R, 9, rng), tgt = rand_rows(R, 9, rng);
  Graph<double> g;
  const int s = ssim_rows(g, g.leaf(pred), g.constant(tgt));
  REQUIRE(g.val(s).rows() == R);
  for (int r = 0; r < R; ++r)
    CHECK(g.val(s)[r] == doctest::Approx(ssim_direct(&pred[r * 9], &tgt[r * 9], 9)).epsilon(1e-12));
}

TEST_CASE("uncertainty fusion") {
  CHECK(fuse_uncertainty(0.5, 0.2, 0.0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(fuse_uncertainty(0.5, 0.2, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fuse_uncertainty(0.5, 0.2, 0.4) == doctest::Approx(0.32).epsilon(1e-12));
  CHECK_THROWS_AS(fuse_uncertainty(0.0, 0.2, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(fuse_uncertainty(0.5, -0.1, 0.5), std::invalid_argument);
}

TEST_CASE("single-uncertainty objective: zero point, scaling, minimizer") {
  double c[8], ch[8];
  Rng rng(74);
  for (int i = 0; i < 8; ++i) c[i] = ch[i] = rng.uniform(0, 1);
  CHECK(uncer_loss_single(c, ch, 8, 1.0, 0.1) == 0.0);

  // with a perfect fit, doubling beta adds exactly lambda log 2
  const double l1 = uncer_loss_single(c, ch, 8, 0.7, 0.1);
  const double l2 = uncer_loss_single(c, ch, 8, 1.4, 0.1);
  CHECK(l2 - l1 == doctest::Approx(0.1 * std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(uncer_loss_single(c, ch, 8, 0.0, 0.1), std::invalid_argument);

  // ternary search recovers beta* = sqrt(E / lambda)
  const double lambda = 0.1;
  for (double E : {0.01, 0.04, 0.25}) {
    for (int i = 0; i < 8; ++i) ch[i] = c[i] + std::sqrt(E);  // mse = E exactly
    double lo = 1e-3, hi = 10.0;
    for (int it = 0; it < 200; ++it) {
      const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
      if (uncer_loss_single(c, ch, 8, m1, lambda) < uncer_loss_single(c, ch, 8, m2, lambda))
        hi = m2;
      else
        lo = m1;
    }
    CHECK(0.5 * (lo + hi) == doctest::Approx(std::sqrt(E / lambda)).epsilon(1e-6));
  }
}

TEST_CASE("fused objective matches the scalar oracle in every mode") {
  Rng rng(75);
  const LossInputs in = make_inputs(rng, 4);
  for (LossMode mode : {LossMode::Full, LossMode::NoBeta, LossMode::BetaSOnly,
                        LossMode::BetaTOnly, LossMode::MseOnly, LossMode::SsimOnly}) {
    LossConfig cfg;
    cfg.mode = mode;
    const double got = run_loss(in, cfg);
    CHECK(got == doctest::Approx(loss_oracle(in, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("perfect prediction pays only the log barrier") {
  Rng rng(76);
  LossInputs in = make_inputs(rng, 3);
  in.pred = in.tgt;
  in.beta_s.fill(0.8);
  in.beta_t.fill(0.8);
  LossConfig cfg;
  const double got = run_loss(in, cfg);
  CHECK(got == doctest::Approx(0.1 * std::log(0.8)).epsilon(1e-9));
}

TEST_CASE("omega pinning: the single-branch modes equal forced-omega full runs") {
  Rng rng(77);
  const LossInputs in = make_inputs(rng, 5);
  LossConfig cfg;
  cfg.mode = LossMode::BetaSOnly;
  const double bs_only = run_loss(in, cfg);
  cfg.mode = LossMode::Full;
  cfg.omega = 0.0;
  CHECK(run_loss(in, cfg) == bs_only);

  cfg.mode = LossMode::BetaTOnly;
  const double bt_only = run_loss(in, cfg);
  cfg.mode = LossMode::Full;
  cfg.omega = 1.0;
  CHECK(run_loss(in, cfg) == bt_only);
}

TEST_CASE("fused objective gradients match finite differences") {
  Rng rng(78);
  LossInputs in = make_inputs(rng, 3);
  LossConfig cfg;  // full mode exercises every branch
  Graph<double> g;
  PatchLossNodes<double> nodes;
  std::vector<int> leaves;
  run_loss(in, cfg, &g, &nodes, &leaves);
  g.backward(nodes.loss);

  const double eps = 1e-6;
  auto fd_worst = [&](TD& t, int node) {
    double worst = 0;
    for (int i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = run_loss(in, cfg);
      t[i] = orig - eps;
      const double fm = run_loss(in, cfg);
      t[i] = orig;
      const double fd = (fp - fm) / (2 * eps);
      const double an = g.grad(node)[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}));
    }
    return worst;
  };
  CHECK(fd_worst(in.pred, leaves[0]) < 1e-4);
  CHECK(fd_worst(in.beta_s, leaves[1]) < 1e-4);
  CHECK(fd_worst(in.beta_t, leaves[2]) < 1e-4);
}

TEST_CASE("objective validation") {
  Rng rng(79);
  const LossInputs in = make_inputs(rng, 2);
  LossConfig cfg;
  cfg.lambda = 0;
  CHECK_THROWS_AS(run_loss(in, cfg), std::invalid_argument);
  cfg = LossConfig{};
  cfg.omega = 1.5;
  CHECK_THROWS_AS(run_loss(in, cfg), std::invalid_argument);
  cfg = LossConfig{};
  cfg.w_mse = 0.5;  // no longer sums to 1 with w_ssim = 0.2
  CHECK_THROWS_AS(run_loss(in, cfg), std::invalid_argument);

  Graph<double> g;
  const int bad = g.leaf(rand_rows(4, 9, rng));  // 4 rows cannot group 3 channels
  CHECK_THROWS_AS(multi_uncer_loss(g, bad, g.constant(rand_rows(4, 9, rng)),
                                   g.leaf(rand_rows(1, 1, rng, 0.5, 1.0)),
                                   g.leaf(rand_rows(1, 1, rng, 0.5, 1.0)), LossConfig{}),
                  std::invalid_argument);
}

TEST_CASE("psnr: cap and reference points") {
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
  CHECK(psnr_from_mse(1e-12) == kPsnrCap);
  CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0).epsilon(1e-12));

  ImageF a(16, 16, 3), b(16, 16, 3);
  Rng rng(80);
  for (size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = float(rng.uniform(0.2, 0.8));
    b.data[i] = a.data[i] + 0.1f;
  }
  CHECK(image_psnr(a, a) == kPsnrCap);
  CHECK(image_psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));
  ImageF c(8, 16, 3);
  CHECK_THROWS_AS(image_mse(a, c), std::invalid_argument);
}

TEST_CASE("windowed image ssim") {
  ImageF a(24, 16, 3);
  Rng rng(81);
  for (float& v : a.data) v = float(rng.uniform(0, 1));
  CHECK(std::abs(image_ssim(a, a) - 1.0) < 1e-9);

  ImageF b = a;
  for (float& v : b.data) v = std::min(1.f, v + 0.25f);
  const double s = image_ssim(a, b);
  CHECK(s < 0.99);
  CHECK(std::abs(s - image_ssim(b, a)) < 1e-12);

  ImageF tiny(8, 8, 3);
  CHECK_THROWS_AS(image_ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("auroc: separations, ties, midranks, degenerate labels") {
  CHECK(auroc({0.9f, 0.8f, 0.2f, 0.1f}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(auroc({0.1f, 0.2f, 0.8f, 0.9f}, {1, 1, 0, 0}) == doctest::Approx(0.0));
  CHECK(auroc({0.1f, 0.4f, 0.35f, 0.8f}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(auroc({0.5f, 0.5f, 0.5f, 0.5f}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK(auroc({0.1f, 0.2f, 0.3f}, {0, 0, 0}) == doctest::Approx(0.5));
  CHECK(auroc({0.1f, 0.2f, 0.3f}, {1, 1, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(auroc({0.1f}, {0, 1}), std::invalid_argument);
}

TEST_CASE("loss mode names round-trip") {
  for (LossMode m : {LossMode::Full, LossMode::NoBeta, LossMode::BetaSOnly, LossMode::BetaTOnly,
                     LossMode::MseOnly, LossMode::SsimOnly})
    CHECK(loss_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(loss_mode_from_string("bogus"), std::invalid_argument);
}
