#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvu/gmm.hpp"
#include "mvu/rng.hpp"

#include <array>
#include <cmath>
#include <vector>

using namespace mvu;

namespace {

struct Instance {
  std::vector<double> alpha;
  std::vector<std::array<double, 3>> mu;
  std::vector<double> sigma2;
};

Instance random_instance(Rng& rng, int K) {
  Instance in;
  in.alpha.resize(K);
  double s = 0.0;
  for (double& a : in.alpha) {
    a = rng.uniform(0.05, 1.0);
    s += a;
  }
  for (double& a : in.alpha) a /= s;
  for (int k = 0; k < K; ++k) {
    in.mu.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
    in.sigma2.push_back(rng.uniform(0.01, 0.5));
  }
  return in;
}

}  // namespace

TEST_CASE("single component passes through") {
  const auto r = composite<double>({1.0}, {{0.2, 0.5, 0.9}}, {0.07});
  CHECK(r.color[0] == 0.2);
  CHECK(r.color[1] == 0.5);
  CHECK(r.color[2] == 0.9);
  CHECK(r.beta_s == 0.07);
}

TEST_CASE("uniform weights average the means and quarter the variances") {
  std::vector<double> alpha(4, 0.25);
  std::vector<std::array<double, 3>> mu = {
      {0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {1, 1, 1}};
  std::vector<double> sigma2 = {0.1, 0.2, 0.3, 0.4};
  const auto r = composite(alpha, mu, sigma2);
  CHECK(r.color[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.color[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.color[2] == doctest::Approx(0.5).epsilon(1e-12));
  // sum of alpha^2 sigma^2 = (0.1+0.2+0.3+0.4)/16
  CHECK(r.beta_s == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("matches an independent loop over random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 1 + int(rng.below(32));
    const Instance in = random_instance(rng, K);
    double want[4] = {0, 0, 0, 0};
    for (int k = 0; k < K; ++k) {
      for (int c = 0; c < 3; ++c) want[c] += in.alpha[k] * in.mu[k][c];
      want[3] += in.alpha[k] * in.alpha[k] * in.sigma2[k];
    }
    const auto r = composite(in.alpha, in.mu, in.sigma2);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(r.color[c] - want[c]) < 1e-6);
    CHECK(std::abs(r.beta_s - want[3]) < 1e-6);
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(composite<double>({0.6, 0.3}, {{0, 0, 0}, {1, 1, 1}}, {0.1, 0.1}),
                  std::invalid_argument);  // weights sum to 0.9
  CHECK_THROWS_AS(composite<double>({0.5, 0.5}, {{0, 0, 0}, {1, 1, 1}}, {0.1, 0.0}),
                  std::invalid_argument);  // zero variance
  CHECK_THROWS_AS(composite<double>({1.0}, {{0, 0, 0}, {1, 1, 1}}, {0.1}),
                  std::invalid_argument);  // size mismatch
  CHECK_THROWS_AS(composite<double>({}, {}, {}), std::invalid_argument);
  // slack inside the 1e-6 gate is accepted
  CHECK_NOTHROW(composite<double>({0.5, 0.5 + 5e-7}, {{0, 0, 0}, {1, 1, 1}}, {0.1, 0.1}));
}

TEST_CASE("doubling the means doubles the color bit for bit") {
  Rng rng(102);
  const Instance in = random_instance(rng, 6);
  Instance twice = in;
  for (auto& m : twice.mu)
    for (double& c : m) c *= 2.0;
  const auto a = composite(in.alpha, in.mu, in.sigma2);
  const auto b = composite(twice.alpha, twice.mu, twice.sigma2);
  for (int c = 0; c < 3; ++c) CHECK(b.color[c] == 2.0 * a.color[c]);
  CHECK(b.beta_s == a.beta_s);
}

TEST_CASE("mixture density: peak value and normalization") {
  const double s2 = 0.04;
  const std::array<double, 3> m = {0.3, -0.1, 0.2};
  const double peak = mixture_pdf({1.0}, {m}, {s2}, m);
  CHECK(peak == doctest::Approx(std::pow(2.0 * M_PI * s2, -1.5)).epsilon(1e-12));

  // midpoint rule over mean +- 6 sigma
  const double h = 0.06;
  double integral = 0.0;
  for (double x = m[0] - 1.2 + h / 2; x < m[0] + 1.2; x += h)
    for (double y = m[1] - 1.2 + h / 2; y < m[1] + 1.2; y += h)
      for (double z = m[2] - 1.2 + h / 2; z < m[2] + 1.2; z += h)
        integral += mixture_pdf({1.0}, {m}, {s2}, {x, y, z}) * h * h * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("mixture density is symmetric under component swap") {
  const std::vector<double> alpha = {0.3, 0.7};
  const std::vector<std::array<double, 3>> mu = {{0.1, 0.2, 0.3}, {0.8, 0.7, 0.6}};
  const std::vector<double> s2 = {0.05, 0.2};
  const std::array<double, 3> z = {0.4, 0.4, 0.4};
  const double a = mixture_pdf(alpha, mu, s2, z);
  const double b = mixture_pdf({alpha[1], alpha[0]}, {mu[1], mu[0]}, {s2[1], s2[0]}, z);
  CHECK(a == b);
}

TEST_CASE("sample mean of mixture draws matches the rendered color") {
  Rng rng(103);
  const Instance in = random_instance(rng, 5);
  const auto r = composite(in.alpha, in.mu, in.sigma2);
  const int n = 100000;
  double mean[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    int k = 0;
    while (k + 1 < int(in.alpha.size()) && u >= in.alpha[k]) {
      u -= in.alpha[k];
      ++k;
    }
    const double sd = std::sqrt(in.sigma2[k]);
    for (int c = 0; c < 3; ++c) mean[c] += in.mu[k][c] + sd * rng.normal();
  }
  for (int c = 0; c < 3; ++c) {
    mean[c] /= n;
    // generous: 5 standard errors with sigma2 <= 0.5
    CHECK(std::abs(mean[c] - r.color[c]) < 5.0 * std::sqrt(0.5 / n) + 5e-3);
  }
}

TEST_CASE("tape mixing agrees with the scalar compositor") {
  Rng rng(104);
  const int R = 4, K = 6;
  Tensor<double> alpha({R, K}), mu({R * K, 3}), s2({R * K, 1});
  std::vector<Instance> rows;
  for (int r = 0; r < R; ++r) {
    Instance in = random_instance(rng, K);
    for (int k = 0; k < K; ++k) {
      alpha[r * K + k] = in.alpha[k];
      for (int c = 0; c < 3; ++c) mu[(r * K + k) * 3 + c] = in.mu[k][c];
      s2[r * K + k] = in.sigma2[k];
    }
    rows.push_back(std::move(in));
  }
  Graph<double> g;
  const int a = g.leaf(alpha), m = g.leaf(mu), v = g.leaf(s2);
  const int color = mix_rows(g, a, m);
  const int beta = mix_sq_rows(g, a, v);
  for (int r = 0; r < R; ++r) {
    const auto want = composite(rows[r].alpha, rows[r].mu, rows[r].sigma2);
    for (int c = 0; c < 3; ++c)
      CHECK(g.val(color)[r * 3 + c] == doctest::Approx(want.color[c]).epsilon(1e-12));
    CHECK(g.val(beta)[r] == doctest::Approx(want.beta_s).epsilon(1e-12));
  }

  // gradients against central differences
  const int root =
      add(g, sum_all(g, square(g, color)), sum_all(g, square(g, beta)));
  g.backward(root);
  auto eval = [&](const Tensor<double>& A, const Tensor<double>& M, const Tensor<double>& V) {
    Graph<double> h;
    h.grad_enabled = false;
    const int c2 = mix_rows(h, h.leaf(A), h.leaf(M));
    const int b2 = mix_sq_rows(h, h.leaf(A), h.leaf(V));
    return h.val(add(h, sum_all(h, square(h, c2)), sum_all(h, square(h, b2))))[0];
  };
  const double eps = 1e-6;
  auto fd_against = [&](Tensor<double>& t, int node) {
    double worst = 0.0;
    for (int i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = eval(alpha, mu, s2);
      t[i] = orig - eps;
      const double fm = eval(alpha, mu, s2);
      t[i] = orig;
      const double fd = (fp - fm) / (2 * eps);
      worst = std::max(worst, std::abs(fd - g.grad(node)[i]));
    }
    return worst;
  };
  CHECK(fd_against(alpha, a) < 1e-5);
  CHECK(fd_against(mu, m) < 1e-5);
  CHECK(fd_against(s2, v) < 1e-5);
}
