#pragma once

#include "mvu/graph.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

// Tape ops. Each forward returns a node id; backward closures accumulate into
// parent grads. All ops are templated on the scalar so the same code runs in
// float (training) and double (finite-difference checks).

namespace mvu {

namespace detail {

template <typename S>
inline void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape != b.shape) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename S>
inline void acc(Tensor<S>& dst, const Tensor<S>& src) {
  const int n = dst.numel();
  for (int i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------- elementwise binary (matching shapes) ----------

template <typename S>
int add(Graph<S>& g, int a, int b) {
  detail::check_same_shape(g.val(a), g.val(b), "add");
  Tensor<S> out = g.val(a);
  detail::acc(out, g.val(b));
  return g.emplace(std::move(out), {a, b}, [a, b](Graph<S>& gr, int self) {
    detail::acc(gr.grad(a), gr.grad(self));
    detail::acc(gr.grad(b), gr.grad(self));
  });
}

template <typename S>
int sub(Graph<S>& g, int a, int b) {
  detail::check_same_shape(g.val(a), g.val(b), "sub");
  Tensor<S> out = g.val(a);
  const Tensor<S>& B = g.val(b);
  for (int i = 0; i < out.numel(); ++i) out[i] -= B[i];
  return g.emplace(std::move(out), {a, b}, [a, b](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    detail::acc(gr.grad(a), d);
    Tensor<S>& db = gr.grad(b);
    for (int i = 0; i < db.numel(); ++i) db[i] -= d[i];
  });
}

template <typename S>
int mul(Graph<S>& g, int a, int b) {
  detail::check_same_shape(g.val(a), g.val(b), "mul");
  Tensor<S> out = g.val(a);
  const Tensor<S>& B = g.val(b);
  for (int i = 0; i < out.numel(); ++i) out[i] *= B[i];
  return g.emplace(std::move(out), {a, b}, [a, b](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& A = gr.val(a);
    const Tensor<S>& B2 = gr.val(b);
    Tensor<S>& da = gr.grad(a);
    Tensor<S>& db = gr.grad(b);
    for (int i = 0; i < d.numel(); ++i) {
      da[i] += d[i] * B2[i];
      db[i] += d[i] * A[i];
    }
  });
}

template <typename S>
int div(Graph<S>& g, int a, int b) {
  detail::check_same_shape(g.val(a), g.val(b), "div");
  Tensor<S> out = g.val(a);
  const Tensor<S>& B = g.val(b);
  for (int i = 0; i < out.numel(); ++i) out[i] /= B[i];
  return g.emplace(std::move(out), {a, b}, [a, b](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& B2 = gr.val(b);
    const Tensor<S>& o = gr.val(self);
    Tensor<S>& da = gr.grad(a);
    Tensor<S>& db = gr.grad(b);
    for (int i = 0; i < d.numel(); ++i) {
      da[i] += d[i] / B2[i];
      db[i] -= d[i] * o[i] / B2[i];
    }
  });
}

// ---------- scalar / unary ----------

template <typename S>
int scale(Graph<S>& g, int a, S c) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] *= c;
  return g.emplace(std::move(out), {a}, [a, c](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += c * d[i];
  });
}

template <typename S>
int add_scalar(Graph<S>& g, int a, S c) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] += c;
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    detail::acc(gr.grad(a), gr.grad(self));
  });
}

template <typename S>
int neg(Graph<S>& g, int a) {
  return scale(g, a, S(-1));
}

template <typename S>
int relu(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] = out[i] > S(0) ? out[i] : S(0);
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& x = gr.val(a);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i)
      if (x[i] > S(0)) da[i] += d[i];
  });
}

template <typename S>
int sigmoid(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] = S(1) / (S(1) + std::exp(-out[i]));
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& o = gr.val(self);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += d[i] * o[i] * (S(1) - o[i]);
  });
}

// softplus(x) = log(1 + e^x), computed overflow-safe; d/dx = sigmoid(x).
template <typename S>
int softplus(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) {
    const S x = out[i];
    out[i] = x > S(20) ? x : std::log1p(std::exp(x));
  }
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& x = gr.val(a);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += d[i] / (S(1) + std::exp(-x[i]));
  });
}

template <typename S>
int exp_(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& o = gr.val(self);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += d[i] * o[i];
  });
}

template <typename S>
int log_(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& x = gr.val(a);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += d[i] / x[i];
  });
}

template <typename S>
int sqrt_(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& o = gr.val(self);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += d[i] / (S(2) * o[i]);
  });
}

template <typename S>
int square(Graph<S>& g, int a) {
  Tensor<S> out = g.val(a);
  for (int i = 0; i < out.numel(); ++i) out[i] *= out[i];
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& x = gr.val(a);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < d.numel(); ++i) da[i] += S(2) * x[i] * d[i];
  });
}

// ---------- broadcasts ----------

// x[r,c] + v[c]
template <typename S>
int add_rowvec(Graph<S>& g, int a, int v) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  if (g.val(v).numel() != C) throw std::invalid_argument("add_rowvec: size mismatch");
  Tensor<S> out = g.val(a);
  const Tensor<S>& V = g.val(v);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] += V[c];
  return g.emplace(std::move(out), {a, v}, [a, v, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    detail::acc(gr.grad(a), d);
    Tensor<S>& dv = gr.grad(v);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) dv[c] += d[r * C + c];
  });
}

// x[r,c] - v[r]
template <typename S>
int sub_colvec(Graph<S>& g, int a, int v) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  if (g.val(v).numel() != R) throw std::invalid_argument("sub_colvec: size mismatch");
  Tensor<S> out = g.val(a);
  const Tensor<S>& V = g.val(v);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] -= V[r];
  return g.emplace(std::move(out), {a, v}, [a, v, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    detail::acc(gr.grad(a), d);
    Tensor<S>& dv = gr.grad(v);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) dv[r] -= d[r * C + c];
  });
}

// x[r,c] * v[r]
template <typename S>
int mul_colvec(Graph<S>& g, int a, int v) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  if (g.val(v).numel() != R) throw std::invalid_argument("mul_colvec: size mismatch");
  Tensor<S> out = g.val(a);
  const Tensor<S>& V = g.val(v);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] *= V[r];
  return g.emplace(std::move(out), {a, v}, [a, v, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& X = gr.val(a);
    const Tensor<S>& V2 = gr.val(v);
    Tensor<S>& da = gr.grad(a);
    Tensor<S>& dv = gr.grad(v);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        da[r * C + c] += d[r * C + c] * V2[r];
        dv[r] += d[r * C + c] * X[r * C + c];
      }
  });
}

// ---------- reductions ----------

template <typename S>
int sum_all(Graph<S>& g, int a) {
  S s = S(0);
  const Tensor<S>& A = g.val(a);
  for (int i = 0; i < A.numel(); ++i) s += A[i];
  return g.emplace(Tensor<S>::scalar(s), {a}, [a](Graph<S>& gr, int self) {
    const S d = gr.grad(self)[0];
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < da.numel(); ++i) da[i] += d;
  });
}

template <typename S>
int mean_all(Graph<S>& g, int a) {
  const int n = g.val(a).numel();
  S s = S(0);
  const Tensor<S>& A = g.val(a);
  for (int i = 0; i < n; ++i) s += A[i];
  s /= S(n);
  return g.emplace(Tensor<S>::scalar(s), {a}, [a, n](Graph<S>& gr, int self) {
    const S d = gr.grad(self)[0] / S(n);
    Tensor<S>& da = gr.grad(a);
    for (int i = 0; i < n; ++i) da[i] += d;
  });
}

template <typename S>
int row_sum(Graph<S>& g, int a) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  Tensor<S> out({R, 1});
  const Tensor<S>& A = g.val(a);
  for (int r = 0; r < R; ++r) {
    S s = S(0);
    for (int c = 0; c < C; ++c) s += A[r * C + c];
    out[r] = s;
  }
  return g.emplace(std::move(out), {a}, [a, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) da[r * C + c] += d[r];
  });
}

template <typename S>
int row_mean(Graph<S>& g, int a) {
  const int C = g.val(a).cols();
  return scale(g, row_sum(g, a), S(1) / S(C));
}

// ---------- shape ----------

template <typename S>
int reshape(Graph<S>& g, int a, std::vector<int> shape) {
  Tensor<S> out(shape, g.val(a).data);
  std::vector<int> old_shape = g.val(a).shape;
  return g.emplace(std::move(out), {a}, [a](Graph<S>& gr, int self) {
    detail::acc(gr.grad(a), gr.grad(self));  // same flat layout
  });
}

template <typename S>
int concat_cols(Graph<S>& g, int a, int b) {
  const int R = g.val(a).rows(), Ca = g.val(a).cols(), Cb = g.val(b).cols();
  if (g.val(b).rows() != R) throw std::invalid_argument("concat_cols: row mismatch");
  Tensor<S> out({R, Ca + Cb});
  const Tensor<S>& A = g.val(a);
  const Tensor<S>& B = g.val(b);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < Ca; ++c) out[r * (Ca + Cb) + c] = A[r * Ca + c];
    for (int c = 0; c < Cb; ++c) out[r * (Ca + Cb) + Ca + c] = B[r * Cb + c];
  }
  return g.emplace(std::move(out), {a, b}, [a, b, R, Ca, Cb](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    Tensor<S>& db = gr.grad(b);
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < Ca; ++c) da[r * Ca + c] += d[r * (Ca + Cb) + c];
      for (int c = 0; c < Cb; ++c) db[r * Cb + c] += d[r * (Ca + Cb) + Ca + c];
    }
  });
}

template <typename S>
int slice_cols(Graph<S>& g, int a, int c0, int len) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  if (c0 < 0 || c0 + len > C) throw std::invalid_argument("slice_cols: out of range");
  Tensor<S> out({R, len});
  const Tensor<S>& A = g.val(a);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < len; ++c) out[r * len + c] = A[r * C + c0 + c];
  return g.emplace(std::move(out), {a}, [a, R, C, c0, len](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < len; ++c) da[r * C + c0 + c] += d[r * len + c];
  });
}

// out[m,:] = x[idx[m],:]; duplicate indices allowed (grads scatter-add).
template <typename S>
int gather_rows(Graph<S>& g, int a, std::vector<int> idx) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  const int M = static_cast<int>(idx.size());
  Tensor<S> out({M, C});
  const Tensor<S>& A = g.val(a);
  for (int m = 0; m < M; ++m) {
    if (idx[m] < 0 || idx[m] >= R) throw std::out_of_range("gather_rows");
    for (int c = 0; c < C; ++c) out[m * C + c] = A[idx[m] * C + c];
  }
  auto ip = std::make_shared<std::vector<int>>(std::move(idx));
  return g.emplace(std::move(out), {a}, [a, C, M, ip](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    for (int m = 0; m < M; ++m)
      for (int c = 0; c < C; ++c) da[(*ip)[m] * C + c] += d[m * C + c];
  });
}

// Flat gather: out[i] = x.data[idx[i]], output shape given by caller.
template <typename S>
int gather_flat(Graph<S>& g, int a, std::vector<int> idx, std::vector<int> out_shape) {
  const int n = g.val(a).numel();
  Tensor<S> out(out_shape);
  if (out.numel() != static_cast<int>(idx.size()))
    throw std::invalid_argument("gather_flat: size mismatch");
  const Tensor<S>& A = g.val(a);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw std::out_of_range("gather_flat");
    out[static_cast<int>(i)] = A[idx[i]];
  }
  auto ip = std::make_shared<std::vector<int>>(std::move(idx));
  return g.emplace(std::move(out), {a}, [a, ip](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    Tensor<S>& da = gr.grad(a);
    for (size_t i = 0; i < ip->size(); ++i) da[(*ip)[i]] += d[static_cast<int>(i)];
  });
}

// ---------- linear algebra ----------

// y = x w^T + b with x:[R,Cin], w:[Cout,Cin], b:[Cout]
template <typename S>
int linear(Graph<S>& g, int x, int w, int b) {
  const int R = g.val(x).rows(), Cin = g.val(x).cols(), Cout = g.val(w).rows();
  if (g.val(w).cols() != Cin || g.val(b).numel() != Cout)
    throw std::invalid_argument("linear: shape mismatch");
  Tensor<S> out({R, Cout});
  out.mat(R, Cout).noalias() = g.val(x).mat(R, Cin) * g.val(w).mat(Cout, Cin).transpose();
  const Tensor<S>& B = g.val(b);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < Cout; ++c) out[r * Cout + c] += B[c];
  return g.emplace(std::move(out), {x, w, b}, [x, w, b, R, Cin, Cout](Graph<S>& gr, int self) {
    auto d = gr.grad(self).mat(R, Cout);
    gr.grad(x).mat(R, Cin).noalias() += d * gr.val(w).mat(Cout, Cin);
    gr.grad(w).mat(Cout, Cin).noalias() += d.transpose() * gr.val(x).mat(R, Cin);
    Tensor<S>& db = gr.grad(b);
    const Tensor<S>& dt = gr.grad(self);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < Cout; ++c) db[c] += dt[r * Cout + c];
  });
}

// y[r] = sum_c x[r,c] w[c]
template <typename S>
int matvec(Graph<S>& g, int x, int w) {
  const int R = g.val(x).rows(), C = g.val(x).cols();
  if (g.val(w).numel() != C) throw std::invalid_argument("matvec: size mismatch");
  Tensor<S> out({R, 1});
  const Tensor<S>& X = g.val(x);
  const Tensor<S>& W = g.val(w);
  for (int r = 0; r < R; ++r) {
    S s = S(0);
    for (int c = 0; c < C; ++c) s += X[r * C + c] * W[c];
    out[r] = s;
  }
  return g.emplace(std::move(out), {x, w}, [x, w, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& X2 = gr.val(x);
    const Tensor<S>& W2 = gr.val(w);
    Tensor<S>& dx = gr.grad(x);
    Tensor<S>& dw = gr.grad(w);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        dx[r * C + c] += d[r] * W2[c];
        dw[c] += d[r] * X2[r * C + c];
      }
  });
}

// Row-wise stable softmax.
template <typename S>
int softmax_rows(Graph<S>& g, int a) {
  const int R = g.val(a).rows(), C = g.val(a).cols();
  Tensor<S> out = g.val(a);
  for (int r = 0; r < R; ++r) {
    S m = out[r * C];
    for (int c = 1; c < C; ++c) m = std::max(m, out[r * C + c]);
    S den = S(0);
    for (int c = 0; c < C; ++c) {
      out[r * C + c] = std::exp(out[r * C + c] - m);
      den += out[r * C + c];
    }
    for (int c = 0; c < C; ++c) out[r * C + c] /= den;
  }
  return g.emplace(std::move(out), {a}, [a, R, C](Graph<S>& gr, int self) {
    const Tensor<S>& d = gr.grad(self);
    const Tensor<S>& p = gr.val(self);
    Tensor<S>& da = gr.grad(a);
    for (int r = 0; r < R; ++r) {
      S dot = S(0);
      for (int c = 0; c < C; ++c) dot += d[r * C + c] * p[r * C + c];
      for (int c = 0; c < C; ++c) da[r * C + c] += p[r * C + c] * (d[r * C + c] - dot);
    }
  });
}

}  // namespace mvu
