#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mvu {

// Dense row-major n-d array (n <= 4). 2-d tensors expose an Eigen map for GEMM.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(count(shape)), S(0));
  }
  Tensor(std::vector<int> shp, std::vector<S> values) : shape(std::move(shp)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static int64_t count(const std::vector<int>& shp) {
    int64_t n = 1;
    for (int d : shp) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }
  static Tensor scalar(S v) { return Tensor({1}, {v}); }
  static Tensor full(std::vector<int> shp, S v) {
    Tensor t(std::move(shp));
    t.fill(v);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  // 2-d accessors; rows()/cols() also view [n] as a column.
  int rows() const { return ndim() == 1 ? shape[0] : shape[0]; }
  int cols() const {
    if (ndim() == 1) return 1;
    int64_t c = 1;
    for (int i = 1; i < ndim(); ++i) c *= shape[i];
    return static_cast<int>(c);
  }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  S& at2(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  const S& at2(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  // CHW indexing for 3-d tensors.
  S& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const S& at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  MatMap mat() { return MatMap(data.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data.data(), rows(), cols()); }
  MatMap mat(int r, int c) { return MatMap(data.data(), r, c); }
  ConstMatMap mat(int r, int c) const { return ConstMatMap(data.data(), r, c); }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mvu
