#pragma once
// Dense rank-4 tensor, NCHW row-major. Weight tensors reuse the same shape
// slots as (out_ch, in_ch, kh, kw); per-channel vectors as (1, C, 1, 1).

#include <array>
#include <cstdint>
#include <vector>

#include "offnadir/common.hpp"

namespace offnadir::nn {

template <class S>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<S> v;

  Tensor() = default;
  Tensor(int n, int c, int h, int w) { resize(n, c, h, w); }

  void resize(int n, int c, int h, int w) {
    ON_CHECK(n >= 0 && c >= 0 && h >= 0 && w >= 0, "negative tensor dim");
    shape = {n, c, h, w};
    v.assign(size_t(n) * c * h * w, S(0));
  }

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  size_t numel() const { return v.size(); }
  bool empty() const { return v.empty(); }

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  S& at(int n_, int c_, int h_, int w_) {
    return v[((size_t(n_) * shape[1] + c_) * shape[2] + h_) * shape[3] + w_];
  }
  S at(int n_, int c_, int h_, int w_) const {
    return v[((size_t(n_) * shape[1] + c_) * shape[2] + h_) * shape[3] + w_];
  }

  // Pointer to the (n, c) plane of h*w scalars.
  S* plane(int n_, int c_) {
    return v.data() + (size_t(n_) * shape[1] + c_) * shape[2] * shape[3];
  }
  const S* plane(int n_, int c_) const {
    return v.data() + (size_t(n_) * shape[1] + c_) * shape[2] * shape[3];
  }

  void fill(S x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out(shape[0], shape[1], shape[2], shape[3]);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = T(v[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace offnadir::nn
