#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "aunet/errors.hpp"

namespace aunet {

// Dense row-major NCHW tensor. Matrices are stored as (rows, cols, 1, 1),
// vectors as (len, 1, 1, 1).
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(std::size_t(n_) * c_ * h_ * w_, T(0)) {}

  static Tensor zeros(int n_, int c_, int h_, int w_) { return Tensor(n_, c_, h_, w_); }
  static Tensor matrix(int rows, int cols) { return Tensor(rows, cols, 1, 1); }
  static Tensor vec(int len) { return Tensor(len, 1, 1, 1); }

  std::size_t numel() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int i, int j, int y, int x) {
    return v[((std::size_t(i) * c + j) * h + y) * w + x];
  }
  const T& at(int i, int j, int y, int x) const {
    return v[((std::size_t(i) * c + j) * h + y) * w + x];
  }
  T& at(int i, int j) { return v[std::size_t(i) * c + j]; }
  const T& at(int i, int j) const { return v[std::size_t(i) * c + j]; }
  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
    return out;
  }
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ConfigError(std::string(what) + ": shape mismatch " + a.shape_str() +
                      " vs " + b.shape_str());
}

}  // namespace aunet
