#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aunet/blas.hpp"
#include "aunet/rng.hpp"
#include "aunet/tensor.hpp"

namespace aunet::nn {

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for non-trainable buffers (BN running stats)
  bool trainable = true;
};

template <class T>
using ParamList = std::vector<ParamRef<T>>;

template <class T>
void kaiming_init(Tensor<T>& w, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / double(fan_in));
  for (auto& x : w.v) x = T(rng.normal() * std);
}

// ---------------------------------------------------------------------------
// Conv2d: batched im2col + GEMM. Weight layout (out_ch, in_ch*k*k).
// ---------------------------------------------------------------------------
template <class T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  Tensor<T> w, b, gw, gb;

  Conv2d() = default;
  Conv2d(int ic, int oc, int k_, int s_, int p_)
      : in_ch(ic), out_ch(oc), k(k_), stride(s_), pad(p_) {
    w = Tensor<T>::matrix(oc, ic * k_ * k_);
    b = Tensor<T>::vec(oc);
    gw = Tensor<T>::matrix(oc, ic * k_ * k_);
    gb = Tensor<T>::vec(oc);
  }

  void init(Rng& rng) {
    kaiming_init(w, in_ch * k * k, rng);
    b.zero();
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w, &gw, true});
    out.push_back({prefix + ".b", &b, &gb, true});
  }

  int out_size(int in) const { return (in + 2 * pad - k) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_ch)
      throw ConfigError("conv: expected " + std::to_string(in_ch) + " input channels, got " +
                        std::to_string(x.c));
    B_ = x.n;
    ih_ = x.h;
    iw_ = x.w;
    oh_ = out_size(x.h);
    ow_ = out_size(x.w);
    const int P = oh_ * ow_;
    const int K = in_ch * k * k;
    col_.assign(std::size_t(K) * B_ * P, T(0));
    // col[(ic*k+ky)*k+kx][bi*P + oy*ow + ox]
    for (int bi = 0; bi < B_; ++bi) {
      for (int ic = 0; ic < in_ch; ++ic) {
        const T* xp = &x.at(bi, ic, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            T* crow = col_.data() + (std::size_t((ic * k + ky) * k + kx) * B_ + bi) * P;
            for (int oy = 0; oy < oh_; ++oy) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= ih_) continue;
              const T* xrow = xp + std::size_t(iy) * iw_;
              T* cdst = crow + oy * ow_;
              for (int ox = 0; ox < ow_; ++ox) {
                int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < iw_) cdst[ox] = xrow[ix];
              }
            }
          }
        }
      }
    }
    // y0 (out_ch, B*P) = w (out_ch, K) * col (K, B*P)
    y0_.assign(std::size_t(out_ch) * B_ * P, T(0));
    blas::gemm(false, false, out_ch, B_ * P, K, T(1), w.data(), K, col_.data(), B_ * P,
               T(0), y0_.data(), B_ * P);
    Tensor<T> y(B_, out_ch, oh_, ow_);
    for (int bi = 0; bi < B_; ++bi)
      for (int oc = 0; oc < out_ch; ++oc) {
        const T* src = y0_.data() + (std::size_t(oc) * B_ + bi) * P;
        T* dst = &y.at(bi, oc, 0, 0);
        T bias = b[oc];
        for (int p = 0; p < P; ++p) dst[p] = src[p] + bias;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int P = oh_ * ow_;
    const int K = in_ch * k * k;
    // reorder gy to (out_ch, B*P)
    std::vector<T>& gy0 = y0_;  // reuse buffer
    for (int bi = 0; bi < B_; ++bi)
      for (int oc = 0; oc < out_ch; ++oc) {
        const T* src = &gy.at(bi, oc, 0, 0);
        T* dst = gy0.data() + (std::size_t(oc) * B_ + bi) * P;
        for (int p = 0; p < P; ++p) dst[p] = src[p];
      }
    for (int oc = 0; oc < out_ch; ++oc) {
      const T* row = gy0.data() + std::size_t(oc) * B_ * P;
      T s = 0;
      for (int p = 0; p < B_ * P; ++p) s += row[p];
      gb[oc] += s;
    }
    // gw += gy0 * col^T
    blas::gemm(false, true, out_ch, K, B_ * P, T(1), gy0.data(), B_ * P, col_.data(),
               B_ * P, T(1), gw.data(), K);
    // gcol = w^T * gy0
    std::vector<T> gcol(std::size_t(K) * B_ * P);
    blas::gemm(true, false, K, B_ * P, out_ch, T(1), w.data(), K, gy0.data(), B_ * P,
               T(0), gcol.data(), B_ * P);
    // col2im scatter-add
    Tensor<T> gx(B_, in_ch, ih_, iw_);
    for (int bi = 0; bi < B_; ++bi) {
      for (int ic = 0; ic < in_ch; ++ic) {
        T* gxp = &gx.at(bi, ic, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T* crow = gcol.data() + (std::size_t((ic * k + ky) * k + kx) * B_ + bi) * P;
            for (int oy = 0; oy < oh_; ++oy) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= ih_) continue;
              T* gxrow = gxp + std::size_t(iy) * iw_;
              const T* csrc = crow + oy * ow_;
              for (int ox = 0; ox < ow_; ++ox) {
                int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < iw_) gxrow[ix] += csrc[ox];
              }
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  int B_ = 0, ih_ = 0, iw_ = 0, oh_ = 0, ow_ = 0;
  std::vector<T> col_, y0_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d; PyTorch conventions (biased variance for normalization,
// unbiased for the running estimate, momentum 0.1).
// ---------------------------------------------------------------------------
template <class T>
struct BatchNorm2d {
  int ch = 0;
  T eps = T(1e-5);
  T momentum = T(0.1);
  Tensor<T> gamma, beta, ggamma, gbeta;
  Tensor<T> running_mean, running_var;
  bool training = true;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int ch_) : ch(ch_) {
    gamma = Tensor<T>::vec(ch);
    beta = Tensor<T>::vec(ch);
    ggamma = Tensor<T>::vec(ch);
    gbeta = Tensor<T>::vec(ch);
    running_mean = Tensor<T>::vec(ch);
    running_var = Tensor<T>::vec(ch);
    gamma.fill(T(1));
    running_var.fill(T(1));
  }

  void params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma, true});
    out.push_back({prefix + ".beta", &beta, &gbeta, true});
    out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
    out.push_back({prefix + ".running_var", &running_var, nullptr, false});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int B = x.n, H = x.h, W = x.w;
    const std::size_t m = std::size_t(B) * H * W;
    Tensor<T> y(B, ch, H, W);
    if (training) {
      xhat_ = Tensor<T>(B, ch, H, W);
      invstd_.assign(ch, T(0));
      m_ = m;
      for (int c = 0; c < ch; ++c) {
        double mean = 0;
        for (int bi = 0; bi < B; ++bi) {
          const T* p = &x.at(bi, c, 0, 0);
          for (std::size_t i = 0; i < std::size_t(H) * W; ++i) mean += double(p[i]);
        }
        mean /= double(m);
        double var = 0;
        for (int bi = 0; bi < B; ++bi) {
          const T* p = &x.at(bi, c, 0, 0);
          for (std::size_t i = 0; i < std::size_t(H) * W; ++i) {
            double d = double(p[i]) - mean;
            var += d * d;
          }
        }
        var /= double(m);
        T istd = T(1.0 / std::sqrt(var + double(eps)));
        invstd_[c] = istd;
        T g = gamma[c], be = beta[c], mu = T(mean);
        for (int bi = 0; bi < B; ++bi) {
          const T* p = &x.at(bi, c, 0, 0);
          T* xh = &xhat_.at(bi, c, 0, 0);
          T* yp = &y.at(bi, c, 0, 0);
          for (std::size_t i = 0; i < std::size_t(H) * W; ++i) {
            xh[i] = (p[i] - mu) * istd;
            yp[i] = g * xh[i] + be;
          }
        }
        double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * T(mean);
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * T(unbiased);
      }
    } else {
      for (int c = 0; c < ch; ++c) {
        T istd = T(1.0 / std::sqrt(double(running_var[c]) + double(eps)));
        T g = gamma[c], be = beta[c], mu = running_mean[c];
        for (int bi = 0; bi < B; ++bi) {
          const T* p = &x.at(bi, c, 0, 0);
          T* yp = &y.at(bi, c, 0, 0);
          for (std::size_t i = 0; i < std::size_t(H) * W; ++i)
            yp[i] = g * (p[i] - mu) * istd + be;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int B = gy.n, H = gy.h, W = gy.w;
    Tensor<T> gx(B, ch, H, W);
    for (int c = 0; c < ch; ++c) {
      double sum_gy = 0, sum_gy_xhat = 0;
      for (int bi = 0; bi < B; ++bi) {
        const T* g = &gy.at(bi, c, 0, 0);
        const T* xh = &xhat_.at(bi, c, 0, 0);
        for (std::size_t i = 0; i < std::size_t(H) * W; ++i) {
          sum_gy += double(g[i]);
          sum_gy_xhat += double(g[i]) * double(xh[i]);
        }
      }
      ggamma[c] += T(sum_gy_xhat);
      gbeta[c] += T(sum_gy);
      T scale = gamma[c] * invstd_[c] / T(double(m_));
      T a = T(sum_gy), bb = T(sum_gy_xhat);
      for (int bi = 0; bi < B; ++bi) {
        const T* g = &gy.at(bi, c, 0, 0);
        const T* xh = &xhat_.at(bi, c, 0, 0);
        T* gp = &gx.at(bi, c, 0, 0);
        for (std::size_t i = 0; i < std::size_t(H) * W; ++i)
          gp[i] = scale * (T(double(m_)) * g[i] - a - xh[i] * bb);
      }
    }
    return gx;
  }

 private:
  Tensor<T> xhat_;
  std::vector<T> invstd_;
  std::size_t m_ = 0;
};

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------
template <class T>
struct Relu {
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = v > T(0) ? v : T(0);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
      if (y_.v[i] <= T(0)) gx.v[i] = T(0);
    return gx;
  }
  Tensor<T> y_;
};

template <class T>
struct Elu {
  T alpha = T(1);
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = v > T(0) ? v : alpha * (std::exp(v) - T(1));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
      if (y_.v[i] <= T(0)) gx.v[i] *= y_.v[i] + alpha;
    return gx;
  }
  Tensor<T> y_;
};

template <class T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
struct Sigmoid {
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = sigmoid_scalar(v);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
      gx.v[i] *= y_.v[i] * (T(1) - y_.v[i]);
    return gx;
  }
  Tensor<T> y_;
};

template <class T>
struct TanhAct {
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = std::tanh(v);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
      gx.v[i] *= T(1) - y_.v[i] * y_.v[i];
    return gx;
  }
  Tensor<T> y_;
};

// Softmax across the channel dimension, independently at every (n, y, x).
template <class T>
struct SoftmaxChannel {
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.n, x.c, x.h, x.w);
    const int C = x.c;
    for (int bi = 0; bi < x.n; ++bi)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx) {
          T mx = x.at(bi, 0, yy, xx);
          for (int c = 1; c < C; ++c) mx = std::max(mx, x.at(bi, c, yy, xx));
          T denom = T(0);
          for (int c = 0; c < C; ++c) {
            T e = std::exp(x.at(bi, c, yy, xx) - mx);
            y_.at(bi, c, yy, xx) = e;
            denom += e;
          }
          for (int c = 0; c < C; ++c) y_.at(bi, c, yy, xx) /= denom;
        }
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.n, gy.c, gy.h, gy.w);
    const int C = gy.c;
    for (int bi = 0; bi < gy.n; ++bi)
      for (int yy = 0; yy < gy.h; ++yy)
        for (int xx = 0; xx < gy.w; ++xx) {
          T dot = T(0);
          for (int c = 0; c < C; ++c) dot += gy.at(bi, c, yy, xx) * y_.at(bi, c, yy, xx);
          for (int c = 0; c < C; ++c)
            gx.at(bi, c, yy, xx) = y_.at(bi, c, yy, xx) * (gy.at(bi, c, yy, xx) - dot);
        }
    return gx;
  }
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling
// ---------------------------------------------------------------------------
template <class T>
struct Upsample2x {
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int bi = 0; bi < x.n; ++bi)
      for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < x.h; ++yy) {
          const T* src = &x.at(bi, c, yy, 0);
          T* d0 = &y.at(bi, c, 2 * yy, 0);
          T* d1 = &y.at(bi, c, 2 * yy + 1, 0);
          for (int xx = 0; xx < x.w; ++xx) {
            d0[2 * xx] = d0[2 * xx + 1] = src[xx];
            d1[2 * xx] = d1[2 * xx + 1] = src[xx];
          }
        }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.n, gy.c, gy.h / 2, gy.w / 2);
    for (int bi = 0; bi < gy.n; ++bi)
      for (int c = 0; c < gy.c; ++c)
        for (int yy = 0; yy < gx.h; ++yy) {
          const T* s0 = &gy.at(bi, c, 2 * yy, 0);
          const T* s1 = &gy.at(bi, c, 2 * yy + 1, 0);
          T* dst = &gx.at(bi, c, yy, 0);
          for (int xx = 0; xx < gx.w; ++xx)
            dst[xx] = s0[2 * xx] + s0[2 * xx + 1] + s1[2 * xx] + s1[2 * xx + 1];
        }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Global average pooling to (B, C, 1, 1)
// ---------------------------------------------------------------------------
template <class T>
struct GlobalAvgPool {
  Tensor<T> forward(const Tensor<T>& x) {
    h_ = x.h;
    w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const std::size_t hw = std::size_t(x.h) * x.w;
    for (int bi = 0; bi < x.n; ++bi)
      for (int c = 0; c < x.c; ++c) {
        const T* p = &x.at(bi, c, 0, 0);
        double s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += double(p[i]);
        y.at(bi, c, 0, 0) = T(s / double(hw));
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.n, gy.c, h_, w_);
    const std::size_t hw = std::size_t(h_) * w_;
    for (int bi = 0; bi < gy.n; ++bi)
      for (int c = 0; c < gy.c; ++c) {
        T g = gy.at(bi, c, 0, 0) / T(double(hw));
        T* p = &gx.at(bi, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) p[i] = g;
      }
    return gx;
  }
  int h_ = 0, w_ = 0;
};

// ---------------------------------------------------------------------------
// Linear on (B, in, 1, 1) -> (B, out, 1, 1)
// ---------------------------------------------------------------------------
template <class T>
struct Linear {
  int in = 0, out = 0;
  Tensor<T> w, b, gw, gb;

  Linear() = default;
  Linear(int in_, int out_) : in(in_), out(out_) {
    w = Tensor<T>::matrix(out_, in_);
    b = Tensor<T>::vec(out_);
    gw = Tensor<T>::matrix(out_, in_);
    gb = Tensor<T>::vec(out_);
  }

  void init(Rng& rng) {
    kaiming_init(w, in, rng);
    b.zero();
  }

  void params(ParamList<T>& outp, const std::string& prefix) {
    outp.push_back({prefix + ".w", &w, &gw, true});
    outp.push_back({prefix + ".b", &b, &gb, true});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.n, out, 1, 1);
    // y (B, out) = x (B, in) * w^T (in, out)
    blas::gemm(false, true, x.n, out, in, T(1), x.data(), in, w.data(), in, T(0),
               y.data(), out);
    for (int bi = 0; bi < x.n; ++bi)
      for (int o = 0; o < out; ++o) y.at(bi, o, 0, 0) += b[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    // gw += gy^T (out, B) * x (B, in)
    blas::gemm(true, false, out, in, gy.n, T(1), gy.data(), out, x_.data(), in, T(1),
               gw.data(), in);
    for (int bi = 0; bi < gy.n; ++bi)
      for (int o = 0; o < out; ++o) gb[o] += gy.at(bi, o, 0, 0);
    Tensor<T> gx(gy.n, in, 1, 1);
    blas::gemm(false, false, gy.n, in, out, T(1), gy.data(), out, w.data(), in, T(0),
               gx.data(), in);
    return gx;
  }

 private:
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// L2 normalization over the channel vector of each sample
// ---------------------------------------------------------------------------
template <class T>
struct L2Normalize {
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.n, x.c, 1, 1);
    norms_.assign(x.n, T(0));
    for (int bi = 0; bi < x.n; ++bi) {
      double s = 0;
      for (int c = 0; c < x.c; ++c) s += double(x.at(bi, c, 0, 0)) * double(x.at(bi, c, 0, 0));
      T norm = T(std::sqrt(std::max(s, 1e-24)));
      norms_[bi] = norm;
      for (int c = 0; c < x.c; ++c) y_.at(bi, c, 0, 0) = x.at(bi, c, 0, 0) / norm;
    }
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.n, gy.c, 1, 1);
    for (int bi = 0; bi < gy.n; ++bi) {
      T dot = T(0);
      for (int c = 0; c < gy.c; ++c) dot += gy.at(bi, c, 0, 0) * y_.at(bi, c, 0, 0);
      for (int c = 0; c < gy.c; ++c)
        gx.at(bi, c, 0, 0) = (gy.at(bi, c, 0, 0) - y_.at(bi, c, 0, 0) * dot) / norms_[bi];
    }
    return gx;
  }
  Tensor<T> y_;
  std::vector<T> norms_;
};

// ---------------------------------------------------------------------------
// Conv-BN-activation block and the two trunk block flavours
// ---------------------------------------------------------------------------
template <class T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  Relu<T> act;

  ConvBnRelu() = default;
  ConvBnRelu(int ic, int oc, int k, int s, int p) : conv(ic, oc, k, s, p), bn(oc) {}

  void init(Rng& rng) { conv.init(rng); }
  void set_training(bool t) { bn.training = t; }
  void params(ParamList<T>& out, const std::string& prefix) {
    conv.params(out, prefix + ".conv");
    bn.params(out, prefix + ".bn");
  }
  Tensor<T> forward(const Tensor<T>& x) { return act.forward(bn.forward(conv.forward(x))); }
  Tensor<T> backward(const Tensor<T>& gy) {
    return conv.backward(bn.backward(act.backward(gy)));
  }
};

template <class T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  Relu<T> act1, act2;

  ResidualBlock() = default;
  explicit ResidualBlock(int ch)
      : conv1(ch, ch, 3, 1, 1), conv2(ch, ch, 3, 1, 1), bn1(ch), bn2(ch) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
  }
  void set_training(bool t) {
    bn1.training = t;
    bn2.training = t;
  }
  void params(ParamList<T>& out, const std::string& prefix) {
    conv1.params(out, prefix + ".conv1");
    bn1.params(out, prefix + ".bn1");
    conv2.params(out, prefix + ".conv2");
    bn2.params(out, prefix + ".bn2");
  }
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> t = act1.forward(bn1.forward(conv1.forward(x)));
    Tensor<T> t2 = bn2.forward(conv2.forward(t));
    for (std::size_t i = 0; i < t2.v.size(); ++i) t2.v[i] += x.v[i];
    return act2.forward(t2);
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = act2.backward(gy);
    Tensor<T> gmain = conv1.backward(bn1.backward(act1.backward(
        conv2.backward(bn2.backward(g)))));
    for (std::size_t i = 0; i < gmain.v.size(); ++i) gmain.v[i] += g.v[i];
    return gmain;
  }
};

// Plain double-conv block with the same parameter count as ResidualBlock but
// no skip connection (used by the cnn_replace model variant).
template <class T>
struct PlainBlock {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  Relu<T> act1, act2;

  PlainBlock() = default;
  explicit PlainBlock(int ch)
      : conv1(ch, ch, 3, 1, 1), conv2(ch, ch, 3, 1, 1), bn1(ch), bn2(ch) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
  }
  void set_training(bool t) {
    bn1.training = t;
    bn2.training = t;
  }
  void params(ParamList<T>& out, const std::string& prefix) {
    conv1.params(out, prefix + ".conv1");
    bn1.params(out, prefix + ".bn1");
    conv2.params(out, prefix + ".conv2");
    bn2.params(out, prefix + ".bn2");
  }
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> t = act1.forward(bn1.forward(conv1.forward(x)));
    return act2.forward(bn2.forward(conv2.forward(t)));
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    return conv1.backward(bn1.backward(act1.backward(
        conv2.backward(bn2.backward(act2.backward(gy))))));
  }
};

}  // namespace aunet::nn
