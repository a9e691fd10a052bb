#pragma once

#include <cstdlib>
#include <mutex>

#if defined(__unix__) || defined(__APPLE__)
#include <dlfcn.h>
#define AUNET_HAVE_DLOPEN 1
#endif

namespace aunet::blas {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
//
// Backed by OpenBLAS when available. The library is loaded with dlopen after
// probing CPU features: OpenBLAS's runtime dispatch reads OPENBLAS_CORETYPE in
// a load-time constructor and falls back to generic kernels on CPUs it cannot
// identify (common on virtualized hosts), so the variable has to be set before
// the library is mapped. Threads are pinned to 1; call-order determinism is
// relied on by the training determinism guarantees.

namespace detail {

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*, int,
                          const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*, int,
                          const double*, int, double, double*, int);

struct Backend {
  sgemm_fn sgemm = nullptr;
  dgemm_fn dgemm = nullptr;
};

inline const Backend& backend() {
  static Backend b = [] {
    Backend r;
#ifdef AUNET_HAVE_DLOPEN
#if defined(__x86_64__)
    if (!std::getenv("OPENBLAS_CORETYPE")) {
      __builtin_cpu_init();
      if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") &&
          __builtin_cpu_supports("avx512vl") && __builtin_cpu_supports("avx512dq"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
      else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
#endif
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (h) {
      auto set_threads = reinterpret_cast<void (*)(int)>(dlsym(h, "openblas_set_num_threads"));
      if (set_threads) set_threads(1);
      r.sgemm = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
      r.dgemm = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
    }
#endif
    return r;
  }();
  return b;
}

constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

// Fallback used when OpenBLAS is absent. Row-major, register-friendly loop
// order; slow but correct.
template <class T>
void gemm_naive(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda,
                const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + std::size_t(i) * ldc;
    if (beta == T(0)) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int l = 0; l < k; ++l) {
      T aval = ta ? a[std::size_t(l) * lda + i] : a[std::size_t(i) * lda + l];
      aval *= alpha;
      if (aval == T(0)) continue;
      const T* brow = tb ? nullptr : b + std::size_t(l) * ldb;
      if (!tb) {
        for (int j = 0; j < n; ++j) crow[j] += aval * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += aval * b[std::size_t(j) * ldb + l];
      }
    }
  }
}

}  // namespace detail

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  const auto& be = detail::backend();
  if (be.sgemm) {
    be.sgemm(detail::kRowMajor, ta ? detail::kTrans : detail::kNoTrans,
             tb ? detail::kTrans : detail::kNoTrans, m, n, k, alpha, a, lda, b, ldb,
             beta, c, ldc);
  } else {
    detail::gemm_naive(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  const auto& be = detail::backend();
  if (be.dgemm) {
    be.dgemm(detail::kRowMajor, ta ? detail::kTrans : detail::kNoTrans,
             tb ? detail::kTrans : detail::kNoTrans, m, n, k, alpha, a, lda, b, ldb,
             beta, c, ldc);
  } else {
    detail::gemm_naive(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

}  // namespace aunet::blas
