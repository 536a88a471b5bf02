#pragma once

#include <algorithm>
#include <cstddef>

namespace sface::nn::detail {

// Inner loops for the dense layers. All three matmul variants accumulate into
// C with a fixed summation order, so results are reproducible bit for bit on
// every run; no fast-math is required because reductions go through explicit
// lane arrays that the compiler can vectorize as independent streams.

inline constexpr std::size_t kLanes = 64;       // several vector registers deep, so the
                                                // FMA chains stay independent
inline constexpr std::size_t kDotBlock = 4096;  // K-chunk kept hot in L1/L2
inline constexpr std::size_t kColBlock = 2048;  // N-chunk for the axpy variants

inline constexpr std::size_t kVec = 16;  // one vector register of floats

/// Fixed-order dot product of two contiguous runs.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[t + l] * b[t + l];
  for (; t + kVec <= n; t += kVec)
    for (std::size_t l = 0; l < kVec; ++l) acc[l] += a[t + l] * b[t + l];
  for (std::size_t l = 0; t < n; ++t, ++l) acc[l] += a[t] * b[t];
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

/// y += s * x over a contiguous run.
template <typename T>
void axpy(T s, const T* x, T* y, std::size_t n) {
  for (std::size_t t = 0; t < n; ++t) y[t] += s * x[t];
}

/// Accumulate elementwise products into a caller-held lane bank without the
/// final horizontal reduction. Lets short rows (convolution gradient taps)
/// share one reduction across many calls; finish with lane_total.
template <typename T>
void dot_accumulate(T* acc, const T* a, const T* b, std::size_t n) {
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[t + l] * b[t + l];
  for (; t + kVec <= n; t += kVec)
    for (std::size_t l = 0; l < kVec; ++l) acc[l] += a[t + l] * b[t + l];
  for (std::size_t l = 0; t < n; ++t, ++l) acc[l] += a[t] * b[t];
}

template <typename T>
T lane_total(const T* acc) {
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

/// Fixed-order sum of a contiguous run.
template <typename T>
T sum(const T* a, std::size_t n) {
  T acc[kLanes] = {};
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[t + l];
  for (; t + kVec <= n; t += kVec)
    for (std::size_t l = 0; l < kVec; ++l) acc[l] += a[t + l];
  for (std::size_t l = 0; t < n; ++t, ++l) acc[l] += a[t];
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

/// Fixed-order sum of squared deviations from m.
template <typename T>
T sum_sq_dev(const T* a, std::size_t n, T m) {
  T acc[kLanes] = {};
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) {
      T d = a[t + l] - m;
      acc[l] += d * d;
    }
  for (; t + kVec <= n; t += kVec)
    for (std::size_t l = 0; l < kVec; ++l) {
      T d = a[t + l] - m;
      acc[l] += d * d;
    }
  for (std::size_t l = 0; t < n; ++t, ++l) {
    T d = a[t] - m;
    acc[l] += d * d;
  }
  T s = T(0);
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  return s;
}

/// C[m,n] += A[m,k] * B[n,k]^T  (dot-product form; B is accessed by rows).
/// K is chunked so all of B streams through cache once per chunk while the
/// A rows for that chunk stay resident.
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t k0 = 0; k0 < k; k0 += kDotBlock) {
    const std::size_t kb = std::min(kDotBlock, k - k0);
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k + k0;
      for (std::size_t i = 0; i < m; ++i)
        c[i * n + j] += dot(a + i * k + k0, brow, kb);
    }
  }
}

/// y += s0*x0 + s1*x1 + s2*x2 + s3*x3 over a contiguous run. Four source
/// streams per pass amortize the destination load/store traffic.
template <typename T>
void axpy4(T s0, const T* x0, T s1, const T* x1, T s2, const T* x2, T s3, const T* x3, T* y,
           std::size_t n) {
  for (std::size_t t = 0; t < n; ++t)
    y[t] += s0 * x0[t] + s1 * x1[t] + s2 * x2[t] + s3 * x3[t];
}

/// C[m,n] += A[m,k] * B[k,n]  (axpy form over row chunks of B).
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t n0 = 0; n0 < n; n0 += kColBlock) {
    const std::size_t nb = std::min(kColBlock, n - n0);
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const T* b0 = b + p * n + n0;
      const T* b1 = b + (p + 1) * n + n0;
      const T* b2 = b + (p + 2) * n + n0;
      const T* b3 = b + (p + 3) * n + n0;
      for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k + p;
        axpy4(arow[0], b0, arow[1], b1, arow[2], b2, arow[3], b3, c + i * n + n0, nb);
      }
    }
    for (; p < k; ++p) {
      const T* brow = b + p * n + n0;
      for (std::size_t i = 0; i < m; ++i)
        axpy(a[i * k + p], brow, c + i * n + n0, nb);
    }
  }
}

/// C[k,n] += A[m,k]^T * B[m,n]  (outer-product form; gradient of a weight
/// matrix from a batch). The B chunk for a column block stays in L2 across
/// all k rows of C.
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t n0 = 0; n0 < n; n0 += kColBlock) {
    const std::size_t nb = std::min(kColBlock, n - n0);
    for (std::size_t p = 0; p < k; ++p) {
      T* crow = c + p * n + n0;
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        axpy4(a[i * k + p], b + i * n + n0, a[(i + 1) * k + p], b + (i + 1) * n + n0,
              a[(i + 2) * k + p], b + (i + 2) * n + n0, a[(i + 3) * k + p],
              b + (i + 3) * n + n0, crow, nb);
      }
      for (; i < m; ++i) axpy(a[i * k + p], b + i * n + n0, crow, nb);
    }
  }
}

}  // namespace sface::nn::detail
