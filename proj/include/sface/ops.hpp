#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sface/kernels.hpp"
#include "sface/tensor.hpp"

namespace sface::nn {

enum class TrainMode { Training, Evaluation };

namespace ops {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void require_rank(const auto& t, std::size_t rank, const std::string& who) {
  require(t.shape.size() == rank,
          who + ": expected rank-" + std::to_string(rank) + " tensor, got " + t.shape_string());
}

/// Reflection index without edge repeat: ..2,1 | 0,1,..,n-1 | n-2,n-3..
inline std::size_t mirror_index(std::ptrdiff_t t, std::size_t n) {
  if (t < 0) return static_cast<std::size_t>(-t);
  if (t >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(t);
  return static_cast<std::size_t>(t);
}

// ---- reflection padding ----------------------------------------------------

template <typename T>
TensorT<T> reflection_pad(const TensorT<T>& x, std::size_t p) {
  require_rank(x, 4, "reflection_pad");
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  require(p < H && p < W, "reflection_pad: padding " + std::to_string(p) +
                              " needs spatial extents greater than it, got " + x.shape_string());
  const std::size_t OH = H + 2 * p, OW = W + 2 * p;
  std::vector<std::size_t> ri(OH), ci(OW);
  for (std::size_t i = 0; i < OH; ++i)
    ri[i] = mirror_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(p), H);
  for (std::size_t j = 0; j < OW; ++j)
    ci[j] = mirror_index(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p), W);

  TensorT<T> out = TensorT<T>::zeros({N, C, OH, OW});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xs = x.data.data() + nc * H * W;
    T* ys = out.data.data() + nc * OH * OW;
    for (std::size_t i = 0; i < OH; ++i) {
      const T* row = xs + ri[i] * W;
      T* orow = ys + i * OW;
      for (std::size_t j = 0; j < OW; ++j) orow[j] = row[ci[j]];
    }
  }
  return out;
}

template <typename T>
TensorT<T> reflection_pad_backward(const TensorT<T>& gy, const std::vector<std::size_t>& xshape,
                                   std::size_t p) {
  const std::size_t N = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
  const std::size_t OH = H + 2 * p, OW = W + 2 * p;
  TensorT<T> gx = TensorT<T>::zeros(xshape);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* gs = gy.data.data() + nc * OH * OW;
    T* xs = gx.data.data() + nc * H * W;
    for (std::size_t i = 0; i < OH; ++i) {
      const std::size_t si = mirror_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(p), H);
      for (std::size_t j = 0; j < OW; ++j) {
        const std::size_t sj = mirror_index(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p), W);
        xs[si * W + sj] += gs[i * OW + j];
      }
    }
  }
  return gx;
}

// ---- 2-d convolution (stride 1, no implicit padding) -----------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const std::size_t N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t Co = w.shape[0], k = w.shape[2];
  require(w.shape[1] == Ci, "conv2d: weight expects " + std::to_string(w.shape[1]) +
                                " input channels, input has " + std::to_string(Ci));
  require(w.shape[3] == k, "conv2d: kernel must be square, got " + w.shape_string());
  require(k <= H && k <= W, "conv2d: kernel " + std::to_string(k) +
                                " larger than input spatial extents " + x.shape_string());
  require(b.data.empty() || (b.shape.size() == 1 && b.shape[0] == Co),
          "conv2d: bias must have one value per output channel");
  const std::size_t OH = H - k + 1, OW = W - k + 1;

  TensorT<T> out = TensorT<T>::zeros({N, Co, OH, OW});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      T* oslab = out.data.data() + ((n * Co) + co) * OH * OW;
      if (!b.data.empty()) std::fill(oslab, oslab + OH * OW, b.data[co]);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* xslab = x.data.data() + ((n * Ci) + ci) * H * W;
        const T* wslab = w.data.data() + ((co * Ci) + ci) * k * k;
        for (std::size_t u = 0; u < k; ++u)
          for (std::size_t v = 0; v < k; ++v) {
            const T s = wslab[u * k + v];
            for (std::size_t oh = 0; oh < OH; ++oh)
              detail::axpy(s, xslab + (oh + u) * W + v, oslab + oh * OW, OW);
          }
      }
    }
  }
  return out;
}

/// Returns grad wrt input; accumulates weight/bias grads into gw/gb.
/// gb may be empty to skip bias accumulation.
template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& gy, const TensorT<T>& x, const TensorT<T>& w,
                           std::vector<T>& gw, std::vector<T>& gb) {
  const std::size_t N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t Co = w.shape[0], k = w.shape[2];
  const std::size_t OH = H - k + 1, OW = W - k + 1;

  TensorT<T> gx = TensorT<T>::zeros(x.shape);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      const T* gslab = gy.data.data() + ((n * Co) + co) * OH * OW;
      if (!gb.empty()) gb[co] += detail::sum(gslab, OH * OW);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        T* gxslab = gx.data.data() + ((n * Ci) + ci) * H * W;
        const T* xslab = x.data.data() + ((n * Ci) + ci) * H * W;
        const T* wslab = w.data.data() + ((co * Ci) + ci) * k * k;
        T* gwslab = gw.data() + ((co * Ci) + ci) * k * k;
        for (std::size_t u = 0; u < k; ++u)
          for (std::size_t v = 0; v < k; ++v) {
            const T s = wslab[u * k + v];
            T lanes[detail::kLanes] = {};
            for (std::size_t oh = 0; oh < OH; ++oh) {
              detail::axpy(s, gslab + oh * OW, gxslab + (oh + u) * W + v, OW);
              detail::dot_accumulate(lanes, gslab + oh * OW, xslab + (oh + u) * W + v, OW);
            }
            gwslab[u * k + v] += detail::lane_total(lanes);
          }
      }
    }
  }
  return gx;
}

// ---- relu -------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> out = x;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& gy, const TensorT<T>& x) {
  TensorT<T> gx = gy;
  for (std::size_t i = 0; i < gx.data.size(); ++i)
    if (!(x.data[i] > T(0))) gx.data[i] = T(0);
  return gx;
}

// ---- batch normalization ----------------------------------------------------

template <typename T>
struct BatchNormCache {
  std::vector<T> invstd;  // per channel, for the stats actually used
  TensorT<T> xhat;        // normalized input
};

/// Training mode normalizes with biased batch statistics and folds the
/// unbiased variance into the running estimates:
///   running = (1 - momentum) * running + momentum * batch.
/// Evaluation mode is a pure function of the running estimates.
template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             std::vector<T>& running_mean, std::vector<T>& running_var, T eps,
                             T momentum, TrainMode mode, BatchNormCache<T>* cache) {
  require_rank(x, 4, "batchnorm");
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  require(gamma.data.size() == C && beta.data.size() == C && running_mean.size() == C &&
              running_var.size() == C,
          "batchnorm: parameter width must match " + std::to_string(C) + " channels");
  const std::size_t hw = H * W, n = N * hw;

  TensorT<T> out = TensorT<T>::zeros(x.shape);
  if (cache) {
    cache->invstd.assign(C, T(0));
    cache->xhat = TensorT<T>::zeros(x.shape);
  }
  for (std::size_t c = 0; c < C; ++c) {
    T mean, invstd;
    if (mode == TrainMode::Training) {
      require(n >= 2, "batchnorm: training needs at least 2 values per channel, got " +
                          std::to_string(n));
      T s = T(0);
      for (std::size_t i = 0; i < N; ++i)
        s += detail::sum(x.data.data() + (i * C + c) * hw, hw);
      mean = s / static_cast<T>(n);
      T sq = T(0);
      for (std::size_t i = 0; i < N; ++i)
        sq += detail::sum_sq_dev(x.data.data() + (i * C + c) * hw, hw, mean);
      const T var_biased = sq / static_cast<T>(n);
      const T var_unbiased = sq / static_cast<T>(n - 1);
      invstd = T(1) / std::sqrt(var_biased + eps);
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var_unbiased;
    } else {
      mean = running_mean[c];
      invstd = T(1) / std::sqrt(running_var[c] + eps);
    }
    if (cache) cache->invstd[c] = invstd;
    const T g = gamma.data[c], bt = beta.data[c];
    for (std::size_t i = 0; i < N; ++i) {
      const T* xs = x.data.data() + (i * C + c) * hw;
      T* ys = out.data.data() + (i * C + c) * hw;
      T* xh = cache ? cache->xhat.data.data() + (i * C + c) * hw : nullptr;
      for (std::size_t t = 0; t < hw; ++t) {
        const T v = (xs[t] - mean) * invstd;
        if (xh) xh[t] = v;
        ys[t] = g * v + bt;
      }
    }
  }
  return out;
}

/// Returns grad wrt input; accumulates ggamma/gbeta per channel.
template <typename T>
TensorT<T> batchnorm_backward(const TensorT<T>& gy, const BatchNormCache<T>& cache,
                              const TensorT<T>& gamma, TrainMode mode, std::vector<T>& ggamma,
                              std::vector<T>& gbeta) {
  const std::size_t N = gy.shape[0], C = gy.shape[1], hw = gy.shape[2] * gy.shape[3];
  const std::size_t n = N * hw;
  TensorT<T> gx = TensorT<T>::zeros(gy.shape);
  for (std::size_t c = 0; c < C; ++c) {
    T sum_gy = T(0), sum_gy_xhat = T(0);
    for (std::size_t i = 0; i < N; ++i) {
      const T* gs = gy.data.data() + (i * C + c) * hw;
      const T* xh = cache.xhat.data.data() + (i * C + c) * hw;
      sum_gy += detail::sum(gs, hw);
      sum_gy_xhat += detail::dot(gs, xh, hw);
    }
    ggamma[c] += sum_gy_xhat;
    gbeta[c] += sum_gy;
    const T g = gamma.data[c], invstd = cache.invstd[c];
    if (mode == TrainMode::Training) {
      // gx = gamma*invstd/n * (n*gy - sum(gy) - xhat*sum(gy*xhat))
      const T scale = g * invstd / static_cast<T>(n);
      for (std::size_t i = 0; i < N; ++i) {
        const T* gs = gy.data.data() + (i * C + c) * hw;
        const T* xh = cache.xhat.data.data() + (i * C + c) * hw;
        T* gxs = gx.data.data() + (i * C + c) * hw;
        for (std::size_t t = 0; t < hw; ++t)
          gxs[t] = scale * (static_cast<T>(n) * gs[t] - sum_gy - xh[t] * sum_gy_xhat);
      }
    } else {
      // Running stats are constants, so the chain is elementwise.
      const T scale = g * invstd;
      for (std::size_t i = 0; i < N; ++i) {
        const T* gs = gy.data.data() + (i * C + c) * hw;
        T* gxs = gx.data.data() + (i * C + c) * hw;
        for (std::size_t t = 0; t < hw; ++t) gxs[t] = scale * gs[t];
      }
    }
  }
  return gx;
}

// ---- 2x2 max pooling ---------------------------------------------------------

template <typename T>
TensorT<T> maxpool2x2(const TensorT<T>& x, std::vector<std::size_t>* argmax) {
  require_rank(x, 4, "maxpool2x2");
  const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  require(H % 2 == 0 && W % 2 == 0,
          "maxpool2x2: spatial extents must be even, got " + x.shape_string());
  const std::size_t OH = H / 2, OW = W / 2;
  TensorT<T> out = TensorT<T>::zeros({N, C, OH, OW});
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xs = x.data.data() + nc * H * W;
    T* ys = out.data.data() + nc * OH * OW;
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j) {
        // Window scanned in row-major order; ties keep the first position.
        std::size_t best = (2 * i) * W + 2 * j;
        T bv = xs[best];
        const std::size_t cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j,
                                     (2 * i + 1) * W + 2 * j + 1};
        for (std::size_t q : cand)
          if (xs[q] > bv) {
            bv = xs[q];
            best = q;
          }
        ys[i * OW + j] = bv;
        if (argmax) (*argmax)[nc * OH * OW + i * OW + j] = nc * H * W + best;
      }
  }
  return out;
}

template <typename T>
TensorT<T> maxpool2x2_backward(const TensorT<T>& gy, const std::vector<std::size_t>& xshape,
                               const std::vector<std::size_t>& argmax) {
  TensorT<T> gx = TensorT<T>::zeros(xshape);
  for (std::size_t t = 0; t < gy.data.size(); ++t) gx.data[argmax[t]] += gy.data[t];
  return gx;
}

// ---- flatten -------------------------------------------------------------------

template <typename T>
TensorT<T> flatten(const TensorT<T>& x) {
  require_rank(x, 4, "flatten");
  return x.reshaped({x.shape[0], x.shape[1] * x.shape[2] * x.shape[3]});
}

// ---- linear --------------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t N = x.shape[0], F = x.shape[1], G = w.shape[0];
  require(w.shape[1] == F, "linear: weight expects " + std::to_string(w.shape[1]) +
                               " input features, input has " + std::to_string(F));
  require(b.data.empty() || (b.shape.size() == 1 && b.shape[0] == G),
          "linear: bias must have one value per output feature");
  TensorT<T> out = TensorT<T>::zeros({N, G});
  if (!b.data.empty())
    for (std::size_t i = 0; i < N; ++i)
      std::copy(b.data.begin(), b.data.end(), out.data.begin() + i * G);
  detail::matmul_nt(x.data.data(), w.data.data(), out.data.data(), N, G, F);
  return out;
}

template <typename T>
TensorT<T> linear_backward(const TensorT<T>& gy, const TensorT<T>& x, const TensorT<T>& w,
                           std::vector<T>& gw, std::vector<T>& gb) {
  const std::size_t N = x.shape[0], F = x.shape[1], G = w.shape[0];
  TensorT<T> gx = TensorT<T>::zeros({N, F});
  detail::matmul_nn(gy.data.data(), w.data.data(), gx.data.data(), N, G, F);
  detail::matmul_tn(gy.data.data(), x.data.data(), gw.data(), N, G, F);
  if (!gb.empty())
    for (std::size_t g = 0; g < G; ++g) {
      T s = T(0);
      for (std::size_t i = 0; i < N; ++i) s += gy.data[i * G + g];
      gb[g] += s;
    }
  return gx;
}

}  // namespace ops
}  // namespace sface::nn
