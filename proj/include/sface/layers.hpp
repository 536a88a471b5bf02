#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sface/errors.hpp"
#include "sface/ops.hpp"
#include "sface/tensor.hpp"

namespace sface::nn {

enum class LayerKind : std::uint32_t {
  ReflectionPad = 0,
  Conv = 1,
  ReLU = 2,
  BatchNorm = 3,
  MaxPool = 4,
  Flatten = 5,
  Linear = 6,
};

/**
 * @brief Reverse-mode trace of one forward pass.
 *
 * Each recorded step maps the gradient flowing out of a layer to the
 * gradient flowing into it, accumulating parameter gradients as a side
 * effect. A tape belongs to exactly one forward pass; running two passes
 * onto separate tapes and calling backward on each is how shared-weight
 * (Siamese) training accumulates both branches into the same parameters.
 */
template <typename T>
class TapeT {
 public:
  using BackFn = std::function<TensorT<T>(const TensorT<T>&)>;

  void record(BackFn fn) { steps_.push_back(std::move(fn)); }
  bool recorded() const { return !steps_.empty(); }
  std::size_t size() const { return steps_.size(); }
  void reset() { steps_.clear(); }

  /// Seed with d(loss)/d(last output); returns d(loss)/d(first input).
  /// The trace is consumed: a second call without a new forward pass throws.
  TensorT<T> backward(TensorT<T> grad) {
    if (steps_.empty())
      throw std::logic_error("backward called without a recorded forward trace");
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) grad = (*it)(grad);
    steps_.clear();
    return grad;
  }

 private:
  std::vector<BackFn> steps_;
};

using Tape = TapeT<float>;

/**
 * @brief One network layer: kind tag, hyperparameters, parameters, state.
 *
 * Parameter gradients accumulate into weight.grad / bias.grad when forward
 * runs with a tape and backward is later invoked, so a layer must outlive
 * (and not be moved away from) any tape recorded against it.
 */
template <typename T>
struct LayerT {
  LayerKind kind = LayerKind::ReLU;

  // Hyperparameters; which ones apply depends on kind.
  std::size_t pad = 0;                              // ReflectionPad
  std::size_t in_channels = 0, out_channels = 0;    // Conv
  std::size_t kernel = 0, stride = 1;               // Conv
  std::size_t channels = 0;                         // BatchNorm
  std::size_t in_features = 0, out_features = 0;    // Linear
  T eps = T(1e-5), momentum = T(0.1);               // BatchNorm

  TensorT<T> weight;  // Conv/Linear weight; BatchNorm gamma
  TensorT<T> bias;    // Conv/Linear bias; BatchNorm beta
  std::vector<T> running_mean, running_var;  // BatchNorm only

  static LayerT reflection_pad(std::size_t p) {
    LayerT l;
    l.kind = LayerKind::ReflectionPad;
    l.pad = p;
    return l;
  }

  static LayerT conv(std::size_t cin, std::size_t cout, std::size_t k) {
    LayerT l;
    l.kind = LayerKind::Conv;
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.weight = TensorT<T>::zeros({cout, cin, k, k});
    l.bias = TensorT<T>::zeros({cout});
    l.weight.alloc_grad();
    l.bias.alloc_grad();
    return l;
  }

  static LayerT relu() {
    LayerT l;
    l.kind = LayerKind::ReLU;
    return l;
  }

  static LayerT batchnorm(std::size_t c) {
    LayerT l;
    l.kind = LayerKind::BatchNorm;
    l.channels = c;
    l.weight = TensorT<T>::full({c}, T(1));  // gamma
    l.bias = TensorT<T>::zeros({c});         // beta
    l.weight.alloc_grad();
    l.bias.alloc_grad();
    l.running_mean.assign(c, T(0));
    l.running_var.assign(c, T(1));
    return l;
  }

  static LayerT maxpool() {
    LayerT l;
    l.kind = LayerKind::MaxPool;
    return l;
  }

  static LayerT flatten() {
    LayerT l;
    l.kind = LayerKind::Flatten;
    return l;
  }

  static LayerT linear(std::size_t fin, std::size_t fout) {
    LayerT l;
    l.kind = LayerKind::Linear;
    l.in_features = fin;
    l.out_features = fout;
    l.weight = TensorT<T>::zeros({fout, fin});
    l.bias = TensorT<T>::zeros({fout});
    l.weight.alloc_grad();
    l.bias.alloc_grad();
    return l;
  }

  bool has_params() const {
    return kind == LayerKind::Conv || kind == LayerKind::Linear || kind == LayerKind::BatchNorm;
  }

  /// Fill weights and biases with uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)).
  /// Uniform values are derived from raw mt19937 words so initialization
  /// reproduces across standard library implementations.
  void init_params(std::mt19937& rng) {
    auto uniform = [&rng](T bound) {
      const double u = rng() * (1.0 / 4294967296.0);  // [0,1)
      return static_cast<T>((2.0 * u - 1.0) * static_cast<double>(bound));
    };
    if (kind == LayerKind::Conv) {
      const T bound = static_cast<T>(
          std::sqrt(1.0 / static_cast<double>(in_channels * kernel * kernel)));
      for (T& v : weight.data) v = uniform(bound);
      for (T& v : bias.data) v = uniform(bound);
    } else if (kind == LayerKind::Linear) {
      const T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(in_features)));
      for (T& v : weight.data) v = uniform(bound);
      for (T& v : bias.data) v = uniform(bound);
    }
    // BatchNorm keeps gamma=1, beta=0, running mean 0, running var 1.
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case LayerKind::ReflectionPad:
        os << "ReflectionPad(p=" << pad << ")";
        break;
      case LayerKind::Conv:
        os << "Conv(in=" << in_channels << ", out=" << out_channels << ", k=" << kernel
           << ", s=" << stride << ")";
        break;
      case LayerKind::ReLU:
        os << "ReLU";
        break;
      case LayerKind::BatchNorm:
        os << "BatchNorm(c=" << channels << ", eps=" << eps << ", momentum=" << momentum << ")";
        break;
      case LayerKind::MaxPool:
        os << "MaxPool(2x2)";
        break;
      case LayerKind::Flatten:
        os << "Flatten";
        break;
      case LayerKind::Linear:
        os << "Linear(in=" << in_features << ", out=" << out_features << ")";
        break;
    }
    return os.str();
  }

  /// Run the layer. With a tape, records the matching backward step.
  TensorT<T> forward(const TensorT<T>& x, TrainMode mode, TapeT<T>* tape) {
    switch (kind) {
      case LayerKind::ReflectionPad: {
        TensorT<T> y = ops::reflection_pad(x, pad);
        if (tape) {
          auto xshape = x.shape;
          std::size_t p = pad;
          tape->record([xshape, p](const TensorT<T>& gy) {
            return ops::reflection_pad_backward(gy, xshape, p);
          });
        }
        return y;
      }
      case LayerKind::Conv: {
        TensorT<T> y = ops::conv2d(x, weight, bias);
        if (tape) {
          auto saved = std::make_shared<const TensorT<T>>(x);
          tape->record([this, saved](const TensorT<T>& gy) {
            return ops::conv2d_backward(gy, *saved, weight, weight.grad, bias.grad);
          });
        }
        return y;
      }
      case LayerKind::ReLU: {
        TensorT<T> y = ops::relu(x);
        if (tape) {
          auto saved = std::make_shared<const TensorT<T>>(x);
          tape->record(
              [saved](const TensorT<T>& gy) { return ops::relu_backward(gy, *saved); });
        }
        return y;
      }
      case LayerKind::BatchNorm: {
        auto cache = tape ? std::make_shared<ops::BatchNormCache<T>>() : nullptr;
        TensorT<T> y = ops::batchnorm_forward(x, weight, bias, running_mean, running_var, eps,
                                              momentum, mode, cache.get());
        if (tape) {
          tape->record([this, cache, mode](const TensorT<T>& gy) {
            return ops::batchnorm_backward(gy, *cache, weight, mode, weight.grad, bias.grad);
          });
        }
        return y;
      }
      case LayerKind::MaxPool: {
        auto argmax = tape ? std::make_shared<std::vector<std::size_t>>() : nullptr;
        TensorT<T> y = ops::maxpool2x2(x, argmax.get());
        if (tape) {
          auto xshape = x.shape;
          tape->record([xshape, argmax](const TensorT<T>& gy) {
            return ops::maxpool2x2_backward(gy, xshape, *argmax);
          });
        }
        return y;
      }
      case LayerKind::Flatten: {
        TensorT<T> y = ops::flatten(x);
        if (tape) {
          auto xshape = x.shape;
          tape->record([xshape](const TensorT<T>& gy) { return gy.reshaped(xshape); });
        }
        return y;
      }
      case LayerKind::Linear: {
        TensorT<T> y = ops::linear(x, weight, bias);
        if (tape) {
          auto saved = std::make_shared<const TensorT<T>>(x);
          tape->record([this, saved](const TensorT<T>& gy) {
            return ops::linear_backward(gy, *saved, weight, weight.grad, bias.grad);
          });
        }
        return y;
      }
    }
    throw std::logic_error("unreachable layer kind");
  }
};

using Layer = LayerT<float>;

/**
 * @brief SGD with classic momentum: v = mu*v + g; p -= lr*v.
 *
 * Velocity buffers are lazily sized to the parameter list on first step, so
 * one optimizer must stay paired with one parameter set.
 */
template <typename T>
class SgdT {
 public:
  SgdT(T lr, T momentum) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<TensorT<T>*>& params) {
    if (velocity_.empty()) {
      velocity_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i)
        velocity_[i].assign(params[i]->data.size(), T(0));
    }
    if (velocity_.size() != params.size())
      throw std::invalid_argument("sgd: parameter list changed size");
    for (std::size_t i = 0; i < params.size(); ++i) {
      TensorT<T>& p = *params[i];
      if (p.grad.size() != p.data.size())
        throw std::invalid_argument("sgd: parameter has no gradient buffer");
      std::vector<T>& v = velocity_[i];
      for (std::size_t t = 0; t < p.data.size(); ++t) {
        const T g = p.grad[t];
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("sgd: non-finite gradient encountered");
        v[t] = momentum_ * v[t] + g;
        p.data[t] -= lr_ * v[t];
      }
    }
  }

  T learning_rate() const { return lr_; }
  T momentum() const { return momentum_; }

 private:
  T lr_, momentum_;
  std::vector<std::vector<T>> velocity_;
};

using Sgd = SgdT<float>;

}  // namespace sface::nn
