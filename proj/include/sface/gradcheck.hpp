#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sface/layers.hpp"
#include "sface/siamese.hpp"

namespace sface::nn {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  bool pass = false;
};

namespace gradcheck_detail {

using T = double;

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

inline double unit(std::mt19937& rng) { return rng() * (1.0 / 4294967296.0); }

/// Uniform in [-1,-margin] U [margin,1]; keeps values away from the ReLU
/// kink so finite differencing stays on one side.
inline void fill_away_from_zero(std::vector<T>& v, std::mt19937& rng, T margin = T(0.05)) {
  for (T& x : v) {
    const double u = unit(rng);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    x = static_cast<T>(sign * (margin + (1.0 - margin) * u));
  }
}

inline void fill_uniform(std::vector<T>& v, std::mt19937& rng) {
  for (T& x : v) x = static_cast<T>(2.0 * unit(rng) - 1.0);
}

/// Distinct, well-separated values (gaps >> 2h) so pooling argmaxes cannot
/// flip under perturbation.
inline void fill_distinct(std::vector<T>& v, std::mt19937& rng) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>(order[i]) * T(0.1) - static_cast<T>(v.size()) * T(0.05);
}

}  // namespace gradcheck_detail

/// One randomized sweep over every backward path: a taped forward pass per
/// check, analytic gradients read off the tape, then the loss re-evaluated
/// with each input/parameter element perturbed by +-h. Relative error uses
/// |a-n| / max(1, |a|, |n|). Runs in double throughout.
inline std::vector<GradCheckResult> run_gradient_check_instance(double h, double tol,
                                                                std::uint32_t seed) {
  using namespace gradcheck_detail;
  std::mt19937 rng(seed);
  std::vector<GradCheckResult> results;

  // Loss functional: fixed random projection of the output tensor.
  auto make_probe = [&rng](const TensorT<T>& y) {
    TensorT<T> r = TensorT<T>::zeros(y.shape);
    fill_uniform(r.data, rng);
    return r;
  };
  auto project = [](const TensorT<T>& y, const TensorT<T>& r) {
    T s = T(0);
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
    return s;
  };

  // One target tensor against one scalar loss function.
  auto check_tensor = [&](const std::string& name, std::vector<T>& target,
                          const std::vector<T>& analytic, const std::function<T()>& loss) {
    double max_err = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const T keep = target[i];
      target[i] = keep + static_cast<T>(h);
      const T lp = loss();
      target[i] = keep - static_cast<T>(h);
      const T lm = loss();
      target[i] = keep;
      const double numeric = (lp - lm) / (2.0 * h);
      max_err = std::max(max_err, rel_err(analytic[i], numeric));
    }
    results.push_back({name, max_err, max_err < tol});
  };

  // Single layer through a taped forward pass.
  auto check_layer = [&](const std::string& name, LayerT<T>& layer, TensorT<T> x,
                         TrainMode mode, bool check_params) {
    layer.weight.zero_grad();
    layer.bias.zero_grad();
    TapeT<T> tape;
    TensorT<T> y = layer.forward(x, mode, &tape);
    TensorT<T> r = make_probe(y);
    TensorT<T> gx = tape.backward(r);
    auto loss = [&layer, &x, mode, &r]() {
      TensorT<T> out = layer.forward(x, mode, nullptr);
      T s = T(0);
      for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * r.data[i];
      return s;
    };
    check_tensor(name + " input", x.data, gx.data, loss);
    if (check_params) {
      check_tensor(name + " weight", layer.weight.data, layer.weight.grad, loss);
      check_tensor(name + " bias", layer.bias.data, layer.bias.grad, loss);
    }
  };

  {  // reflection padding
    auto l = LayerT<T>::reflection_pad(1);
    TensorT<T> x = TensorT<T>::zeros({2, 2, 4, 4});
    fill_uniform(x.data, rng);
    check_layer("reflection_pad", l, x, TrainMode::Evaluation, false);
  }
  {  // convolution
    auto l = LayerT<T>::conv(2, 3, 3);
    std::mt19937 prng(seed + 1);
    l.init_params(prng);
    TensorT<T> x = TensorT<T>::zeros({2, 2, 6, 6});
    fill_uniform(x.data, rng);
    check_layer("conv2d", l, x, TrainMode::Evaluation, true);
  }
  {  // relu
    auto l = LayerT<T>::relu();
    TensorT<T> x = TensorT<T>::zeros({2, 3, 4, 4});
    fill_away_from_zero(x.data, rng);
    check_layer("relu", l, x, TrainMode::Evaluation, false);
  }
  {  // batch normalization, batch statistics
    auto l = LayerT<T>::batchnorm(2);
    fill_away_from_zero(l.weight.data, rng);  // move gamma off its init for a real test
    fill_uniform(l.bias.data, rng);
    TensorT<T> x = TensorT<T>::zeros({2, 2, 3, 3});
    fill_uniform(x.data, rng);
    check_layer("batchnorm(train)", l, x, TrainMode::Training, true);
  }
  {  // batch normalization, running statistics
    auto l = LayerT<T>::batchnorm(2);
    fill_away_from_zero(l.weight.data, rng);
    fill_uniform(l.bias.data, rng);
    l.running_mean = {0.3, -0.2};
    l.running_var = {1.7, 0.6};
    TensorT<T> x = TensorT<T>::zeros({2, 2, 3, 3});
    fill_uniform(x.data, rng);
    check_layer("batchnorm(eval)", l, x, TrainMode::Evaluation, true);
  }
  {  // max pooling
    auto l = LayerT<T>::maxpool();
    TensorT<T> x = TensorT<T>::zeros({2, 2, 4, 4});
    fill_distinct(x.data, rng);
    check_layer("maxpool2x2", l, x, TrainMode::Evaluation, false);
  }
  {  // linear
    auto l = LayerT<T>::linear(6, 4);
    std::mt19937 prng(seed + 2);
    l.init_params(prng);
    TensorT<T> x = TensorT<T>::zeros({3, 6});
    fill_uniform(x.data, rng);
    check_layer("linear", l, x, TrainMode::Evaluation, true);
  }

  // Reduced whole networks: same layer sequence as the full model (plus a
  // pooling variant), shrunk so the finite-difference sweep stays fast.
  auto build_small = [](bool with_pool, std::uint32_t net_seed) {
    SiameseNetworkT<T> net;
    using L = LayerT<T>;
    net.layers.push_back(L::reflection_pad(1));
    net.layers.push_back(L::conv(1, 2, 3));
    net.layers.push_back(L::relu());
    net.layers.push_back(L::batchnorm(2));
    if (with_pool) net.layers.push_back(L::maxpool());
    const std::size_t side = with_pool ? 4 : 8;
    net.layers.push_back(L::flatten());
    net.layers.push_back(L::linear(2 * side * side, 16));
    net.layers.push_back(L::relu());
    net.layers.push_back(L::linear(16, 4));
    std::mt19937 prng(net_seed);
    for (auto& l : net.layers) l.init_params(prng);
    net.set_mode(TrainMode::Training);
    return net;
  };

  // Central differences are only valid away from the non-differentiable
  // points, so measure how far an instance sits from the nearest ReLU kink
  // or pooling argmax flip.
  auto instance_margin = [](SiameseNetworkT<T>& net, const TensorT<T>& input) {
    double margin = 1e30;
    TensorT<T> cur = input;
    for (auto& l : net.layers) {
      if (l.kind == LayerKind::ReLU) {
        for (T v : cur.data) margin = std::min(margin, std::abs(static_cast<double>(v)));
      } else if (l.kind == LayerKind::MaxPool) {
        const std::size_t H = cur.shape[2], W = cur.shape[3];
        for (std::size_t nc = 0; nc < cur.shape[0] * cur.shape[1]; ++nc) {
          const T* xs = cur.data.data() + nc * H * W;
          for (std::size_t i = 0; i + 1 < H; i += 2)
            for (std::size_t j = 0; j + 1 < W; j += 2) {
              T vals[4] = {xs[i * W + j], xs[i * W + j + 1], xs[(i + 1) * W + j],
                           xs[(i + 1) * W + j + 1]};
              std::sort(vals, vals + 4);
              margin = std::min(margin, static_cast<double>(vals[3] - vals[2]));
            }
        }
      }
      cur = l.forward(cur, net.mode, nullptr);
    }
    return margin;
  };

  // Deterministically scan seeds for an operating point with a safe margin.
  const double need = 5.0 * h;
  auto pick_instance = [&](bool with_pool, std::vector<TensorT<T>*> inputs,
                           SiameseNetworkT<T>& net_out) {
    double best_margin = -1;
    std::uint32_t best_offset = 0;
    for (std::uint32_t offset = 0; offset < 200; ++offset) {
      auto net = build_small(with_pool, seed + 100 + offset);
      std::mt19937 xrng(seed + 900 + offset);
      for (auto* x : inputs) fill_uniform(x->data, xrng);
      double margin = 1e30;
      for (auto* x : inputs) margin = std::min(margin, instance_margin(net, *x));
      if (margin > best_margin) {
        best_margin = margin;
        best_offset = offset;
      }
      if (margin > need) break;
    }
    net_out = build_small(with_pool, seed + 100 + best_offset);
    std::mt19937 xrng(seed + 900 + best_offset);
    for (auto* x : inputs) fill_uniform(x->data, xrng);
  };

  for (bool with_pool : {false, true}) {
    TensorT<T> x = TensorT<T>::zeros({2, 1, 8, 8});
    SiameseNetworkT<T> net;
    pick_instance(with_pool, {&x}, net);
    net.zero_grads();
    TapeT<T> tape;
    TensorT<T> y = net.forward(x, &tape);
    TensorT<T> r = make_probe(y);
    TensorT<T> gx = tape.backward(r);
    auto loss = [&net, &x, &r]() {
      TensorT<T> out = net.forward(x, nullptr);
      T s = T(0);
      for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * r.data[i];
      return s;
    };
    const std::string tag = with_pool ? "network(pool)" : "network";
    check_tensor(tag + " input", x.data, gx.data, loss);
    auto params = net.params();
    double max_err = 0;
    for (auto* p : params) {
      for (std::size_t i = 0; i < p->data.size(); ++i) {
        const T keep = p->data[i];
        p->data[i] = keep + static_cast<T>(h);
        const T lp = loss();
        p->data[i] = keep - static_cast<T>(h);
        const T lm = loss();
        p->data[i] = keep;
        max_err = std::max(max_err, rel_err(p->grad[i], (lp - lm) / (2.0 * h)));
      }
    }
    results.push_back({tag + " params", max_err, max_err < tol});
  }

  {  // two shared-weight branches through the contrastive loss
    TensorT<T> xa = TensorT<T>::zeros({2, 1, 8, 8});
    TensorT<T> xb = TensorT<T>::zeros({2, 1, 8, 8});
    SiameseNetworkT<T> net;
    pick_instance(false, {&xa, &xb}, net);
    const std::vector<data::PairLabel> labels = {data::PairLabel::Genuine,
                                                 data::PairLabel::Impostor};
    const T margin = T(10);  // large enough that the impostor grad is active

    net.zero_grads();
    TapeT<T> tape_a, tape_b;
    TensorT<T> ea = net.forward(xa, &tape_a);
    TensorT<T> eb = net.forward(xb, &tape_b);
    auto batch = pair_batch_loss(ea, eb, labels, margin);
    TensorT<T> gxb = tape_b.backward(batch.grad_b);
    TensorT<T> gxa = tape_a.backward(batch.grad_a);

    auto loss = [&]() {
      TensorT<T> a = net.forward(xa, nullptr);
      TensorT<T> b = net.forward(xb, nullptr);
      return pair_batch_loss(a, b, labels, margin).mean_loss;
    };
    check_tensor("contrastive input a", xa.data, gxa.data, loss);
    check_tensor("contrastive input b", xb.data, gxb.data, loss);
    double max_err = 0;
    for (auto* p : net.params()) {
      for (std::size_t i = 0; i < p->data.size(); ++i) {
        const T keep = p->data[i];
        p->data[i] = keep + static_cast<T>(h);
        const T lp = loss();
        p->data[i] = keep - static_cast<T>(h);
        const T lm = loss();
        p->data[i] = keep;
        max_err = std::max(max_err, rel_err(p->grad[i], (lp - lm) / (2.0 * h)));
      }
    }
    results.push_back({"contrastive shared params", max_err, max_err < tol});
  }

  return results;
}

/**
 * @brief Central-difference validation of every backward path.
 *
 * Repeats the full randomized sweep on `instances` independently seeded
 * operating points and merges by check name, keeping the worst relative
 * error seen for each, so a pass means the gradient held up across several
 * random layer/input configurations rather than one lucky draw.
 */
inline std::vector<GradCheckResult> run_gradient_checks(double h = 1e-3, double tol = 1e-4,
                                                        std::uint32_t seed = 7,
                                                        std::size_t instances = 5) {
  std::vector<GradCheckResult> merged;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const auto batch =
        run_gradient_check_instance(h, tol, seed + static_cast<std::uint32_t>(1000 * inst));
    for (const auto& r : batch) {
      auto it = std::find_if(merged.begin(), merged.end(),
                             [&](const GradCheckResult& m) { return m.name == r.name; });
      if (it == merged.end()) {
        merged.push_back(r);
      } else {
        it->max_rel_error = std::max(it->max_rel_error, r.max_rel_error);
        it->pass = it->pass && r.pass;
      }
    }
  }
  return merged;
}

}  // namespace sface::nn
