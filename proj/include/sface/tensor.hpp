#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sface::nn {

/**
 * @brief Dense row-major tensor with an optional gradient buffer.
 *
 * Shape is dynamic (rank 1..4 in practice). `grad` stays empty unless the
 * tensor is a trainable parameter; it then always mirrors `data` in size.
 * The scalar type is a template parameter so the same code paths run in
 * float for training and double for finite-difference checking.
 */
template <typename T>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  std::vector<T> grad;

  TensorT() = default;
  TensorT(std::vector<std::size_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_string() + " does not match " +
                                  std::to_string(data.size()) + " values");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static TensorT zeros(std::vector<std::size_t> s) {
    std::size_t n = numel(s);
    return TensorT(std::move(s), std::vector<T>(n, T(0)));
  }

  static TensorT full(std::vector<std::size_t> s, T v) {
    std::size_t n = numel(s);
    return TensorT(std::move(s), std::vector<T>(n, v));
  }

  std::size_t size() const { return data.size(); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void alloc_grad() { grad.assign(data.size(), T(0)); }
  void zero_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    else std::fill(grad.begin(), grad.end(), T(0));
  }

  std::string shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }

  /// Reshape without copying; element count must be preserved.
  TensorT reshaped(std::vector<std::size_t> s) const {
    if (numel(s) != data.size())
      throw std::invalid_argument("tensor: cannot reshape " + shape_string() + " to hold " +
                                  std::to_string(numel(s)) + " values");
    TensorT out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }
};

using Tensor = TensorT<float>;

}  // namespace sface::nn
