#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sface/errors.hpp"
#include "sface/layers.hpp"
#include "sface/util.hpp"

namespace sface::nn {

// Checkpoint container: magic "SFNN1\n", u32 layer count, then per layer a
// u32 kind tag, its hyperparameters, and any parameter arrays. Arrays are
// self-describing (u32 rank, u32 extents, float32 data) and everything is
// little-endian, so a save/load cycle is bit-exact.

inline constexpr char kCheckpointMagic[6] = {'S', 'F', 'N', 'N', '1', '\n'};

namespace detail {

inline void put_array(std::ostream& os, const Tensor& t) {
  util::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t e : t.shape) util::put_u32(os, static_cast<std::uint32_t>(e));
  for (float v : t.data) util::put_f32(os, v);
}

inline void put_vec(std::ostream& os, const std::vector<float>& v) {
  util::put_u32(os, 1);
  util::put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (float x : v) util::put_f32(os, x);
}

inline Tensor get_array(std::istream& is, const std::string& what) {
  const std::uint32_t rank = util::get_u32(is, what + " rank");
  if (rank == 0 || rank > 4) throw FormatError("checkpoint: bad rank for " + what);
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (auto& e : shape) {
    e = util::get_u32(is, what + " extent");
    if (e == 0 || e > (1u << 30) || n > (1u << 30) / e)
      throw FormatError("checkpoint: implausible extents for " + what);
    n *= e;
  }
  std::vector<float> data(n);
  for (auto& v : data) v = util::get_f32(is, what + " data");
  return Tensor(std::move(shape), std::move(data));
}

inline std::vector<float> get_vec(std::istream& is, const std::string& what) {
  Tensor t = get_array(is, what);
  if (t.shape.size() != 1) throw FormatError("checkpoint: " + what + " must be rank-1");
  return t.data;
}

/// Hyperparameter fields size allocations, so they get their own sanity cap.
inline std::uint32_t get_extent(std::istream& is, const std::string& what) {
  const std::uint32_t v = util::get_u32(is, what);
  if (v == 0 || v > (1u << 24)) throw FormatError("checkpoint: implausible " + what);
  return v;
}

}  // namespace detail

inline void save_layers(std::ostream& os, const std::vector<Layer>& layers) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  util::put_u32(os, static_cast<std::uint32_t>(layers.size()));
  for (const Layer& l : layers) {
    util::put_u32(os, static_cast<std::uint32_t>(l.kind));
    switch (l.kind) {
      case LayerKind::ReflectionPad:
        util::put_u32(os, static_cast<std::uint32_t>(l.pad));
        break;
      case LayerKind::Conv:
        util::put_u32(os, static_cast<std::uint32_t>(l.in_channels));
        util::put_u32(os, static_cast<std::uint32_t>(l.out_channels));
        util::put_u32(os, static_cast<std::uint32_t>(l.kernel));
        util::put_u32(os, static_cast<std::uint32_t>(l.stride));
        detail::put_array(os, l.weight);
        detail::put_array(os, l.bias);
        break;
      case LayerKind::ReLU:
      case LayerKind::MaxPool:
      case LayerKind::Flatten:
        break;
      case LayerKind::BatchNorm:
        util::put_u32(os, static_cast<std::uint32_t>(l.channels));
        util::put_f32(os, l.eps);
        util::put_f32(os, l.momentum);
        detail::put_array(os, l.weight);
        detail::put_array(os, l.bias);
        detail::put_vec(os, l.running_mean);
        detail::put_vec(os, l.running_var);
        break;
      case LayerKind::Linear:
        util::put_u32(os, static_cast<std::uint32_t>(l.in_features));
        util::put_u32(os, static_cast<std::uint32_t>(l.out_features));
        detail::put_array(os, l.weight);
        detail::put_array(os, l.bias);
        break;
    }
  }
}

inline std::vector<Layer> load_layers(std::istream& is) {
  char magic[6];
  if (!is.read(magic, sizeof magic) || std::string(magic, 6) != std::string(kCheckpointMagic, 6))
    throw FormatError("checkpoint: bad magic");
  const std::uint32_t count = util::get_u32(is, "layer count");
  if (count > 1024) throw FormatError("checkpoint: implausible layer count");
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string at = "layer " + std::to_string(i);
    const std::uint32_t tag = util::get_u32(is, at + " kind");
    if (tag > static_cast<std::uint32_t>(LayerKind::Linear))
      throw FormatError("checkpoint: unknown kind tag " + std::to_string(tag) + " at " + at);
    const auto kind = static_cast<LayerKind>(tag);
    switch (kind) {
      case LayerKind::ReflectionPad: {
        layers.push_back(Layer::reflection_pad(util::get_u32(is, at + " pad")));
        break;
      }
      case LayerKind::Conv: {
        const std::uint32_t cin = detail::get_extent(is, at + " in_channels");
        const std::uint32_t cout = detail::get_extent(is, at + " out_channels");
        const std::uint32_t k = detail::get_extent(is, at + " kernel");
        if (static_cast<std::uint64_t>(cin) * cout * k * k > (1u << 30))
          throw FormatError("checkpoint: implausible conv extents at " + at);
        const std::uint32_t stride = util::get_u32(is, at + " stride");
        if (stride != 1) throw FormatError("checkpoint: unsupported conv stride at " + at);
        Layer l = Layer::conv(cin, cout, k);
        Tensor w = detail::get_array(is, at + " weight");
        Tensor b = detail::get_array(is, at + " bias");
        if (w.shape != l.weight.shape || b.shape != l.bias.shape)
          throw FormatError("checkpoint: extents mismatch at " + at);
        l.weight.data = std::move(w.data);
        l.bias.data = std::move(b.data);
        layers.push_back(std::move(l));
        break;
      }
      case LayerKind::ReLU:
        layers.push_back(Layer::relu());
        break;
      case LayerKind::MaxPool:
        layers.push_back(Layer::maxpool());
        break;
      case LayerKind::Flatten:
        layers.push_back(Layer::flatten());
        break;
      case LayerKind::BatchNorm: {
        const std::uint32_t c = detail::get_extent(is, at + " channels");
        Layer l = Layer::batchnorm(c);
        l.eps = util::get_f32(is, at + " eps");
        l.momentum = util::get_f32(is, at + " momentum");
        Tensor g = detail::get_array(is, at + " gamma");
        Tensor b = detail::get_array(is, at + " beta");
        std::vector<float> rm = detail::get_vec(is, at + " running mean");
        std::vector<float> rv = detail::get_vec(is, at + " running var");
        if (g.shape != l.weight.shape || b.shape != l.bias.shape || rm.size() != c ||
            rv.size() != c)
          throw FormatError("checkpoint: extents mismatch at " + at);
        l.weight.data = std::move(g.data);
        l.bias.data = std::move(b.data);
        l.running_mean = std::move(rm);
        l.running_var = std::move(rv);
        layers.push_back(std::move(l));
        break;
      }
      case LayerKind::Linear: {
        const std::uint32_t fin = detail::get_extent(is, at + " in_features");
        const std::uint32_t fout = detail::get_extent(is, at + " out_features");
        if (static_cast<std::uint64_t>(fin) * fout > (1u << 30))
          throw FormatError("checkpoint: implausible linear extents at " + at);
        Layer l = Layer::linear(fin, fout);
        Tensor w = detail::get_array(is, at + " weight");
        Tensor b = detail::get_array(is, at + " bias");
        if (w.shape != l.weight.shape || b.shape != l.bias.shape)
          throw FormatError("checkpoint: extents mismatch at " + at);
        l.weight.data = std::move(w.data);
        l.bias.data = std::move(b.data);
        layers.push_back(std::move(l));
        break;
      }
    }
  }
  is.peek();
  if (!is.eof()) throw FormatError("checkpoint: trailing bytes after last layer");
  return layers;
}

inline void save_layers_file(const std::string& path, const std::vector<Layer>& layers) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
  save_layers(f, layers);
  f.flush();
  if (!f) throw FormatError("failed writing checkpoint: " + path);
}

inline std::vector<Layer> load_layers_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  return load_layers(f);
}

}  // namespace sface::nn
