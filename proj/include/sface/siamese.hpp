#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sface/checkpoint.hpp"
#include "sface/embedding.hpp"
#include "sface/errors.hpp"
#include "sface/layers.hpp"
#include "sface/orl.hpp"
#include "sface/util.hpp"

namespace sface {

inline constexpr std::size_t kInputSize = data::FaceImage::kSize;  // 100

/**
 * @brief The embedding network, run identically over both inputs of a pair.
 *
 * Three padded 3x3 conv blocks (ReLU + per-channel normalization) keep the
 * 100x100 geometry, then a flatten and three dense layers reduce to a 5-d
 * embedding. Both pair branches share this one parameter set: training runs
 * forward twice onto two tapes and backs both up into the same gradients.
 */
template <typename T>
struct SiameseNetworkT {
  std::vector<nn::LayerT<T>> layers;
  nn::TrainMode mode = nn::TrainMode::Evaluation;

  void set_mode(nn::TrainMode m) { mode = m; }

  nn::TensorT<T> forward(const nn::TensorT<T>& input, nn::TapeT<T>* tape = nullptr) {
    nn::TensorT<T> x = input;
    for (auto& l : layers) x = l.forward(x, mode, tape);
    return x;
  }

  std::vector<nn::TensorT<T>*> params() {
    std::vector<nn::TensorT<T>*> out;
    for (auto& l : layers)
      if (l.has_params()) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
      }
    return out;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  std::vector<std::string> structure() const {
    std::vector<std::string> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.describe());
    return out;
  }
};

using SiameseNetwork = SiameseNetworkT<float>;

template <typename T>
SiameseNetworkT<T> build_siamese_network_t(std::uint32_t seed) {
  using L = nn::LayerT<T>;
  constexpr std::size_t S = kInputSize;
  SiameseNetworkT<T> net;
  net.layers.push_back(L::reflection_pad(1));
  net.layers.push_back(L::conv(1, 4, 3));
  net.layers.push_back(L::relu());
  net.layers.push_back(L::batchnorm(4));
  net.layers.push_back(L::reflection_pad(1));
  net.layers.push_back(L::conv(4, 8, 3));
  net.layers.push_back(L::relu());
  net.layers.push_back(L::batchnorm(8));
  net.layers.push_back(L::reflection_pad(1));
  net.layers.push_back(L::conv(8, 8, 3));
  net.layers.push_back(L::relu());
  net.layers.push_back(L::batchnorm(8));
  net.layers.push_back(L::flatten());
  net.layers.push_back(L::linear(8 * S * S, 500));
  net.layers.push_back(L::relu());
  net.layers.push_back(L::linear(500, 500));
  net.layers.push_back(L::relu());
  net.layers.push_back(L::linear(500, kEmbeddingDim));
  std::mt19937 rng(seed);
  for (auto& l : net.layers) l.init_params(rng);
  return net;
}

inline SiameseNetwork build_siamese_network(std::uint32_t seed) {
  return build_siamese_network_t<float>(seed);
}

// ---- batching ---------------------------------------------------------------

template <typename T>
nn::TensorT<T> to_batch(const std::vector<const data::FaceImage*>& images) {
  constexpr std::size_t S = kInputSize;
  nn::TensorT<T> out = nn::TensorT<T>::zeros({images.size(), 1, S, S});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->pixels.size() != S * S)
      throw std::invalid_argument("to_batch: face image has wrong pixel count");
    T* dst = out.data.data() + i * S * S;
    for (std::size_t t = 0; t < S * S; ++t) dst[t] = static_cast<T>(images[i]->pixels[t]);
  }
  return out;
}

/// Embed one image. The network must be in evaluation mode so the result is
/// a pure function of the parameters.
inline Embedding embed(SiameseNetwork& net, const data::FaceImage& img) {
  if (net.mode != nn::TrainMode::Evaluation)
    throw std::logic_error("embed requires the network to be in evaluation mode");
  nn::Tensor out = net.forward(to_batch<float>({&img}));
  if (out.shape != std::vector<std::size_t>{1, kEmbeddingDim})
    throw std::logic_error("embed: network does not produce a 5-d embedding");
  Embedding e;
  std::copy(out.data.begin(), out.data.end(), e.values.begin());
  return e;
}

inline std::vector<Embedding> embed_batch(SiameseNetwork& net,
                                          const std::vector<data::FaceImage>& images) {
  if (net.mode != nn::TrainMode::Evaluation)
    throw std::logic_error("embed requires the network to be in evaluation mode");
  constexpr std::size_t kChunk = 64;
  std::vector<Embedding> out;
  out.reserve(images.size());
  for (std::size_t at = 0; at < images.size(); at += kChunk) {
    const std::size_t n = std::min(kChunk, images.size() - at);
    std::vector<const data::FaceImage*> ptrs(n);
    for (std::size_t i = 0; i < n; ++i) ptrs[i] = &images[at + i];
    nn::Tensor res = net.forward(to_batch<float>(ptrs));
    for (std::size_t i = 0; i < n; ++i) {
      Embedding e;
      for (std::size_t d = 0; d < kEmbeddingDim; ++d)
        e.values[d] = res.data[i * kEmbeddingDim + d];
      out.push_back(e);
    }
  }
  return out;
}

// ---- contrastive loss ---------------------------------------------------------

/// Genuine pairs are pulled together (d^2/2); impostor pairs are pushed out
/// to the margin (max(0, margin-d)^2/2).
template <typename T>
T contrastive_loss(T distance, data::PairLabel label, T margin) {
  if (label == data::PairLabel::Genuine) return distance * distance / T(2);
  T gap = margin - distance;
  if (gap < T(0)) gap = T(0);
  return gap * gap / T(2);
}

template <typename T>
struct PairBatchResult {
  T mean_loss = T(0);
  nn::TensorT<T> grad_a, grad_b;  // d(mean loss)/d(embedding), per branch
  std::vector<T> distances;
};

/// Mean contrastive loss over a batch of embedding pairs plus its gradient
/// with respect to both embedding tensors (each N x 5).
template <typename T>
PairBatchResult<T> pair_batch_loss(const nn::TensorT<T>& ea, const nn::TensorT<T>& eb,
                                   const std::vector<data::PairLabel>& labels, T margin) {
  if (ea.shape != eb.shape || ea.shape.size() != 2)
    throw std::invalid_argument("pair_batch_loss: embedding tensors must share an (N,d) shape");
  const std::size_t n = ea.shape[0], dim = ea.shape[1];
  if (labels.size() != n)
    throw std::invalid_argument("pair_batch_loss: one label per pair required");
  PairBatchResult<T> res;
  res.grad_a = nn::TensorT<T>::zeros(ea.shape);
  res.grad_b = nn::TensorT<T>::zeros(ea.shape);
  res.distances.resize(n);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    T sq = T(0);
    for (std::size_t d = 0; d < dim; ++d) {
      const T diff = ea.data[i * dim + d] - eb.data[i * dim + d];
      sq += diff * diff;
    }
    const T dist = std::sqrt(sq);
    res.distances[i] = dist;
    res.mean_loss += contrastive_loss(dist, labels[i], margin) * inv_n;
    // d(loss_i)/d(ea_i): genuine -> (ea-eb); impostor inside the margin ->
    // -(margin-d)/d * (ea-eb); impostor at or past the margin -> 0.
    T coef;
    if (labels[i] == data::PairLabel::Genuine) {
      coef = inv_n;
    } else if (dist < margin && dist > T(0)) {
      coef = -(margin - dist) / dist * inv_n;
    } else {
      coef = T(0);
    }
    if (coef != T(0)) {
      for (std::size_t d = 0; d < dim; ++d) {
        const T diff = ea.data[i * dim + d] - eb.data[i * dim + d];
        res.grad_a.data[i * dim + d] = coef * diff;
        res.grad_b.data[i * dim + d] = -coef * diff;
      }
    }
  }
  return res;
}

// ---- training -------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  float learning_rate = 5e-4f;
  float momentum = 0.9f;
  float margin = 2.0f;
  std::uint32_t seed = 1;
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0;  // mean loss of the epoch's final batch
};

using ProgressSink = std::function<void(const std::string&)>;

/// Train in place on freshly sampled 50/50 pair batches. Per epoch the sink
/// receives two lines, "Epoch number N" and "Current loss L", where L is the
/// mean loss of the epoch's final batch.
inline std::vector<EpochReport> train(SiameseNetwork& net, const data::DataSplit& split,
                                      const TrainConfig& cfg, const ProgressSink& sink = {}) {
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (split.train.empty()) throw std::invalid_argument("train: empty training set");

  net.set_mode(nn::TrainMode::Training);
  auto params = net.params();
  nn::Sgd sgd(cfg.learning_rate, cfg.momentum);
  const std::size_t steps = (split.train.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::mt19937 seed_stream(cfg.seed);

  std::vector<EpochReport> reports;
  reports.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double last_loss = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto pairs = data::sample_pairs(split.train, cfg.batch_size, 0.5,
                                            static_cast<std::uint32_t>(seed_stream()));
      std::vector<const data::FaceImage*> side_a, side_b;
      std::vector<data::PairLabel> labels;
      side_a.reserve(pairs.size());
      side_b.reserve(pairs.size());
      labels.reserve(pairs.size());
      for (const auto& p : pairs) {
        side_a.push_back(&p.a);
        side_b.push_back(&p.b);
        labels.push_back(p.label);
      }

      net.zero_grads();
      nn::Tape tape_a, tape_b;
      nn::Tensor ea = net.forward(to_batch<float>(side_a), &tape_a);
      nn::Tensor eb = net.forward(to_batch<float>(side_b), &tape_b);
      auto batch = pair_batch_loss(ea, eb, labels, cfg.margin);
      if (!std::isfinite(static_cast<double>(batch.mean_loss)))
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
      tape_b.backward(std::move(batch.grad_b));
      tape_a.backward(std::move(batch.grad_a));
      sgd.step(params);
      last_loss = static_cast<double>(batch.mean_loss);
    }
    if (sink) {
      sink("Epoch number " + std::to_string(epoch));
      sink("Current loss " + util::format_float(last_loss));
    }
    reports.push_back({epoch, last_loss});
  }
  net.set_mode(nn::TrainMode::Evaluation);
  return reports;
}

// ---- evaluation -------------------------------------------------------------------

struct EvalMetrics {
  double median_genuine = 0;
  double median_impostor = 0;
  double accuracy = 0;       // at the best single distance threshold
  double threshold = 0;      // the threshold that achieved it
  std::size_t pairs = 0;
};

/// Verification quality over sampled pairs of a held-out set: embeds every
/// image once, then measures distance medians and the best-threshold
/// accuracy (genuine predicted when distance < threshold).
inline EvalMetrics evaluate(SiameseNetwork& net, const std::vector<data::FaceImage>& test,
                            std::size_t pair_budget, std::uint32_t seed) {
  if (pair_budget == 0) throw std::invalid_argument("evaluate: pair budget must be positive");
  net.set_mode(nn::TrainMode::Evaluation);
  const std::vector<Embedding> emb = embed_batch(net, test);
  std::vector<int> subject_ids;
  subject_ids.reserve(test.size());
  for (const auto& img : test) subject_ids.push_back(img.subject_id);
  const auto pairs = data::sample_pair_indices(subject_ids, pair_budget, 0.5, seed);

  std::vector<double> genuine, impostor;
  std::vector<std::pair<double, bool>> scored;  // (distance, is_genuine)
  scored.reserve(pairs.size());
  for (const auto& p : pairs) {
    const double d = euclidean_distance(emb[p.a], emb[p.b]);
    const bool is_genuine = p.label == data::PairLabel::Genuine;
    (is_genuine ? genuine : impostor).push_back(d);
    scored.emplace_back(d, is_genuine);
  }

  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
  };

  EvalMetrics out;
  out.pairs = pairs.size();
  out.median_genuine = median(genuine);
  out.median_impostor = median(impostor);

  // Sweep thresholds between consecutive distances; prefix[i] counts genuine
  // pairs among the i closest, so correctness at each cut is O(1).
  std::sort(scored.begin(), scored.end());
  const std::size_t n = scored.size(), n_genuine = genuine.size();
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (scored[i].second ? 1 : 0);
  double best_acc = -1, best_t = 0;
  for (std::size_t cut = 0; cut <= n; ++cut) {
    // Threshold below scored[cut]: first `cut` predicted genuine.
    const std::size_t correct = prefix[cut] + ((n - cut) - (n_genuine - prefix[cut]));
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    double t;
    if (cut == 0) t = scored.front().first - 1;
    else if (cut == n) t = scored.back().first + 1;
    else t = (scored[cut - 1].first + scored[cut].first) / 2;
    if (acc > best_acc) {
      best_acc = acc;
      best_t = t;
    }
  }
  out.accuracy = best_acc;
  out.threshold = best_t;
  return out;
}

// ---- persistence -------------------------------------------------------------------

inline void save_checkpoint(const SiameseNetwork& net, const std::string& path) {
  nn::save_layers_file(path, net.layers);
}

inline SiameseNetwork load_checkpoint(const std::string& path) {
  SiameseNetwork net;
  net.layers = nn::load_layers_file(path);
  net.mode = nn::TrainMode::Evaluation;
  if (net.layers.empty() || net.layers.back().kind != nn::LayerKind::Linear ||
      net.layers.back().out_features != kEmbeddingDim)
    throw FormatError("checkpoint does not end in a " + std::to_string(kEmbeddingDim) +
                      "-wide embedding layer: " + path);
  return net;
}

}  // namespace sface
