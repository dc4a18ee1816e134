#ifndef ZYSIM_INFERENCE_HPP
#define ZYSIM_INFERENCE_HPP

// Agile DNN execution: per-layer forward pass, feature selection, k-means
// classification with the margin utility test, run-time centroid adaptation
// and propagation of adapted centroids into deeper layers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zysim/error.hpp"

namespace zysim {

enum class LayerKind { dense, convolution };
enum class Activation { relu, none };

struct Pool {
  std::size_t size_h = 1, size_w = 1;
  std::size_t stride_h = 1, stride_w = 1;

  friend bool operator==(const Pool&, const Pool&) = default;
};

/// Flat activation plus its logical shape ({n} for dense, {C, H, W} for
/// convolution outputs).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
  }
};

inline std::size_t shape_size(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline double relu(double x) { return (x + std::abs(x)) / 2.0; }

struct Layer {
  LayerKind kind = LayerKind::dense;
  std::vector<std::size_t> input_shape;   // dense: {in}; conv: {C, H, W}
  std::vector<std::size_t> weight_shape;  // dense: {out, in}; conv: {K, C, kh, kw}
  std::vector<double> weights;            // row-major over weight_shape
  std::vector<double> bias;               // one per output row / channel
  Activation activation = Activation::relu;
  std::optional<Pool> pool;               // convolution only

  std::size_t input_size() const { return shape_size(input_shape); }

  /// Shape of the affine output before pooling.
  std::vector<std::size_t> linear_shape() const {
    if (kind == LayerKind::dense) return {weight_shape[0]};
    return {weight_shape[0], input_shape[1] - weight_shape[2] + 1,
            input_shape[2] - weight_shape[3] + 1};
  }

  std::vector<std::size_t> output_shape() const {
    auto s = linear_shape();
    if (pool) {
      s[1] = (s[1] - pool->size_h) / pool->stride_h + 1;
      s[2] = (s[2] - pool->size_w) / pool->stride_w + 1;
    }
    return s;
  }

  std::size_t output_size() const { return shape_size(output_shape()); }

  /// W x + bias_scale * b over the flattened input.
  std::vector<double> affine(std::span<const double> x, double bias_scale = 1.0) const {
    if (x.size() != input_size())
      throw ValidationError("layer: input has " + std::to_string(x.size()) +
                            " values, expected " + std::to_string(input_size()));
    if (kind == LayerKind::dense) {
      const std::size_t out = weight_shape[0], in = weight_shape[1];
      std::vector<double> y(out);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        const double* w = weights.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
        y[o] = acc + bias_scale * bias[o];
      }
      return y;
    }
    const std::size_t K = weight_shape[0], C = weight_shape[1];
    const std::size_t kh = weight_shape[2], kw = weight_shape[3];
    const std::size_t H = input_shape[1], W = input_shape[2];
    const std::size_t oh = H - kh + 1, ow = W - kw + 1;
    std::vector<double> y(K * oh * ow);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < C; ++ch)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j)
                acc += weights[((k * C + ch) * kh + i) * kw + j] *
                       x[(ch * H + r + i) * W + c + j];
          y[(k * oh + r) * ow + c] = acc + bias_scale * bias[k];
        }
    return y;
  }

  std::vector<double> activate(std::vector<double> y) const {
    if (activation == Activation::relu)
      for (double& v : y) v = relu(v);
    return y;
  }

  std::vector<double> apply_pool(const std::vector<double>& y) const {
    if (!pool) return y;
    const auto ls = linear_shape();
    const auto os = output_shape();
    std::vector<double> out(shape_size(os));
    for (std::size_t k = 0; k < os[0]; ++k)
      for (std::size_t r = 0; r < os[1]; ++r)
        for (std::size_t c = 0; c < os[2]; ++c) {
          double m = -INFINITY;
          for (std::size_t i = 0; i < pool->size_h; ++i)
            for (std::size_t j = 0; j < pool->size_w; ++j) {
              const std::size_t rr = r * pool->stride_h + i, cc = c * pool->stride_w + j;
              m = std::max(m, y[(k * ls[1] + rr) * ls[2] + cc]);
            }
          out[(k * os[1] + r) * os[2] + c] = m;
        }
    return out;
  }
};

struct KMeansClassifier {
  std::vector<std::vector<double>> centroids;       // selected-feature space
  std::vector<int> labels;
  std::vector<std::int64_t> sizes;
  std::vector<std::vector<double>> centroids_full;  // full activation space

  std::size_t k() const { return centroids.size(); }
};

/// Per-layer classifier with its feature selection and exit threshold.
struct LayerClassifier {
  KMeansClassifier kmeans;
  std::vector<std::size_t> feature_indices;
  double threshold = 0.0;
  double psi_max = 0.0;  // largest margin seen at calibration time
};

struct AgileModel {
  std::vector<Layer> layers;
  std::vector<LayerClassifier> classifiers;
  std::vector<double> coefficients;

  std::size_t layer_count() const { return layers.size(); }

  /// Re-checks every structural invariant; messages name the field path.
  void validate() const;
};

struct UnitOutcome {
  int label = -1;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double psi = 0.0;
  bool exit = false;
  std::size_t cluster = 0;  // index of the nearest centroid
};

/// Runs layer `layer_index` on an activation: affine, activation, pooling.
/// The result is returned with the layer's logical output shape; the data is
/// already flat for clustering.
inline Tensor forward_layer(const AgileModel& model, std::size_t layer_index,
                            const Tensor& activation_in) {
  require(layer_index < model.layers.size(), "forward_layer: layer index out of range");
  const Layer& layer = model.layers[layer_index];
  Tensor out;
  out.data = layer.apply_pool(layer.activate(layer.affine(activation_in.data)));
  out.shape = layer.output_shape();
  return out;
}

inline std::vector<double> select_features(std::span<const double> activation,
                                           std::span<const std::size_t> indices) {
  require(!indices.empty(), "select_features: empty index list");
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    require(idx < activation.size(),
            "select_features: index " + std::to_string(idx) + " out of range for " +
                std::to_string(activation.size()) + " values");
    out.push_back(activation[idx]);
  }
  return out;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

/// Nearest and second-nearest centroid by L1 distance; exit iff the margin
/// between them reaches the threshold. Equal distances resolve to the lower
/// centroid index.
inline UnitOutcome classify(const KMeansClassifier& clf, std::span<const double> features,
                            double threshold) {
  require(clf.k() >= 2, "classify: need at least two centroids");
  std::size_t best = 0, second = 1;
  std::vector<double> dist(clf.k());
  for (std::size_t c = 0; c < clf.k(); ++c) {
    require(clf.centroids[c].size() == features.size(),
            "classify: centroid " + std::to_string(c) + " has dimension " +
                std::to_string(clf.centroids[c].size()) + ", features have " +
                std::to_string(features.size()));
    dist[c] = l1_distance(clf.centroids[c], features);
  }
  if (dist[second] < dist[best]) std::swap(best, second);
  for (std::size_t c = 2; c < clf.k(); ++c) {
    if (dist[c] < dist[best]) {
      second = best;
      best = c;
    } else if (dist[c] < dist[second]) {
      second = c;
    }
  }
  UnitOutcome o;
  o.cluster = best;
  o.label = clf.labels[best];
  o.delta1 = dist[best];
  o.delta2 = dist[second];
  o.psi = std::abs(o.delta2 - o.delta1);
  o.exit = o.psi >= threshold;
  return o;
}

/// Shannon entropy in bits; an alternative utility to the L1 margin.
inline double entropy_utility(std::span<const double> probs) {
  require(!probs.empty(), "entropy_utility: empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    require(p >= 0.0 && std::isfinite(p), "entropy_utility: negative or non-finite entry");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "entropy_utility: probabilities do not sum to 1");
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

/// c <- (1 - w) c + w x on the selected-feature centroid; the cluster grows
/// by one member.
inline KMeansClassifier adapt_centroid(KMeansClassifier clf, std::size_t cluster_index,
                                       std::span<const double> x, double w) {
  require(w > 0.0 && w < 1.0, "adapt_centroid: weight must lie in (0, 1)");
  require(cluster_index < clf.k(), "adapt_centroid: cluster index out of range");
  auto& c = clf.centroids[cluster_index];
  require(c.size() == x.size(), "adapt_centroid: dimension mismatch");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = (1.0 - w) * c[i] + w * x[i];
  ++clf.sizes[cluster_index];
  return clf;
}

/// Same weighted update on the full-activation centroid. Sizes are left
/// alone; adapt_centroid already counted the member.
inline void adapt_full_centroid(KMeansClassifier& clf, std::size_t cluster_index,
                                std::span<const double> x, double w) {
  require(w > 0.0 && w < 1.0, "adapt_full_centroid: weight must lie in (0, 1)");
  require(cluster_index < clf.centroids_full.size(),
          "adapt_full_centroid: cluster index out of range");
  auto& c = clf.centroids_full[cluster_index];
  require(c.size() == x.size(), "adapt_full_centroid: dimension mismatch");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = (1.0 - w) * c[i] + w * x[i];
}

/// Estimated full-space centroid of `cluster_index` at layer i+1 from its
/// counterpart at layer i: (1/r) act(W (r c) + r b), where r c is the cluster
/// sum. Layers with pooling cannot be propagated through.
inline std::vector<double> propagate_centroids(const AgileModel& model, std::size_t layer_index,
                                               std::size_t cluster_index) {
  require(layer_index + 1 < model.layers.size(), "propagate_centroids: no next layer");
  const Layer& next = model.layers[layer_index + 1];
  require(!next.pool, "propagate_centroids: layer " + std::to_string(layer_index + 1) +
                          " pools its output");
  const KMeansClassifier& clf = model.classifiers[layer_index].kmeans;
  require(cluster_index < clf.centroids_full.size(),
          "propagate_centroids: cluster index out of range");
  const auto& c = clf.centroids_full[cluster_index];
  require(c.size() == next.input_size(), "propagate_centroids: dimension mismatch");

  const double r = static_cast<double>(clf.sizes[cluster_index]);
  std::vector<double> sum(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) sum[i] = r * c[i];
  std::vector<double> y = next.activate(next.affine(sum, r));
  for (double& v : y) v /= r;
  return y;
}

/// Writes the propagated centroid into layer i+1 (both spaces). Returns false
/// when the layers cannot be paired (pooling or mismatched cluster counts).
inline bool apply_propagation(AgileModel& model, std::size_t layer_index,
                              std::size_t cluster_index) {
  if (layer_index + 1 >= model.layers.size()) return false;
  if (model.layers[layer_index + 1].pool) return false;
  auto& next = model.classifiers[layer_index + 1];
  if (next.kmeans.k() != model.classifiers[layer_index].kmeans.k()) return false;
  auto full = propagate_centroids(model, layer_index, cluster_index);
  next.kmeans.centroids[cluster_index] = select_features(full, next.feature_indices);
  next.kmeans.centroids_full[cluster_index] = std::move(full);
  return true;
}

/// Outcome of running one input through the model with early exit.
struct InferenceResult {
  std::vector<UnitOutcome> units;  // one per executed layer
  std::size_t exit_layer = 0;      // 1-based
  int label = -1;
};

/// Executes layers until the utility test passes or the model runs out.
inline InferenceResult infer(const AgileModel& model, std::span<const double> input) {
  InferenceResult res;
  Tensor act = Tensor::from_vector({input.begin(), input.end()});
  if (!model.layers.empty()) act.shape = model.layers.front().input_shape;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    act = forward_layer(model, l, act);
    const auto& lc = model.classifiers[l];
    auto o = classify(lc.kmeans, select_features(act.data, lc.feature_indices), lc.threshold);
    res.units.push_back(o);
    res.label = o.label;
    res.exit_layer = l + 1;
    if (o.exit) break;
  }
  return res;
}

inline void AgileModel::validate() const {
  require(!layers.empty(), "model.layers: empty");
  require(classifiers.size() == layers.size(),
          "model.classifiers: count " + std::to_string(classifiers.size()) +
              " != layer count " + std::to_string(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    const std::string p = "layers[" + std::to_string(l) + "]";
    if (L.kind == LayerKind::dense) {
      require(L.input_shape.size() == 1, p + ".input: dense input must be 1-D");
      require(L.weight_shape.size() == 2, p + ".shape: dense shape must be [out, in]");
      require(L.weight_shape[1] == L.input_shape[0], p + ".shape: in != input size");
      require(!L.pool, p + ".pool: pooling is only supported on convolution layers");
    } else {
      require(L.input_shape.size() == 3, p + ".input: convolution input must be [C, H, W]");
      require(L.weight_shape.size() == 4,
              p + ".shape: convolution shape must be [K, C, kh, kw]");
      require(L.weight_shape[1] == L.input_shape[0], p + ".shape: C != input channels");
      require(L.weight_shape[2] >= 1 && L.weight_shape[2] <= L.input_shape[1] &&
                  L.weight_shape[3] >= 1 && L.weight_shape[3] <= L.input_shape[2],
              p + ".shape: kernel larger than input");
      if (L.pool) {
        const auto ls = L.linear_shape();
        require(L.pool->size_h >= 1 && L.pool->size_w >= 1 && L.pool->stride_h >= 1 &&
                    L.pool->stride_w >= 1,
                p + ".pool: sizes and strides must be >= 1");
        require(L.pool->size_h <= ls[1] && L.pool->size_w <= ls[2],
                p + ".pool: window larger than feature map");
      }
    }
    for (std::size_t d : L.weight_shape) require(d >= 1, p + ".shape: zero dimension");
    require(L.weights.size() == shape_size(L.weight_shape),
            p + ".weights: expected " + std::to_string(shape_size(L.weight_shape)) +
                " values, got " + std::to_string(L.weights.size()));
    require(L.bias.size() == L.weight_shape[0],
            p + ".bias: expected " + std::to_string(L.weight_shape[0]) + " values");
    for (double w : L.weights) require(std::isfinite(w), p + ".weights: non-finite value");
    for (double b : L.bias) require(std::isfinite(b), p + ".bias: non-finite value");
    if (l > 0) {
      require(shape_size(L.input_shape) == layers[l - 1].output_size(),
              p + ".input: size does not chain from layer " + std::to_string(l - 1));
    }

    const LayerClassifier& c = classifiers[l];
    const std::string q = "classifiers[" + std::to_string(l) + "]";
    const std::size_t out = L.output_size();
    require(!c.feature_indices.empty(), q + ".feature_indices: empty");
    require(c.feature_indices.size() <= 150, q + ".feature_indices: more than 150 features");
    for (std::size_t idx : c.feature_indices)
      require(idx < out, q + ".feature_indices: index " + std::to_string(idx) +
                             " out of range for layer output " + std::to_string(out));
    const auto& km = c.kmeans;
    require(km.k() >= 2, q + ".centroids: need k >= 2");
    require(km.labels.size() == km.k(), q + ".labels: count != k");
    require(km.sizes.size() == km.k(), q + ".sizes: count != k");
    require(km.centroids_full.size() == km.k(), q + ".centroids_full: count != k");
    for (std::size_t j = 0; j < km.k(); ++j) {
      require(km.centroids[j].size() == c.feature_indices.size(),
              q + ".centroids[" + std::to_string(j) + "]: dimension " +
                  std::to_string(km.centroids[j].size()) + " != feature count " +
                  std::to_string(c.feature_indices.size()));
      require(km.centroids_full[j].size() == out,
              q + ".centroids_full[" + std::to_string(j) + "]: dimension != layer output");
      require(km.sizes[j] >= 1, q + ".sizes[" + std::to_string(j) + "]: must be >= 1");
      for (double v : km.centroids[j]) require(std::isfinite(v), q + ".centroids: non-finite");
      for (double v : km.centroids_full[j])
        require(std::isfinite(v), q + ".centroids_full: non-finite");
    }
    require(std::isfinite(c.threshold) && c.threshold >= 0.0,
            q + ".threshold: must be finite and >= 0");
    require(std::isfinite(c.psi_max) && c.psi_max >= 0.0,
            q + ".psi_max: must be finite and >= 0");
  }
  if (!coefficients.empty()) {
    require(coefficients.size() == layers.size(), "model.coefficients: count != layer count");
    double sum = 0.0;
    for (double a : coefficients) {
      require(std::isfinite(a) && a >= 0.0, "model.coefficients: negative or non-finite");
      sum += a;
    }
    require(std::abs(sum - 1.0) <= 1e-6, "model.coefficients: do not sum to 1");
  }
}

}  // namespace zysim

#endif  // ZYSIM_INFERENCE_HPP
