#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weaktag/error.hpp"
#include "weaktag/features.hpp"
#include "weaktag/grid.hpp"
#include "weaktag/params.hpp"
#include "weaktag/random.hpp"
#include "weaktag/tensor.hpp"

namespace weaktag {

inline constexpr double kDetectorEps = 1e-8;
inline constexpr double kBceClip = 1e-7;

// ---------------------------------------------------------------------------
// Tags and labels

class TagVocabulary {
 public:
  TagVocabulary() = default;
  explicit TagVocabulary(std::vector<std::string> tags) : tags_(std::move(tags)) {
    for (std::size_t i = 0; i < tags_.size(); ++i) {
      require(!tags_[i].empty(), Errc::invalid_argument, "empty tag identifier");
      for (std::size_t j = 0; j < i; ++j)
        require(tags_[i] != tags_[j], Errc::invalid_argument, "duplicate tag " + tags_[i]);
    }
  }

  /// c, m, f, v, p, b, o, S: child, male, female speech, TV, percussive,
  /// broadband noise, other identifiable sounds, silence.
  static TagVocabulary chime_home() { return TagVocabulary({"c", "m", "f", "v", "p", "b", "o", "S"}); }

  std::size_t size() const { return tags_.size(); }
  const std::string& operator[](std::size_t k) const { return tags_[k]; }
  const std::vector<std::string>& tags() const { return tags_; }

  std::optional<std::size_t> index_of(std::string_view tag) const {
    for (std::size_t k = 0; k < tags_.size(); ++k)
      if (tags_[k] == tag) return k;
    return std::nullopt;
  }

  /// Drops the listed tags, keeping the relative order of the rest.
  TagVocabulary without(const std::vector<std::string>& excluded) const {
    std::vector<std::string> kept;
    for (const auto& t : tags_)
      if (std::find(excluded.begin(), excluded.end(), t) == excluded.end()) kept.push_back(t);
    return TagVocabulary(std::move(kept));
  }

  friend bool operator==(const TagVocabulary&, const TagVocabulary&) = default;

 private:
  std::vector<std::string> tags_;
};

/// Binary clip-level tag indicators t in {0,1}^K.
struct ClipLabel {
  std::vector<std::uint8_t> t;

  std::size_t size() const { return t.size(); }
  bool operator[](std::size_t k) const { return t[k] != 0; }
  friend bool operator==(const ClipLabel&, const ClipLabel&) = default;
};

/// Clip-level occurrence probabilities p_k.
struct ClipPrediction {
  std::vector<double> p;
};

// ---------------------------------------------------------------------------
// Pooling and losses. Score maps are K x M (tag-major), as plotted.

enum class ModelKind { bob, jdc };

inline std::string_view to_string(ModelKind kind) { return kind == ModelKind::bob ? "bob" : "jdc"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "bob") return ModelKind::bob;
  if (s == "jdc") return ModelKind::jdc;
  fail(Errc::invalid_argument, "model kind must be bob or jdc, got '" + std::string(s) + "'");
}

template <class T>
struct ScoreMaps {
  Grid<T> y;       // classifier probabilities
  Grid<T> w;       // raw detector outputs (JDC only)
  Grid<T> w_norm;  // detector normalized over blocks (JDC only)

  std::size_t tags() const { return y.rows; }
  std::size_t blocks() const { return y.cols; }
  bool has_detector() const { return !w.values.empty(); }
};

/// Row denominator of the detector normalization; eps only guards a
/// vanishing sum.
inline double detector_denominator(double sum, double eps = kDetectorEps) { return std::max(sum, eps); }

/// w_norm[k][m] = w[k][m] / max(sum_m w[k][m], eps).
template <class T>
Grid<T> normalize_detector(const Grid<T>& w, double eps = kDetectorEps) {
  Grid<T> out(w.rows, w.cols);
  for (std::size_t k = 0; k < w.rows; ++k) {
    double sum = 0.0;
    for (T v : w.row(k)) sum += static_cast<double>(v);
    const double denom = detector_denominator(sum, eps);
    for (std::size_t m = 0; m < w.cols; ++m)
      out(k, m) = static_cast<T>(static_cast<double>(w(k, m)) / denom);
  }
  return out;
}

/// p_k = sum_m w_norm[k][m] y[k][m].
template <class T>
ClipPrediction jdc_pool(const Grid<T>& w_norm, const Grid<T>& y) {
  require(w_norm.rows == y.rows && w_norm.cols == y.cols, Errc::shape_mismatch,
          "detector and classifier maps differ in shape");
  ClipPrediction pred;
  pred.p.resize(y.rows);
  for (std::size_t k = 0; k < y.rows; ++k) {
    double acc = 0.0;
    for (std::size_t m = 0; m < y.cols; ++m)
      acc += static_cast<double>(w_norm(k, m)) * static_cast<double>(y(k, m));
    pred.p[k] = acc;
  }
  return pred;
}

/// p_k = mean_m y[k][m].
template <class T>
ClipPrediction bob_predict(const Grid<T>& y) {
  require(y.cols >= 1, Errc::invalid_argument, "clip has no blocks");
  ClipPrediction pred;
  pred.p.resize(y.rows);
  for (std::size_t k = 0; k < y.rows; ++k) {
    double acc = 0.0;
    for (T v : y.row(k)) acc += static_cast<double>(v);
    pred.p[k] = acc / static_cast<double>(y.cols);
  }
  return pred;
}

/// Binary cross-entropy with the probability clamped into [eps, 1 - eps].
inline double bce(double p, bool t, double clip_eps = kBceClip) {
  const double q = std::clamp(p, clip_eps, 1.0 - clip_eps);
  return t ? -std::log(q) : -std::log(1.0 - q);
}

/// d bce / d p. Zero outside the clamp range, where the loss is constant.
inline double bce_grad(double p, bool t, double clip_eps = kBceClip) {
  if (p < clip_eps || p > 1.0 - clip_eps) return 0.0;
  return t ? -1.0 / p : 1.0 / (1.0 - p);
}

/// (1/M) sum_k sum_m bce(y[k][m], t_k): every block inherits the clip's tags.
template <class T>
double bob_loss(const Grid<T>& y, const ClipLabel& label) {
  require(y.cols >= 1, Errc::invalid_argument, "clip has no blocks");
  require(y.rows == label.size(), Errc::tag_count_mismatch,
          std::to_string(y.rows) + " score rows vs " + std::to_string(label.size()) + " labels");
  double acc = 0.0;
  for (std::size_t k = 0; k < y.rows; ++k)
    for (T v : y.row(k)) acc += bce(static_cast<double>(v), label[k]);
  return acc / static_cast<double>(y.cols);
}

/// sum_k bce(p_k, t_k).
inline double jdc_loss(const ClipPrediction& pred, const ClipLabel& label) {
  require(pred.p.size() == label.size(), Errc::tag_count_mismatch,
          std::to_string(pred.p.size()) + " predictions vs " + std::to_string(label.size()) +
              " labels");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.p.size(); ++k) acc += bce(pred.p[k], label[k]);
  return acc;
}

// ---------------------------------------------------------------------------
// Network definition

struct ModelSpec {
  ModelKind kind = ModelKind::jdc;
  std::size_t block_len = kBlockLength;
  std::size_t mel_bins = kMelBins;
  std::size_t hidden_layers = 3;
  std::size_t hidden_units = 500;
  std::size_t num_tags = 8;
  float dropout = 0.2F;

  std::size_t input_size() const { return block_len * mel_bins; }

  void validate() const {
    require(block_len >= 1 && mel_bins >= 1, Errc::invalid_argument, "empty model input");
    require(hidden_layers >= 1 && hidden_units >= 1, Errc::invalid_argument,
            "hidden sizes must be positive");
    require(num_tags >= 1, Errc::invalid_argument, "need at least one tag");
    require(dropout >= 0.0F && dropout < 1.0F, Errc::invalid_argument, "dropout must be in [0,1)");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

namespace param_names {
inline std::string hidden_weight(std::size_t i) { return "classifier.hidden" + std::to_string(i + 1) + ".weight"; }
inline std::string hidden_bias(std::size_t i) { return "classifier.hidden" + std::to_string(i + 1) + ".bias"; }
inline constexpr const char* output_weight = "classifier.output.weight";
inline constexpr const char* output_bias = "classifier.output.bias";
inline constexpr const char* detector_weight = "detector.weight";
inline constexpr const char* detector_bias = "detector.bias";
}  // namespace param_names

/// Everything the backward pass needs from one clip's forward pass. Tensors
/// are M x (features) with blocks along the rows.
template <class T>
struct ClipForward {
  BasicTensor<T> input;                    // M x (L*B), standardized
  std::vector<BasicTensor<T>> activated;   // per hidden layer, ReLU output before dropout
  std::vector<BasicTensor<T>> masks;       // per hidden layer, dropout scale
  std::vector<BasicTensor<T>> hidden;      // per hidden layer, input to the next layer
  BasicTensor<T> y;                        // M x K classifier probabilities
  BasicTensor<T> pooled;                   // M x B mean over frames (JDC)
  BasicTensor<T> w;                        // M x K raw detector (JDC)
  std::vector<double> w_sum;               // per tag, sum over blocks of w (JDC)
  BasicTensor<T> w_norm;                   // M x K (JDC)
  ClipPrediction prediction;

  std::size_t blocks() const { return y.rows(); }
  std::size_t tags() const { return y.cols(); }

  ScoreMaps<T> score_maps() const {
    ScoreMaps<T> maps;
    maps.y = transpose(y);
    if (w.size() > 0) {
      maps.w = transpose(w);
      maps.w_norm = transpose(w_norm);
    }
    return maps;
  }

 private:
  static Grid<T> transpose(const BasicTensor<T>& t) {
    Grid<T> g(t.cols(), t.rows());
    for (std::size_t m = 0; m < t.rows(); ++m)
      for (std::size_t k = 0; k < t.cols(); ++k) g(k, m) = t(m, k);
    return g;
  }
};

/// The BOB or JDC tagger: classifier (and, for JDC, detector) parameters plus
/// the input standardization they were trained with.
template <class T>
class BasicTagger {
 public:
  BasicTagger() = default;
  BasicTagger(ModelSpec spec, TagVocabulary vocab, Standardizer standardizer,
              BasicParamSet<T> params)
      : spec_(spec), vocab_(std::move(vocab)), standardizer_(std::move(standardizer)),
        params_(std::move(params)) {
    spec_.validate();
    require(vocab_.size() == spec_.num_tags, Errc::tag_count_mismatch,
            "vocabulary has " + std::to_string(vocab_.size()) + " tags, spec says " +
                std::to_string(spec_.num_tags));
    if (standardizer_.empty()) standardizer_ = Standardizer::identity(spec_.mel_bins);
    require(standardizer_.mean.size() == spec_.mel_bins, Errc::shape_mismatch,
            "standardization length");
    require(params_.same_layout(layout(spec_)), Errc::shape_mismatch,
            "parameters do not match the model spec");
  }

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static BasicTagger initialize(const ModelSpec& spec, TagVocabulary vocab, std::uint64_t seed,
                                Standardizer standardizer = {}) {
    spec.validate();
    Rng rng(seed);
    auto params = layout(spec);
    for (auto& entry : params) {
      if (entry.value.rank() != 2) continue;
      const double fan = static_cast<double>(entry.value.dim(0) + entry.value.dim(1));
      const double limit = std::sqrt(6.0 / fan);
      for (auto& v : entry.value.data()) v = static_cast<T>(rng.uniform(-limit, limit));
    }
    return BasicTagger(spec, std::move(vocab), std::move(standardizer), std::move(params));
  }

  /// Names and shapes of every trainable array, all zero.
  static BasicParamSet<T> layout(const ModelSpec& spec) {
    BasicParamSet<T> p;
    std::size_t fan_in = spec.input_size();
    for (std::size_t i = 0; i < spec.hidden_layers; ++i) {
      p.add(param_names::hidden_weight(i), BasicTensor<T>({fan_in, spec.hidden_units}));
      p.add(param_names::hidden_bias(i), BasicTensor<T>({spec.hidden_units}));
      fan_in = spec.hidden_units;
    }
    p.add(param_names::output_weight, BasicTensor<T>({fan_in, spec.num_tags}));
    p.add(param_names::output_bias, BasicTensor<T>({spec.num_tags}));
    if (spec.kind == ModelKind::jdc) {
      p.add(param_names::detector_weight, BasicTensor<T>({spec.mel_bins, spec.num_tags}));
      p.add(param_names::detector_bias, BasicTensor<T>({spec.num_tags}));
    }
    return p;
  }

  const ModelSpec& spec() const { return spec_; }
  const TagVocabulary& vocabulary() const { return vocab_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const BasicParamSet<T>& params() const { return params_; }
  BasicParamSet<T>& params() { return params_; }

  template <class U>
  BasicTagger<U> cast() const {
    return BasicTagger<U>(spec_, vocab_, standardizer_, params_.template cast<U>());
  }

  /// y for one block (L x B frame-major values): K probabilities.
  std::vector<T> classifier_forward(std::span<const float> block, Mode mode, Rng& rng) const {
    require(block.size() == spec_.input_size(), Errc::shape_mismatch,
            "block has " + std::to_string(block.size()) + " values, model expects " +
                std::to_string(spec_.input_size()));
    ClipForward<T> fwd;
    fwd.input = standardize_rows({&block, 1});
    run_classifier(fwd, mode, rng);
    return {fwd.y.data().begin(), fwd.y.data().end()};
  }

  /// w for one block: K values in (0, 1).
  std::vector<T> detector_forward(std::span<const float> block) const {
    require(spec_.kind == ModelKind::jdc, Errc::model_kind_mismatch, "BOB model has no detector");
    require(block.size() == spec_.input_size(), Errc::shape_mismatch,
            "block has " + std::to_string(block.size()) + " values, model expects " +
                std::to_string(spec_.input_size()));
    ClipForward<T> fwd;
    fwd.input = standardize_rows({&block, 1});
    run_detector(fwd);
    return {fwd.w.data().begin(), fwd.w.data().end()};
  }

  /// Forward pass over every block of a clip, keeping intermediates.
  ClipForward<T> forward(const BlockSequence& blocks, Mode mode, Rng& rng) const {
    require(blocks.block_len() == spec_.block_len && blocks.bins() == spec_.mel_bins,
            Errc::shape_mismatch,
            "blocks are " + std::to_string(blocks.block_len()) + "x" +
                std::to_string(blocks.bins()) + ", model expects " +
                std::to_string(spec_.block_len) + "x" + std::to_string(spec_.mel_bins));
    const std::size_t m_count = blocks.size();
    require(m_count >= 1, Errc::clip_too_short, "clip has no blocks");
    std::vector<std::span<const float>> rows(m_count);
    for (std::size_t m = 0; m < m_count; ++m) rows[m] = blocks.block(m);

    ClipForward<T> fwd;
    fwd.input = standardize_rows(rows);
    run_classifier(fwd, mode, rng);
    const std::size_t k_count = spec_.num_tags;
    if (spec_.kind == ModelKind::jdc) {
      run_detector(fwd);
      fwd.w_sum.assign(k_count, 0.0);
      for (std::size_t m = 0; m < m_count; ++m)
        for (std::size_t k = 0; k < k_count; ++k) fwd.w_sum[k] += static_cast<double>(fwd.w(m, k));
      fwd.w_norm = BasicTensor<T>({m_count, k_count});
      fwd.prediction.p.assign(k_count, 0.0);
      for (std::size_t m = 0; m < m_count; ++m)
        for (std::size_t k = 0; k < k_count; ++k) {
          const double wn = static_cast<double>(fwd.w(m, k)) / detector_denominator(fwd.w_sum[k]);
          fwd.w_norm(m, k) = static_cast<T>(wn);
          fwd.prediction.p[k] += wn * static_cast<double>(fwd.y(m, k));
        }
    } else {
      fwd.prediction.p.assign(k_count, 0.0);
      for (std::size_t m = 0; m < m_count; ++m)
        for (std::size_t k = 0; k < k_count; ++k)
          fwd.prediction.p[k] += static_cast<double>(fwd.y(m, k));
      for (auto& p : fwd.prediction.p) p /= static_cast<double>(m_count);
    }
    check_finite(fwd);
    return fwd;
  }

  ClipPrediction predict(const BlockSequence& blocks) const {
    Rng unused(0);
    return forward(blocks, Mode::eval, unused).prediction;
  }

  /// The clip loss: block-averaged BCE for BOB, BCE of the pooled
  /// prediction for JDC.
  double loss(const ClipForward<T>& fwd, const ClipLabel& label) const {
    require(label.size() == spec_.num_tags, Errc::tag_count_mismatch,
            "label has " + std::to_string(label.size()) + " tags, model has " +
                std::to_string(spec_.num_tags));
    if (spec_.kind == ModelKind::jdc) return jdc_loss(fwd.prediction, label);
    double acc = 0.0;
    for (std::size_t m = 0; m < fwd.blocks(); ++m)
      for (std::size_t k = 0; k < fwd.tags(); ++k)
        acc += bce(static_cast<double>(fwd.y(m, k)), label[k]);
    return acc / static_cast<double>(fwd.blocks());
  }

  /// Gradient of loss(fwd, label) with respect to every parameter.
  BasicParamSet<T> backward(const ClipForward<T>& fwd, const ClipLabel& label) const {
    require(label.size() == spec_.num_tags, Errc::tag_count_mismatch, "label length");
    const std::size_t m_count = fwd.blocks();
    const std::size_t k_count = fwd.tags();
    BasicParamSet<T> grads = params_.zeros_like();

    BasicTensor<T> grad_y({m_count, k_count});
    if (spec_.kind == ModelKind::jdc) {
      BasicTensor<T> grad_w({m_count, k_count});
      for (std::size_t k = 0; k < k_count; ++k) {
        const double p = fwd.prediction.p[k];
        const double gp = bce_grad(p, label[k]);
        const double denom = detector_denominator(fwd.w_sum[k]);
        // Below the guard the denominator is constant and p_k is linear in w.
        const double shift = fwd.w_sum[k] >= kDetectorEps ? p : 0.0;
        for (std::size_t m = 0; m < m_count; ++m) {
          grad_y(m, k) = static_cast<T>(gp * static_cast<double>(fwd.w_norm(m, k)));
          // d p_k / d w_km = (y_km - p_k) / sum_m w_km
          grad_w(m, k) = static_cast<T>(gp * (static_cast<double>(fwd.y(m, k)) - shift) / denom);
        }
      }
      const auto grad_wz = activation_backward(fwd.w, grad_w, Activation::sigmoid);
      auto g = dense_backward(fwd.pooled, params_.at(param_names::detector_weight), grad_wz, false);
      grads.at(param_names::detector_weight) = std::move(g.weight);
      grads.at(param_names::detector_bias) = std::move(g.bias);
    } else {
      const double inv_m = 1.0 / static_cast<double>(m_count);
      for (std::size_t m = 0; m < m_count; ++m)
        for (std::size_t k = 0; k < k_count; ++k)
          grad_y(m, k) = static_cast<T>(bce_grad(static_cast<double>(fwd.y(m, k)), label[k]) * inv_m);
    }

    auto grad = activation_backward(fwd.y, grad_y, Activation::sigmoid);
    const std::size_t layers = spec_.hidden_layers;
    {
      auto g = dense_backward(fwd.hidden[layers - 1], params_.at(param_names::output_weight), grad);
      grads.at(param_names::output_weight) = std::move(g.weight);
      grads.at(param_names::output_bias) = std::move(g.bias);
      grad = std::move(g.input);
    }
    for (std::size_t i = layers; i-- > 0;) {
      auto gd = grad.data();
      auto mask = fwd.masks[i].data();
      for (std::size_t j = 0; j < gd.size(); ++j) gd[j] *= mask[j];
      const auto grad_pre = activation_backward(fwd.activated[i], grad, Activation::relu);
      const auto& layer_in = i == 0 ? fwd.input : fwd.hidden[i - 1];
      auto g = dense_backward(layer_in, params_.at(param_names::hidden_weight(i)), grad_pre, i > 0);
      grads.at(param_names::hidden_weight(i)) = std::move(g.weight);
      grads.at(param_names::hidden_bias(i)) = std::move(g.bias);
      grad = std::move(g.input);
    }
    return grads;
  }

 private:
  BasicTensor<T> standardize_rows(std::span<const std::span<const float>> rows) const {
    const std::size_t width = spec_.input_size();
    const std::size_t bins = spec_.mel_bins;
    BasicTensor<T> x({rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t i = 0; i < width; ++i) {
        const std::size_t b = i % bins;
        x(r, i) = static_cast<T>((rows[r][i] - standardizer_.mean[b]) * standardizer_.scale[b]);
      }
    return x;
  }

  void run_classifier(ClipForward<T>& fwd, Mode mode, Rng& rng) const {
    const std::size_t layers = spec_.hidden_layers;
    fwd.activated.resize(layers);
    fwd.masks.resize(layers);
    fwd.hidden.resize(layers);
    const BasicTensor<T>* in = &fwd.input;
    for (std::size_t i = 0; i < layers; ++i) {
      fwd.activated[i] = activation(dense_forward(*in, params_.at(param_names::hidden_weight(i)),
                                                  params_.at(param_names::hidden_bias(i))),
                                    Activation::relu);
      fwd.hidden[i] = dropout(fwd.activated[i], spec_.dropout, mode, rng, &fwd.masks[i]);
      in = &fwd.hidden[i];
    }
    fwd.y = activation(dense_forward(*in, params_.at(param_names::output_weight),
                                     params_.at(param_names::output_bias)),
                       Activation::sigmoid);
  }

  void run_detector(ClipForward<T>& fwd) const {
    const std::size_t rows = fwd.input.rows();
    fwd.pooled = BasicTensor<T>({rows, spec_.mel_bins});
    for (std::size_t m = 0; m < rows; ++m) {
      const std::span<const T> block(fwd.input.data().data() + m * spec_.input_size(),
                                     spec_.input_size());
      const auto pooled = mean_pool_time<T>(block, spec_.block_len, spec_.mel_bins);
      std::copy(pooled.data().begin(), pooled.data().end(),
                fwd.pooled.data().begin() + static_cast<std::ptrdiff_t>(m * spec_.mel_bins));
    }
    fwd.w = activation(dense_forward(fwd.pooled, params_.at(param_names::detector_weight),
                                     params_.at(param_names::detector_bias)),
                       Activation::sigmoid);
  }

  static void check_finite(const ClipForward<T>& fwd) {
    for (double p : fwd.prediction.p)
      if (!std::isfinite(p)) fail(Errc::non_finite, "clip prediction is not finite");
  }

  ModelSpec spec_;
  TagVocabulary vocab_;
  Standardizer standardizer_;
  BasicParamSet<T> params_;
};

using Tagger = BasicTagger<float>;

}  // namespace weaktag
