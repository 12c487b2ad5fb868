#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "weaktag/binary_io.hpp"
#include "weaktag/error.hpp"
#include "weaktag/fft.hpp"
#include "weaktag/grid.hpp"
#include "weaktag/wav.hpp"

namespace weaktag {

inline constexpr std::size_t kFrameLength = 1024;
inline constexpr std::size_t kMelBins = 40;
inline constexpr std::size_t kBlockLength = 11;
inline constexpr double kLogFloor = 1e-8;

using PowerSpectrogram = Grid<double>;
using MelFilterbank = Grid<double>;

/// T frames by B mel bins of natural-log mel energies.
struct FeatureMatrix {
  Grid<float> grid;

  std::size_t frames() const { return grid.rows; }
  std::size_t bins() const { return grid.cols; }
  std::span<const float> row(std::size_t t) const { return grid.row(t); }
  float operator()(std::size_t t, std::size_t b) const { return grid(t, b); }
};

/// Symmetric Hamming window, h[i] = 0.54 - 0.46 cos(2 pi i / (N - 1)).
inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> h(n, 1.0);
  if (n < 2) return h;
  for (std::size_t i = 0; i < n; ++i)
    h[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  return h;
}

/// Non-overlapping Hamming-windowed frames; squared DFT magnitudes for bins
/// 0..N/2. Trailing samples that do not fill a frame are dropped.
inline PowerSpectrogram power_spectrogram(std::span<const float> samples,
                                          std::size_t frame_len = kFrameLength) {
  require(frame_len >= 2, Errc::invalid_argument, "frame length must be at least 2");
  require(samples.size() >= frame_len, Errc::clip_too_short,
          std::to_string(samples.size()) + " samples, need at least " + std::to_string(frame_len));
  const Fft fft(frame_len);
  const auto window = hamming_window(frame_len);
  const std::size_t frames = samples.size() / frame_len;
  const std::size_t bins = frame_len / 2 + 1;
  PowerSpectrogram out(frames, bins);
  std::vector<std::complex<double>> buf(frame_len);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* frame = samples.data() + t * frame_len;
    for (std::size_t i = 0; i < frame_len; ++i) buf[i] = {window[i] * frame[i], 0.0};
    fft.transform(buf);
    for (std::size_t j = 0; j < bins; ++j) out(t, j) = std::norm(buf[j]);
  }
  return out;
}

inline PowerSpectrogram power_spectrogram(const AudioClip& clip,
                                          std::size_t frame_len = kFrameLength) {
  return power_spectrogram(std::span<const float>(clip.samples), frame_len);
}

enum class MelScale { slaney, htk };

inline double hz_to_mel(double hz, MelScale scale) {
  if (scale == MelScale::htk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

inline double mel_to_hz(double mel, MelScale scale) {
  if (scale == MelScale::htk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

/// Edge frequencies (num_bins + 2 of them) of the triangular filters, evenly
/// spaced on the mel scale from 0 Hz to Nyquist.
inline std::vector<double> mel_edge_frequencies(std::size_t num_bins, double sample_rate,
                                                MelScale scale = MelScale::slaney) {
  const double lo = hz_to_mel(0.0, scale);
  const double hi = hz_to_mel(sample_rate / 2.0, scale);
  std::vector<double> edges(num_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(num_bins + 1),
                         scale);
  return edges;
}

/// Triangular mel filterbank, each filter area-normalized by 2 / (f_upper - f_lower).
/// Matches the default construction of the common Python audio toolbox.
inline MelFilterbank mel_filterbank(std::size_t num_bins = kMelBins,
                                    double sample_rate = kDefaultSampleRate,
                                    std::size_t fft_bins = kFrameLength / 2 + 1,
                                    MelScale scale = MelScale::slaney) {
  require(num_bins >= 1, Errc::invalid_argument, "need at least one mel bin");
  require(fft_bins >= 2, Errc::invalid_argument, "need at least two FFT bins");
  require(sample_rate > 0, Errc::invalid_argument, "sample rate must be positive");
  const auto edges = mel_edge_frequencies(num_bins, sample_rate, scale);
  const std::size_t n_fft = 2 * (fft_bins - 1);
  MelFilterbank fb(num_bins, fft_bins, 0.0);
  for (std::size_t b = 0; b < num_bins; ++b) {
    const double lower = edges[b];
    const double center = edges[b + 1];
    const double upper = edges[b + 2];
    const double norm = 2.0 / (upper - lower);
    bool any = false;
    for (std::size_t j = 0; j < fft_bins; ++j) {
      const double f = sample_rate * static_cast<double>(j) / static_cast<double>(n_fft);
      const double rising = (f - lower) / (center - lower);
      const double falling = (upper - f) / (upper - center);
      const double w = std::max(0.0, std::min(rising, falling));
      fb(b, j) = w * norm;
      any = any || w > 0.0;
    }
    if (!any)
      fail(Errc::empty_filter, "mel filter " + std::to_string(b) + " of " +
                                   std::to_string(num_bins) +
                                   " covers no FFT bin; too many bins for this resolution");
  }
  return fb;
}

/// out[t][b] = ln(sum_j fb[b][j] * power[t][j] + floor).
inline FeatureMatrix log_mel(const PowerSpectrogram& power, const MelFilterbank& fb,
                             double floor = kLogFloor) {
  require(power.cols == fb.cols, Errc::shape_mismatch,
          "power has " + std::to_string(power.cols) + " bins, filterbank expects " +
              std::to_string(fb.cols));
  FeatureMatrix out{Grid<float>(power.rows, fb.rows)};
  for (std::size_t t = 0; t < power.rows; ++t) {
    const auto p = power.row(t);
    for (std::size_t b = 0; b < fb.rows; ++b) {
      const auto w = fb.row(b);
      double energy = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) energy += w[j] * p[j];
      out.grid(t, b) = static_cast<float>(std::log(energy + floor));
    }
  }
  return out;
}

struct FeatureConfig {
  std::size_t frame_len = kFrameLength;
  std::size_t mel_bins = kMelBins;
  std::uint32_t sample_rate = kDefaultSampleRate;
  double log_floor = kLogFloor;
  MelScale scale = MelScale::slaney;
};

/// Reusable clip-to-features pipeline; holds the filterbank so it is built once.
class Featurizer {
 public:
  explicit Featurizer(FeatureConfig cfg = {})
      : cfg_(cfg),
        filterbank_(mel_filterbank(cfg.mel_bins, cfg.sample_rate, cfg.frame_len / 2 + 1, cfg.scale)) {}

  FeatureMatrix operator()(const AudioClip& clip) const {
    require(clip.sample_rate == cfg_.sample_rate, Errc::sample_rate_mismatch,
            clip.id + ": " + std::to_string(clip.sample_rate) + " Hz");
    return log_mel(power_spectrogram(clip, cfg_.frame_len), filterbank_, cfg_.log_floor);
  }

  const FeatureConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return filterbank_; }

 private:
  FeatureConfig cfg_;
  MelFilterbank filterbank_;
};

/// M overlapping windows of `block_len` consecutive frames. Each block is a
/// contiguous slice of the source matrix, so it flattens frame-major for free.
class BlockSequence {
 public:
  BlockSequence() = default;
  BlockSequence(FeatureMatrix features, std::size_t block_len, std::size_t block_hop)
      : features_(std::move(features)), block_len_(block_len), block_hop_(block_hop) {}

  std::size_t size() const {
    return features_.frames() < block_len_ ? 0
                                           : (features_.frames() - block_len_) / block_hop_ + 1;
  }
  std::size_t block_len() const { return block_len_; }
  std::size_t block_hop() const { return block_hop_; }
  std::size_t bins() const { return features_.bins(); }
  std::size_t first_frame(std::size_t m) const { return m * block_hop_; }

  /// Block m as block_len x bins values, frame-major.
  std::span<const float> block(std::size_t m) const {
    return {features_.grid.values.data() + m * block_hop_ * bins(), block_len_ * bins()};
  }

  const FeatureMatrix& features() const { return features_; }

 private:
  FeatureMatrix features_;
  std::size_t block_len_ = kBlockLength;
  std::size_t block_hop_ = 1;
};

inline BlockSequence make_blocks(FeatureMatrix features, std::size_t block_len = kBlockLength,
                                 std::size_t block_hop = 1) {
  require(block_len >= 1 && block_hop >= 1, Errc::invalid_argument,
          "block length and hop must be positive");
  require(features.frames() >= block_len, Errc::clip_too_short,
          std::to_string(features.frames()) + " frames, a block needs " +
              std::to_string(block_len));
  return {std::move(features), block_len, block_hop};
}

// Feature cache: "WTF1", u32 T, u32 B, then T*B float32, all little-endian.
inline std::vector<char> encode_features(const FeatureMatrix& feat) {
  io::Writer out;
  out.put_bytes("WTF1", 4);
  out.put_u32(static_cast<std::uint32_t>(feat.frames()));
  out.put_u32(static_cast<std::uint32_t>(feat.bins()));
  out.put_bytes(feat.grid.values.data(), feat.grid.values.size() * sizeof(float));
  return out.take();
}

inline FeatureMatrix decode_features(const std::vector<char>& bytes, const std::string& what) {
  io::Reader in(bytes, what);
  char magic[4];
  in.get_bytes(magic, 4);
  if (std::string(magic, 4) != "WTF1") fail(Errc::unsupported_format, what + ": bad feature magic");
  const std::size_t frames = in.get_u32();
  const std::size_t bins = in.get_u32();
  FeatureMatrix feat{Grid<float>(frames, bins)};
  in.get_bytes(feat.grid.values.data(), frames * bins * sizeof(float));
  if (in.remaining() != 0) fail(Errc::unsupported_format, what + ": trailing bytes");
  return feat;
}

inline void save_features(const std::filesystem::path& path, const FeatureMatrix& feat) {
  io::write_file(path, encode_features(feat));
}

inline FeatureMatrix load_features(const std::filesystem::path& path) {
  return decode_features(io::read_file(path), path.string());
}

/// Per-mel-bin affine normalization fitted on training clips only.
struct Standardizer {
  std::vector<float> mean;
  std::vector<float> scale;  // 1 / stddev

  bool empty() const { return mean.empty(); }

  static Standardizer identity(std::size_t bins) {
    return {std::vector<float>(bins, 0.0F), std::vector<float>(bins, 1.0F)};
  }

  template <class Range>
  static Standardizer fit(const Range& matrices) {
    std::size_t bins = 0;
    std::vector<double> sum, sq;
    double count = 0;
    for (const FeatureMatrix& m : matrices) {
      if (bins == 0) {
        bins = m.bins();
        sum.assign(bins, 0.0);
        sq.assign(bins, 0.0);
      }
      require(m.bins() == bins, Errc::shape_mismatch, "feature matrices disagree on bin count");
      for (std::size_t t = 0; t < m.frames(); ++t)
        for (std::size_t b = 0; b < bins; ++b) {
          const double v = m(t, b);
          sum[b] += v;
          sq[b] += v * v;
        }
      count += static_cast<double>(m.frames());
    }
    require(count > 0, Errc::empty_dataset, "cannot fit standardization on no frames");
    Standardizer s;
    s.mean.resize(bins);
    s.scale.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      const double mu = sum[b] / count;
      const double var = std::max(0.0, sq[b] / count - mu * mu);
      const double sd = std::sqrt(var);
      s.mean[b] = static_cast<float>(mu);
      s.scale[b] = static_cast<float>(sd > 1e-6 ? 1.0 / sd : 1.0);
    }
    return s;
  }
};

}  // namespace weaktag
