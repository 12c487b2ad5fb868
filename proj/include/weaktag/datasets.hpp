#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <cctype>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "weaktag/corpus.hpp"
#include "weaktag/error.hpp"
#include "weaktag/evaluation.hpp"
#include "weaktag/features.hpp"
#include "weaktag/models.hpp"
#include "weaktag/parallel.hpp"
#include "weaktag/random.hpp"
#include "weaktag/wav.hpp"

namespace weaktag {

// ---------------------------------------------------------------------------
// Event-level ground truth. Only the synthetic generator and the
// localization scorer see these; training works from clip labels alone.

struct Event {
  std::string tag;
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds, exclusive
  friend bool operator==(const Event&, const Event&) = default;
};

struct EventAnnotation {
  std::string clip_id;
  std::vector<Event> events;
  friend bool operator==(const EventAnnotation&, const EventAnnotation&) = default;
};

inline void write_annotations_csv(std::ostream& out, const std::vector<EventAnnotation>& anns) {
  for (const auto& a : anns)
    for (const auto& e : a.events)
      out << a.clip_id << ',' << e.tag << ',' << format_number(e.onset) << ','
          << format_number(e.offset) << '\n';
}

inline std::vector<EventAnnotation> parse_annotations_csv(std::istream& in,
                                                          const std::string& source = "annotations") {
  std::vector<EventAnnotation> out;
  std::map<std::string, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    const std::string where = source + ":" + std::to_string(line_no);
    if (f.size() != 4) fail(Errc::malformed_line, where + ": expected clip_id,tag,onset,offset");
    Event e;
    e.tag = f[1];
    try {
      e.onset = std::stod(f[2]);
      e.offset = std::stod(f[3]);
    } catch (const std::exception&) {
      fail(Errc::malformed_line, where + ": bad onset/offset");
    }
    if (!(e.onset >= 0.0 && e.onset < e.offset))
      fail(Errc::malformed_line, where + ": need 0 <= onset < offset");
    auto [it, inserted] = slot.emplace(f[0], out.size());
    if (inserted) out.push_back({f[0], {}});
    out[it->second].events.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic weakly labelled corpus

struct SynthConfig {
  std::size_t clips = 200;
  std::size_t tags = 3;
  double clip_seconds = 4.0;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double min_event_seconds = 0.3;
  double max_event_seconds = 1.5;
  std::uint32_t sample_rate = kDefaultSampleRate;
  double noise_level = 0.01;  // std-dev of the Gaussian floor
  bool allow_overlap = false;
  int folds = 5;
  std::uint64_t seed = 0;
};

/// Tag letters and what each prototype sounds like. The bands do not overlap
/// on the mel axis.
struct Prototype {
  const char* tag;
  const char* description;
};

inline constexpr Prototype kPrototypes[] = {
    {"a", "300 Hz tone with 600 Hz partial"},
    {"b", "band-limited noise 1.2-1.8 kHz"},
    {"c", "linear chirp 3.0-4.5 kHz"},
    {"d", "8 Hz amplitude-modulated 6.5 kHz tone"},
};

inline constexpr std::size_t kPrototypeCount = std::size(kPrototypes);

struct SynthDataset {
  std::vector<AudioClip> clips;
  WeakDatasetIndex index;
  std::vector<EventAnnotation> annotations;
};

namespace detail {

inline void render_prototype(std::size_t proto, std::span<float> out, double sample_rate,
                             double amplitude, Rng& rng) {
  const std::size_t n = out.size();
  const double two_pi = 2.0 * std::numbers::pi;
  const double fade = std::min(0.01 * sample_rate, static_cast<double>(n) / 2.0);
  std::vector<double> buf(n, 0.0);
  switch (proto) {
    case 0: {
      const double phase = rng.uniform(0.0, two_pi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        buf[i] = std::sin(two_pi * 300.0 * t + phase) + 0.5 * std::sin(two_pi * 600.0 * t + phase);
      }
      break;
    }
    case 1: {
      // Sum of random-phase partials spaced 10 Hz apart across the band.
      for (double f = 1200.0; f <= 1800.0; f += 10.0) {
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t i = 0; i < n; ++i)
          buf[i] += std::sin(two_pi * f * static_cast<double>(i) / sample_rate + phase);
      }
      double peak = 0.0;
      for (double v : buf) peak = std::max(peak, std::abs(v));
      if (peak > 0) for (double& v : buf) v /= peak;
      break;
    }
    case 2: {
      const double duration = static_cast<double>(n) / sample_rate;
      const double f0 = 3000.0, f1 = 4500.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        buf[i] = std::sin(two_pi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t));
      }
      break;
    }
    default: {
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        buf[i] = (0.6 + 0.4 * std::sin(two_pi * 8.0 * t)) * std::sin(two_pi * 6500.0 * t);
      }
      break;
    }
  }
  double peak = 0.0;
  for (double v : buf) peak = std::max(peak, std::abs(v));
  const double norm = peak > 0 ? amplitude / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double env = 1.0;
    const double from_start = static_cast<double>(i);
    const double from_end = static_cast<double>(n - 1 - i);
    if (fade > 0 && from_start < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * from_start / fade);
    if (fade > 0 && from_end < fade) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * from_end / fade));
    out[i] += static_cast<float>(buf[i] * norm * env);
  }
}

}  // namespace detail

inline TagVocabulary synth_vocabulary(std::size_t tags) {
  require(tags >= 1 && tags <= kPrototypeCount, Errc::invalid_argument,
          "synthetic tag count must be 1.." + std::to_string(kPrototypeCount));
  std::vector<std::string> v;
  for (std::size_t k = 0; k < tags; ++k) v.emplace_back(kPrototypes[k].tag);
  return TagVocabulary(std::move(v));
}

/// Generates clips with 1..3 events each over a Gaussian noise floor. Event
/// lengths are drawn so the clip can always hold them without overlap;
/// gaps are a random partition of the remaining time. Fold ids are assigned
/// round-robin and every clip is in the development split.
inline SynthDataset synth_generate(const SynthConfig& cfg) {
  require(cfg.clip_seconds > 0 && cfg.sample_rate > 0, Errc::invalid_argument,
          "clip length and sample rate must be positive");
  require(cfg.min_events >= 1 && cfg.min_events <= cfg.max_events, Errc::invalid_argument,
          "need 1 <= min_events <= max_events");
  require(cfg.min_event_seconds > 0 && cfg.min_event_seconds <= cfg.max_event_seconds,
          Errc::invalid_argument, "need 0 < min event length <= max event length");
  require(cfg.folds >= 1, Errc::invalid_argument, "fold count must be positive");
  if (!cfg.allow_overlap &&
      static_cast<double>(cfg.max_events) * cfg.min_event_seconds > cfg.clip_seconds)
    fail(Errc::overconstrained, std::to_string(cfg.max_events) + " events of at least " +
                                    format_number(cfg.min_event_seconds) + " s do not fit in " +
                                    format_number(cfg.clip_seconds) + " s");
  if (cfg.allow_overlap && cfg.min_event_seconds > cfg.clip_seconds)
    fail(Errc::overconstrained, "events longer than the clip");

  const auto vocab = synth_vocabulary(cfg.tags);
  SynthDataset out;
  out.index.vocabulary = vocab;
  const double sr = cfg.sample_rate;
  const auto total = static_cast<std::size_t>(std::llround(cfg.clip_seconds * sr));

  for (std::size_t c = 0; c < cfg.clips; ++c) {
    Rng rng(Rng::derive(cfg.seed, c));
    AudioClip clip;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", c);
    clip.id = id;
    clip.sample_rate = cfg.sample_rate;
    clip.samples.resize(total);
    for (auto& s : clip.samples) s = static_cast<float>(cfg.noise_level * rng.normal());

    const std::size_t n_events =
        cfg.min_events + static_cast<std::size_t>(rng.below(cfg.max_events - cfg.min_events + 1));
    std::vector<double> lengths(n_events);
    double budget = cfg.clip_seconds;
    for (std::size_t i = 0; i < n_events; ++i) {
      const double reserve = cfg.allow_overlap
                                 ? 0.0
                                 : static_cast<double>(n_events - i - 1) * cfg.min_event_seconds;
      const double hi = cfg.allow_overlap ? std::min(cfg.max_event_seconds, cfg.clip_seconds)
                                          : std::min(cfg.max_event_seconds, budget - reserve);
      lengths[i] = rng.uniform(cfg.min_event_seconds, std::max(hi, cfg.min_event_seconds));
      if (!cfg.allow_overlap) budget -= lengths[i];
    }
    std::vector<double> onsets(n_events);
    if (cfg.allow_overlap) {
      for (std::size_t i = 0; i < n_events; ++i)
        onsets[i] = rng.uniform(0.0, cfg.clip_seconds - lengths[i]);
    } else {
      std::vector<double> gaps(n_events + 1);
      double gap_sum = 0.0;
      for (auto& g : gaps) gap_sum += (g = rng.uniform() + 1e-9);
      const double free = std::max(0.0, budget);
      double cursor = 0.0;
      for (std::size_t i = 0; i < n_events; ++i) {
        cursor += free * gaps[i] / gap_sum;
        onsets[i] = cursor;
        cursor += lengths[i];
      }
    }

    EventAnnotation ann{clip.id, {}};
    ClipLabel label;
    label.t.assign(vocab.size(), 0);
    for (std::size_t i = 0; i < n_events; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(vocab.size()));
      const double amplitude = rng.uniform(0.2, 0.5);
      const auto start = std::min<std::size_t>(static_cast<std::size_t>(std::llround(onsets[i] * sr)), total - 1);
      const auto stop = std::min<std::size_t>(
          static_cast<std::size_t>(std::llround((onsets[i] + lengths[i]) * sr)), total);
      if (stop <= start) continue;
      detail::render_prototype(k, std::span<float>(clip.samples).subspan(start, stop - start), sr,
                               amplitude, rng);
      ann.events.push_back({vocab[k], static_cast<double>(start) / sr, static_cast<double>(stop) / sr});
      label.t[k] = 1;
    }
    for (auto& s : clip.samples) s = std::clamp(s, -1.0F, 32767.0F / 32768.0F);

    IndexEntry entry;
    entry.clip_id = clip.id;
    entry.label = label;
    entry.label_string = label_string(label, vocab);
    entry.fold = static_cast<int>(c % static_cast<std::size_t>(cfg.folds)) + 1;
    entry.split = Split::development;
    out.index.entries.push_back(std::move(entry));
    out.annotations.push_back(std::move(ann));
    out.clips.push_back(std::move(clip));
  }
  return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset layout:
//   <dir>/index.csv           clip_id,label_string,fold,split
//   <dir>/vocabulary.txt      optional, tag letters on one line (default cmfvpboS)
//   <dir>/audio/<clip_id>.wav PCM16 mono
//   <dir>/annotations.csv     optional, clip_id,tag,onset,offset

namespace layout {
inline std::filesystem::path index(const std::filesystem::path& dir) { return dir / "index.csv"; }
inline std::filesystem::path vocabulary(const std::filesystem::path& dir) { return dir / "vocabulary.txt"; }
inline std::filesystem::path audio(const std::filesystem::path& dir, const std::string& id) {
  return dir / "audio" / (id + ".wav");
}
inline std::filesystem::path annotations(const std::filesystem::path& dir) { return dir / "annotations.csv"; }
}  // namespace layout

inline std::string write_index_csv(const WeakDatasetIndex& index) {
  std::ostringstream out;
  for (const auto& e : index.entries)
    out << e.clip_id << ',' << e.label_string << ',' << e.fold << ',' << to_string(e.split) << '\n';
  return out.str();
}

inline void save_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir / "audio");
  for (const auto& clip : data.clips) save_wav(layout::audio(dir, clip.id), clip);
  save_text(layout::index(dir), write_index_csv(data.index));
  std::string letters;
  for (const auto& t : data.index.vocabulary.tags()) letters += t;
  save_text(layout::vocabulary(dir), letters + "\n");
  std::ostringstream ann;
  write_annotations_csv(ann, data.annotations);
  save_text(layout::annotations(dir), ann.str());
}

inline TagVocabulary read_dataset_vocabulary(const std::filesystem::path& dir) {
  const auto path = layout::vocabulary(dir);
  if (!std::filesystem::exists(path)) return TagVocabulary::chime_home();
  std::ifstream in(path);
  std::string letters;
  std::getline(in, letters);
  while (!letters.empty() && std::isspace(static_cast<unsigned char>(letters.back()))) letters.pop_back();
  std::vector<std::string> tags;
  for (char c : letters) tags.emplace_back(1, c);
  return TagVocabulary(std::move(tags));
}

inline std::vector<EventAnnotation> load_annotations(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::file_not_found, path.string());
  std::ifstream in(path);
  return parse_annotations_csv(in, path.string());
}

struct LoadOptions {
  FeatureConfig features;
  std::size_t block_len = kBlockLength;
  std::size_t block_hop = 1;
  std::optional<Split> split;
  std::vector<int> folds;                  // empty: all
  std::vector<std::string> exclude_tags;   // dropped from the vocabulary
  std::optional<std::filesystem::path> cache_dir;
  std::size_t threads = 1;
};

struct LoadedDataset {
  TagVocabulary vocabulary;
  Dataset clips;
  std::vector<std::string> warnings;
};

/// Featurizes (or reads cached features for) every selected clip. A cache
/// file is reused only when it is newer than its WAV.
inline LoadedDataset load_dataset(const std::filesystem::path& dir, const LoadOptions& opt = {}) {
  const auto full_vocab = read_dataset_vocabulary(dir);
  const auto index = load_weak_labels(layout::index(dir), full_vocab);
  LoadedDataset out;
  out.vocabulary = full_vocab.without(opt.exclude_tags);
  require(out.vocabulary.size() >= 1, Errc::invalid_argument, "every tag was excluded");
  out.warnings = index.warnings;

  std::vector<const IndexEntry*> selected;
  for (const auto& e : index.entries) {
    if (opt.split && e.split != *opt.split) continue;
    if (!opt.folds.empty() && std::find(opt.folds.begin(), opt.folds.end(), e.fold) == opt.folds.end())
      continue;
    selected.push_back(&e);
  }
  const Featurizer featurize(opt.features);
  out.clips.resize(selected.size());
  parallel_for(selected.size(), opt.threads, [&](std::size_t i) {
    const auto& e = *selected[i];
    const auto wav = layout::audio(dir, e.clip_id);
    FeatureMatrix feat;
    bool cached = false;
    if (opt.cache_dir) {
      const auto cache = *opt.cache_dir / (e.clip_id + ".wtf");
      std::error_code ec;
      if (std::filesystem::exists(cache) && std::filesystem::exists(wav) &&
          std::filesystem::last_write_time(cache, ec) >= std::filesystem::last_write_time(wav, ec)) {
        feat = load_features(cache);
        cached = true;
      }
    }
    if (!cached) {
      auto clip = load_wav(wav, opt.features.sample_rate);
      clip.id = e.clip_id;
      feat = featurize(clip);
      if (opt.cache_dir) save_features(*opt.cache_dir / (e.clip_id + ".wtf"), feat);
    }
    auto& lc = out.clips[i];
    lc.id = e.clip_id;
    lc.blocks = make_blocks(std::move(feat), opt.block_len, opt.block_hop);
    lc.label = project_label(e.label, full_vocab, out.vocabulary);
    lc.fold = e.fold;
  });
  return out;
}

/// Featurizes in-memory synthetic clips without touching disk.
inline Dataset featurize_synth(const SynthDataset& data, const FeatureConfig& features = {},
                               std::size_t threads = 1) {
  const Featurizer featurize(features);
  Dataset out(data.clips.size());
  parallel_for(data.clips.size(), threads, [&](std::size_t i) {
    out[i].id = data.clips[i].id;
    // Round-trip through PCM16 so in-memory runs see exactly what the WAVs hold.
    AudioClip clip = data.clips[i];
    for (auto& s : clip.samples)
      s = static_cast<float>(std::clamp(std::nearbyint(static_cast<double>(s) * 32768.0), -32768.0, 32767.0) /
                             32768.0);
    out[i].blocks = make_blocks(featurize(clip));
    out[i].label = data.index.entries[i].label;
    out[i].fold = data.index.entries[i].fold;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Localization

/// Area under the ROC curve with ties counted as half-correct.
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truths) {
  require(scores.size() == truths.size(), Errc::shape_mismatch, "AUC input lengths");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t q = i; q < j; ++q)
      if (truths[order[q]]) {
        rank_sum += avg_rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  require(positives > 0 && negatives > 0, Errc::invalid_argument, "AUC needs both classes");
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

/// Which per-block map is scored against the event mask.
enum class SaliencyMap { product, detector, classifier };

inline SaliencyMap parse_saliency_map(std::string_view s) {
  if (s == "product") return SaliencyMap::product;
  if (s == "detector") return SaliencyMap::detector;
  if (s == "classifier") return SaliencyMap::classifier;
  fail(Errc::invalid_argument, "map must be product, detector or classifier");
}

/// Seconds covered by block m: [first frame start, last frame end).
inline std::pair<double, double> block_span_seconds(const BlockSequence& blocks, std::size_t m,
                                                    const FeatureConfig& features = {}) {
  const double frame = static_cast<double>(features.frame_len) / features.sample_rate;
  const double start = static_cast<double>(blocks.first_frame(m)) * frame;
  return {start, start + static_cast<double>(blocks.block_len()) * frame};
}

/// True when the center frame of block m lies inside an event of `tag`.
inline bool block_in_event(const BlockSequence& blocks, std::size_t m, const std::string& tag,
                           const EventAnnotation& ann, const FeatureConfig& features = {}) {
  const double frame = static_cast<double>(features.frame_len) / features.sample_rate;
  const std::size_t center = blocks.first_frame(m) + blocks.block_len() / 2;
  const double t = (static_cast<double>(center) + 0.5) * frame;
  return std::any_of(ann.events.begin(), ann.events.end(),
                     [&](const Event& e) { return e.tag == tag && e.onset <= t && t < e.offset; });
}

struct TagLocalization {
  std::string tag;
  std::size_t clips = 0;
  std::size_t positive_blocks = 0;
  std::size_t negative_blocks = 0;
  std::optional<double> auc;  // empty when the tag never occurs (or fills every block)
};

/// Per tag k: pools the block scores of every clip whose label contains k
/// and computes the AUC against the hidden event mask.
inline std::vector<TagLocalization> localization_score(const Tagger& model, const Dataset& clips,
                                                       const std::vector<EventAnnotation>& annotations,
                                                       SaliencyMap map = SaliencyMap::product,
                                                       const FeatureConfig& features = {},
                                                       std::size_t threads = 1) {
  if (map != SaliencyMap::classifier)
    require(model.spec().kind == ModelKind::jdc, Errc::model_kind_mismatch,
            "detector maps need a JDC model");
  std::map<std::string, const EventAnnotation*> by_id;
  for (const auto& a : annotations) by_id[a.clip_id] = &a;
  const std::size_t k_count = model.spec().num_tags;

  std::vector<ScoreMaps<float>> maps(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) {
    Rng unused(0);
    maps[i] = model.forward(clips[i].blocks, Mode::eval, unused).score_maps();
  });

  std::vector<TagLocalization> out;
  for (std::size_t k = 0; k < k_count; ++k) {
    TagLocalization row;
    row.tag = model.vocabulary()[k];
    std::vector<double> scores;
    std::vector<std::uint8_t> mask;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (!clips[i].label[k]) continue;
      auto it = by_id.find(clips[i].id);
      require(it != by_id.end(), Errc::invalid_argument, "no annotation for " + clips[i].id);
      ++row.clips;
      const auto& sm = maps[i];
      for (std::size_t m = 0; m < sm.blocks(); ++m) {
        double s = 0.0;
        switch (map) {
          case SaliencyMap::product: s = static_cast<double>(sm.w_norm(k, m)) * sm.y(k, m); break;
          case SaliencyMap::detector: s = sm.w_norm(k, m); break;
          case SaliencyMap::classifier: s = sm.y(k, m); break;
        }
        const bool inside = block_in_event(clips[i].blocks, m, row.tag, *it->second, features);
        scores.push_back(s);
        mask.push_back(inside ? 1 : 0);
        (inside ? row.positive_blocks : row.negative_blocks) += 1;
      }
    }
    if (row.positive_blocks > 0 && row.negative_blocks > 0) row.auc = roc_auc(scores, mask);
    out.push_back(std::move(row));
  }
  return out;
}

/// Copy of a JDC model whose detector outputs the same value for every
/// block, so the normalized detector is uniform.
inline Tagger with_constant_detector(const Tagger& model) {
  require(model.spec().kind == ModelKind::jdc, Errc::model_kind_mismatch, "BOB model has no detector");
  Tagger copy = model;
  copy.params().at(param_names::detector_weight).fill(0.0F);
  copy.params().at(param_names::detector_bias).fill(0.0F);
  return copy;
}

}  // namespace weaktag
