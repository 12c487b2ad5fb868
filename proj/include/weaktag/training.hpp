#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "weaktag/adam.hpp"
#include "weaktag/corpus.hpp"
#include "weaktag/error.hpp"
#include "weaktag/evaluation.hpp"
#include "weaktag/models.hpp"
#include "weaktag/parallel.hpp"
#include "weaktag/random.hpp"

namespace weaktag {

struct TrainConfig {
  AdamConfig adam;
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    require(adam.learning_rate > 0, Errc::invalid_argument, "learning rate must be positive");
    require(batch_size >= 1, Errc::invalid_argument, "batch size must be at least 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_eer;
  double seconds = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
  Tagger model;
  TrainHistory history;
};

/// Called after every epoch with the current model and the new record.
using EpochCallback = std::function<void(const Tagger&, const EpochRecord&)>;

namespace detail {

inline std::vector<const LabelledClip*> sorted_by_id(const Dataset& data) {
  std::vector<const LabelledClip*> out;
  out.reserve(data.size());
  for (const auto& c : data) out.push_back(&c);
  std::sort(out.begin(), out.end(),
            [](const LabelledClip* a, const LabelledClip* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    require(out[i]->id != out[i - 1]->id, Errc::duplicate_clip, out[i]->id);
  return out;
}

inline constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

}  // namespace detail

/// Fits per-bin standardization on the training clips' frames.
inline Standardizer fit_standardizer(const Dataset& data) {
  std::vector<std::reference_wrapper<const FeatureMatrix>> mats;
  for (const auto& c : data) mats.emplace_back(c.blocks.features());
  return Standardizer::fit(mats);
}

/// Continues training `model` in place. Clips are ordered by id, then
/// shuffled per epoch with a seeded stream; dropout draws come from a stream
/// keyed by (seed, epoch, clip position), so the trajectory is identical for
/// any thread count.
inline TrainHistory train_model(Tagger& model, const Dataset& data, const TrainConfig& cfg,
                                const Dataset* validation = nullptr,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!data.empty(), Errc::empty_dataset, "no training clips");
  const std::size_t k_count = model.spec().num_tags;
  for (const auto& c : data)
    require(c.label.size() == k_count, Errc::tag_count_mismatch,
            c.id + ": label has " + std::to_string(c.label.size()) + " tags, model has " +
                std::to_string(k_count));
  const auto clips = detail::sorted_by_id(data);

  AdamState state = AdamState::for_params(model.params());
  TrainHistory history;
  std::vector<std::size_t> order(clips.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(Rng::derive(cfg.seed, detail::kShuffleStream, epoch));
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<double> losses(count);
      auto clip_gradient = [&](std::size_t slot) {
        const std::size_t idx = order[start + slot];
        Rng dropout_rng(Rng::derive(cfg.seed, epoch, idx));
        const auto fwd = model.forward(clips[idx]->blocks, Mode::train, dropout_rng);
        losses[slot] = model.loss(fwd, clips[idx]->label);
        if (!std::isfinite(losses[slot]))
          fail(Errc::non_finite, "training loss for clip " + clips[idx]->id);
        return model.backward(fwd, clips[idx]->label);
      };

      ParamSet batch_grad = model.params().zeros_like();
      if (cfg.threads <= 1) {
        for (std::size_t s = 0; s < count; ++s) batch_grad.add_scaled(clip_gradient(s), 1.0F);
      } else {
        std::vector<ParamSet> grads(count);
        parallel_for(count, cfg.threads, [&](std::size_t s) { grads[s] = clip_gradient(s); });
        for (const auto& g : grads) batch_grad.add_scaled(g, 1.0F);
      }
      const float inv = 1.0F / static_cast<float>(count);
      for (auto& e : batch_grad)
        for (auto& v : e.value.data()) v *= inv;
      adam_step(model.params(), batch_grad, state, cfg.adam);
      for (double l : losses) loss_sum += l;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(clips.size());
    if (validation && !validation->empty())
      rec.val_eer = evaluate_tagger(model, *validation, EerPooling::per_tag, cfg.threads).mean;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.push_back(rec);
    if (on_epoch) on_epoch(model, rec);
  }
  return history;
}

/// Fits standardization on `data`, initializes from `cfg.seed`, trains.
inline TrainResult train(const ModelSpec& spec, const TagVocabulary& vocab, const Dataset& data,
                         const TrainConfig& cfg, const Dataset* validation = nullptr,
                         const EpochCallback& on_epoch = {}) {
  require(!data.empty(), Errc::empty_dataset, "no training clips");
  TrainResult result{Tagger::initialize(spec, vocab, cfg.seed, fit_standardizer(data)), {}};
  result.history = train_model(result.model, data, cfg, validation, on_epoch);
  return result;
}

inline void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_eer,seconds\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_number(r.train_loss) << ','
        << (r.val_eer ? format_number(*r.val_eer) : "") << ',' << format_number(r.seconds) << '\n';
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
  int fold = 0;
  std::size_t train_clips = 0;
  std::size_t val_clips = 0;
  TrainHistory history;
  std::optional<double> final_eer;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  std::vector<std::optional<double>> mean_eer_by_epoch;  // index epoch-1
  std::optional<double> mean_eer;                        // at the last epoch
  std::optional<std::size_t> best_epoch;                 // 1-based, min mean EER
};

/// Splits clips by fold id (1..num_folds) and returns the training and
/// held-out sets for `fold`.
inline std::pair<Dataset, Dataset> split_fold(const Dataset& data, int fold) {
  Dataset train_set, held_out;
  for (const auto& c : data) (c.fold == fold ? held_out : train_set).push_back(c);
  return {std::move(train_set), std::move(held_out)};
}

inline void check_folds(const Dataset& data, int num_folds) {
  require(num_folds >= 2, Errc::invalid_argument, "need at least two folds");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_folds) + 1, 0);
  for (const auto& c : data) {
    if (c.fold < 1 || c.fold > num_folds)
      fail(Errc::missing_fold, c.id + " has fold " + std::to_string(c.fold) + ", expected 1.." +
                                   std::to_string(num_folds));
    counts[static_cast<std::size_t>(c.fold)] += 1;
  }
  for (int f = 1; f <= num_folds; ++f)
    if (counts[static_cast<std::size_t>(f)] == 0) fail(Errc::empty_fold, "fold " + std::to_string(f));
}

/// Trains on all folds but f and scores fold f, for every f. Every fold uses
/// the same seed. Per-epoch fold EERs are averaged (unweighted) to pick the
/// best epoch.
inline CrossValidationResult cross_validate(const ModelSpec& spec, const TagVocabulary& vocab,
                                            const Dataset& data, const TrainConfig& cfg,
                                            int num_folds = 5) {
  require(!data.empty(), Errc::empty_dataset, "no clips to cross-validate");
  check_folds(data, num_folds);
  CrossValidationResult cv;
  for (int f = 1; f <= num_folds; ++f) {
    auto [train_set, held_out] = split_fold(data, f);
    auto result = train(spec, vocab, train_set, cfg, &held_out);
    FoldResult fr;
    fr.fold = f;
    fr.train_clips = train_set.size();
    fr.val_clips = held_out.size();
    fr.history = std::move(result.history);
    if (!fr.history.empty()) fr.final_eer = fr.history.back().val_eer;
    cv.folds.push_back(std::move(fr));
  }
  double best = 0.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double sum = 0.0;
    bool complete = true;
    for (const auto& fr : cv.folds) {
      if (!fr.history[e].val_eer) {
        complete = false;
        break;
      }
      sum += *fr.history[e].val_eer;
    }
    std::optional<double> mean;
    if (complete) mean = sum / static_cast<double>(cv.folds.size());
    cv.mean_eer_by_epoch.push_back(mean);
    if (mean && (!cv.best_epoch || *mean < best)) {
      best = *mean;
      cv.best_epoch = e + 1;
    }
  }
  if (!cv.mean_eer_by_epoch.empty()) cv.mean_eer = cv.mean_eer_by_epoch.back();
  return cv;
}

}  // namespace weaktag
