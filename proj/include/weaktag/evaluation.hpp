#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "weaktag/corpus.hpp"
#include "weaktag/error.hpp"
#include "weaktag/models.hpp"
#include "weaktag/parallel.hpp"

namespace weaktag {

/// Equal error rate of a score-ranked binary decision set.
///
/// Thresholds sweep every distinct score from the top ("positive if
/// score >= threshold"); equal scores move together. The curve starts at
/// (FPR, FNR) = (0, 1). The first point with FPR >= FNR ends the search: an
/// exact tie is returned as is, otherwise the crossing is linearly
/// interpolated on the segment from the previous point.
inline double compute_eer(std::span<const double> scores, std::span<const std::uint8_t> truths) {
  require(scores.size() == truths.size(), Errc::shape_mismatch,
          std::to_string(scores.size()) + " scores vs " + std::to_string(truths.size()) + " truths");
  const auto positives = static_cast<std::size_t>(std::count_if(
      truths.begin(), truths.end(), [](std::uint8_t t) { return t != 0; }));
  const std::size_t negatives = truths.size() - positives;
  if (positives == 0 || negatives == 0)
    fail(Errc::undefined_eer, "need at least one positive and one negative (" +
                                  std::to_string(positives) + " / " + std::to_string(negatives) + ")");
  for (double s : scores) require(std::isfinite(s), Errc::non_finite, "score is not finite");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double pos = static_cast<double>(positives);
  const double neg = static_cast<double>(negatives);
  std::size_t tp = 0, fp = 0;
  double prev_fpr = 0.0, prev_fnr = 1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (truths[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const double fpr = static_cast<double>(fp) / neg;
    const double fnr = static_cast<double>(positives - tp) / pos;
    const double gap = fpr - fnr;
    if (gap == 0.0) return fpr;
    if (gap > 0.0) {
      const double prev_gap = prev_fpr - prev_fnr;
      const double alpha = -prev_gap / (gap - prev_gap);
      return prev_fpr + alpha * (fpr - prev_fpr);
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
  }
  return prev_fpr;  // unreachable: the last point is (1, 0)
}

enum class EerPooling { per_tag, pooled };

inline EerPooling parse_eer_pooling(std::string_view s) {
  if (s == "per-tag") return EerPooling::per_tag;
  if (s == "pooled") return EerPooling::pooled;
  fail(Errc::invalid_argument, "EER pooling must be per-tag or pooled, got '" + std::string(s) + "'");
}

struct TagEer {
  std::string tag;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> eer;  // empty when undefined for this tag
};

struct EerReport {
  std::vector<TagEer> tags;
  EerPooling pooling = EerPooling::per_tag;
  std::optional<double> mean;

  std::size_t skipped() const {
    return static_cast<std::size_t>(
        std::count_if(tags.begin(), tags.end(), [](const TagEer& t) { return !t.eer; }));
  }
};

/// Per-tag scores for a set of clips: scores[k][clip], truths[k][clip].
struct ScoredSet {
  TagVocabulary vocabulary;
  std::vector<std::string> clip_ids;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::uint8_t>> truths;
};

inline EerReport summarize_eer(const ScoredSet& set, EerPooling pooling = EerPooling::per_tag) {
  EerReport report;
  report.pooling = pooling;
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_truths;
  for (std::size_t k = 0; k < set.vocabulary.size(); ++k) {
    TagEer row;
    row.tag = set.vocabulary[k];
    row.positives = static_cast<std::size_t>(
        std::count_if(set.truths[k].begin(), set.truths[k].end(), [](auto t) { return t != 0; }));
    row.negatives = set.truths[k].size() - row.positives;
    if (row.positives > 0 && row.negatives > 0) {
      row.eer = compute_eer(set.scores[k], set.truths[k]);
      sum += *row.eer;
      ++defined;
    }
    all_scores.insert(all_scores.end(), set.scores[k].begin(), set.scores[k].end());
    all_truths.insert(all_truths.end(), set.truths[k].begin(), set.truths[k].end());
    report.tags.push_back(std::move(row));
  }
  if (pooling == EerPooling::per_tag) {
    if (defined > 0) report.mean = sum / static_cast<double>(defined);
  } else {
    try {
      report.mean = compute_eer(all_scores, all_truths);
    } catch (const Error& e) {
      if (e.code() != Errc::undefined_eer) throw;
    }
  }
  return report;
}

/// Clip predictions (dropout off) for every clip, in dataset order.
inline ScoredSet score_dataset(const Tagger& model, const Dataset& data, std::size_t threads = 1) {
  require(!data.empty(), Errc::empty_dataset, "nothing to evaluate");
  const std::size_t k_count = model.spec().num_tags;
  std::vector<ClipPrediction> preds(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    require(data[i].label.size() == k_count, Errc::tag_count_mismatch,
            data[i].id + ": label has " + std::to_string(data[i].label.size()) + " tags");
    preds[i] = model.predict(data[i].blocks);
  });
  ScoredSet set;
  set.vocabulary = model.vocabulary();
  set.scores.assign(k_count, std::vector<double>(data.size()));
  set.truths.assign(k_count, std::vector<std::uint8_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    set.clip_ids.push_back(data[i].id);
    for (std::size_t k = 0; k < k_count; ++k) {
      set.scores[k][i] = preds[i].p[k];
      set.truths[k][i] = data[i].label.t[k];
    }
  }
  return set;
}

inline EerReport evaluate_tagger(const Tagger& model, const Dataset& data,
                                 EerPooling pooling = EerPooling::per_tag, std::size_t threads = 1) {
  return summarize_eer(score_dataset(model, data, threads), pooling);
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// CSV: tag,n_pos,n_neg,eer with a final "mean" row; undefined EERs print
/// as "skipped".
inline void write_eer_report(std::ostream& out, const EerReport& report) {
  out << "tag,n_pos,n_neg,eer\n";
  std::size_t pos = 0, neg = 0;
  for (const auto& row : report.tags) {
    out << row.tag << ',' << row.positives << ',' << row.negatives << ','
        << (row.eer ? format_number(*row.eer) : "skipped") << '\n';
    pos += row.positives;
    neg += row.negatives;
  }
  out << "mean," << pos << ',' << neg << ',' << (report.mean ? format_number(*report.mean) : "skipped")
      << '\n';
}

}  // namespace weaktag
