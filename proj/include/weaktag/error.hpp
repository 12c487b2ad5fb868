#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace weaktag {

// Every failure the library reports carries one of these codes so callers
// (and the CLI exit-code mapping) can tell them apart without string matching.
enum class Errc {
  file_not_found,
  io_failure,
  unsupported_format,
  sample_rate_mismatch,
  clip_too_short,
  shape_mismatch,
  empty_filter,
  invalid_argument,
  empty_dataset,
  tag_count_mismatch,
  empty_fold,
  missing_fold,
  unknown_tag,
  duplicate_clip,
  malformed_line,
  undefined_eer,
  overconstrained,
  checkpoint_format,
  model_kind_mismatch,
  non_finite,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::file_not_found: return "file not found";
    case Errc::io_failure: return "i/o failure";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::sample_rate_mismatch: return "sample rate mismatch";
    case Errc::clip_too_short: return "clip too short";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::empty_filter: return "empty mel filter";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::empty_dataset: return "empty dataset";
    case Errc::tag_count_mismatch: return "tag count mismatch";
    case Errc::empty_fold: return "empty fold";
    case Errc::missing_fold: return "missing fold id";
    case Errc::unknown_tag: return "unknown tag";
    case Errc::duplicate_clip: return "duplicate clip id";
    case Errc::malformed_line: return "malformed line";
    case Errc::undefined_eer: return "undefined EER";
    case Errc::overconstrained: return "overconstrained event placement";
    case Errc::checkpoint_format: return "bad checkpoint";
    case Errc::model_kind_mismatch: return "model kind mismatch";
    case Errc::non_finite: return "non-finite value";
  }
  return "unknown error";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  Errc code() const noexcept { return code_; }

  // NaN/Inf during training or evaluation is a numeric failure; everything
  // else is a problem with the inputs.
  bool is_numeric() const noexcept { return code_ == Errc::non_finite; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool condition, Errc code, const std::string& detail) {
  if (!condition) fail(code, detail);
}

}  // namespace weaktag
