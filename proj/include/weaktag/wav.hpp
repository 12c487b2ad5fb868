#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "weaktag/binary_io.hpp"
#include "weaktag/error.hpp"

namespace weaktag {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;

struct AudioClip {
  std::string id;
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::vector<float> samples;  // [-1, 1)
};

/// Reads a PCM16 mono RIFF/WAVE file. No resampling: a file whose rate differs
/// from `expected_rate` is rejected.
inline AudioClip load_wav(const std::filesystem::path& path,
                          std::uint32_t expected_rate = kDefaultSampleRate) {
  const auto bytes = io::read_file(path);
  io::Reader in(bytes, path.string());
  char riff[4], wave[4];
  if (bytes.size() < 12) fail(Errc::unsupported_format, path.string() + ": not a RIFF/WAVE file");
  in.get_bytes(riff, 4);
  in.get_u32();
  in.get_bytes(wave, 4);
  if (std::string(riff, 4) != "RIFF" || std::string(wave, 4) != "WAVE")
    fail(Errc::unsupported_format, path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint32_t rate = 0;
  std::vector<float> samples;
  bool have_data = false;
  while (in.remaining() >= 8) {
    char id[4];
    in.get_bytes(id, 4);
    const std::uint32_t size = in.get_u32();
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      if (size < 16) fail(Errc::unsupported_format, path.string() + ": short fmt chunk");
      const auto format = in.get_u16();
      const auto channels = in.get_u16();
      rate = in.get_u32();
      in.get_u32();  // byte rate
      in.get_u16();  // block align
      const auto bits = in.get_u16();
      in.skip(size - 16 + (size & 1U));
      if (format != 1 || bits != 16)
        fail(Errc::unsupported_format,
             path.string() + ": only PCM16 is supported (format " + std::to_string(format) +
                 ", " + std::to_string(bits) + " bits)");
      if (channels != 1)
        fail(Errc::unsupported_format,
             path.string() + ": expected mono, got " + std::to_string(channels) + " channels");
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) fail(Errc::unsupported_format, path.string() + ": data chunk before fmt");
      const std::size_t n = std::min<std::size_t>(size, in.remaining()) / 2;
      samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        samples[i] = static_cast<float>(in.get<std::int16_t>()) / 32768.0F;
      have_data = true;
      break;
    } else {
      in.skip(std::min<std::size_t>(size + (size & 1U), in.remaining()));
    }
  }
  if (!have_fmt || !have_data)
    fail(Errc::unsupported_format, path.string() + ": missing fmt or data chunk");
  if (rate != expected_rate)
    fail(Errc::sample_rate_mismatch, path.string() + ": " + std::to_string(rate) +
                                          " Hz, expected " + std::to_string(expected_rate) + " Hz");

  AudioClip clip;
  clip.id = path.stem().string();
  clip.sample_rate = rate;
  clip.samples = std::move(samples);
  return clip;
}

/// Quantizes to PCM16 (round to nearest, saturating) and writes a canonical
/// 44-byte-header WAV.
inline std::vector<char> encode_wav(std::span<const float> samples, std::uint32_t sample_rate) {
  io::Writer out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.put_bytes("RIFF", 4);
  out.put_u32(36 + data_bytes);
  out.put_bytes("WAVE", 4);
  out.put_bytes("fmt ", 4);
  out.put_u32(16);
  out.put_u16(1);
  out.put_u16(1);
  out.put_u32(sample_rate);
  out.put_u32(sample_rate * 2);
  out.put_u16(2);
  out.put_u16(16);
  out.put_bytes("data", 4);
  out.put_u32(data_bytes);
  for (float s : samples) {
    const double scaled = std::nearbyint(static_cast<double>(s) * 32768.0);
    const double clamped = std::clamp(scaled, -32768.0, 32767.0);
    out.put(static_cast<std::int16_t>(clamped));
  }
  return out.take();
}

inline void save_wav(const std::filesystem::path& path, const AudioClip& clip) {
  io::write_file(path, encode_wav(clip.samples, clip.sample_rate));
}

}  // namespace weaktag
