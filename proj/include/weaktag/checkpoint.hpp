#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weaktag/binary_io.hpp"
#include "weaktag/error.hpp"
#include "weaktag/models.hpp"

namespace weaktag {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all little-endian:
//   "WTCK" u32 version
//   u32 kind (0 bob, 1 jdc), u32 block_len, u32 mel_bins, u32 hidden_layers,
//   u32 hidden_units, u32 num_tags, f32 dropout
//   u32 tag count, then per tag: u32 length + bytes
//   u32 bins, f32 mean[bins], f32 scale[bins]
//   u32 param count, then per param: u32 name length + bytes, u32 rank,
//   u32 dims[rank], f32 data[prod(dims)]
inline std::vector<char> encode_checkpoint(const Tagger& model) {
  io::Writer out;
  const auto& spec = model.spec();
  out.put_bytes("WTCK", 4);
  out.put_u32(kCheckpointVersion);
  out.put_u32(spec.kind == ModelKind::bob ? 0 : 1);
  out.put_u32(static_cast<std::uint32_t>(spec.block_len));
  out.put_u32(static_cast<std::uint32_t>(spec.mel_bins));
  out.put_u32(static_cast<std::uint32_t>(spec.hidden_layers));
  out.put_u32(static_cast<std::uint32_t>(spec.hidden_units));
  out.put_u32(static_cast<std::uint32_t>(spec.num_tags));
  out.put_f32(spec.dropout);
  out.put_u32(static_cast<std::uint32_t>(model.vocabulary().size()));
  for (const auto& tag : model.vocabulary().tags()) out.put_string(tag);
  const auto& st = model.standardizer();
  out.put_u32(static_cast<std::uint32_t>(st.mean.size()));
  out.put_bytes(st.mean.data(), st.mean.size() * sizeof(float));
  out.put_bytes(st.scale.data(), st.scale.size() * sizeof(float));
  out.put_u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& entry : model.params()) {
    out.put_string(entry.name);
    out.put_u32(static_cast<std::uint32_t>(entry.value.rank()));
    for (auto d : entry.value.shape()) out.put_u32(static_cast<std::uint32_t>(d));
    out.put_bytes(entry.value.data().data(), entry.value.size() * sizeof(float));
  }
  return out.take();
}

inline Tagger decode_checkpoint(const std::vector<char>& bytes, const std::string& what) {
  io::Reader in(bytes, what, Errc::checkpoint_format);
  char magic[4];
  in.get_bytes(magic, 4);
  if (std::string(magic, 4) != "WTCK") fail(Errc::checkpoint_format, what + ": bad magic");
  const auto version = in.get_u32();
  if (version != kCheckpointVersion)
    fail(Errc::checkpoint_format, what + ": unsupported version " + std::to_string(version));

  ModelSpec spec;
  const auto kind = in.get_u32();
  if (kind > 1) fail(Errc::checkpoint_format, what + ": bad model kind");
  spec.kind = kind == 0 ? ModelKind::bob : ModelKind::jdc;
  spec.block_len = in.get_u32();
  spec.mel_bins = in.get_u32();
  spec.hidden_layers = in.get_u32();
  spec.hidden_units = in.get_u32();
  spec.num_tags = in.get_u32();
  spec.dropout = in.get_f32();

  std::vector<std::string> tags(in.get_u32());
  for (auto& t : tags) t = in.get_string();

  Standardizer st;
  const auto bins = in.get_u32();
  st.mean.resize(bins);
  st.scale.resize(bins);
  in.get_bytes(st.mean.data(), bins * sizeof(float));
  in.get_bytes(st.scale.data(), bins * sizeof(float));

  ParamSet params;
  const auto count = in.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = in.get_string();
    Shape shape(in.get_u32());
    for (auto& d : shape) d = in.get_u32();
    Tensor value(shape);
    in.get_bytes(value.data().data(), value.size() * sizeof(float));
    params.add(std::move(name), std::move(value));
  }
  if (in.remaining() != 0) fail(Errc::checkpoint_format, what + ": trailing bytes");
  try {
    return Tagger(spec, TagVocabulary(std::move(tags)), std::move(st), std::move(params));
  } catch (const Error& e) {
    fail(Errc::checkpoint_format, what + ": " + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Tagger& model) {
  io::write_file(path, encode_checkpoint(model));
}

inline Tagger load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace weaktag
