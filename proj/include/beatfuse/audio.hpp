#pragma once

// Mono audio container plus minimal WAV I/O (16-bit PCM and 32-bit float)
// and the linear resampler used to bring inputs to the configured rate.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "beatfuse/common.hpp"

namespace beatfuse {

static_assert(std::endian::native == std::endian::little,
              "payload and WAV I/O assume a little-endian host");

struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

inline void validate_clip(const AudioClip& clip, const std::string& what) {
  if (clip.sample_rate <= 0) throw data_error(what + ": sample rate must be positive");
  if (clip.samples.empty()) throw data_error(what + ": empty audio");
  for (double s : clip.samples)
    if (!std::isfinite(s)) throw data_error(what + ": non-finite sample");
}

inline AudioClip downmix(const std::vector<std::vector<double>>& channels, int sample_rate) {
  AudioClip out;
  out.sample_rate = sample_rate;
  if (channels.empty()) return out;
  const std::size_t n = channels.front().size();
  out.samples.assign(n, 0.0);
  for (const auto& ch : channels)
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += ch[i];
  const double inv = 1.0 / static_cast<double>(channels.size());
  for (double& s : out.samples) s *= inv;
  return out;
}

// Linear interpolation; adequate at desk scale.
inline AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  validate_clip(clip, "resample");
  if (target_rate <= 0) throw config_error("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  const std::size_t n_in = clip.samples.size();
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const std::size_t n_out =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n_in * ratio)));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    const std::size_t lo = std::min(n_in - 1, static_cast<std::size_t>(pos));
    const std::size_t hi = std::min(n_in - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = (1.0 - frac) * clip.samples[lo] + frac * clip.samples[hi];
  }
  return out;
}

namespace wav_detail {

template <class T>
T read_le(std::istream& in) {
  T v{};
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw data_error("wav: truncated file");
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

}  // namespace wav_detail

// Reads mono or multi-channel WAV (PCM16 or IEEE float32); multi-channel
// input is downmixed by averaging.
inline AudioClip read_wav(const std::filesystem::path& path) {
  using wav_detail::read_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("wav: cannot open " + path.string());

  char tag[4];
  if (!in.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw data_error("wav: not a RIFF file: " + path.string());
  read_le<std::uint32_t>(in);  // riff size
  if (!in.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw data_error("wav: not a WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<std::vector<double>> data;

  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      sample_rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      std::uint32_t consumed = 16;
      if (format == 0xFFFE && chunk_size >= 40) {
        read_le<std::uint16_t>(in);  // cbSize
        read_le<std::uint16_t>(in);  // valid bits
        read_le<std::uint32_t>(in);  // channel mask
        format = read_le<std::uint16_t>(in);  // first GUID word holds the codec
        consumed += 10;
      }
      in.seekg(chunk_size - consumed + (chunk_size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw data_error("wav: data chunk before fmt chunk");
      if (channels == 0 || sample_rate == 0) throw data_error("wav: malformed fmt chunk");
      std::size_t frames = 0;
      if (format == 1 && bits == 16) {
        frames = chunk_size / (2 * channels);
        data.assign(channels, std::vector<double>(frames));
        for (std::size_t i = 0; i < frames; ++i)
          for (std::uint16_t c = 0; c < channels; ++c)
            data[c][i] = read_le<std::int16_t>(in) / 32768.0;
      } else if (format == 3 && bits == 32) {
        frames = chunk_size / (4 * channels);
        data.assign(channels, std::vector<double>(frames));
        for (std::size_t i = 0; i < frames; ++i)
          for (std::uint16_t c = 0; c < channels; ++c)
            data[c][i] = read_le<float>(in);
      } else {
        throw data_error("wav: unsupported encoding (want PCM16 or float32): " + path.string());
      }
      if (chunk_size & 1) in.seekg(1, std::ios::cur);
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }

  if (data.empty()) throw data_error("wav: no data chunk in " + path.string());
  AudioClip clip = downmix(data, static_cast<int>(sample_rate));
  validate_clip(clip, "wav: " + path.string());
  return clip;
}

// Writes mono 32-bit float WAV.
inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  using wav_detail::write_le;
  validate_clip(clip, "wav write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("wav: cannot write " + path.string());

  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 4;
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 4 + 26 + 12 + 8 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 18);
  write_le<std::uint16_t>(out, 3);  // IEEE float
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 4);
  write_le<std::uint16_t>(out, 4);
  write_le<std::uint16_t>(out, 32);
  write_le<std::uint16_t>(out, 0);  // cbSize
  out.write("fact", 4);
  write_le<std::uint32_t>(out, 4);
  write_le<std::uint32_t>(out, n);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : clip.samples) write_le<float>(out, static_cast<float>(s));
  if (!out) throw data_error("wav: short write on " + path.string());
}

}  // namespace beatfuse
