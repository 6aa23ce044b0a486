#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "beatfuse/audio.hpp"

using namespace beatfuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "beatfuse_audio_test";
  fs::create_directories(dir);
  return dir;
}

template <class T>
void put_le(std::ofstream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

}  // namespace

TEST_CASE("float32 wav round trip is exact", "[audio]") {
  AudioClip clip;
  clip.sample_rate = 16000;
  SeededRng rng(3);
  clip.samples.resize(1000);
  for (auto& s : clip.samples)
    s = std::nearbyint(rng.uniform(-0.8, 0.8) * 1048576.0) / 1048576.0;
  const fs::path path = temp_dir() / "roundtrip.wav";
  write_wav(path, clip);
  const AudioClip back = read_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    REQUIRE(back.samples[i] == clip.samples[i]);
}

TEST_CASE("pcm16 stereo wav is downmixed by averaging", "[audio]") {
  const fs::path path = temp_dir() / "stereo.wav";
  {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t frames = 4;
    out.write("RIFF", 4);
    put_le<std::uint32_t>(out, 36 + frames * 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, 1);   // PCM
    put_le<std::uint16_t>(out, 2);   // stereo
    put_le<std::uint32_t>(out, 8000);
    put_le<std::uint32_t>(out, 8000 * 4);
    put_le<std::uint16_t>(out, 4);
    put_le<std::uint16_t>(out, 16);
    out.write("data", 4);
    put_le<std::uint32_t>(out, frames * 4);
    const std::int16_t left[4] = {16384, -16384, 0, 32767};
    const std::int16_t right[4] = {0, -16384, 8192, 32767};
    for (int i = 0; i < 4; ++i) {
      put_le<std::int16_t>(out, left[i]);
      put_le<std::int16_t>(out, right[i]);
    }
  }
  const AudioClip clip = read_wav(path);
  REQUIRE(clip.samples.size() == 4);
  CHECK(clip.sample_rate == 8000);
  CHECK(clip.samples[0] == Catch::Approx(0.25));
  CHECK(clip.samples[1] == Catch::Approx(-0.5));
  CHECK(clip.samples[2] == Catch::Approx(0.125));
}

TEST_CASE("unsupported wav encodings are rejected", "[audio]") {
  const fs::path path = temp_dir() / "alaw.wav";
  {
    std::ofstream out(path, std::ios::binary);
    out.write("RIFF", 4);
    put_le<std::uint32_t>(out, 36 + 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, 6);  // a-law
    put_le<std::uint16_t>(out, 1);
    put_le<std::uint32_t>(out, 8000);
    put_le<std::uint32_t>(out, 8000);
    put_le<std::uint16_t>(out, 1);
    put_le<std::uint16_t>(out, 8);
    out.write("data", 4);
    put_le<std::uint32_t>(out, 4);
    put_le<std::uint32_t>(out, 0);
  }
  CHECK_THROWS_AS(read_wav(path), data_error);
}

TEST_CASE("linear resampling preserves duration and low-frequency shape", "[audio]") {
  AudioClip clip;
  clip.sample_rate = 44100;
  clip.samples.resize(44100);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = std::sin(2.0 * 3.14159265358979 * 110.0 * i / 44100.0);
  const AudioClip down = resample_linear(clip, 16000);
  CHECK(down.sample_rate == 16000);
  CHECK(down.samples.size() == 16000);
  // shape check at a few points
  for (int i = 100; i < 15900; i += 1000) {
    const double expect = std::sin(2.0 * 3.14159265358979 * 110.0 * i / 16000.0);
    CHECK(down.samples[i] == Catch::Approx(expect).margin(5e-3));
  }
  CHECK(resample_linear(clip, 44100).samples == clip.samples);
}

TEST_CASE("clip validation rejects bad input", "[audio]") {
  AudioClip clip;
  clip.sample_rate = 0;
  clip.samples = {0.0};
  CHECK_THROWS_AS(validate_clip(clip, "t"), data_error);
  clip.sample_rate = 100;
  clip.samples.clear();
  CHECK_THROWS_AS(validate_clip(clip, "t"), data_error);
  clip.samples = {std::nan("")};
  CHECK_THROWS_AS(validate_clip(clip, "t"), data_error);
}
