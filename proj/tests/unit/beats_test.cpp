#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "beatfuse/beats.hpp"

using namespace beatfuse;
namespace fs = std::filesystem;

TEST_CASE("beats file round trip", "[beats]") {
  BeatSequence seq;
  seq.events = {{0.0, 1}, {0.5, 2}, {1.0, 3}, {1.5, 4}, {2.0, 1}};
  const fs::path dir = fs::temp_directory_path() / "beatfuse_beats_test";
  fs::create_directories(dir);
  const fs::path path = dir / "song.beats";
  write_beats(path, seq);
  const BeatSequence back = read_beats(path);
  REQUIRE(back.events.size() == seq.events.size());
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    CHECK(back.events[i].time == Catch::Approx(seq.events[i].time).margin(1e-6));
    CHECK(back.events[i].position == seq.events[i].position);
  }
}

TEST_CASE("reading rejects non-increasing times", "[beats]") {
  const fs::path dir = fs::temp_directory_path() / "beatfuse_beats_test";
  fs::create_directories(dir);
  const fs::path path = dir / "bad.beats";
  {
    std::ofstream out(path);
    out << "0.5\t1\n0.5\t2\n";
  }
  CHECK_THROWS_AS(read_beats(path), data_error);
}

TEST_CASE("labels from annotations: basic rounding and classes", "[beats]") {
  BeatSequence anns;
  anns.events = {{0.0, 1}, {0.5, 2}};
  const FrameLabels labels = labels_from_annotations(anns, 100, 100.0);
  CHECK(labels.classes[0] == kDownbeat);
  CHECK(labels.classes[50] == kBeat);
  int non = 0;
  for (int c : labels.classes) non += c == kNonBeat ? 1 : 0;
  CHECK(non == 98);
}

TEST_CASE("labels: empty annotation is all non-beat", "[beats]") {
  const FrameLabels labels = labels_from_annotations({}, 10, 100.0);
  for (int c : labels.classes) CHECK(c == kNonBeat);
}

TEST_CASE("labels: rounding is half-even", "[beats]") {
  BeatSequence anns;
  anns.events = {{0.504, 2}};
  FrameLabels labels = labels_from_annotations(anns, 100, 100.0);
  CHECK(labels.classes[50] == kBeat);  // 50.4 rounds down

  anns.events = {{0.505, 2}};
  labels = labels_from_annotations(anns, 100, 100.0);
  CHECK(labels.classes[50] == kBeat);  // 50.5 rounds to even 50

  anns.events = {{0.515, 2}};
  labels = labels_from_annotations(anns, 100, 100.0);
  CHECK(labels.classes[52] == kBeat);  // 51.5 rounds to even 52
}

TEST_CASE("labels: downbeat wins collisions and out-of-range is skipped", "[beats]") {
  BeatSequence anns;
  anns.events = {{0.501, 1}, {0.502, 2}, {9.0, 2}};
  const FrameLabels labels = labels_from_annotations(anns, 100, 100.0);
  CHECK(labels.classes[50] == kDownbeat);
  // the 9.0 s event lies outside the 1 s range and is skipped
  for (int t = 51; t < 100; ++t) CHECK(labels.classes[t] == kNonBeat);
}
