#pragma once

// Beat/downbeat event sequences, the ".beats" text format shared by
// annotations and tracker output, and frame-level label derivation.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "beatfuse/common.hpp"

namespace beatfuse {

struct BeatEvent {
  double time = 0.0;    // seconds
  int position = 1;     // position in bar, 1 = downbeat
};

struct BeatSequence {
  std::vector<BeatEvent> events;

  std::vector<double> times() const {
    std::vector<double> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.time);
    return out;
  }

  std::vector<double> downbeat_times() const {
    std::vector<double> out;
    for (const auto& e : events)
      if (e.position == 1) out.push_back(e.time);
    return out;
  }
};

inline void validate_beats(const BeatSequence& seq, const std::string& what) {
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    if (seq.events[i].position < 1)
      throw data_error(what + ": position in bar must be >= 1");
    if (i > 0 && seq.events[i].time <= seq.events[i - 1].time)
      throw data_error(what + ": beat times must be strictly increasing");
  }
}

// Lines "time<TAB>position_in_bar", seconds with 6 decimal places.
inline void write_beats(const std::filesystem::path& path, const BeatSequence& seq) {
  std::ofstream out(path);
  if (!out) throw data_error("beats: cannot write " + path.string());
  out << std::fixed << std::setprecision(6);
  for (const auto& e : seq.events) out << e.time << '\t' << e.position << '\n';
}

inline BeatSequence read_beats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("beats: cannot open " + path.string());
  BeatSequence seq;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    BeatEvent e;
    if (!(ls >> e.time >> e.position))
      throw data_error("beats: malformed line in " + path.string() + ": " + line);
    seq.events.push_back(e);
  }
  validate_beats(seq, "beats: " + path.string());
  return seq;
}

// Frame classes follow the activation row order.
enum FrameClass : int { kBeat = 0, kDownbeat = 1, kNonBeat = 2 };

struct FrameLabels {
  std::vector<int> classes;  // one of FrameClass per frame

  int frames() const { return static_cast<int>(classes.size()); }
};

// One frame per annotation at round(time * frame_rate) (half-even);
// position 1 labels downbeat, downbeat wins collisions, out-of-range
// events are skipped with a warning.
inline FrameLabels labels_from_annotations(const BeatSequence& anns, int frames,
                                           double frame_rate) {
  FrameLabels labels;
  labels.classes.assign(frames, kNonBeat);
  for (const auto& e : anns.events) {
    const long frame = round_half_even(e.time * frame_rate);
    if (e.time < 0.0 || frame < 0 || frame >= frames) {
      std::cerr << "warning: annotation at " << e.time << " s outside the " << frames
                << "-frame range, skipped\n";
      continue;
    }
    const int cls = e.position == 1 ? kDownbeat : kBeat;
    if (labels.classes[frame] != kDownbeat) labels.classes[frame] = cls;
  }
  return labels;
}

}  // namespace beatfuse
