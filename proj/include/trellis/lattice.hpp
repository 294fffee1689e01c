// Copyright 2026 The trellis authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "trellis/common.hpp"

namespace trellis {

// Word boundary classes: default word boundary, intermediate phrase,
// full prosodic phrase, irregular boundary.
enum class BoundaryClass : int { B0 = 0, B2 = 1, B3 = 2, B9 = 3 };

constexpr int kNumBoundaryClasses = 4;

inline const char* boundary_class_name(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::B0: return "B0";
    case BoundaryClass::B2: return "B2";
    case BoundaryClass::B3: return "B3";
    case BoundaryClass::B9: return "B9";
  }
  return "?";
}

inline std::optional<BoundaryClass> boundary_class_from(const std::string& s) {
  if (s == "B0") return BoundaryClass::B0;
  if (s == "B2") return BoundaryClass::B2;
  if (s == "B3") return BoundaryClass::B3;
  if (s == "B9") return BoundaryClass::B9;
  return std::nullopt;
}

// A recognizer word hypothesis: an edge between two frame-boundary vertices.
struct WordHyp {
  std::string word;
  int start = 0;            // start vertex
  int end = 0;              // end vertex, start < end
  double acoustic_score = 0;  // log probability, <= 0
};

// Acoustic evidence for a boundary class over a frame interval. Scores are
// normalized log posteriors over the four classes.
struct BoundaryHypothesis {
  int start_frame = 0;
  int end_frame = 0;
  std::array<double, kNumBoundaryClasses> class_scores{};

  double score(BoundaryClass c) const { return class_scores[static_cast<int>(c)]; }
  double midpoint() const { return 0.5 * (start_frame + end_frame); }
  // Vertices covered by the interval.
  std::vector<int> vertex_span() const {
    std::vector<int> v;
    for (int i = start_frame; i <= end_frame; ++i) v.push_back(i);
    return v;
  }
};

// Frames-as-vertices word graph. Vertices are dense 0..frames; word
// hypotheses always point forward in time, so the graph is a DAG by
// construction. Immutable after load; safe to share read-only.
struct Lattice {
  std::string utterance_id;
  int frames = 0;  // vertices are 0..frames inclusive
  std::vector<WordHyp> word_hyps;
  std::vector<BoundaryHypothesis> wbhs;
};

namespace detail {

inline void validate_wbh(const BoundaryHypothesis& b, int frames) {
  if (b.start_frame < 0 || b.end_frame > frames || b.start_frame > b.end_frame)
    throw ValidationError("boundary hypothesis interval out of range: [" +
                          std::to_string(b.start_frame) + "," +
                          std::to_string(b.end_frame) + "]");
  double sum = 0;
  for (double s : b.class_scores) {
    if (s > 0) throw ValidationError("boundary class score > 0");
    sum += std::exp(s);
  }
  if (sum < 1.0 - 1e-6 || sum > 1.0 + 1e-6)
    throw ValidationError("boundary class scores are not normalized posteriors (exp-sum=" +
                          fmt_double(sum) + ")");
}

}  // namespace detail

inline void validate_lattice(const Lattice& lat) {
  if (lat.frames < 0) throw ValidationError("negative frame count");
  for (const auto& h : lat.word_hyps) {
    if (h.start >= h.end)
      throw ValidationError("word hyp '" + h.word + "' has empty span " +
                            std::to_string(h.start) + ".." + std::to_string(h.end));
    if (h.start < 0 || h.end > lat.frames)
      throw ValidationError("word hyp '" + h.word + "' out of range");
    if (h.acoustic_score > 0)
      throw ValidationError("word hyp '" + h.word + "' has positive log score");
  }
  for (const auto& b : lat.wbhs) detail::validate_wbh(b, lat.frames);
}

// Line format:
//   LATTICE <utterance_id> <frames>
//   W <word> <start> <end> <log_score>
//   B <start_frame> <end_frame> <logB0> <logB2> <logB3> <logB9>
inline Lattice parse_lattice(const std::string& content) {
  Lattice lat;
  bool header = false;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "LATTICE") {
      if (tok.size() != 3) throw ParseError("bad LATTICE header: " + line);
      lat.utterance_id = tok[1];
      lat.frames = static_cast<int>(parse_long(tok[2], "frames"));
      header = true;
    } else if (tok[0] == "W") {
      if (tok.size() != 5) throw ParseError("bad W line: " + line);
      WordHyp h;
      h.word = tok[1];
      h.start = static_cast<int>(parse_long(tok[2], "start"));
      h.end = static_cast<int>(parse_long(tok[3], "end"));
      h.acoustic_score = parse_double(tok[4], "log_score");
      lat.word_hyps.push_back(h);
    } else if (tok[0] == "B") {
      if (tok.size() != 7) throw ParseError("bad B line: " + line);
      BoundaryHypothesis b;
      b.start_frame = static_cast<int>(parse_long(tok[1], "start_frame"));
      b.end_frame = static_cast<int>(parse_long(tok[2], "end_frame"));
      for (int i = 0; i < kNumBoundaryClasses; ++i)
        b.class_scores[i] = parse_double(tok[3 + i], "class score");
      lat.wbhs.push_back(b);
    } else {
      throw ParseError("unknown lattice line: " + line);
    }
  }
  if (!header) throw ParseError("missing LATTICE header");
  validate_lattice(lat);
  return lat;
}

inline Lattice load_lattice(const std::string& path) {
  return parse_lattice(read_file(path));
}

inline std::string format_lattice(const Lattice& lat) {
  std::ostringstream out;
  out << "LATTICE " << lat.utterance_id << " " << lat.frames << "\n";
  for (const auto& h : lat.word_hyps)
    out << "W " << h.word << " " << h.start << " " << h.end << " "
        << fmt_double(h.acoustic_score) << "\n";
  for (const auto& b : lat.wbhs) {
    out << "B " << b.start_frame << " " << b.end_frame;
    for (double s : b.class_scores) out << " " << fmt_double(s);
    out << "\n";
  }
  return out.str();
}

inline void save_lattice(const Lattice& lat, const std::string& path) {
  write_file(path, format_lattice(lat));
}

// The boundary hypothesis attached to a vertex: the one whose interval
// contains the vertex, picking the nearest interval midpoint when several
// overlap (earliest interval on a midpoint tie).
inline std::optional<BoundaryHypothesis> wbh_at_vertex(const Lattice& lat, int v) {
  if (v < 0 || v > lat.frames)
    throw ValidationError("vertex out of range: " + std::to_string(v));
  const BoundaryHypothesis* best = nullptr;
  double best_dist = 0;
  for (const auto& b : lat.wbhs) {
    if (v < b.start_frame || v > b.end_frame) continue;
    double dist = std::fabs(b.midpoint() - v);
    if (best == nullptr || dist < best_dist ||
        (dist == best_dist && (b.start_frame < best->start_frame ||
                               (b.start_frame == best->start_frame &&
                                b.end_frame < best->end_frame)))) {
      best = &b;
      best_dist = dist;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

}  // namespace trellis
