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

#include <map>
#include <string>
#include <vector>

#include "trellis/common.hpp"
#include "trellis/lattice.hpp"
#include "trellis/word_bigram.hpp"

namespace trellis {

struct AlignmentResult {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_length = 0;

  long distance() const { return substitutions + deletions + insertions; }
  double word_accuracy() const {
    return 100.0 * (ref_length - distance()) / ref_length;
  }
};

// Minimal-cost alignment with unit costs. Ties in the backtrace prefer a
// substitution over an insertion plus deletion, then deletions over
// insertions, so the counts are deterministic.
inline AlignmentResult word_accuracy(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp) {
  if (ref.empty()) throw ValidationError("empty reference");
  size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      int sub = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int del = dp[i - 1][j] + 1;
      int ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min({sub, del, ins});
    }
  AlignmentResult r;
  r.ref_length = static_cast<long>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  return r;
}

enum class EvalConfig { DM, DMP, DMPS };
enum class EvalMode { BottomUp, Boundaries, TopDown };

inline const char* eval_config_name(EvalConfig c) {
  switch (c) {
    case EvalConfig::DM: return "DM";
    case EvalConfig::DMP: return "DMP";
    case EvalConfig::DMPS: return "DMPS";
  }
  return "?";
}

inline const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::BottomUp: return "bottom-up";
    case EvalMode::Boundaries: return "boundaries";
    case EvalMode::TopDown: return "topdown";
  }
  return "?";
}

// One scored run. For DM the hypothesis is the best decoder path. For DMP
// and DMPS only words inside the accepted parse count: the hypothesis is
// the parse yield from the start of the utterance, so reference words to
// the right of the parse end up as deletions even when they were
// string-correct.
struct ConfigRun {
  EvalConfig config = EvalConfig::DM;
  EvalMode mode = EvalMode::BottomUp;
  std::vector<std::string> hypothesis;
};

inline AlignmentResult score_config(const ConfigRun& run,
                                    const std::vector<std::string>& ref) {
  if (run.config == EvalConfig::DMPS && run.mode == EvalMode::TopDown)
    throw ValidationError("top-down mode has no semantic evaluation");
  return word_accuracy(ref, run.hypothesis);
}

// Best path through the lattice under acoustic plus bigram scores: the
// decoder-only hypothesis. Empty when no path spans the whole lattice.
inline std::vector<std::string> best_decoder_path(const Lattice& lat,
                                                  const WordBigram& bigram) {
  struct State {
    double score = kLogZero;
    int prev_vertex = -1;
    std::string prev_word;
  };
  // State per (vertex, last word); word "" marks the start.
  std::vector<std::map<std::string, State>> states(lat.frames + 1);
  states[0][""] = State{0.0, -1, ""};
  std::vector<WordHyp> hyps = lat.word_hyps;
  std::sort(hyps.begin(), hyps.end(), [](const WordHyp& a, const WordHyp& b) {
    if (a.end != b.end) return a.end < b.end;
    if (a.start != b.start) return a.start < b.start;
    if (a.word != b.word) return a.word < b.word;
    return a.acoustic_score > b.acoustic_score;
  });
  for (const auto& h : hyps) {
    for (const auto& [w, st] : states[h.start]) {
      if (st.score == kLogZero) continue;
      double cand = st.score + h.acoustic_score +
                    (w.empty() ? 0.0 : bigram.score(w, h.word));
      State& slot = states[h.end][h.word];
      if (cand > slot.score) {
        slot.score = cand;
        slot.prev_vertex = h.start;
        slot.prev_word = w;
      }
    }
  }
  const State* best = nullptr;
  std::string best_word;
  for (const auto& [w, st] : states[lat.frames]) {
    if (st.score == kLogZero || w.empty()) continue;
    if (best == nullptr || st.score > best->score) {
      best = &st;
      best_word = w;
    }
  }
  if (best == nullptr) return {};
  std::vector<std::string> path;
  int v = lat.frames;
  std::string w = best_word;
  while (v > 0 && !w.empty()) {
    path.push_back(w);
    const State& st = states[v].at(w);
    v = st.prev_vertex;
    w = st.prev_word;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// ---------------------------------------------------------------------------
// The run manifest and the 3x3 results table.

struct ManifestEntry {
  EvalConfig config = EvalConfig::DM;
  EvalMode mode = EvalMode::BottomUp;
  std::string lattice_path;
  std::string ref_path;
};

// One run per line: <config> <mode> <lattice path> <ref transcript path>.
inline std::vector<ManifestEntry> parse_manifest(const std::string& content) {
  std::vector<ManifestEntry> out;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok.size() != 4) throw ParseError("bad manifest line: " + line);
    ManifestEntry e;
    if (tok[0] == "DM") e.config = EvalConfig::DM;
    else if (tok[0] == "DMP") e.config = EvalConfig::DMP;
    else if (tok[0] == "DMPS") e.config = EvalConfig::DMPS;
    else throw ParseError("unknown config: " + tok[0]);
    if (tok[1] == "bottom-up") e.mode = EvalMode::BottomUp;
    else if (tok[1] == "boundaries") e.mode = EvalMode::Boundaries;
    else if (tok[1] == "topdown") e.mode = EvalMode::TopDown;
    else throw ParseError("unknown mode: " + tok[1]);
    if (e.config == EvalConfig::DMPS && e.mode == EvalMode::TopDown)
      throw ValidationError("manifest requests DMPS in top-down mode");
    e.lattice_path = tok[2];
    e.ref_path = tok[3];
    out.push_back(std::move(e));
  }
  return out;
}

class EvalTable {
 public:
  void add(EvalMode mode, EvalConfig config, double wa) {
    auto& cell = cells_[static_cast<int>(mode)][static_cast<int>(config)];
    cell.first += wa;
    cell.second += 1;
  }

  std::string to_text() const {
    static const char* kRows[3] = {"Word Accuracy", "WA with phrase boundary",
                                   "WA in TD-Mode"};
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-26s %8s %8s %8s\n", "", "DM", "DMP", "DMPS");
    out << buf;
    for (int m = 0; m < 3; ++m) {
      std::snprintf(buf, sizeof(buf), "%-26s", kRows[m]);
      out << buf;
      for (int c = 0; c < 3; ++c) {
        bool impossible = (m == static_cast<int>(EvalMode::TopDown) &&
                           c == static_cast<int>(EvalConfig::DMPS));
        const auto& cell = cells_[m][c];
        if (impossible || cell.second == 0) {
          std::snprintf(buf, sizeof(buf), " %8s", "--");
        } else {
          std::snprintf(buf, sizeof(buf), " %7.1f%%", cell.first / cell.second);
        }
        out << buf;
      }
      out << "\n";
    }
    return out.str();
  }

 private:
  std::pair<double, int> cells_[3][3] = {};
};

inline std::vector<std::string> parse_transcript(const std::string& content) {
  std::vector<std::string> words;
  for (const auto& line : content_lines(content))
    for (const auto& w : split_ws(line)) words.push_back(w);
  return words;
}

}  // namespace trellis
