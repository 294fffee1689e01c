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

#include <string>
#include <vector>

#include "trellis/grammar.hpp"
#include "trellis/semparser.hpp"
#include "trellis/synparser.hpp"

namespace trellis {

// Parses a corpus into the ambiguous treebank: every skeleton derivation
// licensed by G' whose reconstruction under G unifies. Utterances without a
// parse keep an empty tree set.
inline TreeBank build_treebank(const UnificationGrammar& g, const SkeletonGrammar& skel,
                               const std::vector<std::vector<std::string>>& corpus) {
  TreeBank bank;
  WordBigram neutral;
  for (const auto& words : corpus) {
    for (const auto& w : words)
      if (!g.has_word(w))
        throw ValidationError("corpus word '" + w + "' is not in the lexicon");
    ChartConfig cfg;
    cfg.beam_offset = std::numeric_limits<double>::infinity();
    Chart chart(g, skel, neutral, nullptr, cfg);
    for (size_t i = 0; i < words.size(); ++i) {
      WordHyp h;
      h.word = words[i];
      h.start = static_cast<int>(i);
      h.end = static_cast<int>(i) + 1;
      h.acoustic_score = 0.0;
      chart.step_frame(h.end, {h}, {});
    }
    TreeBankEntry entry;
    entry.words = words;
    int n = static_cast<int>(words.size());
    for (int id : chart.ranked_utterance_edges()) {
      if (chart.edge(id).end != n) continue;
      SkelTree t = chart.skel_tree(id);
      if (reconstruct_skel_tree(g, skel, t)) entry.trees.push_back(std::move(t));
    }
    bank.entries.push_back(std::move(entry));
  }
  return bank;
}

// One whitespace-separated utterance per line.
inline std::vector<std::vector<std::string>> parse_corpus(const std::string& content) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : content_lines(content)) out.push_back(split_ws(line));
  return out;
}

}  // namespace trellis
