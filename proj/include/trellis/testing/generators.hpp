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
//
// Seeded random toy instances (grammar + lattice + models) for the oracle
// suites. Everything is deterministic in the seed.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trellis/grammar.hpp"
#include "trellis/lattice.hpp"
#include "trellis/prosody.hpp"
#include "trellis/stylelm.hpp"
#include "trellis/synparser.hpp"
#include "trellis/testing/oracle.hpp"
#include "trellis/treebank.hpp"
#include "trellis/word_bigram.hpp"

namespace trellis::testing {

struct InstanceOptions {
  int max_frames = 8;
  int max_hyps = 12;
  int max_rules = 10;
  bool agreement = true;      // plant unification constraints
  bool with_wbhs = false;     // add boundary hypotheses
  bool trained_model = false; // non-uniform context model from a tiny treebank
  long max_derivations = 4000;
};

struct TestInstance {
  UnificationGrammar grammar;
  SkeletonGrammar skel;
  Lattice lattice;
  WordBigram bigram;
  BoundaryNgramModel boundary_model;  // always usable; trained on random data
};

namespace detail {

inline const std::vector<std::string> kNonterminals = {"utt", "ph1", "ph2"};
inline const std::vector<std::string> kTerminals = {"n", "v", "p"};
inline const std::vector<std::string> kAgr = {"sg", "pl"};

inline std::string random_grammar_text(Rng& rng, const InstanceOptions& opt) {
  std::ostringstream out;
  out << "(types utt ph1 ph2 n v p agrv (sg agrv) (pl agrv))\n";
  int n_rules = 4 + rng.below(std::max(1, opt.max_rules - 3));
  std::vector<std::vector<std::string>> rhss;
  std::vector<std::string> lhss;
  std::set<std::string> used_terminals;
  for (int r = 0; r < n_rules; ++r) {
    std::string lhs = r == 0 ? "utt" : kNonterminals[rng.below(3)];
    int arity = 1 + rng.below(3);
    std::vector<std::string> rhs;
    for (int d = 0; d < arity; ++d) {
      // Lean terminal-ward so sampled yields stay short.
      bool terminal = rng.below(100) < 60;
      std::string cat =
          terminal ? kTerminals[rng.below(3)] : kNonterminals[rng.below(3)];
      if (terminal) used_terminals.insert(cat);
      rhs.push_back(cat);
    }
    lhss.push_back(lhs);
    rhss.push_back(rhs);
  }
  if (used_terminals.empty()) {
    lhss.push_back("ph1");
    rhss.push_back({"n"});
    used_terminals.insert("n");
  }
  for (size_t r = 0; r < rhss.size(); ++r) {
    bool constrain = opt.agreement && rng.below(100) < 55;
    out << "(rule r" << r << " (mother (" << lhss[r];
    if (constrain) out << " (agr #1=agrv)";
    out << ")) (daughters";
    for (const auto& cat : rhss[r]) {
      out << " (" << cat;
      if (constrain) out << " (agr #1)";
      out << ")";
    }
    out << "))\n";
  }
  int n_words = 5 + rng.below(4);
  std::vector<std::string> terminals(used_terminals.begin(), used_terminals.end());
  for (int w = 0; w < n_words; ++w) {
    const std::string& cat = terminals[rng.below(static_cast<int>(terminals.size()))];
    out << "(lex w" << w << " (" << cat;
    if (opt.agreement) {
      int pick = rng.below(10);
      if (pick < 4) out << " (agr sg)";
      else if (pick < 8) out << " (agr pl)";
      // otherwise underspecified
    }
    out << "))\n";
  }
  out << "(start utt)\n";
  return out.str();
}

// Samples a yield from the skeleton grammar (unification constraints are
// ignored on purpose: clashing yields are exactly what plants failures).
inline bool sample_yield(Rng& rng, const UnificationGrammar& g, const SkeletonGrammar& skel,
                         int cat, int depth, int max_len, std::vector<std::string>& out) {
  if (static_cast<int>(out.size()) >= max_len) return false;
  std::vector<std::string> words;
  for (const auto& e : g.lex_entries)
    if (e.category == cat) words.push_back(e.word);
  if (!words.empty()) {
    out.push_back(words[rng.below(static_cast<int>(words.size()))]);
    return true;
  }
  if (depth <= 0) return false;
  const auto& applicable = skel.applicable(cat);
  if (applicable.empty()) return false;
  int first = rng.below(static_cast<int>(applicable.size()));
  for (size_t k = 0; k < applicable.size(); ++k) {
    int r = applicable[(first + k) % applicable.size()];
    std::vector<std::string> attempt = out;
    bool ok = true;
    for (int child : skel.rules[r].rhs)
      if (!sample_yield(rng, g, skel, child, depth - 1, max_len, attempt)) {
        ok = false;
        break;
      }
    if (ok) {
      out = std::move(attempt);
      return true;
    }
  }
  return false;
}

inline std::array<double, kNumBoundaryClasses> random_posteriors(Rng& rng) {
  std::array<double, kNumBoundaryClasses> w{};
  double total = 0;
  for (auto& v : w) {
    v = rng.uniform(0.05, 1.0);
    total += v;
  }
  std::array<double, kNumBoundaryClasses> out{};
  for (int i = 0; i < kNumBoundaryClasses; ++i) out[i] = std::log(w[i] / total);
  return out;
}

}  // namespace detail

// Builds a solvable random instance: a toy grammar, a lattice seeded with
// one or two sampled derivation yields plus noise hypotheses, a random
// word-class bigram and a boundary tetragram trained on random sequences.
inline TestInstance make_instance(uint64_t seed, InstanceOptions opt = {}) {
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed * 1000003 + attempt);
    TestInstance inst;
    inst.grammar = parse_grammar(detail::random_grammar_text(rng, opt));
    inst.skel = strip_grammar(inst.grammar);

    std::vector<std::string> yield;
    int start_cat = inst.skel.start_categories[0];
    if (!detail::sample_yield(rng, inst.grammar, inst.skel, start_cat, 5,
                              opt.max_frames, yield) ||
        yield.empty())
      continue;

    Lattice& lat = inst.lattice;
    lat.utterance_id = "gen" + std::to_string(seed);
    lat.frames = static_cast<int>(yield.size());
    for (size_t i = 0; i < yield.size(); ++i) {
      WordHyp h;
      h.word = yield[i];
      h.start = static_cast<int>(i);
      h.end = static_cast<int>(i) + 1;
      h.acoustic_score = rng.uniform(-3.0, -0.1);
      lat.word_hyps.push_back(h);
    }
    int extra = rng.below(std::max(1, opt.max_hyps - lat.frames + 1));
    for (int e = 0; e < extra && static_cast<int>(lat.word_hyps.size()) < opt.max_hyps;
         ++e) {
      WordHyp h;
      const auto& entry =
          inst.grammar.lex_entries[rng.below(static_cast<int>(inst.grammar.lex_entries.size()))];
      h.word = entry.word;
      h.start = rng.below(lat.frames);
      h.end = h.start + 1 + rng.below(std::min(2, lat.frames - h.start));
      h.acoustic_score = rng.uniform(-4.0, -0.3);
      lat.word_hyps.push_back(h);
    }
    if (opt.with_wbhs) {
      for (int v = 1; v < lat.frames; ++v) {
        if (rng.below(100) < 70) {
          BoundaryHypothesis b;
          b.start_frame = std::max(0, v - 1);
          b.end_frame = std::min(lat.frames, v + 1);
          b.class_scores = detail::random_posteriors(rng);
          lat.wbhs.push_back(b);
        }
      }
    }
    validate_lattice(lat);

    // Random word-class bigram over the lexicon.
    inst.bigram.default_logp = -0.7;
    for (const auto& a : inst.grammar.lex_entries)
      for (const auto& b : inst.grammar.lex_entries)
        if (rng.below(100) < 40)
          inst.bigram.pair_logp[{a.word, b.word}] = rng.uniform(-2.0, 0.0);

    // Boundary tetragram trained on a few random interleaved sequences.
    std::vector<std::string> cats;
    for (const auto& e : inst.grammar.lex_entries)
      cats.push_back(inst.grammar.types.name(e.category));
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    static const char* kBoundary[] = {"B0", "B2", "B3", "B9"};
    std::vector<std::vector<std::string>> seqs;
    for (int s = 0; s < 3; ++s) {
      std::vector<std::string> seq;
      int len = 2 + rng.below(4);
      for (int i = 0; i < len; ++i) {
        seq.push_back(cats[rng.below(static_cast<int>(cats.size()))]);
        if (i + 1 < len) seq.push_back(kBoundary[rng.below(4)]);
      }
      seqs.push_back(std::move(seq));
    }
    inst.boundary_model = train_boundary_ngram(seqs, 4, 0.1);

    // Keep instances solvable and small enough for exhaustive comparison.
    {
      OracleEnumerator oracle(inst.grammar, inst.skel, lat);
      size_t count = oracle.utterance_trees().size();
      if (count == 0 || count > static_cast<size_t>(opt.max_derivations)) continue;
    }

    if (opt.trained_model) {
      std::vector<std::vector<std::string>> corpus{yield};
      std::vector<std::string> other;
      if (detail::sample_yield(rng, inst.grammar, inst.skel, start_cat, 5,
                               opt.max_frames, other) &&
          !other.empty())
        corpus.push_back(other);
      TreeBank bank = build_treebank(inst.grammar, inst.skel, corpus);
      bool any = false;
      for (const auto& e : bank.entries) any |= !e.trees.empty();
      if (any) {
        TrainOptions topt;
        topt.max_iterations = 10;
        inst.skel.context_model = train_context_model(inst.skel, bank, 2, topt).model;
      }
    }
    return inst;
  }
}

// ---------------------------------------------------------------------------
// Planted speaker-style corpora: two styles that differ both in their class
// transitions (alternating vs repeating) and in their word choices inside
// each class.

struct StyleCorpus {
  TaggedCorpus train;
  TaggedCorpus heldout;
  std::map<std::string, int> planted;  // speaker -> style
};

inline StyleCorpus make_style_corpus(uint64_t seed, int speakers_per_style = 10,
                                     int train_utts = 40, int heldout_utts = 10,
                                     int styles = 2) {
  Rng rng(seed);
  StyleCorpus out;
  auto gen_utterance = [&](int style) {
    TaggedUtterance u;
    int len = 4 + rng.below(5);
    // Style 0 alternates N and V, style 1 repeats the current class.
    bool in_n = style == 0 ? rng.below(100) < 90 : rng.below(100) < 10;
    for (int i = 0; i < len; ++i) {
      TaggedToken t;
      t.cls = in_n ? "N" : "V";
      int lo = style == 0 ? 0 : 2;  // style-specific halves of the vocabulary
      int pick = rng.below(100) < 90 ? lo + rng.below(2) : rng.below(4);
      t.word = (in_n ? "n" : "v") + std::to_string(pick);
      u.tokens.push_back(std::move(t));
      bool flip = rng.below(100) < (style == 0 ? 85 : 15);
      if (flip) in_n = !in_n;
    }
    return u;
  };
  std::set<std::string> classes, speakers;
  for (int style = 0; style < styles; ++style) {
    for (int s = 0; s < speakers_per_style; ++s) {
      std::string speaker = "s" + std::to_string(style) + "_" + std::to_string(s);
      out.planted[speaker] = style;
      speakers.insert(speaker);
      for (int u = 0; u < train_utts + heldout_utts; ++u) {
        TaggedUtterance utt = gen_utterance(style);
        utt.speaker = speaker;
        for (const auto& t : utt.tokens) classes.insert(t.cls);
        (u < train_utts ? out.train : out.heldout).utterances.push_back(std::move(utt));
      }
    }
  }
  for (TaggedCorpus* c : {&out.train, &out.heldout}) {
    c->class_inventory.assign(classes.begin(), classes.end());
    c->speakers.assign(speakers.begin(), speakers.end());
  }
  return out;
}

// True when the partition equals the planted styles up to cluster renaming.
inline bool partition_matches(const std::map<std::string, int>& assignment,
                              const std::map<std::string, int>& planted) {
  std::map<int, int> mapping;
  for (const auto& [speaker, cluster] : assignment) {
    int style = planted.at(speaker);
    auto [it, inserted] = mapping.emplace(cluster, style);
    if (!inserted && it->second != style) return false;
  }
  std::set<int> styles;
  for (const auto& [c, s] : mapping)
    if (!styles.insert(s).second) return false;
  return true;
}

}  // namespace trellis::testing
