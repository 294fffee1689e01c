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
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "trellis/common.hpp"
#include "trellis/feature_structure.hpp"

namespace trellis {

// One unification rule: mother and daughters live in a single graph so
// re-entrancies can link them.
struct UnifRule {
  std::string id;
  Fs fs;
  int mother = 0;
  std::vector<int> daughters;
};

struct LexEntry {
  std::string word;
  Fs fs;  // root at node 0
  int category = 0;  // root type
};

// The full unification grammar G: rules, type hierarchy and lexicon.
// Categories are type ids in `types`.
struct UnificationGrammar {
  TypeLattice types;
  std::vector<UnifRule> rules;
  std::vector<LexEntry> lex_entries;
  std::map<std::string, std::vector<int>> lex_by_word;  // word -> entry indices
  std::map<std::string, int> rule_by_id;
  std::vector<int> start_categories;

  bool has_word(const std::string& w) const { return lex_by_word.count(w) > 0; }

  // Unique entry for (word, category); reconstruction relies on uniqueness.
  const LexEntry* lex_entry(const std::string& word, int category) const {
    auto it = lex_by_word.find(word);
    if (it == lex_by_word.end()) return nullptr;
    for (int idx : it->second)
      if (lex_entries[idx].category == category) return &lex_entries[idx];
    return nullptr;
  }

  std::vector<int> lex_categories(const std::string& word) const {
    std::vector<int> cats;
    auto it = lex_by_word.find(word);
    if (it == lex_by_word.end()) return cats;
    for (int idx : it->second) cats.push_back(lex_entries[idx].category);
    return cats;
  }
};

// ---------------------------------------------------------------------------
// Context-sensitive rule probabilities for the type-skeleton grammar.
// A context is (expanded category, parent rule, left-sibling category),
// truncated by the Markov order: 0 = plain PCFG, 1 = parent conditioning,
// 2 = parent + left sibling.

struct ContextKey {
  int cat = -1;
  int parent_rule = kUnused;  // skeleton rule index; kNone at the root
  int left_sib = kUnused;     // category id; kNone for a first daughter

  static constexpr int kNone = -1;
  static constexpr int kUnused = -2;

  ContextKey truncated(int order) const {
    ContextKey k = *this;
    if (order < 1) k.parent_rule = kUnused;
    if (order < 2) k.left_sib = kUnused;
    return k;
  }
  bool operator<(const ContextKey& o) const {
    return std::tie(cat, parent_rule, left_sib) <
           std::tie(o.cat, o.parent_rule, o.left_sib);
  }
  bool operator==(const ContextKey& o) const {
    return cat == o.cat && parent_rule == o.parent_rule && left_sib == o.left_sib;
  }
};

struct ContextModel {
  int order = 2;
  double lambda = 0.1;
  // Set when training collapsed to order 0 because every higher-order
  // context occurred at most once.
  bool fallback_warning = false;
  // Weighted rule counts per truncated context; empty means uniform.
  std::map<ContextKey, std::map<int, double>> counts;
};

struct SkelRule {
  std::string id;   // mirrors the unification rule id
  int unif_index = 0;
  int lhs = 0;
  std::vector<int> rhs;
};

// The stripped type-skeleton grammar G': a CFG over root types, rule for
// rule bijective with the unification grammar.
struct SkeletonGrammar {
  std::vector<SkelRule> rules;
  std::vector<int> start_categories;
  std::map<int, std::vector<int>> rules_by_lhs;
  ContextModel context_model;

  const std::vector<int>& applicable(int cat) const {
    static const std::vector<int> empty;
    auto it = rules_by_lhs.find(cat);
    return it == rules_by_lhs.end() ? empty : it->second;
  }
  bool is_start(int cat) const {
    return std::find(start_categories.begin(), start_categories.end(), cat) !=
           start_categories.end();
  }
};

// ---------------------------------------------------------------------------
// Grammar file format (s-expressions, ';' comments):
//   (types atom (name parent...) ...)
//   (rule ID (mother FS) (daughters FS FS ...))
//   (lex WORD FS ...)
//   (start CAT ...)
// Re-entrancy tags (#1= / #1) are scoped per rule and per lexical entry.

inline UnificationGrammar parse_grammar(const std::string& content) {
  UnificationGrammar g;
  for (const Sexpr& form : parse_sexprs(content)) {
    if (form.is_atom) throw ParseError("stray atom at top level: " + form.atom);
    const std::string& head = form.head();
    if (head == "types") {
      for (size_t i = 1; i < form.items.size(); ++i) {
        const Sexpr& e = form.items[i];
        if (e.is_atom) {
          g.types.add_type(e.atom);
        } else {
          std::vector<std::string> parents;
          for (size_t j = 1; j < e.items.size(); ++j) parents.push_back(e.at(j).atom);
          g.types.add_type(e.at(0).atom, parents);
        }
      }
    } else if (head == "rule") {
      if (form.items.size() != 4)
        throw ParseError("rule form needs (rule ID (mother ...) (daughters ...))");
      UnifRule rule;
      rule.id = form.at(1).atom;
      if (g.rule_by_id.count(rule.id))
        throw ValidationError("duplicate rule id: " + rule.id);
      std::map<int, int> tags;
      const Sexpr& mother = form.at(2);
      if (mother.is_atom || mother.head() != "mother")
        throw ParseError("rule " + rule.id + ": expected (mother FS)");
      if (mother.items.size() != 2) throw ParseError("rule " + rule.id + ": bad mother");
      rule.mother = build_fs_node(mother.at(1), rule.fs, g.types, tags);
      const Sexpr& daughters = form.at(3);
      if (daughters.is_atom || daughters.head() != "daughters")
        throw ParseError("rule " + rule.id + ": expected (daughters FS...)");
      for (size_t i = 1; i < daughters.items.size(); ++i)
        rule.daughters.push_back(build_fs_node(daughters.at(i), rule.fs, g.types, tags));
      if (rule.daughters.empty())
        throw ValidationError("rule " + rule.id + " has no daughters");
      g.rule_by_id[rule.id] = static_cast<int>(g.rules.size());
      g.rules.push_back(std::move(rule));
    } else if (head == "lex") {
      if (form.items.size() < 3) throw ParseError("lex form needs (lex WORD FS...)");
      const std::string& word = form.at(1).atom;
      for (size_t i = 2; i < form.items.size(); ++i) {
        LexEntry entry;
        entry.word = word;
        std::map<int, int> tags;
        int root = build_fs_node(form.at(i), entry.fs, g.types, tags);
        if (root != 0) throw ParseError("lexical entry must be a single structure");
        entry.category = entry.fs.nodes[0].type;
        for (int prev : g.lex_by_word[word])
          if (g.lex_entries[prev].category == entry.category)
            throw ValidationError("duplicate lexical entry for (" + word + ", " +
                                  g.types.name(entry.category) + ")");
        g.lex_by_word[word].push_back(static_cast<int>(g.lex_entries.size()));
        g.lex_entries.push_back(std::move(entry));
      }
    } else if (head == "start") {
      for (size_t i = 1; i < form.items.size(); ++i)
        g.start_categories.push_back(g.types.require(form.at(i).atom));
    } else {
      throw ParseError("unknown top-level form: " + head);
    }
  }
  if (g.rules.empty()) throw ValidationError("grammar has no rules");
  if (g.start_categories.empty()) throw ValidationError("grammar has no start categories");
  // Every lexical category must appear in some rule.
  std::set<int> rule_cats;
  for (const auto& r : g.rules) {
    rule_cats.insert(r.fs.nodes[r.mother].type);
    for (int d : r.daughters) rule_cats.insert(r.fs.nodes[d].type);
  }
  for (const auto& e : g.lex_entries)
    if (!rule_cats.count(e.category))
      throw ValidationError("lexical category '" + g.types.name(e.category) +
                            "' of word '" + e.word + "' appears in no rule");
  for (const auto& r : g.rules)
    if (!fs_acyclic(r.fs, r.mother))
      throw ValidationError("rule " + r.id + " has a cyclic feature structure");
  return g;
}

inline UnificationGrammar load_grammar(const std::string& path) {
  return parse_grammar(read_file(path));
}

// G -> G': drop feature structures, keep root types, carry the bijection.
inline SkeletonGrammar strip_grammar(const UnificationGrammar& g) {
  if (g.rules.empty()) throw ValidationError("cannot strip an empty grammar");
  SkeletonGrammar skel;
  for (size_t i = 0; i < g.rules.size(); ++i) {
    const UnifRule& r = g.rules[i];
    SkelRule sr;
    sr.id = r.id;
    sr.unif_index = static_cast<int>(i);
    sr.lhs = r.fs.nodes[r.mother].type;
    if (sr.lhs == 0)
      throw ValidationError("rule " + r.id + ": mother has no defined type");
    for (int d : r.daughters) {
      int t = r.fs.nodes[d].type;
      if (t == 0)
        throw ValidationError("rule " + r.id + ": daughter has no defined type");
      sr.rhs.push_back(t);
    }
    skel.rules_by_lhs[sr.lhs].push_back(static_cast<int>(skel.rules.size()));
    skel.rules.push_back(std::move(sr));
  }
  skel.start_categories = g.start_categories;
  skel.context_model = ContextModel{};  // empty counts = uniform
  return skel;
}

// ---------------------------------------------------------------------------
// Parse trees over skeleton rules. Leaves carry the word and its lexical
// category; internal nodes carry the skeleton rule index.

struct SkelTree {
  int rule = -1;  // skeleton rule index; -1 for a leaf
  std::string word;
  int category = -1;
  std::vector<SkelTree> children;

  bool is_leaf() const { return rule < 0; }
};

inline std::string skel_tree_to_string(const SkelTree& t, const SkeletonGrammar& skel) {
  if (t.is_leaf()) return t.word;
  std::string out = "(" + skel.rules[t.rule].id;
  for (const auto& c : t.children) out += " " + skel_tree_to_string(c, skel);
  return out + ")";
}

inline std::vector<std::string> skel_tree_yield(const SkelTree& t) {
  std::vector<std::string> words;
  struct W {
    std::vector<std::string>& words;
    void walk(const SkelTree& n) {
      if (n.is_leaf()) { words.push_back(n.word); return; }
      for (const auto& c : n.children) walk(c);
    }
  } w{words};
  w.walk(t);
  return words;
}

struct TreeBankEntry {
  std::vector<std::string> words;
  std::vector<SkelTree> trees;  // empty when the utterance has no parse
};

struct TreeBank {
  std::vector<TreeBankEntry> entries;
};

namespace detail {

inline SkelTree skel_tree_from_sexpr(const Sexpr& e, const SkeletonGrammar& skel,
                                     const std::map<std::string, int>& skel_by_id,
                                     int expected_cat) {
  SkelTree t;
  if (e.is_atom) {
    t.word = e.atom;
    t.category = expected_cat;
    return t;
  }
  auto it = skel_by_id.find(e.head());
  if (it == skel_by_id.end()) throw ParseError("unknown rule id in tree: " + e.head());
  t.rule = it->second;
  const SkelRule& r = skel.rules[t.rule];
  t.category = r.lhs;
  if (e.items.size() - 1 != r.rhs.size())
    throw ParseError("tree arity mismatch for rule " + r.id);
  for (size_t i = 1; i < e.items.size(); ++i)
    t.children.push_back(
        skel_tree_from_sexpr(e.items[i], skel, skel_by_id, r.rhs[i - 1]));
  return t;
}

}  // namespace detail

// Treebank file: per entry one 'U' line with the words, then one 'T' line
// per tree with the bracketed rule-id form.
inline std::string format_treebank(const TreeBank& bank, const SkeletonGrammar& skel) {
  std::ostringstream out;
  out << "TREEBANK\n";
  for (const auto& e : bank.entries) {
    out << "U";
    for (const auto& w : e.words) out << " " << w;
    out << "\n";
    for (const auto& t : e.trees) out << "T " << skel_tree_to_string(t, skel) << "\n";
  }
  return out.str();
}

inline TreeBank parse_treebank(const std::string& content, const SkeletonGrammar& skel) {
  std::map<std::string, int> skel_by_id;
  for (size_t i = 0; i < skel.rules.size(); ++i)
    skel_by_id[skel.rules[i].id] = static_cast<int>(i);
  TreeBank bank;
  auto lines = content_lines(content);
  if (lines.empty() || lines[0] != "TREEBANK") throw ParseError("missing TREEBANK header");
  for (size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.rfind("U", 0) == 0 && (line.size() == 1 || line[1] == ' ')) {
      TreeBankEntry e;
      auto toks = split_ws(line);
      e.words.assign(toks.begin() + 1, toks.end());
      bank.entries.push_back(std::move(e));
    } else if (line.rfind("T ", 0) == 0) {
      if (bank.entries.empty()) throw ParseError("tree line before any utterance");
      auto forms = parse_sexprs(line.substr(2));
      if (forms.size() != 1) throw ParseError("expected one tree per T line");
      SkelTree t = detail::skel_tree_from_sexpr(forms[0], skel, skel_by_id, -1);
      auto words = skel_tree_yield(t);
      if (words != bank.entries.back().words)
        throw ValidationError("tree yield does not match its utterance");
      bank.entries.back().trees.push_back(std::move(t));
    } else {
      throw ParseError("unknown treebank line: " + line);
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Rule probability queries with the k -> k-1 -> ... -> 0 backoff chain.

inline double rule_probability(const ContextModel& m, const SkeletonGrammar& skel,
                               int rule, const ContextKey& context) {
  const auto& applicable = skel.applicable(context.cat);
  if (std::find(applicable.begin(), applicable.end(), rule) == applicable.end())
    throw ValidationError("rule " + skel.rules[rule].id +
                          " is not applicable to the context category");
  int n_applicable = static_cast<int>(applicable.size());
  for (int order = std::min(m.order, 2); order >= 0; --order) {
    auto it = m.counts.find(context.truncated(order));
    if (it == m.counts.end()) continue;
    double total = 0;
    for (const auto& [r, c] : it->second) total += c;
    double c = 0;
    auto rit = it->second.find(rule);
    if (rit != it->second.end()) c = rit->second;
    return (c + m.lambda) / (total + m.lambda * n_applicable);
  }
  return 1.0 / n_applicable;
}

inline double rule_probability(const SkeletonGrammar& skel, int rule,
                               const ContextKey& context) {
  return rule_probability(skel.context_model, skel, rule, context);
}

// ---------------------------------------------------------------------------
// Training: expectation maximization over the ambiguous treebank. Iterations
// use exact relative frequencies (so the log-likelihood is provably
// non-decreasing); add-lambda smoothing is applied once to the final counts.

struct TrainOptions {
  double lambda = 0.1;
  bool viterbi = false;  // hard assignment to the best tree per utterance
  int max_iterations = 50;
  double tolerance = 1e-6;
};

namespace detail {

struct TreeEvents {
  std::vector<std::pair<ContextKey, int>> events;  // (full-order key, rule)
};

inline void collect_events(const SkelTree& t, const SkeletonGrammar& skel,
                           int parent_rule, int left_sib,
                           std::vector<std::pair<ContextKey, int>>& out) {
  if (t.is_leaf()) return;
  ContextKey key;
  key.cat = skel.rules[t.rule].lhs;
  key.parent_rule = parent_rule;
  key.left_sib = left_sib;
  out.push_back({key, t.rule});
  int sib = ContextKey::kNone;
  for (const auto& c : t.children) {
    collect_events(c, skel, t.rule, sib, out);
    sib = c.category;
  }
}

inline double unsmoothed_prob(const std::map<ContextKey, std::map<int, double>>& counts,
                              const SkeletonGrammar& skel, int order,
                              const ContextKey& full_key, int rule) {
  if (counts.empty()) {
    // Uniform initialization.
    return 1.0 / skel.applicable(full_key.cat).size();
  }
  auto it = counts.find(full_key.truncated(order));
  if (it == counts.end()) return 0.0;
  double total = 0;
  for (const auto& [r, c] : it->second) total += c;
  if (total <= 0) return 0.0;
  auto rit = it->second.find(rule);
  return rit == it->second.end() ? 0.0 : rit->second / total;
}

}  // namespace detail

struct TrainResult {
  ContextModel model;
  std::vector<double> log_likelihood;  // per EM iteration
};

inline TrainResult train_context_model(const SkeletonGrammar& skel, const TreeBank& bank,
                                       int order, TrainOptions opt = {}) {
  if (order < 0) throw ValidationError("negative Markov order");
  bool any_tree = false;
  for (const auto& e : bank.entries) any_tree |= !e.trees.empty();
  if (bank.entries.empty() || !any_tree)
    throw ValidationError("treebank has no parsed utterances");

  std::vector<std::vector<detail::TreeEvents>> entry_events;
  for (const auto& e : bank.entries) {
    std::vector<detail::TreeEvents> trees;
    for (const auto& t : e.trees) {
      detail::TreeEvents ev;
      detail::collect_events(t, skel, ContextKey::kNone, ContextKey::kNone, ev.events);
      trees.push_back(std::move(ev));
    }
    entry_events.push_back(std::move(trees));
  }

  int effective_order = std::min(order, 2);
  // Fall back to order 0 when every higher-order context occurs at most once:
  // singleton contexts carry no reusable statistics.
  bool fallback = false;
  if (effective_order > 0) {
    std::map<ContextKey, int> occurrences;
    for (const auto& trees : entry_events)
      for (const auto& ev : trees)
        for (const auto& [key, rule] : ev.events)
          occurrences[key.truncated(effective_order)] += 1;
    bool all_singleton = true;
    for (const auto& [k, n] : occurrences)
      if (n > 1) { all_singleton = false; break; }
    if (all_singleton) {
      fallback = true;
      effective_order = 0;
    }
  }

  std::map<ContextKey, std::map<int, double>> counts;  // unsmoothed, current model
  TrainResult result;
  double prev_ll = kLogZero;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    std::map<ContextKey, std::map<int, double>> next;
    double ll = 0;
    for (const auto& trees : entry_events) {
      if (trees.empty()) continue;
      std::vector<double> logp(trees.size(), 0.0);
      for (size_t t = 0; t < trees.size(); ++t) {
        for (const auto& [key, rule] : trees[t].events) {
          double p = detail::unsmoothed_prob(counts, skel, effective_order, key, rule);
          logp[t] += p > 0 ? std::log(p) : kLogZero;
        }
      }
      std::vector<double> weight(trees.size(), 0.0);
      if (opt.viterbi) {
        size_t best = 0;
        for (size_t t = 1; t < trees.size(); ++t)
          if (logp[t] > logp[best]) best = t;
        weight[best] = 1.0;
        ll += logp[best];
      } else {
        double lmax = *std::max_element(logp.begin(), logp.end());
        if (lmax == kLogZero) continue;
        double z = 0;
        for (double lp : logp) z += std::exp(lp - lmax);
        for (size_t t = 0; t < trees.size(); ++t)
          weight[t] = std::exp(logp[t] - lmax) / z;
        ll += lmax + std::log(z);
      }
      for (size_t t = 0; t < trees.size(); ++t) {
        if (weight[t] == 0) continue;
        // Counts are kept at every truncation level so queries can back off
        // k -> k-1 -> ... -> 0 through genuinely trained distributions.
        for (const auto& [key, rule] : trees[t].events)
          for (int o = 0; o <= effective_order; ++o)
            next[key.truncated(o)][rule] += weight[t];
      }
    }
    if (iter > 0 && ll + 1e-9 < prev_ll)
      throw std::logic_error("EM log-likelihood decreased: " + fmt_double(prev_ll) +
                             " -> " + fmt_double(ll));
    result.log_likelihood.push_back(ll);
    counts = std::move(next);
    if (iter > 0 && ll - prev_ll < opt.tolerance) { prev_ll = ll; break; }
    prev_ll = ll;
  }

  result.model.order = effective_order;
  result.model.lambda = opt.lambda;
  result.model.fallback_warning = fallback;
  result.model.counts = std::move(counts);
  return result;
}

// ---------------------------------------------------------------------------
// Context model serialization (requires the paired grammars for the names).

inline std::string format_context_model(const ContextModel& m, const SkeletonGrammar& skel,
                                        const UnificationGrammar& g) {
  std::ostringstream out;
  out << "CONTEXTMODEL " << m.order << " " << fmt_double(m.lambda) << " "
      << (m.fallback_warning ? 1 : 0) << "\n";
  for (const auto& [key, rules] : m.counts) {
    for (const auto& [rule, count] : rules) {
      out << "C " << g.types.name(key.cat) << " ";
      if (key.parent_rule == ContextKey::kUnused) out << "*";
      else if (key.parent_rule == ContextKey::kNone) out << "-";
      else out << skel.rules[key.parent_rule].id;
      out << " ";
      if (key.left_sib == ContextKey::kUnused) out << "*";
      else if (key.left_sib == ContextKey::kNone) out << "-";
      else out << g.types.name(key.left_sib);
      out << " " << skel.rules[rule].id << " " << fmt_double(count) << "\n";
    }
  }
  return out.str();
}

inline ContextModel parse_context_model(const std::string& content,
                                        const SkeletonGrammar& skel,
                                        const UnificationGrammar& g) {
  std::map<std::string, int> skel_by_id;
  for (size_t i = 0; i < skel.rules.size(); ++i)
    skel_by_id[skel.rules[i].id] = static_cast<int>(i);
  ContextModel m;
  bool header = false;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "CONTEXTMODEL") {
      if (tok.size() != 4) throw ParseError("bad CONTEXTMODEL header");
      m.order = static_cast<int>(parse_long(tok[1], "order"));
      m.lambda = parse_double(tok[2], "lambda");
      m.fallback_warning = parse_long(tok[3], "warning") != 0;
      header = true;
    } else if (tok[0] == "C") {
      if (tok.size() != 6) throw ParseError("bad context line: " + line);
      ContextKey key;
      key.cat = g.types.require(tok[1]);
      key.parent_rule = tok[2] == "*" ? ContextKey::kUnused
                        : tok[2] == "-" ? ContextKey::kNone
                                        : skel_by_id.at(tok[2]);
      key.left_sib = tok[3] == "*" ? ContextKey::kUnused
                     : tok[3] == "-" ? ContextKey::kNone
                                     : g.types.require(tok[3]);
      m.counts[key][skel_by_id.at(tok[4])] = parse_double(tok[5], "count");
    } else {
      throw ParseError("unknown context model line: " + line);
    }
  }
  if (!header) throw ParseError("missing CONTEXTMODEL header");
  return m;
}

}  // namespace trellis
