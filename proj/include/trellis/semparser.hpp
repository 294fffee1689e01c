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
#include <vector>

#include "trellis/grammar.hpp"
#include "trellis/packed_tree.hpp"

namespace trellis {

// Instantiates a rule and unifies the daughters' feature structures into it.
// Children roots are at index 0 of their graphs. Absent on failure (type
// clash or a cyclic result).
inline std::optional<Fs> apply_unif_rule(const UnificationGrammar& g,
                                         const UnifRule& rule,
                                         const std::vector<const Fs*>& children) {
  if (children.size() != rule.daughters.size())
    throw ValidationError("rule " + rule.id + " arity mismatch");
  UnifySession session(g.types);
  int base = session.add(rule.fs);
  for (size_t i = 0; i < children.size(); ++i) {
    int off = session.add(*children[i]);
    if (!session.unify(rule.daughters[i] + base, off)) return std::nullopt;
  }
  return session.extract(rule.mother + base);
}

// Full reconstruction of a skeleton tree under the unification grammar.
// Leaves must carry their lexical category.
inline std::optional<Fs> reconstruct_skel_tree(const UnificationGrammar& g,
                                               const SkeletonGrammar& skel,
                                               const SkelTree& t) {
  if (t.is_leaf()) {
    const LexEntry* entry = g.lex_entry(t.word, t.category);
    if (entry == nullptr)
      throw ValidationError("no lexical entry for (" + t.word + ", " +
                            (t.category >= 0 ? g.types.name(t.category) : "?") + ")");
    return entry->fs;
  }
  std::vector<Fs> kids;
  kids.reserve(t.children.size());
  for (const auto& c : t.children) {
    auto fs = reconstruct_skel_tree(g, skel, c);
    if (!fs) return std::nullopt;
    kids.push_back(std::move(*fs));
  }
  std::vector<const Fs*> ptrs;
  for (const auto& k : kids) ptrs.push_back(&k);
  return apply_unif_rule(g, g.rules[skel.rules[t.rule].unif_index], ptrs);
}

struct ReconResult {
  bool ok = false;
  Fs fs;                      // mother feature structure when ok
  long long failed_node = 0;  // deepest failing node otherwise
};

struct ReconStats {
  long fresh_nodes = 0;        // nodes reconstructed (memo writes)
  long memo_hits = 0;          // reconstructions answered from the memo
  long rule_applications = 0;  // unification rule instantiations
};

// Chart of reconstruction results keyed by packed node id. Node records
// accumulate across messages; every node is reconstructed at most once.
class ReconChart {
 public:
  ReconChart(const UnificationGrammar& g, const SkeletonGrammar& skel)
      : g_(g), skel_(skel) {}

  void add_nodes(const std::vector<PackedNode>& nodes) {
    for (const auto& n : nodes) {
      for (long long c : n.children)
        if (!defs_.count(c))
          throw ProtocolError("packed node " + std::to_string(n.id) +
                              " references unknown node " + std::to_string(c));
      // Only rule nodes queue for idle-time work: a word leaf has no
      // unifications of its own and resolves against the category its
      // parent expects.
      if (defs_.emplace(n.id, n).second && !n.children.empty())
        pending_.insert({-n.score, n.id});
    }
  }

  const PackedNode* node(long long id) const {
    auto it = defs_.find(id);
    return it == defs_.end() ? nullptr : &it->second;
  }

  bool is_reconstructed(long long id) const { return memo_.count(id) > 0; }
  const ReconStats& stats() const { return stats_; }
  long pending_count() const { return static_cast<long>(pending_.size()); }

  // Memoized bottom-up reconstruction of a received node.
  const ReconResult& reconstruct(long long id) {
    long budget = -1;  // unlimited
    const ReconResult* r = reconstruct_budgeted(id, budget);
    return *r;  // unlimited budget always yields a result
  }

  // Uses idle time to reconstruct up to `budget` pending nodes, best score
  // first. Touches only the memo table; returns the number of nodes done.
  int speculative_evaluate(int budget) {
    int done = 0;
    while (budget > 0 && !pending_.empty()) {
      long long id = pending_.begin()->second;
      long cap = budget;
      reconstruct_budgeted(id, cap);
      int used = budget - static_cast<int>(cap);
      done += used;
      budget = static_cast<int>(cap);
      if (used == 0) break;  // nothing left the budget allows
    }
    return done;
  }

 private:
  // Budget < 0 means unlimited; each rule-node memo write costs one unit.
  // Returns nullptr when the budget ran out before this node was finished.
  const ReconResult* reconstruct_budgeted(long long id, long& budget) {
    auto dit = defs_.find(id);
    if (dit == defs_.end())
      throw ProtocolError("reconstruction of unknown node " + std::to_string(id));
    const PackedNode& n = dit->second;
    if (n.children.empty()) {
      // A bare word as a whole tree: the first start category with an
      // entry for the word.
      int cat = -1;
      for (int start : skel_.start_categories)
        if (g_.lex_entry(n.symbol, start) != nullptr) {
          cat = start;
          break;
        }
      return word_result(n, cat);
    }
    auto mit = memo_.find(id);
    if (mit != memo_.end()) {
      ++stats_.memo_hits;
      return &mit->second;
    }
    if (budget == 0) return nullptr;
    auto rit = rule_index().find(n.symbol);
    if (rit == rule_index().end())
      throw ProtocolError("packed node uses unknown rule id " + n.symbol);
    const SkelRule& sr = skel_.rules[rit->second];
    if (n.children.size() != sr.rhs.size())
      throw ProtocolError("packed node arity mismatch for rule " + sr.id);
    ReconResult result;
    std::vector<const Fs*> kids(n.children.size());
    for (size_t i = 0; i < n.children.size(); ++i) {
      const ReconResult* child = reconstruct_child(n.children[i], sr.rhs[i], budget);
      if (child == nullptr) return nullptr;  // out of budget
      if (!child->ok) {
        result.ok = false;
        result.failed_node = child->failed_node;
        return memoize(id, std::move(result), budget);
      }
      kids[i] = &child->fs;
    }
    ++stats_.rule_applications;
    auto fs = apply_unif_rule(g_, g_.rules[sr.unif_index], kids);
    if (fs) {
      result.ok = true;
      result.fs = std::move(*fs);
    } else {
      result.ok = false;
      result.failed_node = n.id;
    }
    return memoize(id, std::move(result), budget);
  }

  // A word leaf takes the lexical entry of the category the rule expects
  // there; results are cached per (node, category).
  const ReconResult* reconstruct_child(long long id, int expected_cat, long& budget) {
    auto dit = defs_.find(id);
    if (dit == defs_.end())
      throw ProtocolError("reconstruction of unknown node " + std::to_string(id));
    const PackedNode& n = dit->second;
    if (!n.children.empty()) return reconstruct_budgeted(id, budget);
    return word_result(n, expected_cat);
  }

  const ReconResult* word_result(const PackedNode& n, int category) {
    auto key = std::make_pair(n.id, category);
    auto mit = word_memo_.find(key);
    if (mit != word_memo_.end()) {
      ++stats_.memo_hits;
      return &mit->second;
    }
    ReconResult result;
    const LexEntry* entry = category < 0 ? nullptr : g_.lex_entry(n.symbol, category);
    if (entry != nullptr) {
      result.ok = true;
      result.fs = entry->fs;
    } else {
      result.ok = false;
      result.failed_node = n.id;
    }
    ++stats_.fresh_nodes;
    return &word_memo_.emplace(key, std::move(result)).first->second;
  }

  const ReconResult* memoize(long long id, ReconResult r, long& budget) {
    ++stats_.fresh_nodes;
    if (budget > 0) --budget;
    auto [it, inserted] = memo_.emplace(id, std::move(r));
    pending_.erase({-defs_.at(id).score, id});
    return &it->second;
  }

  const std::map<std::string, int>& rule_index() const {
    if (rule_index_.empty())
      for (size_t i = 0; i < skel_.rules.size(); ++i)
        rule_index_[skel_.rules[i].id] = static_cast<int>(i);
    return rule_index_;
  }

  const UnificationGrammar& g_;
  const SkeletonGrammar& skel_;
  std::map<long long, PackedNode> defs_;
  std::map<long long, ReconResult> memo_;  // rule nodes
  std::map<std::pair<long long, int>, ReconResult> word_memo_;
  std::set<std::pair<double, long long>> pending_;  // (-score, id), rule nodes
  mutable std::map<std::string, int> rule_index_;
  ReconStats stats_;
};

// ---------------------------------------------------------------------------
// Two-phase analysis state machine. Phase 1 verifies whatever arrives and
// keeps the best unification-clean tree (longer span wins, better score on
// equal spans). Phase 2 walks the next-best stream, which arrives in
// transmission order, so the first tree that cannot beat the current best
// proves the current best optimal.

struct BestTree {
  long long id = 0;
  int start = 0;
  int end = 0;
  double score = 0;
  int span() const { return end - start; }
};

enum class SemDecisionKind {
  None,         // keep listening
  Fail,         // report a failed tree (doubles as a request in phase 2)
  RequestNext,  // ask for the next-best tree
  Accept,       // final result
  Stop,         // no parse
};

struct SemDecision {
  SemDecisionKind kind = SemDecisionKind::None;
  long long tree_id = 0;
  long long failed_node = 0;
};

class SemParserCore {
 public:
  SemParserCore(const UnificationGrammar& g, const SkeletonGrammar& skel,
                int idle_budget = 16, bool speculate = true)
      : chart_(g, skel), idle_budget_(idle_budget), speculate_(speculate) {}

  ReconChart& chart() { return chart_; }
  int phase() const { return phase_; }
  const std::optional<BestTree>& best_accepted() const { return best_; }
  // Unification work spent on trees that arrived in response to phase-2
  // requests (speculative idle work not included).
  long post_request_rule_applications() const { return post_request_work_; }

  SemDecision handle_tree(const PackedTree& t) {
    chart_.add_nodes(t.new_nodes);
    const PackedNode* root = chart_.node(t.root);
    if (root == nullptr)
      throw ProtocolError("tree references unknown root " + std::to_string(t.root));
    BestTree cand{t.root, root->start, root->end, root->score};
    if (phase_ == 2 && best_ && !beats_best(cand)) {
      // Transmission order is non-increasing: nothing later can beat the
      // best accepted tree either.
      return accept(*best_);
    }
    long before = chart_.stats().rule_applications;
    const ReconResult& r = chart_.reconstruct(t.root);
    if (phase_ == 2) post_request_work_ += chart_.stats().rule_applications - before;
    if (!r.ok) {
      SemDecision d;
      d.kind = SemDecisionKind::Fail;
      d.tree_id = t.root;
      d.failed_node = r.failed_node;
      return d;
    }
    if (!best_ || beats_best(cand)) best_ = cand;
    if (phase_ == 2) {
      // A phase-2 success is final: everything still unsent ranks at or
      // below this tree.
      return accept(*best_);
    }
    return {};
  }

  SemDecision handle_end_lattice() {
    phase_ = 2;
    SemDecision d;
    d.kind = SemDecisionKind::RequestNext;
    return d;
  }

  SemDecision handle_no_more() {
    if (best_) return accept(*best_);
    SemDecision d;
    d.kind = SemDecisionKind::Stop;
    return d;
  }

  // Idle turn: speculative evaluation of pending nodes.
  int idle() {
    if (!speculate_ || idle_budget_ <= 0) return 0;
    return chart_.speculative_evaluate(idle_budget_);
  }

 private:
  bool beats_best(const BestTree& cand) const {
    if (!best_) return true;
    if (cand.span() != best_->span()) return cand.span() > best_->span();
    return cand.score > best_->score;
  }

  SemDecision accept(const BestTree& t) {
    SemDecision d;
    d.kind = SemDecisionKind::Accept;
    d.tree_id = t.id;
    return d;
  }

  ReconChart chart_;
  int idle_budget_;
  bool speculate_;
  int phase_ = 1;
  std::optional<BestTree> best_;
  long post_request_work_ = 0;
};

}  // namespace trellis
