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

#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "trellis/grammar.hpp"
#include "trellis/lattice.hpp"
#include "trellis/packed_tree.hpp"
#include "trellis/prosody.hpp"
#include "trellis/word_bigram.hpp"

namespace trellis {

struct Weights {
  double decoder = 1.0;
  double grammar = 1.0;
  double prosody = 1.0;
};

// A chart item. Lexical edges represent word hypotheses, active edges are
// dotted rules, completed edges are full constituents. One edge per
// derivation: ambiguity shows up as distinct completed edges that share
// children, never as packed alternatives inside one edge.
struct Edge {
  enum class Kind { Lexical, Active, Completed };
  int id = 0;
  Kind kind = Kind::Lexical;
  int start = 0;
  int end = 0;
  int category = -1;  // completed/lexical: constituent category; active: rule lhs
  int rule = -1;      // skeleton rule index; -1 for lexical edges
  int dot = 0;        // consumed daughters (active edges)
  double dec = 0, gram = 0, pros = 0, combined = 0;
  std::string word;  // lexical edges
  std::string first_word, last_word;
  // Trailing interleaved word-class/boundary tokens (at most order-1) for
  // prosody scoring of later junctions.
  std::vector<std::string> trailing;
  std::vector<int> children;     // edge ids, in surface order
  std::vector<int> unary_chain;  // categories already used in a unary chain here

  bool completed_like() const { return kind != Kind::Active; }
};

// The combined score of connecting two edges: decoder part (acoustic plus
// bigram over the covered words), grammar part (the probability of the new
// analysis edge), prosody part, linearly weighted.
inline double combine_score(const Edge& left, const Edge& right, double rule_prob,
                            double prosody, const Weights& w,
                            const WordBigram& bigram = WordBigram{}) {
  if (left.end != right.start)
    throw ValidationError("cannot combine disconnected edges (" +
                          std::to_string(left.end) + " vs " +
                          std::to_string(right.start) + ")");
  double dec = left.dec + right.dec;
  if (!left.last_word.empty() && !right.first_word.empty())
    dec += bigram.score(left.last_word, right.first_word);
  double gram = left.gram + right.gram + std::log(rule_prob);
  double pros = left.pros + right.pros + prosody;
  return w.decoder * dec + w.grammar * gram + w.prosody * pros;
}

struct ChartConfig {
  Weights weights;
  double beam_offset = 10.0;  // natural-log offset below the frame maximum
  bool use_prosody = false;
  int nshare = std::numeric_limits<int>::max();  // structure-sharing depth
};

struct ChartStats {
  long lexical_edges = 0;
  long empty_active_edges = 0;  // distinct (rule, vertex) pairs materialized
  long dynamic_edges = 0;       // edges built by the search itself
  long oov_hyps = 0;            // word hypotheses with no lexical entry
  long static_edges() const { return lexical_edges + empty_active_edges; }
};

// Incremental agenda/beam search over the word lattice. Frames are fed in
// order; each frame creates a vertex, reads in the word hypotheses ending
// there, and drains a per-frame agenda with beam pruning: only steps within
// `beam_offset` of the best step score seen this frame are taken.
class Chart {
 public:
  Chart(const UnificationGrammar& g, const SkeletonGrammar& skel,
        const WordBigram& bigram, const BoundaryNgramModel* prosody_model,
        ChartConfig cfg)
      : g_(g), skel_(skel), bigram_(bigram), prosody_(prosody_model), cfg_(cfg) {
    if (cfg_.use_prosody && prosody_ == nullptr)
      throw ValidationError("prosody scoring requested without a boundary model");
    for (size_t r = 0; r < skel_.rules.size(); ++r)
      rules_by_first_cat_[skel_.rules[r].rhs[0]].push_back(static_cast<int>(r));
    for (const auto& e : g_.lex_entries) lexical_cats_.insert(e.category);
    if (cfg_.nshare < 1) throw ValidationError("sharing depth must be >= 1");
  }

  int current_frame() const { return current_frame_; }
  const ChartStats& stats() const { return stats_; }
  const Edge& edge(int id) const { return edges_[id]; }
  const std::vector<int>& utterance_edges() const { return utterance_edges_; }

  void step_frame(int frame, const std::vector<WordHyp>& incoming,
                  const std::vector<BoundaryHypothesis>& wbhs) {
    if (frame != current_frame_ + 1)
      throw ValidationError("frames must be processed in increasing order (got " +
                            std::to_string(frame) + " after " +
                            std::to_string(current_frame_) + ")");
    current_frame_ = frame;
    for (const auto& b : wbhs) wbhs_.push_back(b);

    Agenda agenda;
    for (const auto& h : incoming) {
      if (h.end != frame)
        throw ValidationError("word hyp '" + h.word + "' does not end at frame " +
                              std::to_string(frame));
      auto cats = g_.lex_categories(h.word);
      if (cats.empty()) {
        ++stats_.oov_hyps;
        continue;
      }
      for (int cat : cats) {
        Edge e;
        e.kind = Edge::Kind::Lexical;
        e.start = h.start;
        e.end = h.end;
        e.category = cat;
        e.word = h.word;
        e.first_word = e.last_word = h.word;
        e.dec = h.acoustic_score;
        e.combined = cfg_.weights.decoder * e.dec;
        e.trailing = {g_.types.name(cat)};
        ++stats_.lexical_edges;
        int id = insert_edge(std::move(e));
        if (edges_[id].start == 0 && skel_.is_start(cat))
          utterance_edges_.push_back(id);
        push_pairs_for_completed(id, agenda);
      }
    }
    drain(agenda);
  }

  // All possible next word categories at a vertex: left corners of the
  // categories needed by active edges ending there (left corners of the
  // start categories at vertex 0), narrowed to lexical categories.
  std::set<int> predict_extensions(int vertex) const {
    if (vertex < 0 || vertex > current_frame_)
      throw ValidationError("vertex does not exist: " + std::to_string(vertex));
    std::set<int> needed;
    if (vertex == 0) {
      for (int c : skel_.start_categories) needed.insert(c);
    } else {
      auto it = actives_by_end_.find(vertex);
      if (it != actives_by_end_.end())
        for (int id : it->second) {
          const Edge& a = edges_[id];
          needed.insert(skel_.rules[a.rule].rhs[a.dot]);
        }
    }
    std::set<int> out;
    for (int c : needed)
      for (int lc : left_corners(c))
        if (lexical_cats_.count(lc)) out.insert(lc);
    return out;
  }

  // Utterance-status edges (start category, spanning from vertex 0) in
  // transmission order: longer spans first, then better combined score.
  std::vector<int> ranked_utterance_edges() const {
    std::vector<int> ids = utterance_edges_;
    std::sort(ids.begin(), ids.end(), [this](int a, int b) {
      const Edge& ea = edges_[a];
      const Edge& eb = edges_[b];
      int la = ea.end - ea.start, lb = eb.end - eb.start;
      if (la != lb) return la > lb;
      if (ea.combined != eb.combined) return ea.combined > eb.combined;
      if (ea.start != eb.start) return ea.start < eb.start;
      const std::string& ra = ea.rule >= 0 ? skel_.rules[ea.rule].id : ea.word;
      const std::string& rb = eb.rule >= 0 ? skel_.rules[eb.rule].id : eb.word;
      if (ra != rb) return ra < rb;
      return a < b;
    });
    return ids;
  }

  // The n best utterance-status trees, packed with structure sharing.
  // Node records already transmitted by this chart are not re-sent.
  std::vector<PackedTree> emit_nbest(int n) {
    if (n < 1) throw ValidationError("n-best count must be >= 1");
    std::vector<PackedTree> out;
    for (int id : ranked_utterance_edges()) {
      if (static_cast<int>(out.size()) >= n) break;
      out.push_back(pack(id));
    }
    return out;
  }

  // The best unsent utterance-status tree under the transmission order.
  std::optional<PackedTree> next_best(const std::set<long long>& already_sent) {
    for (int id : ranked_utterance_edges())
      if (!already_sent.count(id)) return pack(id);
    return std::nullopt;
  }

  PackedTree pack(int edge_id) {
    PackedTree t;
    const Edge& root = edges_[edge_id];
    t.start = root.start;
    t.end = root.end;
    t.score = root.combined;
    t.root = pack_rec(edge_id, 0, t);
    return t;
  }

  // Rebuilds the skeleton tree behind a completed edge (teste and treebank
  // convenience; the wire path goes through pack()).
  SkelTree skel_tree(int edge_id) const {
    const Edge& e = edges_[edge_id];
    SkelTree t;
    if (e.kind == Edge::Kind::Lexical) {
      t.word = e.word;
      t.category = e.category;
      return t;
    }
    t.rule = e.rule;
    t.category = e.category;
    for (int c : e.children) t.children.push_back(skel_tree(c));
    return t;
  }

 private:
  struct Step {
    double score = 0;
    long seq = 0;
    int left = -1;        // active edge id; -1 for a virtual empty active edge
    int empty_rule = -1;  // rule index when left == -1
    int right = -1;       // completed or lexical edge id
    double dec = 0, gram = 0, pros = 0;
  };
  struct StepOrder {
    bool operator()(const Step& a, const Step& b) const {
      if (a.score != b.score) return a.score < b.score;  // max-heap by score
      return a.seq > b.seq;                              // then FIFO
    }
  };
  using Agenda = std::priority_queue<Step, std::vector<Step>, StepOrder>;

  int insert_edge(Edge e) {
    e.id = static_cast<int>(edges_.size());
    edges_.push_back(std::move(e));
    return edges_.back().id;
  }

  // The boundary hypothesis attached to a vertex among those delivered so
  // far (midpoint-nearest, earliest interval on ties).
  const BoundaryHypothesis* known_wbh_at(int v) const {
    const BoundaryHypothesis* best = nullptr;
    double best_dist = 0;
    for (const auto& b : wbhs_) {
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
    return best;
  }

  // Prosody score and chosen boundary class for the junction at vertex v.
  // A vertex with no attached hypothesis defaults to a certain B0.
  ProsodyChoice junction_prosody(const std::vector<std::string>& history, int v) const {
    const BoundaryHypothesis* wbh = known_wbh_at(v);
    if (wbh == nullptr) {
      ProsodyChoice c;
      c.chosen = BoundaryClass::B0;
      c.score = boundary_logprob(*prosody_, history, BoundaryClass::B0);
      return c;
    }
    return prosody_choice(*prosody_, history, *wbh);
  }

  double rule_step_logprob(const Edge& right, int parent_rule, int left_sib) const {
    if (right.kind == Edge::Kind::Lexical) return 0.0;
    ContextKey key;
    key.cat = right.category;
    key.parent_rule = parent_rule;
    key.left_sib = left_sib;
    return std::log(rule_probability(skel_.context_model, skel_, right.rule, key));
  }

  Step make_empty_step(int rule, int right_id) {
    const Edge& b = edges_[right_id];
    Step s;
    s.left = -1;
    s.empty_rule = rule;
    s.right = right_id;
    s.dec = b.dec;
    s.gram = b.gram + rule_step_logprob(b, rule, ContextKey::kNone);
    s.pros = b.pros;
    s.score = cfg_.weights.decoder * s.dec + cfg_.weights.grammar * s.gram +
              cfg_.weights.prosody * s.pros;
    s.seq = next_seq_++;
    return s;
  }

  Step make_advance_step(int active_id, int right_id) {
    const Edge& a = edges_[active_id];
    const Edge& b = edges_[right_id];
    Step s;
    s.left = active_id;
    s.right = right_id;
    s.dec = a.dec + b.dec + bigram_.score(a.last_word, b.first_word);
    int sib = edges_[a.children.back()].category;
    s.gram = a.gram + b.gram + rule_step_logprob(b, a.rule, sib);
    s.pros = a.pros + b.pros;
    if (cfg_.use_prosody) s.pros += junction_prosody(a.trailing, a.end).score;
    s.score = cfg_.weights.decoder * s.dec + cfg_.weights.grammar * s.gram +
              cfg_.weights.prosody * s.pros;
    s.seq = next_seq_++;
    return s;
  }

  void push_pairs_for_completed(int id, Agenda& agenda) {
    const Edge& b = edges_[id];
    auto rit = rules_by_first_cat_.find(b.category);
    if (rit != rules_by_first_cat_.end())
      for (int rule : rit->second) push(agenda, make_empty_step(rule, id));
    auto ait = actives_by_need_.find({b.start, b.category});
    if (ait != actives_by_need_.end())
      for (int active : ait->second) push(agenda, make_advance_step(active, id));
  }

  void push(Agenda& agenda, Step s) {
    frame_max_ = std::max(frame_max_, s.score);
    agenda.push(std::move(s));
  }

  void drain(Agenda& agenda) {
    while (!agenda.empty()) {
      Step s = agenda.top();
      agenda.pop();
      double threshold = std::isinf(cfg_.beam_offset) ? kLogZero
                                                      : frame_max_ - cfg_.beam_offset;
      // Max-first order: once one step falls below the beam, the rest do too.
      if (s.score < threshold) break;
      execute(s, agenda);
    }
    agenda = Agenda{};
    frame_max_ = kLogZero;
  }

  void execute(const Step& s, Agenda& agenda) {
    const Edge& b = edges_[s.right];
    Edge e;
    e.dec = s.dec;
    e.gram = s.gram;
    e.pros = s.pros;
    e.combined = s.score;
    if (s.left < 0) {
      const SkelRule& rule = skel_.rules[s.empty_rule];
      empty_actives_used_.insert({s.empty_rule, b.start});
      stats_.empty_active_edges = static_cast<long>(empty_actives_used_.size());
      e.rule = s.empty_rule;
      e.start = b.start;
      e.end = b.end;
      e.dot = 1;
      e.children = {s.right};
      e.first_word = b.first_word;
      e.last_word = b.last_word;
      e.trailing = b.trailing;
      if (e.dot == static_cast<int>(rule.rhs.size())) {
        // Unary completion: refuse cycles (same category twice in a chain
        // over one span).
        if (rule.lhs == b.category) return;
        for (int c : b.unary_chain)
          if (c == rule.lhs) return;
        e.kind = Edge::Kind::Completed;
        e.category = rule.lhs;
        e.unary_chain = b.unary_chain;
        e.unary_chain.push_back(b.category);
      } else {
        e.kind = Edge::Kind::Active;
        e.category = rule.lhs;
      }
    } else {
      const Edge& a = edges_[s.left];
      const SkelRule& rule = skel_.rules[a.rule];
      e.rule = a.rule;
      e.start = a.start;
      e.end = b.end;
      e.dot = a.dot + 1;
      e.children = a.children;
      e.children.push_back(s.right);
      e.first_word = a.first_word;
      e.last_word = b.last_word;
      e.trailing = a.trailing;
      if (cfg_.use_prosody) {
        ProsodyChoice choice = junction_prosody(a.trailing, a.end);
        e.trailing.push_back(boundary_class_name(choice.chosen));
      }
      for (const auto& tok : b.trailing) e.trailing.push_back(tok);
      size_t cap = static_cast<size_t>(trailing_cap());
      if (e.trailing.size() > cap)
        e.trailing.erase(e.trailing.begin(), e.trailing.end() - cap);
      if (e.dot == static_cast<int>(rule.rhs.size())) {
        e.kind = Edge::Kind::Completed;
        e.category = rule.lhs;
      } else {
        e.kind = Edge::Kind::Active;
        e.category = rule.lhs;
      }
    }
    ++stats_.dynamic_edges;
    int id = insert_edge(std::move(e));
    const Edge& created = edges_[id];
    if (created.kind == Edge::Kind::Active) {
      actives_by_need_[{created.end, skel_.rules[created.rule].rhs[created.dot]}]
          .push_back(id);
      actives_by_end_[created.end].push_back(id);
    } else {
      if (created.start == 0 && skel_.is_start(created.category))
        utterance_edges_.push_back(id);
      push_pairs_for_completed(id, agenda);
    }
  }

  int trailing_cap() const { return (prosody_ ? prosody_->order : 4) - 1; }

  std::set<int> left_corners(int cat) const {
    std::set<int> out{cat};
    std::vector<int> work{cat};
    while (!work.empty()) {
      int c = work.back();
      work.pop_back();
      auto it = rules_by_first_cat_lhs_.find(c);
      if (it == rules_by_first_cat_lhs_.end()) {
        // Lazily build the lhs -> first-daughter map.
        auto& firsts = rules_by_first_cat_lhs_[c];
        for (int r : skel_.applicable(c)) firsts.push_back(skel_.rules[r].rhs[0]);
        it = rules_by_first_cat_lhs_.find(c);
      }
      for (int f : it->second)
        if (out.insert(f).second) work.push_back(f);
    }
    return out;
  }

  long long pack_rec(int edge_id, int depth, PackedTree& t) {
    const Edge& e = edges_[edge_id];
    bool shared = depth < cfg_.nshare;
    if (shared && sent_nodes_.count(edge_id)) return edge_id;
    long long id = shared ? edge_id : synth_id_++;
    PackedNode n;
    n.id = id;
    n.start = e.start;
    n.end = e.end;
    n.score = e.combined;
    if (e.kind == Edge::Kind::Lexical) {
      n.symbol = e.word;
    } else {
      n.symbol = skel_.rules[e.rule].id;
      for (int c : e.children) n.children.push_back(pack_rec(c, depth + 1, t));
    }
    if (shared) sent_nodes_.insert(edge_id);
    t.new_nodes.push_back(std::move(n));
    return id;
  }

  const UnificationGrammar& g_;
  const SkeletonGrammar& skel_;
  const WordBigram& bigram_;
  const BoundaryNgramModel* prosody_;
  ChartConfig cfg_;

  int current_frame_ = 0;
  std::deque<Edge> edges_;
  std::map<std::pair<int, int>, std::vector<int>> actives_by_need_;  // (end, cat)
  std::map<int, std::vector<int>> actives_by_end_;
  std::map<int, std::vector<int>> rules_by_first_cat_;
  mutable std::map<int, std::vector<int>> rules_by_first_cat_lhs_;
  std::set<int> lexical_cats_;
  std::vector<int> utterance_edges_;
  std::vector<BoundaryHypothesis> wbhs_;
  std::set<std::pair<int, int>> empty_actives_used_;
  std::set<int> sent_nodes_;
  long long synth_id_ = 1LL << 40;
  long next_seq_ = 0;
  double frame_max_ = kLogZero;
  ChartStats stats_;
};

}  // namespace trellis
