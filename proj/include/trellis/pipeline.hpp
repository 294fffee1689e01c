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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "trellis/lattice.hpp"
#include "trellis/semparser.hpp"
#include "trellis/synparser.hpp"

namespace trellis {

// FIFO message channel between two components. Frames are ASCII strings;
// per-channel order is preserved, nothing is lost or duplicated. Safe for
// one producer and one consumer in different threads.
class Channel {
 public:
  enum class Direction { BottomUp, TopDown };

  Channel(std::string name, Direction dir) : name_(std::move(name)), dir_(dir) {}

  void send(std::string frame) {
    std::lock_guard<std::mutex> lk(mu_);
    log_.push_back(frame);
    q_.push_back(std::move(frame));
    ++count_;
  }
  std::optional<std::string> try_recv() {
    std::lock_guard<std::mutex> lk(mu_);
    if (q_.empty()) return std::nullopt;
    std::string f = std::move(q_.front());
    q_.pop_front();
    return f;
  }
  bool empty() const {
    std::lock_guard<std::mutex> lk(mu_);
    return q_.empty();
  }
  long count() const {
    std::lock_guard<std::mutex> lk(mu_);
    return count_;
  }
  std::vector<std::string> log() const {
    std::lock_guard<std::mutex> lk(mu_);
    return log_;
  }
  const std::string& name() const { return name_; }
  Direction direction() const { return dir_; }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> q_;
  std::vector<std::string> log_;
  long count_ = 0;
  std::string name_;
  Direction dir_;
};

enum class SchedulerMode { Deterministic, Concurrent };

struct PipelineConfig {
  Weights weights;
  double beam_offset = 10.0;
  int nbest = 4;
  int nshare = std::numeric_limits<int>::max();
  bool use_prosody = false;  // score word boundary hypotheses
  bool topdown = false;      // recognizer honors prediction sets
  bool semantics = true;     // run the unification stage
  bool speculate = true;
  int idle_budget = 16;
  SchedulerMode scheduler = SchedulerMode::Deterministic;
  // Concurrent-mode safety net; a correct run never comes close.
  std::chrono::milliseconds watchdog{20000};
};

struct TreeSummary {
  long long tree = 0;
  int start = 0;
  int end = 0;
  double score = 0;
  std::vector<std::string> words;
};

struct RunReport {
  std::string utterance_id;
  std::optional<TreeSummary> accepted;
  std::optional<TreeSummary> best_syn;  // best transmitted tree, no unification
  ChartStats edges;
  ReconStats unifications;
  long post_request_unifications = 0;
  long speculated_nodes = 0;
  long filtered_hyps = 0;
  // Per frame with emissions: the longest span transmitted that frame.
  std::vector<int> phase1_max_spans;
  // Spans of the trees sent in response to phase-2 requests, in order.
  std::vector<int> phase2_sent_spans;
  std::map<std::string, long> message_counts;
  std::map<std::string, std::vector<std::string>> logs;

  std::string to_text(bool include_logs = false) const {
    std::ostringstream out;
    out << "RUNREPORT " << utterance_id << "\n";
    auto tree_line = [&](const char* tag, const std::optional<TreeSummary>& t) {
      out << tag;
      if (!t) {
        out << " none\n";
        return;
      }
      out << " " << t->tree << " " << t->start << " " << t->end << " "
          << fmt_double(t->score) << " ::";
      for (const auto& w : t->words) out << " " << w;
      out << "\n";
    };
    tree_line("ACCEPTED", accepted);
    tree_line("BESTSYN", best_syn);
    out << "EDGES static " << edges.static_edges() << " dynamic " << edges.dynamic_edges
        << " lexical " << edges.lexical_edges << " oov " << edges.oov_hyps << "\n";
    out << "UNIFICATIONS rules " << unifications.rule_applications << " fresh "
        << unifications.fresh_nodes << " memo " << unifications.memo_hits
        << " postreq " << post_request_unifications << "\n";
    out << "SPECULATION nodes " << speculated_nodes << "\n";
    out << "FILTERED " << filtered_hyps << "\n";
    for (const auto& [name, count] : message_counts)
      out << "MESSAGES " << name << " " << count << "\n";
    if (include_logs) {
      for (const auto& [name, frames] : logs)
        for (const auto& f : frames) {
          std::string esc;
          for (char c : f) {
            if (c == '\n') esc += "\\n";
            else esc += c;
          }
          out << "LOG " << name << " " << esc << "\n";
        }
    }
    return out.str();
  }
};

namespace detail {

inline std::string format_frame_message(int frame, const std::vector<WordHyp>& hyps,
                                        const std::vector<BoundaryHypothesis>& wbhs) {
  std::ostringstream out;
  out << "FRAME " << frame;
  for (const auto& h : hyps)
    out << "\nW " << h.word << " " << h.start << " " << h.end << " "
        << fmt_double(h.acoustic_score);
  for (const auto& b : wbhs) {
    out << "\nB " << b.start_frame << " " << b.end_frame;
    for (double s : b.class_scores) out << " " << fmt_double(s);
  }
  return out.str();
}

// The fixed component wiring: recognizer <-> synparser <-> semparser, with
// the prosody scores flowing into the synparser via the lattice hypotheses.
struct Wiring {
  Channel rec_syn{"rec-syn", Channel::Direction::BottomUp};
  Channel syn_rec{"syn-rec", Channel::Direction::TopDown};
  Channel syn_sem{"syn-sem", Channel::Direction::BottomUp};
  Channel sem_syn{"sem-syn", Channel::Direction::TopDown};
};

class RecognizerComponent {
 public:
  RecognizerComponent(const Lattice& lat, const UnificationGrammar& g, bool topdown,
                      Wiring& w)
      : g_(g), topdown_(topdown), wiring_(w) {
    frames_ = lat.frames;
    hyps_by_end_.resize(frames_ + 1);
    wbhs_by_end_.resize(frames_ + 1);
    for (const auto& h : lat.word_hyps) hyps_by_end_[h.end].push_back(h);
    for (const auto& b : lat.wbhs) wbhs_by_end_[b.end_frame].push_back(b);
    for (auto& v : hyps_by_end_)
      std::sort(v.begin(), v.end(), [](const WordHyp& a, const WordHyp& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.word != b.word) return a.word < b.word;
        return a.acoustic_score > b.acoustic_score;
      });
    for (auto& v : wbhs_by_end_)
      std::sort(v.begin(), v.end(),
                [](const BoundaryHypothesis& a, const BoundaryHypothesis& b) {
                  return a.start_frame < b.start_frame;
                });
  }

  bool done() const { return done_; }
  long filtered() const { return filtered_; }
  std::string state() const {
    return "recognizer: next_frame=" + std::to_string(next_frame_) +
           (done_ ? " done" : "");
  }

  bool step() {
    bool progressed = false;
    while (auto f = wiring_.syn_rec.try_recv()) {
      handle_predict(*f);
      progressed = true;
    }
    if (done_) return progressed;
    if (next_frame_ > frames_) {
      wiring_.rec_syn.send("EOU");
      done_ = true;
      return true;
    }
    if (topdown_ && !predictions_ready(next_frame_)) return progressed;
    std::vector<WordHyp> hyps;
    for (const auto& h : hyps_by_end_[next_frame_]) {
      if (topdown_ && !predicted(h)) {
        ++filtered_;
        continue;
      }
      hyps.push_back(h);
    }
    wiring_.rec_syn.send(format_frame_message(next_frame_, hyps, wbhs_by_end_[next_frame_]));
    ++next_frame_;
    return true;
  }

 private:
  void handle_predict(const std::string& frame) {
    auto tok = split_ws(frame);
    if (tok.empty() || tok[0] != "PREDICT")
      throw ProtocolError("recognizer got unexpected frame: " + frame);
    int v = static_cast<int>(parse_long(tok.at(1), "vertex"));
    auto& set = predictions_[v];
    set.clear();
    for (size_t i = 2; i < tok.size(); ++i) set.insert(tok[i]);
  }

  // Word hypotheses in frame f start at vertices < f; all of those
  // prediction sets must have arrived.
  bool predictions_ready(int frame) const {
    for (int v = 0; v < frame; ++v)
      if (!predictions_.count(v)) return false;
    return true;
  }

  bool predicted(const WordHyp& h) const {
    auto it = predictions_.find(h.start);
    if (it == predictions_.end()) return false;
    for (int cat : g_.lex_categories(h.word))
      if (it->second.count(g_.types.name(cat))) return true;
    return false;
  }

  const UnificationGrammar& g_;
  bool topdown_;
  Wiring& wiring_;
  int frames_ = 0;
  int next_frame_ = 1;
  std::atomic<bool> done_{false};
  long filtered_ = 0;
  std::vector<std::vector<WordHyp>> hyps_by_end_;
  std::vector<std::vector<BoundaryHypothesis>> wbhs_by_end_;
  std::map<int, std::set<std::string>> predictions_;
};

class SynParserComponent {
 public:
  SynParserComponent(const UnificationGrammar& g, const SkeletonGrammar& skel,
                     const WordBigram& bigram, const BoundaryNgramModel* prosody,
                     const PipelineConfig& cfg, Wiring& w)
      : g_(g), skel_(skel), cfg_(cfg), wiring_(w),
        chart_(g, skel, bigram,
               cfg.use_prosody ? prosody : nullptr,
               ChartConfig{cfg.weights, cfg.beam_offset, cfg.use_prosody, cfg.nshare}) {
    if (cfg_.topdown) send_predictions(0);
  }

  bool done() const { return done_; }
  Chart& chart() { return chart_; }
  std::optional<long long> accepted_tree() const { return accepted_tree_; }
  const std::vector<int>& phase1_max_spans() const { return phase1_max_spans_; }
  const std::vector<int>& phase2_sent_spans() const { return phase2_sent_spans_; }
  std::string state() const {
    return "synparser: phase=" + std::to_string(phase_) + (done_ ? " done" : "");
  }

  bool step() {
    if (auto f = wiring_.sem_syn.try_recv()) {
      handle_control(*f);
      return true;
    }
    if (auto f = wiring_.rec_syn.try_recv()) {
      handle_bottom_up(*f);
      return true;
    }
    return false;
  }

 private:
  void handle_bottom_up(const std::string& frame) {
    if (frame == "EOU") {
      phase_ = 2;
      wiring_.syn_sem.send("ENDLATTICE");
      return;
    }
    std::istringstream in(frame);
    std::string line;
    if (!std::getline(in, line) || line.rfind("FRAME ", 0) != 0)
      throw ProtocolError("synparser got unexpected frame: " + frame);
    int f = static_cast<int>(parse_long(line.substr(6), "frame"));
    std::vector<WordHyp> hyps;
    std::vector<BoundaryHypothesis> wbhs;
    while (std::getline(in, line)) {
      auto tok = split_ws(line);
      if (tok.empty()) continue;
      if (tok[0] == "W") {
        WordHyp h;
        h.word = tok.at(1);
        h.start = static_cast<int>(parse_long(tok.at(2), "start"));
        h.end = static_cast<int>(parse_long(tok.at(3), "end"));
        h.acoustic_score = parse_double(tok.at(4), "score");
        hyps.push_back(std::move(h));
      } else if (tok[0] == "B") {
        BoundaryHypothesis b;
        b.start_frame = static_cast<int>(parse_long(tok.at(1), "start"));
        b.end_frame = static_cast<int>(parse_long(tok.at(2), "end"));
        for (int i = 0; i < kNumBoundaryClasses; ++i)
          b.class_scores[i] = parse_double(tok.at(3 + i), "score");
        wbhs.push_back(b);
      } else {
        throw ProtocolError("bad hypothesis line: " + line);
      }
    }
    chart_.step_frame(f, hyps, wbhs);
    int frame_max_span = -1;
    for (int i = 0; i < cfg_.nbest; ++i) {
      auto t = chart_.next_best(sent_trees_);
      if (!t) break;
      sent_trees_.insert(t->root);
      frame_max_span = std::max(frame_max_span, t->end - t->start);
      wiring_.syn_sem.send("TREE\n" + serialize_packed_tree(*t));
    }
    if (frame_max_span >= 0) phase1_max_spans_.push_back(frame_max_span);
    if (cfg_.topdown) send_predictions(f);
  }

  void handle_control(const std::string& frame) {
    auto tok = split_ws(frame);
    if (tok.empty()) throw ProtocolError("empty control frame");
    if (tok[0] == "ACCEPT") {
      accepted_tree_ = parse_long(tok.at(1), "tree id");
      done_ = true;
      return;
    }
    if (tok[0] == "STOP") {
      done_ = true;
      return;
    }
    if (tok[0] == "FAIL") {
      // Phase 1: failures are ignored while new trees keep coming.
      if (phase_ == 1) return;
      send_next();
      return;
    }
    if (tok[0] == "NEXTBEST") {
      if (phase_ != 2)
        throw ProtocolError("NEXTBEST before the end of the lattice");
      send_next();
      return;
    }
    throw ProtocolError("synparser got unknown control frame: " + frame);
  }

  void send_next() {
    auto t = chart_.next_best(sent_trees_);
    if (!t) {
      wiring_.syn_sem.send("NOMORE");
      return;
    }
    sent_trees_.insert(t->root);
    phase2_sent_spans_.push_back(t->end - t->start);
    wiring_.syn_sem.send("TREE\n" + serialize_packed_tree(*t));
  }

  void send_predictions(int vertex) {
    std::ostringstream out;
    out << "PREDICT " << vertex;
    for (int cat : chart_.predict_extensions(vertex)) out << " " << g_.types.name(cat);
    wiring_.syn_rec.send(out.str());
  }

  const UnificationGrammar& g_;
  const SkeletonGrammar& skel_;
  const PipelineConfig& cfg_;
  Wiring& wiring_;
  Chart chart_;
  std::set<long long> sent_trees_;
  std::vector<int> phase1_max_spans_;
  std::vector<int> phase2_sent_spans_;
  int phase_ = 1;
  std::atomic<bool> done_{false};
  std::optional<long long> accepted_tree_;
};

class SemParserComponent {
 public:
  SemParserComponent(const UnificationGrammar& g, const SkeletonGrammar& skel,
                     const PipelineConfig& cfg, Wiring& w)
      : enabled_(cfg.semantics), wiring_(w),
        core_(g, skel, cfg.idle_budget, cfg.speculate) {}

  bool done() const { return done_; }
  SemParserCore& core() { return core_; }
  long speculated() const { return speculated_; }
  std::string state() const {
    return "semparser: phase=" + std::to_string(core_.phase()) +
           (done_ ? " done" : "");
  }

  bool step() {
    if (auto f = wiring_.syn_sem.try_recv()) {
      handle(*f);
      return true;
    }
    if (!done_ && enabled_) {
      int n = core_.idle();
      speculated_ += n;
      return n > 0;
    }
    return false;
  }

 private:
  void handle(const std::string& frame) {
    if (done_) return;
    if (!enabled_) {
      // Top-down evaluation mode: no semantic evaluation is done.
      if (frame == "ENDLATTICE") {
        wiring_.sem_syn.send("STOP");
        done_ = true;
      }
      return;
    }
    SemDecision d;
    if (frame.rfind("TREE\n", 0) == 0) {
      d = core_.handle_tree(parse_packed_tree(frame.substr(5)));
    } else if (frame == "ENDLATTICE") {
      d = core_.handle_end_lattice();
    } else if (frame == "NOMORE") {
      d = core_.handle_no_more();
    } else {
      throw ProtocolError("semparser got unknown frame: " + frame);
    }
    switch (d.kind) {
      case SemDecisionKind::None:
        break;
      case SemDecisionKind::Fail:
        wiring_.sem_syn.send("FAIL " + std::to_string(d.tree_id) + " " +
                             std::to_string(d.failed_node));
        break;
      case SemDecisionKind::RequestNext:
        wiring_.sem_syn.send("NEXTBEST");
        break;
      case SemDecisionKind::Accept:
        wiring_.sem_syn.send("ACCEPT " + std::to_string(d.tree_id));
        done_ = true;
        break;
      case SemDecisionKind::Stop:
        wiring_.sem_syn.send("STOP");
        done_ = true;
        break;
    }
  }

  bool enabled_;
  Wiring& wiring_;
  SemParserCore core_;
  long speculated_ = 0;
  std::atomic<bool> done_{false};
};

}  // namespace detail

// Runs the recognizer -> synparser -> semparser pipeline over a lattice.
// The deterministic scheduler steps components round robin (recognizer,
// synparser, semparser), one message or one idle-budget unit per turn, and
// produces byte-identical traces for identical inputs. The concurrent
// scheduler runs each component in its own thread; the accepted result is
// the same.
inline RunReport run_pipeline(const PipelineConfig& cfg, const Lattice& lat,
                              const UnificationGrammar& g, const SkeletonGrammar& skel,
                              const WordBigram& bigram,
                              const BoundaryNgramModel* prosody = nullptr) {
  detail::Wiring wiring;
  detail::RecognizerComponent rec(lat, g, cfg.topdown, wiring);
  detail::SynParserComponent syn(g, skel, bigram, prosody, cfg, wiring);
  detail::SemParserComponent sem(g, skel, cfg, wiring);

  auto finished = [&] { return syn.done() && sem.done(); };

  if (cfg.scheduler == SchedulerMode::Deterministic) {
    long safety = 100000000;
    while (!finished()) {
      bool progress = false;
      progress |= rec.step();
      if (finished()) break;
      progress |= syn.step();
      if (finished()) break;
      progress |= sem.step();
      if (!progress && !finished()) {
        throw ProtocolError("pipeline deadlock: no component can make progress\n  " +
                            rec.state() + "\n  " + syn.state() + "\n  " + sem.state());
      }
      if (--safety <= 0) throw ProtocolError("pipeline did not terminate");
    }
  } else {
    std::atomic<bool> abort{false};
    auto deadline = std::chrono::steady_clock::now() + cfg.watchdog;
    std::exception_ptr errors[3] = {nullptr, nullptr, nullptr};
    auto worker = [&](int idx, auto* component, auto is_done) {
      try {
        while (!abort.load(std::memory_order_relaxed) && !is_done()) {
          if (!component->step()) {
            if (std::chrono::steady_clock::now() > deadline) {
              abort.store(true);
              return;
            }
            std::this_thread::yield();
          }
        }
      } catch (...) {
        errors[idx] = std::current_exception();
        abort.store(true);
      }
    };
    {
      std::jthread t0(worker, 0, &rec, [&] { return rec.done(); });
      std::jthread t1(worker, 1, &syn, [&] { return syn.done(); });
      std::jthread t2(worker, 2, &sem, [&] { return sem.done(); });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    if (!finished())
      throw ProtocolError("concurrent pipeline timed out\n  " + rec.state() + "\n  " +
                          syn.state() + "\n  " + sem.state());
  }

  RunReport report;
  report.utterance_id = lat.utterance_id;
  Chart& chart = syn.chart();
  auto summarize = [&](long long tree_id) {
    TreeSummary s;
    s.tree = tree_id;
    const Edge& e = chart.edge(static_cast<int>(tree_id));
    s.start = e.start;
    s.end = e.end;
    s.score = e.combined;
    s.words = skel_tree_yield(chart.skel_tree(static_cast<int>(tree_id)));
    return s;
  };
  if (auto t = syn.accepted_tree()) report.accepted = summarize(*t);
  auto ranked = chart.ranked_utterance_edges();
  if (!ranked.empty()) report.best_syn = summarize(ranked[0]);
  report.edges = chart.stats();
  report.unifications = sem.core().chart().stats();
  report.post_request_unifications = sem.core().post_request_rule_applications();
  report.speculated_nodes = sem.speculated();
  report.filtered_hyps = rec.filtered();
  report.phase1_max_spans = syn.phase1_max_spans();
  report.phase2_sent_spans = syn.phase2_sent_spans();
  for (Channel* c : {&wiring.rec_syn, &wiring.syn_rec, &wiring.syn_sem, &wiring.sem_syn}) {
    report.message_counts[c->name()] = c->count();
    report.logs[c->name()] = c->log();
  }
  return report;
}

// Fixed round-robin scheduling (recognizer, synparser, semparser), fully
// reproducible message traces.
inline RunReport schedule_deterministic(PipelineConfig cfg, const Lattice& lat,
                                        const UnificationGrammar& g,
                                        const SkeletonGrammar& skel,
                                        const WordBigram& bigram,
                                        const BoundaryNgramModel* prosody = nullptr) {
  cfg.scheduler = SchedulerMode::Deterministic;
  return run_pipeline(cfg, lat, g, skel, bigram, prosody);
}

inline RunReport schedule_concurrent(PipelineConfig cfg, const Lattice& lat,
                                     const UnificationGrammar& g,
                                     const SkeletonGrammar& skel,
                                     const WordBigram& bigram,
                                     const BoundaryNgramModel* prosody = nullptr) {
  cfg.scheduler = SchedulerMode::Concurrent;
  return run_pipeline(cfg, lat, g, skel, bigram, prosody);
}

}  // namespace trellis
