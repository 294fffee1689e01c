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

#include <boost/math/distributions/chi_squared.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trellis/common.hpp"

namespace trellis {

struct TaggedToken {
  std::string word;
  std::string cls;
};

struct TaggedUtterance {
  std::string speaker;
  std::vector<TaggedToken> tokens;
};

// POS-tagged corpus: one class per word occurrence, utterances grouped by
// speaker.
struct TaggedCorpus {
  std::vector<TaggedUtterance> utterances;
  std::vector<std::string> class_inventory;  // sorted, unique
  std::vector<std::string> speakers;         // sorted, unique
};

// File format: one utterance per line, '<speaker>\tword/CLASS word/CLASS ...'.
inline TaggedCorpus parse_tagged_corpus(const std::string& content) {
  TaggedCorpus corpus;
  std::set<std::string> classes, speakers;
  for (const auto& line : content_lines(content)) {
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("tagged corpus line has no speaker tab: " + line);
    TaggedUtterance u;
    u.speaker = line.substr(0, tab);
    if (u.speaker.empty()) throw ValidationError("empty speaker id");
    for (const auto& tok : split_ws(line.substr(tab + 1))) {
      size_t slash = tok.rfind('/');
      if (slash == std::string::npos || slash == 0 || slash + 1 == tok.size())
        throw ParseError("bad word/CLASS token: " + tok);
      TaggedToken t;
      t.word = tok.substr(0, slash);
      t.cls = tok.substr(slash + 1);
      classes.insert(t.cls);
      u.tokens.push_back(std::move(t));
    }
    speakers.insert(u.speaker);
    corpus.utterances.push_back(std::move(u));
  }
  corpus.class_inventory.assign(classes.begin(), classes.end());
  corpus.speakers.assign(speakers.begin(), speakers.end());
  return corpus;
}

inline std::string format_tagged_corpus(const TaggedCorpus& corpus) {
  std::ostringstream out;
  for (const auto& u : corpus.utterances) {
    out << u.speaker << "\t";
    for (size_t i = 0; i < u.tokens.size(); ++i) {
      if (i) out << " ";
      out << u.tokens[i].word << "/" << u.tokens[i].cls;
    }
    out << "\n";
  }
  return out.str();
}

// Class occurrence counts for a speaker subset (all speakers when absent).
inline std::map<std::string, double> class_counts(
    const TaggedCorpus& corpus,
    const std::optional<std::set<std::string>>& speakers = std::nullopt) {
  if (speakers && speakers->empty()) throw ValidationError("empty speaker subset");
  std::map<std::string, double> counts;
  for (const auto& cls : corpus.class_inventory) counts[cls] = 0;
  for (const auto& u : corpus.utterances) {
    if (speakers && !speakers->count(u.speaker)) continue;
    for (const auto& t : u.tokens) counts[t.cls] += 1;
  }
  return counts;
}

// Empirical distribution over the class inventory; zero-count classes are
// kept with probability 0.
inline std::map<std::string, double> pos_distribution(
    const TaggedCorpus& corpus,
    const std::optional<std::set<std::string>>& speakers = std::nullopt) {
  auto counts = class_counts(corpus, speakers);
  double total = 0;
  for (const auto& [c, n] : counts) total += n;
  if (total == 0) throw ValidationError("speaker subset has no tokens");
  for (auto& [c, n] : counts) n /= total;
  return counts;
}

// ---------------------------------------------------------------------------
// Chi-square typicality of a speaker's class distribution against a
// reference distribution.

struct ChiSquareResult {
  double statistic = 0;
  int df = 0;
  double p_value = 1;
  bool reject = false;
};

inline ChiSquareResult chi_square_typicality(
    const std::map<std::string, double>& observed_counts,
    const std::map<std::string, double>& reference, double alpha = 0.01) {
  double n = 0;
  for (const auto& [c, o] : observed_counts) n += o;
  if (n <= 0) throw ValidationError("no observed tokens");
  // Cells with expected count < 1 are pooled into a rest cell.
  std::vector<std::pair<double, double>> cells;  // (observed, expected)
  double rest_o = 0, rest_e = 0;
  for (const auto& [cls, p] : reference) {
    double e = n * p;
    double o = 0;
    auto it = observed_counts.find(cls);
    if (it != observed_counts.end()) o = it->second;
    if (e < 1.0) {
      rest_o += o;
      rest_e += e;
    } else {
      cells.push_back({o, e});
    }
  }
  for (const auto& [cls, o] : observed_counts)
    if (!reference.count(cls)) rest_o += o;  // classes the reference never saw
  if (rest_e > 0 || rest_o > 0) cells.push_back({rest_o, rest_e});
  int effective = static_cast<int>(cells.size());
  if (n < 5.0 * effective)
    throw ValidationError("too few tokens for the chi-square guard (" +
                          fmt_double(n) + " < 5*" + std::to_string(effective) + ")");
  if (effective < 2) throw ValidationError("chi-square needs at least two cells");
  ChiSquareResult r;
  r.df = effective - 1;
  for (const auto& [o, e] : cells) {
    if (e == 0) {
      if (o > 0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
  }
  if (std::isinf(r.statistic)) {
    r.p_value = 0;
  } else {
    boost::math::chi_squared dist(r.df);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  r.reject = r.p_value <= alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Class n-gram with a lexical part P(w|C(w)) and a grammatical part
// P(C_i | history). Utterances are padded with a distinguished boundary
// class; unknown words fall back to one UNK token per class.

inline const std::string kBoundaryClassToken = "<s>";
inline const std::string kUnkWordToken = "<unk>";

struct ClassNgramModel {
  int order = 2;  // 2 or 3
  double lambda = 0.1;
  std::vector<std::string> class_inventory;
  std::map<std::string, long> class_vocab_size;  // per class, including UNK
  std::map<std::string, std::map<std::string, double>> lex_counts;
  std::map<std::vector<std::string>, std::map<std::string, double>> gram_counts;
};

namespace detail {

struct NgramCounts {
  std::map<std::string, std::map<std::string, double>> lex;
  std::map<std::vector<std::string>, std::map<std::string, double>> gram;
};

inline void count_utterance(const TaggedUtterance& u, int order, NgramCounts& out) {
  std::vector<std::string> hist(order - 1, kBoundaryClassToken);
  for (const auto& t : u.tokens) {
    out.lex[t.cls][t.word] += 1;
    out.gram[hist][t.cls] += 1;
    hist.erase(hist.begin());
    hist.push_back(t.cls);
  }
}

}  // namespace detail

inline ClassNgramModel train_class_ngram(
    const TaggedCorpus& corpus, int order, double lambda,
    const std::optional<std::set<std::string>>& speakers = std::nullopt) {
  if (order != 2 && order != 3) throw ValidationError("class n-gram order must be 2 or 3");
  if (lambda < 0) throw ValidationError("negative smoothing lambda");
  ClassNgramModel m;
  m.order = order;
  m.lambda = lambda;
  m.class_inventory = corpus.class_inventory;
  detail::NgramCounts counts;
  bool any = false;
  for (const auto& u : corpus.utterances) {
    if (speakers && !speakers->count(u.speaker)) continue;
    detail::count_utterance(u, order, counts);
    any = true;
  }
  if (!any) throw ValidationError("empty training subset");
  m.lex_counts = std::move(counts.lex);
  m.gram_counts = std::move(counts.gram);
  for (const auto& cls : m.class_inventory) {
    auto it = m.lex_counts.find(cls);
    long seen = it == m.lex_counts.end() ? 0 : static_cast<long>(it->second.size());
    m.class_vocab_size[cls] = seen + 1;  // + UNK
  }
  return m;
}

inline double lex_logprob(const ClassNgramModel& m, const std::string& word,
                          const std::string& cls) {
  auto vit = m.class_vocab_size.find(cls);
  if (vit == m.class_vocab_size.end())
    throw ValidationError("unknown class in test data: " + cls);
  double total = 0, count = 0;
  auto it = m.lex_counts.find(cls);
  if (it != m.lex_counts.end()) {
    for (const auto& [w, c] : it->second) total += c;
    auto wit = it->second.find(word);
    if (wit != it->second.end()) count = wit->second;  // unseen word = UNK, count 0
  }
  double denom = total + m.lambda * vit->second;
  double num = count + m.lambda;
  if (num <= 0 || denom <= 0)
    throw ValidationError("zero probability for word '" + word +
                          "'; train with smoothing lambda > 0");
  return std::log(num) - std::log(denom);
}

inline double gram_logprob(const ClassNgramModel& m,
                           const std::vector<std::string>& history,
                           const std::string& cls) {
  if (!std::count(m.class_inventory.begin(), m.class_inventory.end(), cls))
    throw ValidationError("unknown class in test data: " + cls);
  int alphabet = static_cast<int>(m.class_inventory.size());
  double total = 0, count = 0;
  auto it = m.gram_counts.find(history);
  if (it != m.gram_counts.end()) {
    for (const auto& [c, v] : it->second) total += v;
    auto cit = it->second.find(cls);
    if (cit != it->second.end()) count = cit->second;
  }
  double denom = total + m.lambda * alphabet;
  double num = count + m.lambda;
  if (num <= 0 || denom <= 0)
    throw ValidationError("zero probability for class '" + cls +
                          "'; train with smoothing lambda > 0");
  return std::log(num) - std::log(denom);
}

inline double utterance_loglik(const ClassNgramModel& m, const TaggedUtterance& u) {
  std::vector<std::string> hist(m.order - 1, kBoundaryClassToken);
  double ll = 0;
  for (const auto& t : u.tokens) {
    ll += lex_logprob(m, t.word, t.cls) + gram_logprob(m, hist, t.cls);
    hist.erase(hist.begin());
    hist.push_back(t.cls);
  }
  return ll;
}

// PP = exp(-(1/N) sum log [P(w|C(w)) * P(C(w)|history)]).
inline double perplexity(const ClassNgramModel& m,
                         const std::vector<TaggedUtterance>& test) {
  double ll = 0;
  long n = 0;
  for (const auto& u : test) {
    ll += utterance_loglik(m, u);
    n += static_cast<long>(u.tokens.size());
  }
  if (n == 0) throw ValidationError("empty test data");
  return std::exp(-ll / n);
}

inline double perplexity(const ClassNgramModel& m, const TaggedUtterance& test) {
  return perplexity(m, std::vector<TaggedUtterance>{test});
}

// Model file:
//   CLASSNGRAM <order> <lambda>
//   VOCAB <class> <size>
//   LEX <class> <word> <count>
//   GRAM <h...> :: <class> <count>
inline std::string format_class_ngram(const ClassNgramModel& m) {
  std::ostringstream out;
  out << "CLASSNGRAM " << m.order << " " << fmt_double(m.lambda) << "\n";
  for (const auto& cls : m.class_inventory)
    out << "VOCAB " << cls << " " << m.class_vocab_size.at(cls) << "\n";
  for (const auto& [cls, words] : m.lex_counts)
    for (const auto& [w, c] : words)
      out << "LEX " << cls << " " << w << " " << fmt_double(c) << "\n";
  for (const auto& [hist, classes] : m.gram_counts)
    for (const auto& [cls, c] : classes) {
      out << "GRAM";
      for (const auto& h : hist) out << " " << h;
      out << " :: " << cls << " " << fmt_double(c) << "\n";
    }
  return out.str();
}

inline ClassNgramModel parse_class_ngram(const std::string& content) {
  ClassNgramModel m;
  std::set<std::string> classes;
  bool header = false;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "CLASSNGRAM") {
      m.order = static_cast<int>(parse_long(tok.at(1), "order"));
      m.lambda = parse_double(tok.at(2), "lambda");
      header = true;
    } else if (tok[0] == "VOCAB") {
      m.class_vocab_size[tok.at(1)] = parse_long(tok.at(2), "vocab size");
      classes.insert(tok.at(1));
    } else if (tok[0] == "LEX") {
      m.lex_counts[tok.at(1)][tok.at(2)] += parse_double(tok.at(3), "count");
    } else if (tok[0] == "GRAM") {
      auto sep = std::find(tok.begin(), tok.end(), "::");
      if (sep == tok.end() || std::distance(sep, tok.end()) != 3)
        throw ParseError("bad GRAM line: " + line);
      std::vector<std::string> hist(tok.begin() + 1, sep);
      m.gram_counts[hist][*(sep + 1)] += parse_double(*(sep + 2), "count");
    } else {
      throw ParseError("unknown class n-gram line: " + line);
    }
  }
  if (!header) throw ParseError("missing CLASSNGRAM header");
  m.class_inventory.assign(classes.begin(), classes.end());
  return m;
}

// ---------------------------------------------------------------------------
// Speaker clustering.

struct SpeakerPartition {
  std::map<std::string, int> assignment;
  std::vector<ClassNgramModel> models;
  double objective = 0;                 // total log-likelihood
  std::vector<double> objective_trace;  // after each accepted move
};

namespace detail {

// Smoothed class-bigram table of one speaker, plus context weights.
struct SpeakerBigram {
  std::vector<double> cond;    // (#contexts x #classes) P(v|u), rows normalized
  std::vector<double> weight;  // context frequency P(u)
};

inline SpeakerBigram speaker_bigram(const TaggedCorpus& corpus,
                                    const std::string& speaker, double lambda) {
  int nc = static_cast<int>(corpus.class_inventory.size());
  int contexts = nc + 1;  // + utterance boundary
  std::map<std::string, int> cls_id;
  for (int i = 0; i < nc; ++i) cls_id[corpus.class_inventory[i]] = i;
  std::vector<double> counts(contexts * nc, 0.0);
  std::vector<double> ctx_counts(contexts, 0.0);
  for (const auto& u : corpus.utterances) {
    if (u.speaker != speaker) continue;
    int prev = nc;  // boundary context
    for (const auto& t : u.tokens) {
      int c = cls_id.at(t.cls);
      counts[prev * nc + c] += 1;
      ctx_counts[prev] += 1;
      prev = c;
    }
  }
  SpeakerBigram b;
  b.cond.resize(contexts * nc);
  b.weight.resize(contexts);
  double total_ctx = 0;
  for (double v : ctx_counts) total_ctx += v;
  for (int u = 0; u < contexts; ++u) {
    double row = ctx_counts[u];
    for (int v = 0; v < nc; ++v)
      b.cond[u * nc + v] = (counts[u * nc + v] + lambda) / (row + lambda * nc);
    b.weight[u] = total_ctx > 0 ? row / total_ctx : 0;
  }
  return b;
}

inline double bigram_distance(const SpeakerBigram& a, const SpeakerBigram& b, int nc,
                              bool l2) {
  int contexts = nc + 1;
  double d = 0;
  for (int u = 0; u < contexts; ++u) {
    double w = a.weight[u] + b.weight[u];
    if (w == 0) continue;
    double row = 0;
    for (int v = 0; v < nc; ++v) {
      double diff = a.cond[u * nc + v] - b.cond[u * nc + v];
      row += l2 ? diff * diff : std::fabs(diff);
    }
    d += w * (l2 ? std::sqrt(row) : row);
  }
  return d;
}

}  // namespace detail

struct KmeansOptions {
  double lambda = 0.1;
  bool l2 = false;
  int max_iterations = 100;
};

// K-means over speakers, represented by their smoothed class-bigram tables.
// The distance between two speakers is the weighted difference of their
// bigrams; cluster centers are renormalized means of the member tables.
inline SpeakerPartition kmeans_speakers(const TaggedCorpus& corpus, int k, uint64_t seed,
                                        KmeansOptions opt = {}) {
  int n = static_cast<int>(corpus.speakers.size());
  if (k < 1) throw ValidationError("cluster count must be >= 1");
  if (k > n) throw ValidationError("more clusters than speakers");
  int nc = static_cast<int>(corpus.class_inventory.size());
  std::vector<detail::SpeakerBigram> reps;
  for (const auto& s : corpus.speakers)
    reps.push_back(detail::speaker_bigram(corpus, s, opt.lambda));

  Rng rng(seed);
  std::vector<detail::SpeakerBigram> centers;
  for (int idx : rng.sample_indices(n, k)) centers.push_back(reps[idx]);
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    std::vector<int> next(n, 0);
    for (int i = 0; i < n; ++i) {
      double best = 0;
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        double d = detail::bigram_distance(reps[i], centers[c], nc, opt.l2);
        if (c == 0 || d < best) {
          best = d;
          best_c = c;
        }
      }
      next[i] = best_c;
    }
    // Re-seed empty clusters with the speaker farthest from its center.
    for (int c = 0; c < k; ++c) {
      if (std::count(next.begin(), next.end(), c) > 0) continue;
      double worst = -1;
      int victim = -1;
      for (int i = 0; i < n; ++i) {
        if (std::count(next.begin(), next.end(), next[i]) < 2) continue;
        double d = detail::bigram_distance(reps[i], centers[next[i]], nc, opt.l2);
        if (d > worst) {
          worst = d;
          victim = i;
        }
      }
      if (victim >= 0) next[victim] = c;
    }
    if (next == assign) break;
    assign = next;
    // Mean of member tables, renormalized.
    int contexts = nc + 1;
    for (int c = 0; c < k; ++c) {
      detail::SpeakerBigram center;
      center.cond.assign(contexts * nc, 0.0);
      center.weight.assign(contexts, 0.0);
      int members = 0;
      for (int i = 0; i < n; ++i) {
        if (assign[i] != c) continue;
        ++members;
        for (size_t j = 0; j < center.cond.size(); ++j) center.cond[j] += reps[i].cond[j];
        for (int u = 0; u < contexts; ++u) center.weight[u] += reps[i].weight[u];
      }
      if (members == 0) continue;
      for (auto& v : center.cond) v /= members;
      for (auto& v : center.weight) v /= members;
      for (int u = 0; u < contexts; ++u) {
        double row = 0;
        for (int v = 0; v < nc; ++v) row += center.cond[u * nc + v];
        if (row > 0)
          for (int v = 0; v < nc; ++v) center.cond[u * nc + v] /= row;
      }
      centers[c] = std::move(center);
    }
  }

  SpeakerPartition part;
  for (int i = 0; i < n; ++i) part.assignment[corpus.speakers[i]] = assign[i];
  part.models.reserve(k);
  for (int c = 0; c < k; ++c) {
    std::set<std::string> members;
    for (int i = 0; i < n; ++i)
      if (assign[i] == c) members.insert(corpus.speakers[i]);
    part.models.push_back(train_class_ngram(corpus, 2, opt.lambda, members));
  }
  part.objective = 0;
  for (const auto& u : corpus.utterances)
    part.objective += utterance_loglik(part.models[part.assignment.at(u.speaker)], u);
  return part;
}

// ---------------------------------------------------------------------------
// Exchange clustering: repeatedly move the single speaker whose reassignment
// most improves the total log-likelihood of the cluster-specific models.

enum class ExchangeVariant {
  TwoPos,   // only the grammatical bigram part specializes
  ThreePos, // only the grammatical trigram part specializes
  PosWord,  // both parts specialize
};

inline const char* exchange_variant_name(ExchangeVariant v) {
  switch (v) {
    case ExchangeVariant::TwoPos: return "2POS";
    case ExchangeVariant::ThreePos: return "3POS";
    case ExchangeVariant::PosWord: return "POS/Word";
  }
  return "?";
}

struct ExchangeOptions {
  double lambda = 0.1;
  long max_moves = 10000;
  double min_gain = 1e-9;
};

namespace detail {

struct SpeakerEvents {
  std::map<std::string, std::map<std::string, double>> lex;
  std::map<std::vector<std::string>, std::map<std::string, double>> gram;
  long tokens = 0;
};

// Log-likelihood of counts under the add-lambda model estimated from the
// same counts. Vocabulary sizes are corpus-wide so scores are comparable
// across clusters.
inline double counts_loglik(
    const std::map<std::string, std::map<std::string, double>>& counts,
    const std::map<std::string, long>& alphabet_sizes, double lambda) {
  double ll = 0;
  for (const auto& [key, events] : counts) {
    double total = 0;
    for (const auto& [e, c] : events) total += c;
    double denom = total + lambda * alphabet_sizes.at(key);
    for (const auto& [e, c] : events)
      if (c > 0) ll += c * (std::log(c + lambda) - std::log(denom));
  }
  return ll;
}

inline double gram_counts_loglik(
    const std::map<std::vector<std::string>, std::map<std::string, double>>& counts,
    long alphabet, double lambda) {
  double ll = 0;
  for (const auto& [hist, events] : counts) {
    double total = 0;
    for (const auto& [e, c] : events) total += c;
    double denom = total + lambda * alphabet;
    for (const auto& [e, c] : events)
      if (c > 0) ll += c * (std::log(c + lambda) - std::log(denom));
  }
  return ll;
}

template <typename K>
inline void add_counts(std::map<K, std::map<std::string, double>>& into,
                       const std::map<K, std::map<std::string, double>>& from,
                       double sign) {
  for (const auto& [k, events] : from)
    for (const auto& [e, c] : events) {
      double& slot = into[k][e];
      slot += sign * c;
      if (slot <= 1e-12 && sign < 0) {
        into[k].erase(e);
        if (into[k].empty()) into.erase(k);
      }
    }
}

}  // namespace detail

inline SpeakerPartition exchange_cluster(const TaggedCorpus& corpus, int k,
                                         ExchangeVariant variant, uint64_t seed,
                                         ExchangeOptions opt = {}) {
  int n = static_cast<int>(corpus.speakers.size());
  if (k < 1) throw ValidationError("cluster count must be >= 1");
  if (k > n) throw ValidationError("more clusters than speakers");
  int gram_order = variant == ExchangeVariant::ThreePos ? 3 : 2;
  bool adapt_lex = variant == ExchangeVariant::PosWord;

  // Per-speaker event counts.
  std::map<std::string, detail::SpeakerEvents> events;
  for (const auto& u : corpus.utterances) {
    auto& ev = events[u.speaker];
    detail::NgramCounts counts;
    detail::count_utterance(u, gram_order, counts);
    detail::add_counts(ev.lex, counts.lex, 1.0);
    detail::add_counts(ev.gram, counts.gram, 1.0);
    ev.tokens += static_cast<long>(u.tokens.size());
  }
  // Corpus-wide per-class vocabulary (plus UNK) for comparable smoothing.
  std::map<std::string, long> lex_alphabet;
  {
    std::map<std::string, std::set<std::string>> vocab;
    for (const auto& u : corpus.utterances)
      for (const auto& t : u.tokens) vocab[t.cls].insert(t.word);
    for (const auto& cls : corpus.class_inventory)
      lex_alphabet[cls] = static_cast<long>(vocab[cls].size()) + 1;
  }
  long gram_alphabet = static_cast<long>(corpus.class_inventory.size());

  // Seeded round-robin initialization.
  Rng rng(seed);
  std::vector<int> order = rng.sample_indices(n, n);
  std::vector<int> assign(n, 0);
  for (int i = 0; i < n; ++i) assign[order[i]] = i % k;

  struct Cluster {
    detail::SpeakerEvents sums;
    int members = 0;
  };
  std::vector<Cluster> clusters(k);
  for (int i = 0; i < n; ++i) {
    auto& ev = events.at(corpus.speakers[i]);
    auto& cl = clusters[assign[i]];
    detail::add_counts(cl.sums.lex, ev.lex, 1.0);
    detail::add_counts(cl.sums.gram, ev.gram, 1.0);
    ++cl.members;
  }

  auto cluster_ll = [&](const Cluster& cl) {
    double ll = detail::gram_counts_loglik(cl.sums.gram, gram_alphabet, opt.lambda);
    if (adapt_lex) ll += detail::counts_loglik(cl.sums.lex, lex_alphabet, opt.lambda);
    return ll;
  };

  std::vector<double> lls(k);
  for (int c = 0; c < k; ++c) lls[c] = cluster_ll(clusters[c]);

  SpeakerPartition part;
  double objective = 0;
  for (double ll : lls) objective += ll;
  part.objective_trace.push_back(objective);

  for (long move = 0; move < opt.max_moves; ++move) {
    double best_gain = 0;
    int best_speaker = -1, best_target = -1;
    double best_src_ll = 0, best_dst_ll = 0;
    for (int i = 0; i < n; ++i) {
      int src = assign[i];
      if (clusters[src].members <= 1) continue;  // clusters stay non-empty
      const auto& ev = events.at(corpus.speakers[i]);
      Cluster without = clusters[src];
      detail::add_counts(without.sums.lex, ev.lex, -1.0);
      detail::add_counts(without.sums.gram, ev.gram, -1.0);
      --without.members;
      double src_ll = cluster_ll(without);
      for (int dst = 0; dst < k; ++dst) {
        if (dst == src) continue;
        Cluster with = clusters[dst];
        detail::add_counts(with.sums.lex, ev.lex, 1.0);
        detail::add_counts(with.sums.gram, ev.gram, 1.0);
        ++with.members;
        double dst_ll = cluster_ll(with);
        double gain = (src_ll + dst_ll) - (lls[src] + lls[dst]);
        if (gain > best_gain + opt.min_gain) {
          best_gain = gain;
          best_speaker = i;
          best_target = dst;
          best_src_ll = src_ll;
          best_dst_ll = dst_ll;
        }
      }
    }
    if (best_speaker < 0) break;
    int src = assign[best_speaker];
    const auto& ev = events.at(corpus.speakers[best_speaker]);
    detail::add_counts(clusters[src].sums.lex, ev.lex, -1.0);
    detail::add_counts(clusters[src].sums.gram, ev.gram, -1.0);
    --clusters[src].members;
    detail::add_counts(clusters[best_target].sums.lex, ev.lex, 1.0);
    detail::add_counts(clusters[best_target].sums.gram, ev.gram, 1.0);
    ++clusters[best_target].members;
    assign[best_speaker] = best_target;
    lls[src] = best_src_ll;
    lls[best_target] = best_dst_ll;
    double next_objective = 0;
    for (double ll : lls) next_objective += ll;
    if (next_objective + 1e-9 < objective)
      throw std::logic_error("exchange objective decreased");
    objective = next_objective;
    part.objective_trace.push_back(objective);
  }

  for (int i = 0; i < n; ++i) part.assignment[corpus.speakers[i]] = assign[i];
  ClassNgramModel pooled = train_class_ngram(corpus, gram_order, opt.lambda);
  for (int c = 0; c < k; ++c) {
    std::set<std::string> members;
    for (int i = 0; i < n; ++i)
      if (assign[i] == c) members.insert(corpus.speakers[i]);
    ClassNgramModel m = train_class_ngram(corpus, gram_order, opt.lambda, members);
    if (!adapt_lex) {
      // The lexical part stays invariant across clusters.
      m.lex_counts = pooled.lex_counts;
      m.class_vocab_size = pooled.class_vocab_size;
    }
    part.models.push_back(std::move(m));
  }
  part.objective = objective;
  return part;
}

}  // namespace trellis
