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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trellis/common.hpp"
#include "trellis/lattice.hpp"

namespace trellis {

inline bool is_boundary_token(const std::string& tok) {
  return boundary_class_from(tok).has_value();
}

// Class n-gram over interleaved word-class and boundary-class tokens
// (word, boundary, word, boundary, ...). Predicts the boundary class after a
// word-final history; an unseen history backs off to the uniform
// distribution over the four boundary classes.
struct BoundaryNgramModel {
  int order = 4;  // 3 = trigram, 4 = tetragram
  double lambda = 0.1;
  // Keyed by exact history (length <= order-1; shorter near sequence start).
  std::map<std::vector<std::string>, std::array<double, kNumBoundaryClasses>>
      boundary_counts;
  std::map<std::vector<std::string>, std::map<std::string, double>> word_counts;
  std::vector<std::string> word_alphabet;  // word classes seen in training
};

inline BoundaryNgramModel train_boundary_ngram(
    const std::vector<std::vector<std::string>>& sequences, int order,
    double lambda = 0.1) {
  if (order != 3 && order != 4)
    throw ValidationError("boundary n-gram order must be 3 or 4");
  BoundaryNgramModel m;
  m.order = order;
  m.lambda = lambda;
  std::set<std::string> words;
  for (const auto& seq : sequences) {
    for (size_t i = 0; i < seq.size(); ++i) {
      bool boundary_pos = (i % 2) == 1;
      if (is_boundary_token(seq[i]) != boundary_pos)
        throw ValidationError("token sequence does not interleave words and boundaries at '" +
                              seq[i] + "'");
      if (!boundary_pos) words.insert(seq[i]);
      if (i == 0) continue;
      size_t h0 = i >= static_cast<size_t>(order - 1) ? i - (order - 1) : 0;
      std::vector<std::string> hist(seq.begin() + h0, seq.begin() + i);
      if (boundary_pos) {
        auto c = boundary_class_from(seq[i]);
        m.boundary_counts[hist][static_cast<int>(*c)] += 1.0;
      } else {
        m.word_counts[hist][seq[i]] += 1.0;
      }
    }
  }
  m.word_alphabet.assign(words.begin(), words.end());
  return m;
}

// log P(boundary class | history). The history must end in a word token;
// histories that violate the interleaving get log 0 for every class.
inline double boundary_logprob(const BoundaryNgramModel& m,
                               const std::vector<std::string>& history,
                               BoundaryClass c) {
  if (!history.empty() && is_boundary_token(history.back())) return kLogZero;
  size_t keep = std::min(history.size(), static_cast<size_t>(m.order - 1));
  std::vector<std::string> hist(history.end() - keep, history.end());
  auto it = m.boundary_counts.find(hist);
  if (it == m.boundary_counts.end())
    return -std::log(static_cast<double>(kNumBoundaryClasses));
  double total = 0;
  for (double v : it->second) total += v;
  double count = it->second[static_cast<int>(c)];
  return std::log((count + m.lambda) / (total + m.lambda * kNumBoundaryClasses));
}

inline double word_logprob(const BoundaryNgramModel& m,
                           const std::vector<std::string>& history,
                           const std::string& word_class) {
  size_t keep = std::min(history.size(), static_cast<size_t>(m.order - 1));
  std::vector<std::string> hist(history.end() - keep, history.end());
  int alpha = std::max<int>(1, static_cast<int>(m.word_alphabet.size()));
  auto it = m.word_counts.find(hist);
  if (it == m.word_counts.end()) return -std::log(static_cast<double>(alpha));
  double total = 0;
  for (const auto& [w, v] : it->second) total += v;
  double count = 0;
  auto wit = it->second.find(word_class);
  if (wit != it->second.end()) count = wit->second;
  return std::log((count + m.lambda) / (total + m.lambda * alpha));
}

// The prosody factor of a boundary hypothesis in context: the best
// combination of acoustic evidence and the class n-gram over the four
// boundary classes. Also reports which class achieved the maximum
// (ties resolved in class order B0 < B2 < B3 < B9).
struct ProsodyChoice {
  double score = kLogZero;
  BoundaryClass chosen = BoundaryClass::B0;
};

inline ProsodyChoice prosody_choice(const BoundaryNgramModel& m,
                                    const std::vector<std::string>& left_context,
                                    const BoundaryHypothesis& wbh) {
  if (left_context.empty() || is_boundary_token(left_context.back()))
    throw ValidationError("prosody factor context must end with a word token");
  ProsodyChoice best;
  bool first = true;
  for (int i = 0; i < kNumBoundaryClasses; ++i) {
    auto c = static_cast<BoundaryClass>(i);
    double cand = wbh.score(c) + boundary_logprob(m, left_context, c);
    if (first || cand > best.score) {
      best.score = cand;
      best.chosen = c;
      first = false;
    }
  }
  return best;
}

inline double prosody_factor(const BoundaryNgramModel& m,
                             const std::vector<std::string>& left_context,
                             const BoundaryHypothesis& wbh) {
  return prosody_choice(m, left_context, wbh).score;
}

// Boundary n-gram model file:
//   BOUNDARYNGRAM <order> <lambda>
//   EB <history...> :: <class> <count>
//   EW <history...> :: <word-class> <count>
inline std::string format_boundary_ngram(const BoundaryNgramModel& m) {
  std::ostringstream out;
  out << "BOUNDARYNGRAM " << m.order << " " << fmt_double(m.lambda) << "\n";
  for (const auto& [hist, counts] : m.boundary_counts)
    for (int i = 0; i < kNumBoundaryClasses; ++i) {
      if (counts[i] == 0) continue;
      out << "EB";
      for (const auto& t : hist) out << " " << t;
      out << " :: " << boundary_class_name(static_cast<BoundaryClass>(i)) << " "
          << fmt_double(counts[i]) << "\n";
    }
  for (const auto& [hist, counts] : m.word_counts)
    for (const auto& [w, c] : counts) {
      out << "EW";
      for (const auto& t : hist) out << " " << t;
      out << " :: " << w << " " << fmt_double(c) << "\n";
    }
  return out.str();
}

inline BoundaryNgramModel parse_boundary_ngram(const std::string& content) {
  BoundaryNgramModel m;
  bool header = false;
  std::set<std::string> words;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "BOUNDARYNGRAM") {
      if (tok.size() != 3) throw ParseError("bad BOUNDARYNGRAM header");
      m.order = static_cast<int>(parse_long(tok[1], "order"));
      m.lambda = parse_double(tok[2], "lambda");
      header = true;
    } else if (tok[0] == "EB" || tok[0] == "EW") {
      auto sep = std::find(tok.begin(), tok.end(), "::");
      if (sep == tok.end() || std::distance(sep, tok.end()) != 3)
        throw ParseError("bad event line: " + line);
      std::vector<std::string> hist(tok.begin() + 1, sep);
      const std::string& target = *(sep + 1);
      double count = parse_double(*(sep + 2), "count");
      if (tok[0] == "EB") {
        auto c = boundary_class_from(target);
        if (!c) throw ParseError("bad boundary class: " + target);
        m.boundary_counts[hist][static_cast<int>(*c)] += count;
      } else {
        m.word_counts[hist][target] += count;
        words.insert(target);
      }
      for (const auto& h : hist)
        if (!is_boundary_token(h)) words.insert(h);
    } else {
      throw ParseError("unknown boundary n-gram line: " + line);
    }
  }
  if (!header) throw ParseError("missing BOUNDARYNGRAM header");
  m.word_alphabet.assign(words.begin(), words.end());
  return m;
}

// One interleaved token sequence per line.
inline std::vector<std::vector<std::string>> parse_token_sequences(
    const std::string& content) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : content_lines(content)) out.push_back(split_ws(line));
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian boundary classifier: one full-covariance Gaussian per class,
// class priors from frequencies, posteriors as confidence.

struct GaussianClassifier {
  struct ClassModel {
    std::string label;
    double prior = 0;
    std::vector<double> mean;
    std::vector<double> cov;   // row-major d*d, regularized
    std::vector<double> chol;  // lower-triangular Cholesky factor of cov
    double log_det = 0;
  };
  int dim = 0;
  std::vector<ClassModel> classes;
};

namespace detail {

// Lower-triangular Cholesky of a symmetric positive definite matrix.
inline std::vector<double> cholesky(const std::vector<double>& a, int d) {
  std::vector<double> l(d * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[i * d + j];
      for (int k = 0; k < j; ++k) sum -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (sum <= 0) throw ValidationError("covariance is not positive definite");
        l[i * d + i] = std::sqrt(sum);
      } else {
        l[i * d + j] = sum / l[j * d + j];
      }
    }
  }
  return l;
}

// Squared Mahalanobis distance via forward substitution on the factor.
inline double mahalanobis2(const GaussianClassifier::ClassModel& c,
                           const std::vector<double>& x, int d) {
  std::vector<double> y(d);
  for (int i = 0; i < d; ++i) {
    double sum = x[i] - c.mean[i];
    for (int k = 0; k < i; ++k) sum -= c.chol[i * d + k] * y[k];
    y[i] = sum / c.chol[i * d + i];
  }
  double m2 = 0;
  for (int i = 0; i < d; ++i) m2 += y[i] * y[i];
  return m2;
}

}  // namespace detail

using LabeledVector = std::pair<std::string, std::vector<double>>;

inline GaussianClassifier train_gaussian(const std::vector<LabeledVector>& data,
                                         const std::vector<std::string>& class_labels) {
  if (data.empty()) throw ValidationError("no training vectors");
  int d = static_cast<int>(data[0].second.size());
  for (const auto& [label, x] : data)
    if (static_cast<int>(x.size()) != d)
      throw ValidationError("inconsistent feature dimension");
  GaussianClassifier g;
  g.dim = d;
  for (const auto& label : class_labels) {
    std::vector<const std::vector<double>*> xs;
    for (const auto& [l, x] : data)
      if (l == label) xs.push_back(&x);
    if (static_cast<int>(xs.size()) < d + 1)
      throw ValidationError("class '" + label + "' has too few samples (" +
                            std::to_string(xs.size()) + " < " + std::to_string(d + 1) +
                            ")");
    GaussianClassifier::ClassModel c;
    c.label = label;
    c.prior = static_cast<double>(xs.size()) / data.size();
    c.mean.assign(d, 0.0);
    for (const auto* x : xs)
      for (int i = 0; i < d; ++i) c.mean[i] += (*x)[i];
    for (int i = 0; i < d; ++i) c.mean[i] /= xs.size();
    c.cov.assign(d * d, 0.0);
    for (const auto* x : xs)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          c.cov[i * d + j] += ((*x)[i] - c.mean[i]) * ((*x)[j] - c.mean[j]);
    for (double& v : c.cov) v /= xs.size();
    double trace = 0;
    for (int i = 0; i < d; ++i) trace += c.cov[i * d + i];
    double eps = std::max(1e-6 * trace / d, 1e-12);
    for (int i = 0; i < d; ++i) c.cov[i * d + i] += eps;
    c.chol = detail::cholesky(c.cov, d);
    c.log_det = 0;
    for (int i = 0; i < d; ++i) c.log_det += 2.0 * std::log(c.chol[i * d + i]);
    g.classes.push_back(std::move(c));
  }
  return g;
}

struct Posterior {
  std::string label;
  double prob = 0;
};

// Posterior over classes; the hard decision is the argmax (first class on a
// tie). Invariant under scaling all priors by a common factor.
inline std::vector<Posterior> classify_boundary(const GaussianClassifier& g,
                                                const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != g.dim)
    throw ValidationError("feature vector has wrong dimension");
  std::vector<double> logp(g.classes.size());
  for (size_t i = 0; i < g.classes.size(); ++i) {
    const auto& c = g.classes[i];
    double m2 = detail::mahalanobis2(c, x, g.dim);
    logp[i] = std::log(c.prior) - 0.5 * (g.dim * std::log(2.0 * M_PI) + c.log_det + m2);
  }
  double lmax = *std::max_element(logp.begin(), logp.end());
  double z = 0;
  for (double lp : logp) z += std::exp(lp - lmax);
  std::vector<Posterior> out;
  for (size_t i = 0; i < g.classes.size(); ++i)
    out.push_back({g.classes[i].label, std::exp(logp[i] - lmax) / z});
  return out;
}

inline std::string hard_decision(const std::vector<Posterior>& posteriors) {
  size_t best = 0;
  for (size_t i = 1; i < posteriors.size(); ++i)
    if (posteriors[i].prob > posteriors[best].prob) best = i;
  return posteriors[best].label;
}

// Classifier file:
//   GAUSSIAN <dim>
//   CLASS <label> <prior>
//   MEAN <v...>
//   COV <row...>   (dim lines)
inline std::string format_gaussian(const GaussianClassifier& g) {
  std::ostringstream out;
  out << "GAUSSIAN " << g.dim << "\n";
  for (const auto& c : g.classes) {
    out << "CLASS " << c.label << " " << fmt_double(c.prior) << "\n";
    out << "MEAN";
    for (double v : c.mean) out << " " << fmt_double(v);
    out << "\n";
    for (int i = 0; i < g.dim; ++i) {
      out << "COV";
      for (int j = 0; j < g.dim; ++j) out << " " << fmt_double(c.cov[i * g.dim + j]);
      out << "\n";
    }
  }
  return out.str();
}

inline GaussianClassifier parse_gaussian(const std::string& content) {
  GaussianClassifier g;
  int cov_row = 0;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "GAUSSIAN") {
      g.dim = static_cast<int>(parse_long(tok.at(1), "dim"));
    } else if (tok[0] == "CLASS") {
      GaussianClassifier::ClassModel c;
      c.label = tok.at(1);
      c.prior = parse_double(tok.at(2), "prior");
      g.classes.push_back(std::move(c));
      cov_row = 0;
    } else if (tok[0] == "MEAN") {
      for (size_t i = 1; i < tok.size(); ++i)
        g.classes.back().mean.push_back(parse_double(tok[i], "mean"));
    } else if (tok[0] == "COV") {
      for (size_t i = 1; i < tok.size(); ++i)
        g.classes.back().cov.push_back(parse_double(tok[i], "cov"));
      ++cov_row;
    } else {
      throw ParseError("unknown gaussian line: " + line);
    }
  }
  if (g.dim <= 0 || g.classes.empty()) throw ParseError("bad gaussian model file");
  for (auto& c : g.classes) {
    if (static_cast<int>(c.mean.size()) != g.dim ||
        static_cast<int>(c.cov.size()) != g.dim * g.dim)
      throw ParseError("gaussian model dimensions do not match");
    c.chol = detail::cholesky(c.cov, g.dim);
    c.log_det = 0;
    for (int i = 0; i < g.dim; ++i) c.log_det += 2.0 * std::log(c.chol[i * g.dim + i]);
  }
  return g;
}

// One '<class> v1 ... vd' sample per line.
inline std::vector<LabeledVector> parse_labeled_vectors(const std::string& content) {
  std::vector<LabeledVector> out;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok.size() < 2) throw ParseError("bad feature line: " + line);
    LabeledVector lv;
    lv.first = tok[0];
    for (size_t i = 1; i < tok.size(); ++i)
      lv.second.push_back(parse_double(tok[i], "feature"));
    out.push_back(std::move(lv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rule-based focus detection on an F0-like contour.

struct Contour {
  std::vector<std::pair<int, double>> samples;  // (frame, value), frames increasing
};

inline Contour parse_contour(const std::string& content) {
  Contour c;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok.size() != 2) throw ParseError("bad contour line: " + line);
    c.samples.push_back({static_cast<int>(parse_long(tok[0], "frame")),
                         parse_double(tok[1], "value")});
  }
  for (size_t i = 1; i < c.samples.size(); ++i)
    if (c.samples[i].first <= c.samples[i - 1].first)
      throw ValidationError("contour frames must be strictly increasing");
  return c;
}

struct FocusHypothesis {
  int frame = 0;
  double confidence = 0;  // steepest-fall gradient magnitude, normalized to 1
};

namespace detail {

struct Extremum {
  int index = 0;
  bool is_max = false;
};

// Zigzag extrema with a significance threshold of 5% of the contour range.
inline std::vector<Extremum> significant_extrema(const std::vector<double>& v,
                                                 double threshold) {
  std::vector<Extremum> ext;
  int n = static_cast<int>(v.size());
  int hi = 0, lo = 0, dir = 0;
  for (int i = 1; i < n; ++i) {
    if (dir >= 0 && v[i] > v[hi]) hi = i;
    if (dir <= 0 && v[i] < v[lo]) lo = i;
    if (dir == 0) {
      if (v[hi] - v[i] >= threshold) {
        ext.push_back({hi, true});
        dir = -1;
        lo = i;
      } else if (v[i] - v[lo] >= threshold) {
        ext.push_back({lo, false});
        dir = 1;
        hi = i;
      }
    } else if (dir > 0) {
      if (v[hi] - v[i] >= threshold) {
        ext.push_back({hi, true});
        dir = -1;
        lo = i;
      }
    } else {
      if (v[i] - v[lo] >= threshold) {
        ext.push_back({lo, false});
        dir = 1;
        hi = i;
      }
    }
  }
  if (dir > 0) ext.push_back({hi, true});
  else if (dir < 0) ext.push_back({lo, false});
  return ext;
}

// Piecewise-linear interpolation through anchor points, constant outside.
inline std::vector<double> anchor_line(const std::vector<std::pair<double, double>>& anchors,
                                       const std::vector<double>& at) {
  std::vector<double> out(at.size());
  for (size_t i = 0; i < at.size(); ++i) {
    double x = at[i];
    if (x <= anchors.front().first) {
      out[i] = anchors.front().second;
    } else if (x >= anchors.back().first) {
      out[i] = anchors.back().second;
    } else {
      size_t j = 1;
      while (anchors[j].first < x) ++j;
      double x0 = anchors[j - 1].first, y0 = anchors[j - 1].second;
      double x1 = anchors[j].first, y1 = anchors[j].second;
      out[i] = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    }
  }
  return out;
}

}  // namespace detail

// Focus hypotheses, best first. The reference line is the average of the
// maximum and minimum lines through the significant extrema; each steep-fall
// point of the reference line is mapped to the nearest significant maximum.
// Invariant under adding a constant to the contour and under positive
// scaling (flatness is judged relative to the values).
inline std::vector<FocusHypothesis> detect_focus(const Contour& contour) {
  int n = static_cast<int>(contour.samples.size());
  if (n < 5) throw ValidationError("contour needs at least 5 samples");
  std::vector<double> frames(n), values(n);
  for (int i = 0; i < n; ++i) {
    frames[i] = contour.samples[i].first;
    values[i] = contour.samples[i].second;
  }
  double vmax = *std::max_element(values.begin(), values.end());
  double vmin = *std::min_element(values.begin(), values.end());
  double range = vmax - vmin;
  if (range <= 1e-9 * std::max({1.0, std::fabs(vmax), std::fabs(vmin)})) return {};

  auto ext = detail::significant_extrema(values, 0.05 * range);
  std::vector<std::pair<double, double>> max_anchors, min_anchors;
  for (const auto& e : ext)
    (e.is_max ? max_anchors : min_anchors).push_back({frames[e.index], values[e.index]});
  if (max_anchors.empty() || min_anchors.empty()) return {};

  auto max_line = detail::anchor_line(max_anchors, frames);
  auto min_line = detail::anchor_line(min_anchors, frames);
  std::vector<double> ref(n);
  for (int i = 0; i < n; ++i) ref[i] = 0.5 * (max_line[i] + min_line[i]);

  // Central-difference gradient of the reference line.
  std::vector<double> grad(n, 0.0);
  for (int i = 1; i + 1 < n; ++i)
    grad[i] = (ref[i + 1] - ref[i - 1]) / (frames[i + 1] - frames[i - 1]);
  grad[0] = grad[1];
  grad[n - 1] = grad[n - 2];

  // Local minima of the gradient; plateaus contribute their first index.
  std::vector<int> candidates;
  for (int i = 1; i + 1 < n; ++i) {
    if (grad[i] >= 0) continue;
    bool entering = grad[i] < grad[i - 1] || i == 1;
    if (entering && grad[i] <= grad[i + 1]) candidates.push_back(i);
  }
  if (candidates.empty()) return {};

  double steepest = 0;
  for (int i : candidates) steepest = std::min(steepest, grad[i]);
  if (steepest >= 0) return {};

  std::vector<FocusHypothesis> focuses;
  for (int i : candidates) {
    double best_dist = 0;
    int best_frame = -1;
    for (const auto& [f, v] : max_anchors) {
      double dist = std::fabs(f - frames[i]);
      if (best_frame < 0 || dist < best_dist) {
        best_dist = dist;
        best_frame = static_cast<int>(f);
      }
    }
    FocusHypothesis h;
    h.frame = best_frame;
    h.confidence = grad[i] / steepest;
    bool dup = false;
    for (auto& existing : focuses)
      if (existing.frame == h.frame) {
        existing.confidence = std::max(existing.confidence, h.confidence);
        dup = true;
        break;
      }
    if (!dup) focuses.push_back(h);
  }
  std::sort(focuses.begin(), focuses.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.frame < b.frame;
  });
  return focuses;
}

}  // namespace trellis
