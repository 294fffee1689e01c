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

#include <catch2/catch_amalgamated.hpp>

#include "trellis/prosody.hpp"

using namespace trellis;
using Catch::Matchers::WithinAbs;

namespace {

BoundaryHypothesis wbh_with(double b0, double b2, double b3, double b9) {
  BoundaryHypothesis b;
  b.start_frame = 0;
  b.end_frame = 2;
  b.class_scores = {b0, b2, b3, b9};
  return b;
}

BoundaryHypothesis uniform_wbh() {
  double l = std::log(0.25);
  return wbh_with(l, l, l, l);
}

GaussianClassifier manual_1d(std::vector<std::pair<double, double>> mean_prior) {
  GaussianClassifier g;
  g.dim = 1;
  int i = 0;
  for (auto [mean, prior] : mean_prior) {
    GaussianClassifier::ClassModel c;
    c.label = "c" + std::to_string(i++);
    c.prior = prior;
    c.mean = {mean};
    c.cov = {1.0};
    c.chol = {1.0};
    c.log_det = 0.0;
    g.classes.push_back(std::move(c));
  }
  return g;
}

Contour make_contour(const std::vector<double>& values) {
  Contour c;
  for (size_t i = 0; i < values.size(); ++i)
    c.samples.push_back({static_cast<int>(i), values[i]});
  return c;
}

// Rise to a peak at `apex`, then fall with the given slope.
std::vector<double> rise_fall(int apex, int len, double up, double down) {
  std::vector<double> v(len);
  for (int i = 0; i < len; ++i)
    v[i] = i <= apex ? up * i : up * apex + down * (i - apex);
  return v;
}

}  // namespace

TEST_CASE("prosody factor with a certain boundary and model is zero", "[prosody]") {
  // Every junction in training continues with B0, so P(B0 | [N]) = 1 when
  // lambda is 0; a B0-certain hypothesis then scores exactly 0.
  BoundaryNgramModel m = train_boundary_ngram({{"N", "B0", "N"}}, 3, 0.0);
  BoundaryHypothesis b = wbh_with(0.0, kLogZero, kLogZero, kLogZero);
  CHECK_THAT(prosody_factor(m, {"N"}, b), WithinAbs(0.0, 1e-12));
}

TEST_CASE("prosody factor in the uniform case", "[prosody]") {
  BoundaryNgramModel m = train_boundary_ngram({{"N", "B0", "N"}}, 4, 0.1);
  // Unseen history backs off to the uniform boundary distribution.
  CHECK_THAT(prosody_factor(m, {"X"}, uniform_wbh()),
             WithinAbs(std::log(0.25) + std::log(0.25), 1e-12));
}

TEST_CASE("prosody factor maximizes over the four classes", "[prosody]") {
  // Six-token training sequence: N B3 V B0 N B2.
  BoundaryNgramModel m = train_boundary_ngram({{"N", "B3", "V", "B0", "N", "B2"}}, 4, 0.1);
  std::vector<std::string> hist = {"V", "B0", "N"};
  // Counts at this history: B2 once. Smoothed: B2 (1+.1)/(1+.4), rest .1/1.4.
  double p_b2 = std::log(1.1 / 1.4), p_rest = std::log(0.1 / 1.4);
  SECTION("the model can decide") {
    auto choice = prosody_choice(m, hist, uniform_wbh());
    CHECK(choice.chosen == BoundaryClass::B2);
    CHECK_THAT(choice.score, WithinAbs(std::log(0.25) + p_b2, 1e-12));
  }
  SECTION("strong acoustics override the model") {
    BoundaryHypothesis b = wbh_with(std::log(0.97), std::log(0.01), std::log(0.01),
                                    std::log(0.01));
    auto choice = prosody_choice(m, hist, b);
    CHECK(choice.chosen == BoundaryClass::B0);
    CHECK_THAT(choice.score, WithinAbs(std::log(0.97) + p_rest, 1e-12));
  }
}

TEST_CASE("prosody factor is monotone in the acoustic scores", "[prosody]") {
  BoundaryNgramModel m =
      train_boundary_ngram({{"N", "B3", "V", "B0", "N", "B2"}, {"V", "B2", "N"}}, 4, 0.1);
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    double w[4];
    double total = 0;
    for (auto& v : w) {
      v = rng.uniform(0.05, 1.0);
      total += v;
    }
    BoundaryHypothesis b =
        wbh_with(std::log(w[0] / total), std::log(w[1] / total),
                 std::log(w[2] / total), std::log(w[3] / total));
    std::vector<std::string> hist = {trial % 2 ? "N" : "V"};
    double base = prosody_factor(m, hist, b);
    int cls = rng.below(4);
    BoundaryHypothesis raised = b;
    raised.class_scores[cls] += rng.uniform(0.0, 1.0);  // raise one class
    CHECK(prosody_factor(m, hist, raised) >= base - 1e-12);
  }
}

TEST_CASE("interleaving is enforced", "[prosody]") {
  CHECK_THROWS_AS(train_boundary_ngram({{"N", "B0", "B2"}}, 4, 0.1), ValidationError);
  CHECK_THROWS_AS(train_boundary_ngram({{"B0", "N"}}, 4, 0.1), ValidationError);
  BoundaryNgramModel m = train_boundary_ngram({{"N", "B0", "N"}}, 4, 0.1);
  // Histories ending in a boundary token never predict another boundary.
  CHECK(boundary_logprob(m, {"N", "B0"}, BoundaryClass::B0) == kLogZero);
  CHECK_THROWS_AS(prosody_factor(m, {"N", "B0"}, uniform_wbh()), ValidationError);
}

TEST_CASE("boundary distributions normalize per history", "[prosody]") {
  BoundaryNgramModel m =
      train_boundary_ngram({{"N", "B3", "V", "B0", "N", "B2"}, {"V", "B2", "N"}}, 4, 0.1);
  for (const auto& hist : std::vector<std::vector<std::string>>{
           {"V", "B0", "N"}, {"N"}, {"V"}, {"unseen"}}) {
    double sum = 0;
    for (int c = 0; c < kNumBoundaryClasses; ++c)
      sum += std::exp(boundary_logprob(m, hist, static_cast<BoundaryClass>(c)));
    CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("boundary n-gram files round-trip", "[prosody]") {
  BoundaryNgramModel m =
      train_boundary_ngram({{"N", "B3", "V", "B0", "N", "B2"}, {"V", "B2", "N"}}, 4, 0.1);
  BoundaryNgramModel back = parse_boundary_ngram(format_boundary_ngram(m));
  CHECK(back.order == m.order);
  for (const auto& hist :
       std::vector<std::vector<std::string>>{{"V", "B0", "N"}, {"N"}, {"V"}, {"Z"}})
    for (int c = 0; c < kNumBoundaryClasses; ++c)
      CHECK_THAT(boundary_logprob(back, hist, static_cast<BoundaryClass>(c)),
                 WithinAbs(boundary_logprob(m, hist, static_cast<BoundaryClass>(c)),
                           1e-12));
}

TEST_CASE("gaussian training recovers sample means", "[prosody]") {
  std::vector<LabeledVector> data = {
      {"lo", {0.0}}, {"lo", {0.1}}, {"hi", {5.0}}, {"hi", {5.1}}};
  GaussianClassifier g = train_gaussian(data, {"lo", "hi"});
  CHECK_THAT(g.classes[0].mean[0], WithinAbs(0.05, 1e-12));
  CHECK_THAT(g.classes[1].mean[0], WithinAbs(5.05, 1e-12));
  CHECK_THAT(g.classes[0].prior, WithinAbs(0.5, 1e-12));
}

TEST_CASE("a class with too few samples is an error", "[prosody]") {
  std::vector<LabeledVector> data = {
      {"a", {0.0, 0.0}}, {"a", {1.0, 0.0}}, {"a", {0.0, 1.0}}, {"b", {5.0, 5.0}},
      {"b", {6.0, 5.0}}};
  CHECK_THROWS_WITH(train_gaussian(data, {"a", "b"}),
                    Catch::Matchers::ContainsSubstring("'b'"));
}

TEST_CASE("identical classes classify by prior", "[prosody]") {
  std::vector<LabeledVector> data = {{"a", {0.0}}, {"a", {1.0}}, {"a", {0.0}},
                                     {"a", {1.0}}, {"b", {0.0}}, {"b", {1.0}}};
  GaussianClassifier g = train_gaussian(data, {"a", "b"});
  auto post = classify_boundary(g, {0.3});
  CHECK_THAT(post[0].prob, WithinAbs(2.0 / 3.0, 1e-9));
  CHECK_THAT(post[1].prob, WithinAbs(1.0 / 3.0, 1e-9));
}

TEST_CASE("posterior ratio matches the hand-computed densities", "[prosody]") {
  // Means 0 and 2, unit variance, uniform priors, x = 0.5:
  // exp(-0.125)/exp(-1.125) = e.
  GaussianClassifier g = manual_1d({{0.0, 0.5}, {2.0, 0.5}});
  auto post = classify_boundary(g, {0.5});
  CHECK_THAT(post[0].prob / post[1].prob, WithinAbs(std::exp(1.0), 1e-9));
  CHECK_THAT(post[0].prob + post[1].prob, WithinAbs(1.0, 1e-9));
}

TEST_CASE("posteriors are invariant under prior scaling", "[prosody]") {
  GaussianClassifier a = manual_1d({{0.0, 0.2}, {2.0, 0.8}});
  GaussianClassifier b = manual_1d({{0.0, 0.2 * 7}, {2.0, 0.8 * 7}});
  auto pa = classify_boundary(a, {0.7});
  auto pb = classify_boundary(b, {0.7});
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK_THAT(pa[i].prob, WithinAbs(pb[i].prob, 1e-12));
}

TEST_CASE("class means win under equal spherical covariances", "[prosody]") {
  GaussianClassifier g = manual_1d({{0.0, 0.5}, {2.0, 0.5}});
  auto at_mean = classify_boundary(g, {0.0});
  CHECK(at_mean[0].prob > at_mean[1].prob);
  CHECK(hard_decision(at_mean) == "c0");
  auto equidistant = classify_boundary(g, {1.0});
  CHECK_THAT(equidistant[0].prob, WithinAbs(equidistant[1].prob, 1e-12));
}

TEST_CASE("four synthetic gaussians are recovered", "[prosody]") {
  Rng rng(2026);
  std::vector<std::vector<double>> means = {
      {0, 0, 0}, {8, 0, 0}, {0, 8, 0}, {0, 0, 8}};
  std::vector<std::string> labels = {"B0", "B2", "B3", "B9"};
  std::vector<LabeledVector> data;
  for (int c = 0; c < 4; ++c)
    for (int s = 0; s < 100; ++s) {
      std::vector<double> x(3);
      for (int d = 0; d < 3; ++d) x[d] = means[c][d] + rng.gaussian();
      data.push_back({labels[c], x});
    }
  GaussianClassifier g = train_gaussian(data, labels);
  // Sample means land within 3 sigma / sqrt(100) of the truth.
  for (int c = 0; c < 4; ++c)
    for (int d = 0; d < 3; ++d)
      CHECK_THAT(g.classes[c].mean[d], WithinAbs(means[c][d], 0.3));
  auto post = classify_boundary(g, {8, 0, 0});
  CHECK(hard_decision(post) == "B2");
  double sum = 0;
  for (const auto& p : post) sum += p.prob;
  CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
}

TEST_CASE("gaussian classifier files round-trip", "[prosody]") {
  std::vector<LabeledVector> data = {
      {"lo", {0.0}}, {"lo", {0.4}}, {"hi", {5.0}}, {"hi", {5.4}}};
  GaussianClassifier g = train_gaussian(data, {"lo", "hi"});
  GaussianClassifier back = parse_gaussian(format_gaussian(g));
  auto pa = classify_boundary(g, {2.0});
  auto pb = classify_boundary(back, {2.0});
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK_THAT(pa[i].prob, WithinAbs(pb[i].prob, 1e-12));
}

TEST_CASE("flat contours give no focus", "[prosody]") {
  CHECK(detect_focus(make_contour({3, 3, 3, 3, 3, 3})).empty());
  CHECK_THROWS_AS(detect_focus(make_contour({1, 2, 3})), ValidationError);
}

TEST_CASE("a rise-then-steep-fall contour focuses on the apex", "[prosody]") {
  std::vector<double> v = rise_fall(10, 21, 1.0, -3.0);
  auto focus = detect_focus(make_contour(v));
  REQUIRE_FALSE(focus.empty());
  CHECK(focus[0].frame == 10);
  CHECK_THAT(focus[0].confidence, WithinAbs(1.0, 1e-12));
}

TEST_CASE("the steeper of two falls wins", "[prosody]") {
  // Peaks at 5 and 15; the second fall is twice as steep, so the focus is
  // the maximum preceding the second fall.
  std::vector<double> v(21);
  for (int i = 0; i <= 5; ++i) v[i] = 2.0 * i;
  for (int i = 6; i <= 10; ++i) v[i] = 10.0 - 2.5 * (i - 5);
  for (int i = 11; i <= 15; ++i) v[i] = -2.5 + 2.5 * (i - 10);
  for (int i = 16; i <= 20; ++i) v[i] = 10.0 - 5.0 * (i - 15);
  auto focus = detect_focus(make_contour(v));
  REQUIRE(focus.size() == 2);
  CHECK(focus[0].frame == 15);
  CHECK_THAT(focus[0].confidence, WithinAbs(1.0, 1e-12));
  CHECK(focus[1].frame == 5);
  CHECK_THAT(focus[1].confidence, WithinAbs(0.2, 1e-9));
}

TEST_CASE("focus detection is shift and scale invariant", "[prosody]") {
  std::vector<double> base(21);
  for (int i = 0; i <= 5; ++i) base[i] = 2.0 * i;
  for (int i = 6; i <= 10; ++i) base[i] = 10.0 - 2.5 * (i - 5);
  for (int i = 11; i <= 15; ++i) base[i] = -2.5 + 2.5 * (i - 10);
  for (int i = 16; i <= 20; ++i) base[i] = 10.0 - 5.0 * (i - 15);
  auto reference = detect_focus(make_contour(base));
  for (auto [shift, scale] : std::vector<std::pair<double, double>>{
           {37.5, 1.0}, {0.0, 100.0}, {-12.25, 0.5}, {1000.0, 3.0}}) {
    std::vector<double> v = base;
    for (auto& x : v) x = x * scale + shift;
    auto focus = detect_focus(make_contour(v));
    REQUIRE(focus.size() == reference.size());
    for (size_t i = 0; i < focus.size(); ++i) {
      CHECK(focus[i].frame == reference[i].frame);
      CHECK_THAT(focus[i].confidence, WithinAbs(reference[i].confidence, 1e-9));
    }
  }
}

TEST_CASE("contour files parse", "[prosody]") {
  Contour c = parse_contour("0 1.5\n2 2.5\n5 0.5\n");
  REQUIRE(c.samples.size() == 3);
  CHECK(c.samples[1] == std::pair<int, double>{2, 2.5});
  CHECK_THROWS_AS(parse_contour("0 1.0\n0 2.0\n"), ValidationError);
  CHECK_THROWS_AS(parse_contour("0\n"), ParseError);
}

TEST_CASE("labeled feature vectors parse", "[prosody]") {
  auto data = parse_labeled_vectors("B3 0.5 1.5\nB0 -1 2\n");
  REQUIRE(data.size() == 2);
  CHECK(data[0].first == "B3");
  CHECK(data[0].second == std::vector<double>{0.5, 1.5});
}
