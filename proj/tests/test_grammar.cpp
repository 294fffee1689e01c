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

#include "trellis/grammar.hpp"
#include "trellis/semparser.hpp"
#include "trellis/treebank.hpp"

using namespace trellis;

namespace {

// Four-word utterances have exactly two bracketings: x covers one word and
// y three, or two and two.
const char* kAmbiguousGrammar = R"((types utt x y n)
(rule r1 (mother (utt)) (daughters (x) (y)))
(rule r2 (mother (x)) (daughters (n)))
(rule r3 (mother (x)) (daughters (n) (n)))
(rule r4 (mother (y)) (daughters (n) (n)))
(rule r5 (mother (y)) (daughters (n) (n) (n)))
(lex a (n))
(start utt))";

const char* kAgreementGrammar = R"((types utt n v agrv (sg agrv) (pl agrv))
(rule r1 (mother (utt (agr #1=agrv))) (daughters (n (agr #1)) (v (agr #1))))
(lex hund (n (agr sg)))
(lex hunde (n (agr pl)))
(lex bellt (v (agr sg)))
(lex bellen (v (agr pl)))
(start utt))";

int skel_rule(const SkeletonGrammar& skel, const std::string& id) {
  for (size_t i = 0; i < skel.rules.size(); ++i)
    if (skel.rules[i].id == id) return static_cast<int>(i);
  FAIL("no rule " + id);
  return -1;
}

}  // namespace

TEST_CASE("strip preserves rule cardinality and arity", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  REQUIRE(skel.rules.size() == g.rules.size());
  for (size_t i = 0; i < skel.rules.size(); ++i) {
    CHECK(skel.rules[i].id == g.rules[i].id);
    CHECK(skel.rules[i].unif_index == static_cast<int>(i));
    CHECK(skel.rules[i].rhs.size() == g.rules[i].daughters.size());
  }
  CHECK(skel.rules[skel_rule(skel, "r5")].rhs.size() == 3);
}

TEST_CASE("empty grammars are rejected", "[grammar]") {
  CHECK_THROWS_AS(parse_grammar("(types x)\n(start x)"), ValidationError);
  UnificationGrammar g;
  CHECK_THROWS_AS(strip_grammar(g), ValidationError);
}

TEST_CASE("grammar validation", "[grammar]") {
  // Lexical category that no rule mentions.
  CHECK_THROWS_AS(parse_grammar(R"((types utt n z)
(rule r1 (mother (utt)) (daughters (n)))
(lex a (n))
(lex b (z))
(start utt))"),
                  ValidationError);
  // Duplicate lexical entry for the same (word, category).
  CHECK_THROWS_AS(parse_grammar(R"((types utt n agrv (sg agrv))
(rule r1 (mother (utt)) (daughters (n)))
(lex a (n) (n (agr sg)))
(start utt))"),
                  ValidationError);
  // Untyped mother.
  UnificationGrammar g = parse_grammar(R"((types utt n)
(rule r1 (mother (top)) (daughters (n)))
(lex a (n))
(start utt))");
  CHECK_THROWS_AS(strip_grammar(g), ValidationError);
}

TEST_CASE("treebank building keeps every licensed reading", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);

  SECTION("unambiguous utterance has one tree") {
    TreeBank bank = build_treebank(g, skel, {{"a", "a", "a"}});
    REQUIRE(bank.entries.size() == 1);
    CHECK(bank.entries[0].trees.size() == 1);
    CHECK(skel_tree_to_string(bank.entries[0].trees[0], skel) == "(r1 (r2 a) (r4 a a))");
  }

  SECTION("planted attachment ambiguity yields both trees") {
    TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}});
    REQUIRE(bank.entries.size() == 1);
    REQUIRE(bank.entries[0].trees.size() == 2);
    std::set<std::string> forms;
    for (const auto& t : bank.entries[0].trees)
      forms.insert(skel_tree_to_string(t, skel));
    CHECK(forms == std::set<std::string>{"(r1 (r2 a) (r5 a a a))",
                                         "(r1 (r3 a a) (r4 a a))"});
  }

  SECTION("unparseable utterances keep an empty tree set") {
    TreeBank bank = build_treebank(g, skel, {{"a"}});
    REQUIRE(bank.entries.size() == 1);
    CHECK(bank.entries[0].trees.empty());
  }

  SECTION("out-of-lexicon words are a precondition error") {
    CHECK_THROWS_AS(build_treebank(g, skel, {{"a", "zzz"}}), ValidationError);
  }
}

TEST_CASE("unification filters skeleton readings", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAgreementGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank ok = build_treebank(g, skel, {{"hund", "bellt"}});
  CHECK(ok.entries[0].trees.size() == 1);
  // Skeleton-licensed but agreement-clashing.
  TreeBank clash = build_treebank(g, skel, {{"hunde", "bellt"}});
  CHECK(clash.entries[0].trees.empty());
}

TEST_CASE("treebank serialization round-trips", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a"}});
  TreeBank back = parse_treebank(format_treebank(bank, skel), skel);
  REQUIRE(back.entries.size() == bank.entries.size());
  for (size_t i = 0; i < bank.entries.size(); ++i) {
    CHECK(back.entries[i].words == bank.entries[i].words);
    REQUIRE(back.entries[i].trees.size() == bank.entries[i].trees.size());
    for (size_t t = 0; t < bank.entries[i].trees.size(); ++t)
      CHECK(skel_tree_to_string(back.entries[i].trees[t], skel) ==
            skel_tree_to_string(bank.entries[i].trees[t], skel));
  }
}

TEST_CASE("EM training weights symmetric readings equally", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a", "a", "a"}});
  TrainOptions opt;
  TrainResult result = train_context_model(skel, bank, 2, opt);
  const ContextModel& m = result.model;

  // Hand EM: the two four-word readings are mirror images, so their weights
  // stay 0.5 and the weighted counts are r2: 1.5, r3: 0.5 in the
  // (x, parent r1, no sibling) context (the three-word utterance adds 1 to
  // r2), and r4: 1.5, r5: 0.5 in the (y, parent r1, sibling x) context.
  int r1 = skel_rule(skel, "r1"), r2 = skel_rule(skel, "r2");
  int r3 = skel_rule(skel, "r3"), r4 = skel_rule(skel, "r4");
  int r5 = skel_rule(skel, "r5");
  ContextKey x_ctx{g.types.require("x"), r1, ContextKey::kNone};
  ContextKey y_ctx{g.types.require("y"), r1, g.types.require("x")};
  ContextKey root_ctx{g.types.require("utt"), ContextKey::kNone, ContextKey::kNone};

  // Smoothed relative frequencies, lambda = 0.1 over 2 applicable rules.
  CHECK_THAT(rule_probability(m, skel, r2, x_ctx),
             Catch::Matchers::WithinAbs((1.5 + 0.1) / (2.0 + 0.2), 1e-9));
  CHECK_THAT(rule_probability(m, skel, r3, x_ctx),
             Catch::Matchers::WithinAbs((0.5 + 0.1) / (2.0 + 0.2), 1e-9));
  CHECK_THAT(rule_probability(m, skel, r4, y_ctx),
             Catch::Matchers::WithinAbs((1.5 + 0.1) / (2.0 + 0.2), 1e-9));
  CHECK_THAT(rule_probability(m, skel, r5, y_ctx),
             Catch::Matchers::WithinAbs((0.5 + 0.1) / (2.0 + 0.2), 1e-9));
  // Only one rule can expand the root, so its probability is exactly one.
  CHECK(rule_probability(m, skel, r1, root_ctx) == 1.0);

  // Log-likelihood must never decrease over EM iterations.
  for (size_t i = 1; i < result.log_likelihood.size(); ++i)
    CHECK(result.log_likelihood[i] >= result.log_likelihood[i - 1] - 1e-9);
}

TEST_CASE("unseen contexts back off to the order-0 distribution", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a", "a", "a"}});
  ContextModel m = train_context_model(skel, bank, 2).model;
  int r2 = skel_rule(skel, "r2");
  // r2 was never a parent of x, so orders 2 and 1 miss and the query lands
  // on the order-0 counts (r2: 1.5, r3: 0.5), not on the uniform fallback.
  ContextKey bogus{g.types.require("x"), r2, ContextKey::kNone};
  CHECK_THAT(rule_probability(m, skel, r2, bogus),
             Catch::Matchers::WithinAbs((1.5 + 0.1) / (2.0 + 0.2), 1e-9));
}

TEST_CASE("rule probabilities normalize per context", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a", "a", "a"}});
  SkeletonGrammar trained = skel;
  trained.context_model = train_context_model(skel, bank, 2).model;
  int r1 = skel_rule(skel, "r1");
  std::vector<ContextKey> contexts = {
      {g.types.require("x"), r1, ContextKey::kNone},
      {g.types.require("y"), r1, g.types.require("x")},
      {g.types.require("utt"), ContextKey::kNone, ContextKey::kNone},
      {g.types.require("x"), skel_rule(skel, "r4"), g.types.require("y")},  // unseen
  };
  for (const auto& ctx : contexts) {
    double sum = 0;
    for (int r : trained.applicable(ctx.cat)) sum += rule_probability(trained, r, ctx);
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  // Uniform initialization normalizes too.
  SkeletonGrammar uniform = strip_grammar(g);
  double sum = 0;
  for (int r : uniform.applicable(g.types.require("x")))
    sum += rule_probability(uniform, r, contexts[0]);
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  CHECK_THAT(rule_probability(uniform, skel_rule(skel, "r2"), contexts[0]),
             Catch::Matchers::WithinAbs(0.5, 1e-9));
}

TEST_CASE("inapplicable rules are rejected", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  ContextKey x_ctx{g.types.require("x"), ContextKey::kNone, ContextKey::kNone};
  CHECK_THROWS_AS(rule_probability(skel, skel_rule(skel, "r4"), x_ctx), ValidationError);
}

TEST_CASE("training falls back to order 0 when contexts are singletons", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  // One unambiguous tree: every order-2 context occurs exactly once.
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a"}});
  TrainResult result = train_context_model(skel, bank, 2);
  CHECK(result.model.fallback_warning);
  CHECK(result.model.order == 0);
}

TEST_CASE("viterbi training picks a single reading", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a", "a", "a"}});
  TrainOptions opt;
  opt.viterbi = true;
  ContextModel m = train_context_model(skel, bank, 2, opt).model;
  // The hard assignment puts weight 1 on one four-word reading, so the x
  // context holds integer counts summing to 2.
  ContextKey x_ctx{g.types.require("x"), skel_rule(skel, "r1"), ContextKey::kNone};
  double total = 0;
  for (const auto& [rule, c] : m.counts.at(x_ctx)) total += c;
  CHECK_THAT(total, Catch::Matchers::WithinAbs(2.0, 1e-9));
}

TEST_CASE("context model serialization round-trips", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAmbiguousGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"a", "a", "a", "a"}, {"a", "a", "a"}});
  ContextModel m = train_context_model(skel, bank, 2).model;
  ContextModel back = parse_context_model(format_context_model(m, skel, g), skel, g);
  CHECK(back.order == m.order);
  CHECK(back.lambda == m.lambda);
  REQUIRE(back.counts.size() == m.counts.size());
  for (const auto& [key, rules] : m.counts) {
    REQUIRE(back.counts.count(key) == 1);
    for (const auto& [rule, c] : rules)
      CHECK_THAT(back.counts.at(key).at(rule), Catch::Matchers::WithinAbs(c, 1e-12));
  }
}

TEST_CASE("treebank trees re-unify against the full grammar", "[grammar]") {
  UnificationGrammar g = parse_grammar(kAgreementGrammar);
  SkeletonGrammar skel = strip_grammar(g);
  TreeBank bank = build_treebank(g, skel, {{"hunde", "bellen"}});
  REQUIRE(bank.entries[0].trees.size() == 1);
  auto fs = reconstruct_skel_tree(g, skel, bank.entries[0].trees[0]);
  REQUIRE(fs.has_value());
  // The mother's agreement was forced to plural by the re-entrancy.
  int agr = g.types.intern_feature("agr");
  bool found = false;
  for (auto [f, c] : fs->nodes[0].arcs)
    if (f == agr) {
      CHECK(fs->nodes[c].type == g.types.require("pl"));
      found = true;
    }
  CHECK(found);
}
