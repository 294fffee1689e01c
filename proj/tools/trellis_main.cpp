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

#include <CLI11.hpp>

#include <iostream>

#include "trellis/testing/generators.hpp"
#include "trellis/trellis.hpp"

using namespace trellis;

namespace {

struct CommonOptions {
  std::string weights = "1,1,1";
  double beam_offset = 10.0;
  int nbest = 4;
  bool topdown = false;
  bool boundaries = false;
  std::string scheduler = "det";
  uint64_t seed = 1;

  Weights parse_weights() const {
    auto parts = split_ws([this] {
      std::string s = weights;
      std::replace(s.begin(), s.end(), ',', ' ');
      return s;
    }());
    if (parts.size() != 3)
      throw ValidationError("--weights expects three comma-separated numbers");
    Weights w;
    w.decoder = parse_double(parts[0], "decoder weight");
    w.grammar = parse_double(parts[1], "grammar weight");
    w.prosody = parse_double(parts[2], "prosody weight");
    return w;
  }
};

struct ModelPaths {
  std::string grammar;
  std::string context_model;
  std::string bigram;
  std::string prosody;
};

struct LoadedModels {
  UnificationGrammar grammar;
  SkeletonGrammar skel;
  WordBigram bigram;
  BoundaryNgramModel boundary;
  bool has_boundary = false;
};

LoadedModels load_models(const ModelPaths& paths) {
  LoadedModels m;
  m.grammar = load_grammar(paths.grammar);
  m.skel = strip_grammar(m.grammar);
  if (!paths.context_model.empty())
    m.skel.context_model =
        parse_context_model(read_file(paths.context_model), m.skel, m.grammar);
  if (!paths.bigram.empty()) m.bigram = parse_word_bigram(read_file(paths.bigram));
  if (!paths.prosody.empty()) {
    m.boundary = parse_boundary_ngram(read_file(paths.prosody));
    m.has_boundary = true;
  }
  return m;
}

void add_model_options(CLI::App* cmd, ModelPaths& paths, bool grammar_required = true) {
  auto* g = cmd->add_option("--grammar", paths.grammar, "grammar file");
  if (grammar_required) g->required();
  cmd->add_option("--model", paths.context_model, "trained context model file");
  cmd->add_option("--bigram", paths.bigram, "word-class bigram file");
  cmd->add_option("--prosody", paths.prosody, "boundary n-gram model file");
}

PipelineConfig pipeline_config(const CommonOptions& common, bool has_boundary) {
  PipelineConfig cfg;
  cfg.weights = common.parse_weights();
  cfg.beam_offset = common.beam_offset;
  cfg.nbest = common.nbest;
  cfg.topdown = common.topdown;
  cfg.use_prosody = common.boundaries;
  if (!common.boundaries) cfg.weights.prosody = 0.0;
  if (common.boundaries && !has_boundary)
    throw ValidationError("--boundaries needs a --prosody model");
  if (common.scheduler == "det") cfg.scheduler = SchedulerMode::Deterministic;
  else if (common.scheduler == "conc") cfg.scheduler = SchedulerMode::Concurrent;
  else throw ValidationError("--scheduler must be det or conc");
  return cfg;
}

int cmd_train_grammar(const std::string& grammar_path, const std::string& corpus_path,
                      int order, double lambda, bool viterbi,
                      const std::string& out_treebank, const std::string& out_model) {
  UnificationGrammar g = load_grammar(grammar_path);
  SkeletonGrammar skel = strip_grammar(g);
  auto corpus = parse_corpus(read_file(corpus_path));
  TreeBank bank = build_treebank(g, skel, corpus);
  long parsed = 0, trees = 0;
  for (const auto& e : bank.entries) {
    parsed += e.trees.empty() ? 0 : 1;
    trees += static_cast<long>(e.trees.size());
  }
  TrainOptions opt;
  opt.lambda = lambda;
  opt.viterbi = viterbi;
  TrainResult result = train_context_model(skel, bank, order, opt);
  if (!out_treebank.empty()) write_file(out_treebank, format_treebank(bank, skel));
  if (!out_model.empty())
    write_file(out_model, format_context_model(result.model, skel, g));
  std::cout << "utterances " << bank.entries.size() << " parsed " << parsed
            << " trees " << trees << "\n";
  std::cout << "order " << result.model.order
            << (result.model.fallback_warning ? " (fell back to 0: singleton contexts)"
                                              : "")
            << " iterations " << result.log_likelihood.size() << " loglik "
            << fmt_double(result.log_likelihood.back()) << "\n";
  return 0;
}

int cmd_train_prosody(const std::string& features_path, const std::string& tokens_path,
                      int order, double lambda, const std::string& out_gaussian,
                      const std::string& out_ngram) {
  if (features_path.empty() && tokens_path.empty())
    throw ValidationError("train-prosody needs --features and/or --tokens");
  if (!features_path.empty()) {
    auto data = parse_labeled_vectors(read_file(features_path));
    std::set<std::string> labels;
    for (const auto& [l, x] : data) labels.insert(l);
    GaussianClassifier g =
        train_gaussian(data, {labels.begin(), labels.end()});
    if (out_gaussian.empty())
      throw ValidationError("--features needs --out-gaussian");
    write_file(out_gaussian, format_gaussian(g));
    std::cout << "gaussian classes " << g.classes.size() << " dim " << g.dim << "\n";
  }
  if (!tokens_path.empty()) {
    auto seqs = parse_token_sequences(read_file(tokens_path));
    BoundaryNgramModel m = train_boundary_ngram(seqs, order, lambda);
    if (out_ngram.empty()) throw ValidationError("--tokens needs --out-ngram");
    write_file(out_ngram, format_boundary_ngram(m));
    std::cout << "boundary n-gram order " << m.order << " histories "
              << m.boundary_counts.size() << "\n";
  }
  return 0;
}

int cmd_train_lm(const std::string& corpus_path, int order, double lambda,
                 const std::string& out) {
  TaggedCorpus corpus = parse_tagged_corpus(read_file(corpus_path));
  ClassNgramModel m = train_class_ngram(corpus, order, lambda);
  if (!out.empty()) write_file(out, format_class_ngram(m));
  std::cout << "classes " << m.class_inventory.size() << " train-perplexity "
            << fmt_double(perplexity(m, corpus.utterances)) << "\n";
  return 0;
}

int cmd_cluster(const std::string& corpus_path, int k, const std::string& method,
                const std::string& variant, uint64_t seed, double lambda,
                const std::string& heldout_path) {
  TaggedCorpus corpus = parse_tagged_corpus(read_file(corpus_path));
  std::optional<TaggedCorpus> heldout;
  if (!heldout_path.empty()) heldout = parse_tagged_corpus(read_file(heldout_path));

  ClassNgramModel pooled2 = train_class_ngram(corpus, 2, lambda);
  ClassNgramModel pooled3 = train_class_ngram(corpus, 3, lambda);
  std::vector<std::pair<std::string, double>> summary;

  auto report = [&](const std::string& name, const SpeakerPartition& p, int order) {
    const ClassNgramModel& pooled = order == 3 ? pooled3 : pooled2;
    std::cout << "== " << name << " ==\n";
    std::map<int, std::vector<std::string>> by_cluster;
    for (const auto& [s, c] : p.assignment) by_cluster[c].push_back(s);
    for (const auto& [c, members] : by_cluster) {
      std::cout << "cluster " << c << ":";
      for (const auto& s : members) std::cout << " " << s;
      std::cout << "\n";
    }
    auto pp_of = [&](const std::vector<TaggedUtterance>& utts, bool clustered) {
      double ll = 0;
      long n = 0;
      for (const auto& u : utts) {
        const ClassNgramModel& m =
            clustered ? p.models[p.assignment.at(u.speaker)] : pooled;
        ll += utterance_loglik(m, u);
        n += static_cast<long>(u.tokens.size());
      }
      return std::exp(-ll / std::max<long>(n, 1));
    };
    double train_pooled = pp_of(corpus.utterances, false);
    double train_clustered = pp_of(corpus.utterances, true);
    double reduction = 100.0 * (train_pooled - train_clustered) / train_pooled;
    std::cout << "train perplexity pooled " << fmt_double(train_pooled) << " clustered "
              << fmt_double(train_clustered) << " reduction " << fmt_double(reduction)
              << "%\n";
    if (heldout) {
      double h_pooled = pp_of(heldout->utterances, false);
      double h_clustered = pp_of(heldout->utterances, true);
      reduction = 100.0 * (h_pooled - h_clustered) / h_pooled;
      std::cout << "held-out perplexity pooled " << fmt_double(h_pooled) << " clustered "
                << fmt_double(h_clustered) << " reduction " << fmt_double(reduction)
                << "%\n";
    }
    summary.push_back({name, reduction});
  };

  if (method == "kmeans") {
    KmeansOptions opt;
    opt.lambda = lambda;
    report("kmeans", kmeans_speakers(corpus, k, seed, opt), 2);
    return 0;
  }
  if (method != "exchange") throw ValidationError("--method must be kmeans or exchange");
  ExchangeOptions opt;
  opt.lambda = lambda;
  auto run_variant = [&](ExchangeVariant v) {
    int order = v == ExchangeVariant::ThreePos ? 3 : 2;
    report(exchange_variant_name(v), exchange_cluster(corpus, k, v, seed, opt), order);
  };
  if (variant == "2POS") run_variant(ExchangeVariant::TwoPos);
  else if (variant == "3POS") run_variant(ExchangeVariant::ThreePos);
  else if (variant == "POSWORD") run_variant(ExchangeVariant::PosWord);
  else if (variant == "all") {
    run_variant(ExchangeVariant::TwoPos);
    run_variant(ExchangeVariant::ThreePos);
    run_variant(ExchangeVariant::PosWord);
  } else {
    throw ValidationError("--variant must be 2POS, 3POS, POSWORD or all");
  }
  if (summary.size() > 1) {
    std::cout << "\n" << (heldout ? "Reduction of test set perplexity\n"
                                  : "Reduction of training set perplexity\n");
    for (const auto& [name, reduction] : summary) {
      char line[64];
      std::snprintf(line, sizeof(line), "%-10s %5.1f%%\n", name.c_str(), reduction);
      std::cout << line;
    }
  }
  return 0;
}

int cmd_parse(const ModelPaths& paths, const std::string& lattice_path,
              const CommonOptions& common) {
  LoadedModels m = load_models(paths);
  Lattice lat = load_lattice(lattice_path);
  ChartConfig cfg;
  cfg.weights = common.parse_weights();
  cfg.beam_offset = common.beam_offset;
  cfg.use_prosody = common.boundaries;
  if (!common.boundaries) cfg.weights.prosody = 0.0;
  if (common.boundaries && !m.has_boundary)
    throw ValidationError("--boundaries needs a --prosody model");
  Chart chart(m.grammar, m.skel, m.bigram, common.boundaries ? &m.boundary : nullptr,
              cfg);
  for (int f = 1; f <= lat.frames; ++f) {
    std::vector<WordHyp> hyps;
    for (const auto& h : lat.word_hyps)
      if (h.end == f) hyps.push_back(h);
    std::vector<BoundaryHypothesis> wbhs;
    for (const auto& b : lat.wbhs)
      if (b.end_frame == f) wbhs.push_back(b);
    chart.step_frame(f, hyps, wbhs);
  }
  auto trees = chart.emit_nbest(common.nbest);
  if (trees.empty()) {
    std::cout << "no utterance-status tree\n";
    return 0;
  }
  for (size_t i = 0; i < trees.size(); ++i) {
    const PackedTree& t = trees[i];
    auto yield = skel_tree_yield(chart.skel_tree(static_cast<int>(t.root)));
    std::cout << "# tree " << i + 1 << " span " << t.start << ".." << t.end
              << " score " << fmt_double(t.score) << " ::";
    for (const auto& w : yield) std::cout << " " << w;
    std::cout << "\n" << serialize_packed_tree(t);
  }
  std::cout << "edges static " << chart.stats().static_edges() << " dynamic "
            << chart.stats().dynamic_edges << "\n";
  return 0;
}

int cmd_pipeline(const ModelPaths& paths, const std::string& lattice_path,
                 const CommonOptions& common, bool verbose) {
  LoadedModels m = load_models(paths);
  Lattice lat = load_lattice(lattice_path);
  PipelineConfig cfg = pipeline_config(common, m.has_boundary);
  RunReport report = run_pipeline(cfg, lat, m.grammar, m.skel, m.bigram,
                                  m.has_boundary ? &m.boundary : nullptr);
  std::cout << report.to_text(verbose);
  return 0;
}

int cmd_eval(const ModelPaths& paths, const std::string& manifest_path,
             const CommonOptions& common, bool verbose) {
  LoadedModels m = load_models(paths);
  auto entries = parse_manifest(read_file(manifest_path));
  EvalTable table;
  for (const auto& entry : entries) {
    Lattice lat = load_lattice(entry.lattice_path);
    auto ref = parse_transcript(read_file(entry.ref_path));
    CommonOptions mode_common = common;
    mode_common.topdown = entry.mode == EvalMode::TopDown;
    mode_common.boundaries = entry.mode == EvalMode::Boundaries;
    ConfigRun run;
    run.config = entry.config;
    run.mode = entry.mode;
    if (entry.config == EvalConfig::DM) {
      run.hypothesis = best_decoder_path(lat, m.bigram);
    } else {
      PipelineConfig cfg = pipeline_config(mode_common, m.has_boundary);
      cfg.semantics = entry.config == EvalConfig::DMPS;
      RunReport report = run_pipeline(cfg, lat, m.grammar, m.skel, m.bigram,
                                      m.has_boundary ? &m.boundary : nullptr);
      if (entry.config == EvalConfig::DMPS) {
        if (report.accepted) run.hypothesis = report.accepted->words;
      } else if (report.best_syn) {
        run.hypothesis = report.best_syn->words;
      }
    }
    AlignmentResult r = score_config(run, ref);
    table.add(entry.mode, entry.config, r.word_accuracy());
    if (verbose) {
      char wa[32];
      std::snprintf(wa, sizeof(wa), "%.2f", r.word_accuracy());
      std::cout << eval_config_name(entry.config) << " " << eval_mode_name(entry.mode)
                << " " << entry.lattice_path << " WA " << wa << "% (S "
                << r.substitutions << " D " << r.deletions << " I " << r.insertions
                << " N " << r.ref_length << ")\n";
    }
  }
  std::cout << table.to_text();
  return 0;
}

// Compact oracle suites; each line is one PASS/FAIL verdict.
int cmd_selftest(uint64_t seed) {
  int failures = 0;
  auto verdict = [&](const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS " : "FAIL ") << name;
    if (!ok && !detail.empty()) std::cout << ": " << detail;
    std::cout << "\n";
    if (!ok) ++failures;
  };

  {  // Chart search equals exhaustive enumeration.
    bool ok = true;
    std::string detail;
    for (uint64_t s = seed; s < seed + 10 && ok; ++s) {
      testing::InstanceOptions opt;
      opt.with_wbhs = s % 2 == 0;
      testing::TestInstance inst = testing::make_instance(s, opt);
      ChartConfig cfg;
      cfg.beam_offset = std::numeric_limits<double>::infinity();
      cfg.use_prosody = opt.with_wbhs;
      Chart chart(inst.grammar, inst.skel, inst.bigram,
                  cfg.use_prosody ? &inst.boundary_model : nullptr, cfg);
      for (int f = 1; f <= inst.lattice.frames; ++f) {
        std::vector<WordHyp> hyps;
        for (const auto& h : inst.lattice.word_hyps)
          if (h.end == f) hyps.push_back(h);
        std::vector<BoundaryHypothesis> wbhs;
        for (const auto& b : inst.lattice.wbhs)
          if (b.end_frame == f) wbhs.push_back(b);
        chart.step_frame(f, hyps, wbhs);
      }
      testing::OracleEnumerator oracle(inst.grammar, inst.skel, inst.lattice);
      if (chart.ranked_utterance_edges().size() != oracle.utterance_trees().size()) {
        ok = false;
        detail = "tree count mismatch at seed " + std::to_string(s);
      }
    }
    verdict("parser-oracle-equivalence", ok, detail);
  }

  {  // Protocol picks the longest unifiable tree.
    bool ok = true;
    std::string detail;
    for (uint64_t s = seed + 100; s < seed + 110 && ok; ++s) {
      testing::TestInstance inst = testing::make_instance(s);
      PipelineConfig cfg;
      cfg.beam_offset = std::numeric_limits<double>::infinity();
      RunReport report =
          run_pipeline(cfg, inst.lattice, inst.grammar, inst.skel, inst.bigram);
      testing::OracleEnumerator oracle(inst.grammar, inst.skel, inst.lattice);
      int best_span = -1;
      for (const auto& t : oracle.utterance_trees())
        if (reconstruct_skel_tree(inst.grammar, inst.skel, testing::to_skel_tree(t)))
          best_span = std::max(best_span, t.end - t.start);
      bool match = best_span < 0 ? !report.accepted
                                 : report.accepted && report.accepted->end -
                                                              report.accepted->start ==
                                                          best_span;
      if (!match) {
        ok = false;
        detail = "seed " + std::to_string(s);
      }
    }
    verdict("protocol-longest-unifiable", ok, detail);
  }

  {  // Deterministic replays are byte-identical; concurrent agrees.
    bool ok = true;
    for (uint64_t s = seed + 200; s < seed + 205 && ok; ++s) {
      testing::TestInstance inst = testing::make_instance(s);
      PipelineConfig cfg;
      RunReport a = run_pipeline(cfg, inst.lattice, inst.grammar, inst.skel, inst.bigram);
      RunReport b = run_pipeline(cfg, inst.lattice, inst.grammar, inst.skel, inst.bigram);
      ok = a.to_text(true) == b.to_text(true);
      if (ok) {
        PipelineConfig conc = cfg;
        conc.scheduler = SchedulerMode::Concurrent;
        RunReport c =
            run_pipeline(conc, inst.lattice, inst.grammar, inst.skel, inst.bigram);
        ok = a.accepted.has_value() == c.accepted.has_value() &&
             (!a.accepted || a.accepted->tree == c.accepted->tree);
      }
    }
    verdict("scheduler-determinism", ok);
  }

  {  // Class n-gram exactness.
    TaggedCorpus c = parse_tagged_corpus("s1\ta/N b/V\ns1\ta/N a/N\n");
    ClassNgramModel m = train_class_ngram(c, 2, 0.1);
    double product = (3.1 / 3.2) * (2.1 / 2.2) * (1.1 / 1.2) * (1.1 / 2.2);
    double expected = std::exp(-0.5 * std::log(product));
    TaggedCorpus test = parse_tagged_corpus("t\ta/N b/V\n");
    verdict("perplexity-hand-computation",
            close_to(perplexity(m, test.utterances[0]), expected, 1e-9));
  }

  {  // Chi-square calibration at alpha 0.01.
    Rng rng(seed + 12345);
    std::map<std::string, double> reference = {{"c0", 0.3}, {"c1", 0.2}, {"c2", 0.15},
                                               {"c3", 0.1}, {"c4", 0.1},  {"c5", 0.05},
                                               {"c6", 0.05}, {"c7", 0.05}};
    int rejected = 0, trials = 2000;
    for (int t = 0; t < trials; ++t) {
      std::map<std::string, double> observed;
      for (int i = 0; i < 400; ++i) {
        double u = rng.uniform(), acc = 0;
        for (const auto& [cls, p] : reference) {
          acc += p;
          if (u < acc || cls == "c7") {
            observed[cls] += 1;
            break;
          }
        }
      }
      if (chi_square_typicality(observed, reference, 0.01).reject) ++rejected;
    }
    double rate = static_cast<double>(rejected) / trials;
    verdict("chi-square-calibration", rate > 0.001 && rate < 0.025,
            "rate " + fmt_double(rate));
  }

  {  // Focus detection on constructed contours.
    bool ok = true;
    for (int i = 0; i < 10 && ok; ++i) {
      int apex = 5 + i;
      std::vector<double> v;
      for (int f = 0; f <= apex; ++f) v.push_back(2.0 * f);
      for (int f = apex + 1; f <= apex + 8; ++f)
        v.push_back(2.0 * apex - 4.0 * (f - apex));
      Contour c;
      for (size_t f = 0; f < v.size(); ++f)
        c.samples.push_back({static_cast<int>(f), v[f]});
      auto focus = detect_focus(c);
      ok = !focus.empty() && std::abs(focus[0].frame - apex) <= 1;
    }
    verdict("focus-detection", ok);
  }

  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental word-lattice analysis toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  app.add_option("--weights", common.weights,
                 "decoder,grammar,prosody factor weights")->capture_default_str();
  app.add_option("--beam-offset", common.beam_offset,
                 "beam offset below the frame maximum (natural log)")
      ->capture_default_str();
  app.add_option("--nbest", common.nbest, "trees transmitted per frame")
      ->capture_default_str();
  app.add_flag("--topdown", common.topdown, "recognizer honors prediction sets");
  app.add_flag("--boundaries", common.boundaries, "score word boundary hypotheses");
  app.add_option("--scheduler", common.scheduler, "det or conc")->capture_default_str();
  app.add_option("--seed", common.seed, "random seed")->capture_default_str();

  // train-grammar
  auto* tg = app.add_subcommand("train-grammar",
                                "parse a corpus and train the context model");
  tg->fallthrough();
  std::string tg_grammar, tg_corpus, tg_out_treebank, tg_out_model;
  int tg_order = 2;
  double tg_lambda = 0.1;
  bool tg_viterbi = false;
  tg->add_option("--grammar", tg_grammar)->required();
  tg->add_option("--corpus", tg_corpus, "one utterance per line")->required();
  tg->add_option("--order", tg_order, "Markov context order (0..2)");
  tg->add_option("--lambda", tg_lambda, "add-lambda smoothing");
  tg->add_flag("--viterbi", tg_viterbi, "hard assignments instead of EM");
  tg->add_option("--out-treebank", tg_out_treebank);
  tg->add_option("--out-model", tg_out_model);

  // train-prosody
  auto* tp = app.add_subcommand("train-prosody",
                                "train the boundary classifier and n-gram");
  tp->fallthrough();
  std::string tp_features, tp_tokens, tp_out_gaussian, tp_out_ngram;
  int tp_order = 4;
  double tp_lambda = 0.1;
  tp->add_option("--features", tp_features, "labeled feature vectors");
  tp->add_option("--tokens", tp_tokens, "interleaved word/boundary sequences");
  tp->add_option("--order", tp_order, "boundary n-gram order (3 or 4)");
  tp->add_option("--lambda", tp_lambda);
  tp->add_option("--out-gaussian", tp_out_gaussian);
  tp->add_option("--out-ngram", tp_out_ngram);

  // train-lm
  auto* tl = app.add_subcommand("train-lm", "train a class n-gram language model");
  tl->fallthrough();
  std::string tl_corpus, tl_out;
  int tl_order = 2;
  double tl_lambda = 0.1;
  tl->add_option("--corpus", tl_corpus, "tagged corpus")->required();
  tl->add_option("--order", tl_order, "2 or 3");
  tl->add_option("--lambda", tl_lambda);
  tl->add_option("--out", tl_out);

  // cluster
  auto* cl = app.add_subcommand("cluster", "speaker clustering");
  cl->fallthrough();
  std::string cl_corpus, cl_method = "exchange", cl_variant = "POSWORD", cl_heldout;
  int cl_k = 2;
  double cl_lambda = 0.1;
  cl->add_option("--corpus", cl_corpus, "tagged corpus")->required();
  cl->add_option("--k", cl_k, "cluster count");
  cl->add_option("--method", cl_method, "kmeans or exchange");
  cl->add_option("--variant", cl_variant, "2POS, 3POS, POSWORD or all");
  cl->add_option("--lambda", cl_lambda);
  cl->add_option("--heldout", cl_heldout, "held-out tagged corpus");

  // parse
  auto* pa = app.add_subcommand("parse", "parse one lattice and print n-best trees");
  pa->fallthrough();
  ModelPaths pa_paths;
  std::string pa_lattice;
  add_model_options(pa, pa_paths);
  pa->add_option("lattice", pa_lattice, "lattice file")->required();

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "full recognizer/parser/semantics run");
  pl->fallthrough();
  ModelPaths pl_paths;
  std::string pl_lattice;
  bool pl_verbose = false;
  add_model_options(pl, pl_paths);
  pl->add_option("lattice", pl_lattice, "lattice file")->required();
  pl->add_flag("--verbose", pl_verbose, "include the per-channel message logs");

  // eval
  auto* ev = app.add_subcommand("eval", "score a manifest of runs");
  ev->fallthrough();
  ModelPaths ev_paths;
  std::string ev_manifest;
  bool ev_verbose = false;
  add_model_options(ev, ev_paths);
  ev->add_option("manifest", ev_manifest, "run manifest")->required();
  ev->add_flag("--verbose", ev_verbose, "print one line per run");

  // selftest
  auto* st = app.add_subcommand("selftest", "run the built-in oracle suites");
  st->fallthrough();

  try {
    app.parse(argc, argv);
    if (tg->parsed())
      return cmd_train_grammar(tg_grammar, tg_corpus, tg_order, tg_lambda, tg_viterbi,
                               tg_out_treebank, tg_out_model);
    if (tp->parsed())
      return cmd_train_prosody(tp_features, tp_tokens, tp_order, tp_lambda,
                               tp_out_gaussian, tp_out_ngram);
    if (tl->parsed()) return cmd_train_lm(tl_corpus, tl_order, tl_lambda, tl_out);
    if (cl->parsed())
      return cmd_cluster(cl_corpus, cl_k, cl_method, cl_variant, common.seed, cl_lambda,
                         cl_heldout);
    if (pa->parsed()) return cmd_parse(pa_paths, pa_lattice, common);
    if (pl->parsed()) return cmd_pipeline(pl_paths, pl_lattice, common, pl_verbose);
    if (ev->parsed()) return cmd_eval(ev_paths, ev_manifest, common, ev_verbose);
    if (st->parsed()) return cmd_selftest(common.seed);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
