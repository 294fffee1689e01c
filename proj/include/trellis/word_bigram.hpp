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
#include <string>

#include "trellis/common.hpp"

namespace trellis {

// Word-class bigram used for the decoder factor. Words without a declared
// class act as their own class; unseen class pairs score `default_logp`.
// The default-constructed model is neutral (every pair scores 0).
struct WordBigram {
  std::map<std::string, std::string> word_class;
  std::map<std::pair<std::string, std::string>, double> pair_logp;
  double default_logp = 0.0;

  const std::string& class_of(const std::string& w) const {
    auto it = word_class.find(w);
    return it == word_class.end() ? w : it->second;
  }
  double score(const std::string& prev, const std::string& word) const {
    auto it = pair_logp.find({class_of(prev), class_of(word)});
    return it == pair_logp.end() ? default_logp : it->second;
  }
};

// File format:
//   BIGRAM
//   DEFAULT <logp>
//   CLASS <word> <class>
//   P <class1> <class2> <logp>
inline WordBigram parse_word_bigram(const std::string& content) {
  WordBigram m;
  bool header = false;
  for (const auto& line : content_lines(content)) {
    auto tok = split_ws(line);
    if (tok[0] == "BIGRAM") {
      header = true;
    } else if (tok[0] == "DEFAULT") {
      m.default_logp = parse_double(tok.at(1), "default logp");
    } else if (tok[0] == "CLASS") {
      m.word_class[tok.at(1)] = tok.at(2);
    } else if (tok[0] == "P") {
      m.pair_logp[{tok.at(1), tok.at(2)}] = parse_double(tok.at(3), "logp");
    } else {
      throw ParseError("unknown bigram line: " + line);
    }
  }
  if (!header) throw ParseError("missing BIGRAM header");
  return m;
}

inline std::string format_word_bigram(const WordBigram& m) {
  std::ostringstream out;
  out << "BIGRAM\n";
  out << "DEFAULT " << fmt_double(m.default_logp) << "\n";
  for (const auto& [w, c] : m.word_class) out << "CLASS " << w << " " << c << "\n";
  for (const auto& [pair, lp] : m.pair_logp)
    out << "P " << pair.first << " " << pair.second << " " << fmt_double(lp) << "\n";
  return out.str();
}

}  // namespace trellis
