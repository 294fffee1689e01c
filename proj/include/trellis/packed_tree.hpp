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

#include <string>
#include <vector>

#include "trellis/common.hpp"

namespace trellis {

// One record of the structure-shared tree wire form. Rule nodes have
// children; word nodes never do (daughters are never empty), which is what
// lets the receiver tell them apart.
struct PackedNode {
  long long id = 0;
  std::string symbol;  // rule id or surface word
  int start = 0;
  int end = 0;
  double score = 0;
  std::vector<long long> children;
};

// A transmitted tree: the root reference plus the node records that were not
// part of any earlier message (delta encoding).
struct PackedTree {
  long long root = 0;
  int start = 0;
  int end = 0;
  double score = 0;
  std::vector<PackedNode> new_nodes;  // bottom-up order
};

// Wire form: one length-prefixed 'N' record per new node, then 'T <root>'.
//   <len> N <id> <rule|word> <start> <end> <score> <child ids...>
inline std::string serialize_packed_tree(const PackedTree& t) {
  std::ostringstream out;
  for (const auto& n : t.new_nodes) {
    std::ostringstream rec;
    rec << "N " << n.id << " " << n.symbol << " " << n.start << " " << n.end << " "
        << fmt_double(n.score);
    for (long long c : n.children) rec << " " << c;
    std::string payload = rec.str();
    out << payload.size() << " " << payload << "\n";
  }
  out << "T " << t.root << "\n";
  return out.str();
}

inline PackedTree parse_packed_tree(const std::string& wire) {
  PackedTree t;
  bool have_root = false;
  std::istringstream in(wire);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("T ", 0) == 0) {
      t.root = parse_long(line.substr(2), "root id");
      have_root = true;
      continue;
    }
    size_t sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("bad packed record: " + line);
    size_t len = static_cast<size_t>(parse_long(line.substr(0, sp), "record length"));
    std::string payload = line.substr(sp + 1);
    if (payload.size() != len)
      throw ParseError("packed record length mismatch: expected " +
                       std::to_string(len) + ", got " + std::to_string(payload.size()));
    auto tok = split_ws(payload);
    if (tok.size() < 6 || tok[0] != "N") throw ParseError("bad packed record: " + payload);
    PackedNode n;
    n.id = parse_long(tok[1], "node id");
    n.symbol = tok[2];
    n.start = static_cast<int>(parse_long(tok[3], "start"));
    n.end = static_cast<int>(parse_long(tok[4], "end"));
    n.score = parse_double(tok[5], "score");
    for (size_t i = 6; i < tok.size(); ++i)
      n.children.push_back(parse_long(tok[i], "child id"));
    t.new_nodes.push_back(std::move(n));
  }
  if (!have_root) throw ParseError("packed tree has no T record");
  return t;
}

}  // namespace trellis
